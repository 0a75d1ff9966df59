#include "doctest.h"

#include "slowfast/kernels.hpp"

using namespace slowfast;

TEST_CASE("interval_gram: serial, OpenMP and brute force agree") {
  const std::size_t m = 2, mt = 3, cells = 24, intervals = 4;
  RandomStream rs(1);
  Eigen::MatrixXd B(m, mt * cells);
  for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = rs.normal();
  std::vector<double> gamma(cells);
  for (std::size_t k = 0; k < cells; ++k) gamma[k] = fgn_autocovariance(static_cast<long>(k), HurstIndex(0.8));

  const auto s = interval_gram_serial(B, mt, gamma, intervals);
  const auto p = interval_gram_omp(B, mt, gamma, intervals);
  CHECK(s == p);
  CHECK(interval_gram(B, mt, gamma, intervals, Execution::serial) == s);

  const std::size_t per = cells / intervals;
  Eigen::MatrixXd brute = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(intervals * m), static_cast<Eigen::Index>(intervals * m));
  for (std::size_t a = 0; a < cells; ++a) {
    for (std::size_t b = 0; b < cells; ++b) {
      const auto Ba = B.middleCols(static_cast<Eigen::Index>(a * mt), static_cast<Eigen::Index>(mt));
      const auto Bb = B.middleCols(static_cast<Eigen::Index>(b * mt), static_cast<Eigen::Index>(mt));
      const std::size_t lag = a > b ? a - b : b - a;
      brute.block(static_cast<Eigen::Index>((a / per) * m), static_cast<Eigen::Index>((b / per) * m), m, m) +=
          gamma[lag] * Ba * Bb.transpose();
    }
  }
  CHECK((brute - s).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(interval_gram_serial(B, mt, gamma, 5));
}
