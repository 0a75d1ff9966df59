#include "slowfast/kernels.hpp"

#include <stdexcept>

#include <omp.h>

namespace slowfast {

namespace {

void check_gram_inputs(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                       std::size_t intervals) {
  if (mt == 0 || B.cols() % static_cast<Eigen::Index>(mt) != 0) throw std::invalid_argument("interval_gram: bad B");
  const std::size_t cells = static_cast<std::size_t>(B.cols()) / mt;
  if (intervals == 0 || cells % intervals != 0) {
    throw std::invalid_argument("interval_gram: cells must split evenly into intervals");
  }
  if (gamma.size() < cells) throw std::invalid_argument("interval_gram: gamma table too short");
}

// Row-block i of the Gram matrix: C_b = sum_{a in I_i} gamma[|a-b|] B_a for
// every b, then G_il = sum_{b in I_l} C_b B_b^T.
void gram_row(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma, std::size_t intervals,
              std::size_t i, Eigen::MatrixXd& G, std::vector<double>& C) {
  const std::size_t m = static_cast<std::size_t>(B.rows());
  const std::size_t cells = static_cast<std::size_t>(B.cols()) / mt;
  const std::size_t r = cells / intervals;
  const std::size_t width = m * mt;
  const double* b = B.data();  // column-major: element (row, col) at col * m + row
  C.assign(cells * width, 0.0);

  for (std::size_t a = i * r; a < (i + 1) * r; ++a) {
    const double* Ba = b + a * width;
    for (std::size_t c = 0; c < cells; ++c) {
      const double g = gamma[a > c ? a - c : c - a];
      double* Cc = C.data() + c * width;
      for (std::size_t e = 0; e < width; ++e) Cc[e] += g * Ba[e];
    }
  }
  for (std::size_t l = 0; l < intervals; ++l) {
    for (std::size_t p = 0; p < m; ++p) {
      for (std::size_t q = 0; q < m; ++q) {
        double acc = 0.0;
        for (std::size_t c = l * r; c < (l + 1) * r; ++c) {
          const double* Cc = C.data() + c * width;
          const double* Bc = b + c * width;
          for (std::size_t k = 0; k < mt; ++k) acc += Cc[k * m + p] * Bc[k * m + q];
        }
        G(static_cast<Eigen::Index>(i * m + p), static_cast<Eigen::Index>(l * m + q)) = acc;
      }
    }
  }
}

}  // namespace

Eigen::MatrixXd interval_gram_serial(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                                     std::size_t intervals) {
  check_gram_inputs(B, mt, gamma, intervals);
  const auto size = static_cast<Eigen::Index>(intervals * static_cast<std::size_t>(B.rows()));
  Eigen::MatrixXd G(size, size);
  std::vector<double> C;
  for (std::size_t i = 0; i < intervals; ++i) gram_row(B, mt, gamma, intervals, i, G, C);
  return G;
}

Eigen::MatrixXd interval_gram_omp(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                                  std::size_t intervals) {
  check_gram_inputs(B, mt, gamma, intervals);
  const auto size = static_cast<Eigen::Index>(intervals * static_cast<std::size_t>(B.rows()));
  Eigen::MatrixXd G(size, size);
#pragma omp parallel
  {
    std::vector<double> C;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(intervals); ++i) {
      gram_row(B, mt, gamma, intervals, static_cast<std::size_t>(i), G, C);
    }
  }
  return G;
}

Eigen::MatrixXd interval_gram(const Eigen::MatrixXd& B, std::size_t mt, const std::vector<double>& gamma,
                              std::size_t intervals, Execution exec) {
  // A single interval has nothing to split across threads.
  if (exec == Execution::serial || intervals == 1 || omp_in_parallel()) {
    return interval_gram_serial(B, mt, gamma, intervals);
  }
  return interval_gram_omp(B, mt, gamma, intervals);
}

std::vector<FbmPath> sample_fbm_batch_serial(const FbmSampler& sampler, const RandomStream& stream, std::size_t count,
                                             std::size_t components) {
  std::vector<FbmPath> out(count);
  for (std::size_t r = 0; r < count; ++r) out[r] = sampler.sample(stream.derive(r), components);
  return out;
}

std::vector<FbmPath> sample_fbm_batch_omp(const FbmSampler& sampler, const RandomStream& stream, std::size_t count,
                                          std::size_t components) {
  std::vector<FbmPath> out(count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(count); ++r) {
    out[static_cast<std::size_t>(r)] = sampler.sample(stream.derive(static_cast<std::uint64_t>(r)), components);
  }
  return out;
}

std::vector<FbmPath> sample_fbm_batch(const FbmSampler& sampler, const RandomStream& stream, std::size_t count,
                                      std::size_t components, Execution exec) {
  return exec == Execution::serial ? sample_fbm_batch_serial(sampler, stream, count, components)
                                   : sample_fbm_batch_omp(sampler, stream, count, components);
}

}  // namespace slowfast
