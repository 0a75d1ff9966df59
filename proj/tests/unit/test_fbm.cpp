#include "doctest.h"

#include <cmath>
#include <numeric>

#include "slowfast/fbm.hpp"
#include "slowfast/kernels.hpp"

using namespace slowfast;
using doctest::Approx;

// Values from tests/oracles/compute_oracles.py (mpmath, 40 digits).
namespace oracle {
constexpr double cov_2_3_075 = 3.5122897737264110;
constexpr double rho_1 = -0.31756031033625138;
constexpr double rho_50 = -3.8241596665683702e-5;
constexpr double rho_tilde_1 = 0.14403621643248070;
constexpr double rho_tilde_50 = -8.4927942216634126e-5;
constexpr double sigma1 = 2.4523277508942361;
constexpr double sigma2 = 0.82922233771347831;
constexpr double sigma_ss = 2.0200469509143975;
}  // namespace oracle

TEST_CASE("HurstIndex rejects values outside (0, 1)") {
  CHECK_THROWS_AS(HurstIndex(0.0), std::invalid_argument);
  CHECK_THROWS_AS(HurstIndex(1.0), std::invalid_argument);
  CHECK_THROWS_AS(HurstIndex(std::nan("")), std::invalid_argument);
  CHECK(HurstIndex(0.85).in_estimator_range());
  CHECK_FALSE(HurstIndex(0.3).in_estimator_range());
}

TEST_CASE("fbm_covariance") {
  CHECK(fbm_covariance(1.0, 1.0, HurstIndex(0.3)) == Approx(1.0).epsilon(1e-15));
  CHECK(fbm_covariance(0.7, 0.4, HurstIndex(0.5)) == Approx(0.4).epsilon(1e-15));
  CHECK(fbm_covariance(2.0, 3.0, HurstIndex(0.75)) == Approx(oracle::cov_2_3_075).epsilon(1e-15));
  CHECK_THROWS(fbm_covariance(-1.0, 1.0, HurstIndex(0.5)));
}

TEST_CASE("rho and rho_tilde") {
  const HurstIndex half(0.5), H(0.85);
  CHECK(rho(0, H) == 1.0);
  CHECK(std::abs(rho(2, half)) < 1e-15);
  CHECK(rho(1, half) == Approx(-0.5).epsilon(1e-14));
  CHECK(rho_tilde(0, half) == Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(rho(1, H) == Approx(oracle::rho_1).epsilon(1e-13));
  CHECK(rho(50, H) == Approx(oracle::rho_50).epsilon(1e-10));
  CHECK(rho_tilde(1, H) == Approx(oracle::rho_tilde_1).epsilon(1e-13));
  CHECK(rho_tilde(50, H) == Approx(oracle::rho_tilde_50).epsilon(1e-10));
  for (long j = 1; j <= 100; ++j) {
    CHECK(rho(j, H) == rho(-j, H));
    CHECK(rho_tilde(j, H) == rho_tilde(-j, H));
  }
}

TEST_CASE("series constants") {
  const HurstIndex H(0.85);
  CHECK(sigma1_sq(HurstIndex(0.5)) == Approx(3.0).epsilon(1e-12));
  CHECK(sigma1_sq(H) == Approx(oracle::sigma1).epsilon(1e-12));
  CHECK(sigma2_sq(H) == Approx(oracle::sigma2).epsilon(1e-12));
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  CHECK(sigma_star_star_sq(H, one) == Approx(oracle::sigma_ss).epsilon(1e-12));
  CHECK(sigma_star_sq(H, one) == Approx(sigma1_sq(H)));

  const auto table = AutocovarianceTable::build(H);
  CHECK(table.truncation >= 10000);
  CHECK(table.rho[1] == rho(1, H));
  double tail = 0.0;
  for (long j = table.truncation; j > table.truncation / 2; --j) tail += rho(j, H) * rho(j, H);
  CHECK(2.0 * tail < 1e-12);
}

TEST_CASE("sigma_factor") {
  CHECK(sigma_factor(Eigen::MatrixXd::Constant(1, 1, -3.0)) == Approx(1.0));
  CHECK(sigma_factor(Eigen::MatrixXd::Identity(2, 2)) == Approx(0.5));
  Eigen::MatrixXd S(2, 3);
  S << 1, 2, -1, 0.5, 0, 3;
  const double f = sigma_factor(S);
  CHECK(f > 0.0);
  CHECK(f <= 1.0);
  CHECK_THROWS(sigma_factor(Eigen::MatrixXd::Zero(1, 1)));
}

TEST_CASE("theoretical standard deviations") {
  const HurstIndex H(0.85);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Identity(1, 1);
  CHECK(theoretical_sd_h1(100, 1, H, one) == Approx(0.017).epsilon(5e-4 / 0.017));
  CHECK(theoretical_sd_h2(1e4, H, one) == Approx(0.0145).epsilon(5e-5 / 0.0145));
  const double r = theoretical_sd_h1(1e4, 1, H, one) / theoretical_sd_h1(1e2, 1, H, one);
  CHECK(r == Approx(0.1 * std::log(1e2) / std::log(1e4)));
  CHECK_THROWS(theoretical_sd_h1(1.0, 1.0, H, one));
}

TEST_CASE("FbmSampler is deterministic and starts at zero") {
  const FbmSampler s(256, 1.0, HurstIndex(0.85));
  CHECK(s.method() == FbmSampler::Method::circulant);
  const auto a = s.sample(RandomStream(7), 2);
  const auto b = s.sample(RandomStream(7), 2);
  CHECK(a.values == b.values);
  CHECK(a.values[0][0] == 0.0);
  CHECK(a.values[0] != a.values[1]);
  CHECK(a.values[0].size() == 257);
}

TEST_CASE("FbmSampler covariance at (0.5, 1.0)") {
  const HurstIndex H(0.85);
  const FbmSampler s(256, 1.0, H);
  const auto paths = sample_fbm_batch(s, RandomStream(11), 10000, 1, Execution::parallel);
  std::vector<double> prod;
  prod.reserve(paths.size());
  for (const auto& p : paths) prod.push_back(p.values[0][128] * p.values[0][256]);
  const double mean = std::accumulate(prod.begin(), prod.end(), 0.0) / prod.size();
  double var = 0.0;
  for (double v : prod) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / (prod.size() - 1) / prod.size());
  CHECK(std::abs(mean - fbm_covariance(0.5, 1.0, H)) < 3.0 * se);
}

TEST_CASE("FbmSampler H = 1/2 has uncorrelated increments") {
  const FbmSampler s(4096, 1.0, HurstIndex(0.5));
  RandomStream rs(3);
  std::vector<double> inc;
  s.sample_increments(rs, inc);
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t i = 0; i < inc.size(); ++i) {
    c0 += inc[i] * inc[i];
    if (i + 1 < inc.size()) c1 += inc[i] * inc[i + 1];
  }
  CHECK(std::abs(c1 / c0) < 4.0 / std::sqrt(4096.0));
}

TEST_CASE("batch sampling: serial and OpenMP agree bit for bit") {
  const FbmSampler s(512, 2.0, HurstIndex(0.7));
  const auto a = sample_fbm_batch_serial(s, RandomStream(5), 17, 2);
  const auto b = sample_fbm_batch_omp(s, RandomStream(5), 17, 2);
  REQUIRE(a.size() == b.size());
  for (std::size_t r = 0; r < a.size(); ++r) CHECK(a[r].values == b[r].values);
}

TEST_CASE("RandomStream derivation is injective on paths") {
  RandomStream a(1, {0, 1});
  RandomStream b(1, {1, 0});
  RandomStream c = RandomStream(1).derive(0).derive(1);
  const double x = a.normal();
  CHECK(x != b.normal());
  CHECK(x == c.normal());
}
