#pragma once

// Fractional Brownian motion: exact synthesis on a uniform grid and the
// Hurst-related constants used by the quadratic-variation estimators.

#include <cstddef>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/random.hpp"

namespace slowfast {

/// Hurst index H in (0, 1). Estimator theory needs H in (1/2, 1); values
/// outside that window are accepted here and flagged by callers.
class HurstIndex {
 public:
  explicit HurstIndex(double value);
  double value() const { return value_; }
  bool in_estimator_range() const { return value_ > 0.5 && value_ < 1.0; }

 private:
  double value_;
};

/// |x|^p with 0^p := 0 (removable point of the stencils below).
double abs_pow(double x, double p);

/// R_H(s, t) = E[W^H_s W^H_t].
double fbm_covariance(double s, double t, HurstIndex H);

/// Autocovariance of unit-step fractional Gaussian noise at lag k.
double fgn_autocovariance(long k, HurstIndex H);

/// Autocorrelation of second-order increments of fBm at lag j.
double rho(long j, HurstIndex H);

/// Cross-scale autocorrelation between second-order increments at spacing
/// 1 and 2.
double rho_tilde(long j, HurstIndex H);

/// Tabulated rho / rho_tilde up to the adaptive truncation used for the
/// variance series.
struct AutocovarianceTable {
  HurstIndex hurst;
  long truncation;               ///< J: largest tabulated lag
  std::vector<double> rho;       ///< rho[j], j = 0..J (symmetric in j)
  std::vector<double> rho_tilde; ///< rho_tilde[j], j = 0..J

  static AutocovarianceTable build(HurstIndex H);

  double sigma1_sq() const;
  double sigma2_sq() const;
};

/// 2 * sum_{j in Z} rho(j; H)^2.
double sigma1_sq(HurstIndex H);
/// sum_{j in Z} rho_tilde(j; H)^2.
double sigma2_sq(HurstIndex H);

/// (1/|s|^4) sum_{i,k,j,q} s_ij s_iq s_kj s_kq for the averaged diffusion s.
double sigma_factor(const Eigen::MatrixXd& sigma_bar);

double sigma_star_sq(HurstIndex H, const Eigen::MatrixXd& sigma_bar);
double sigma_star_star_sq(HurstIndex H, const Eigen::MatrixXd& sigma_bar);

/// Asymptotic sd of the epsilon-aware estimator at n observations on [0, T].
double theoretical_sd_h1(double n, double T, HurstIndex H, const Eigen::MatrixXd& sigma_bar);

/// Asymptotic sd of the ratio estimator. `sample_count` is the number of
/// fine-spacing increments (2n); the CLT is normalised by sqrt(n).
double theoretical_sd_h2(double sample_count, HurstIndex H, const Eigen::MatrixXd& sigma_bar);

struct FbmPath {
  double horizon = 1.0;
  std::size_t steps = 0;
  double hurst = 0.5;
  /// values[c][i] is component c at t_i = i * horizon / steps; values[c][0] = 0.
  std::vector<std::vector<double>> values;

  std::size_t components() const { return values.size(); }
  double time(std::size_t i) const { return horizon * static_cast<double>(i) / static_cast<double>(steps); }
};

/// Exact sampler of fBm increments on a fixed grid.
///
/// Uses circulant embedding of the fGn covariance (size 2N FFT). If the
/// embedding has eigenvalues below -1e-10 the sampler falls back to a dense
/// Cholesky factor for N <= 2^13 and throws otherwise. Immutable after
/// construction; `sample_increments` may be called concurrently.
class FbmSampler {
 public:
  enum class Method { circulant, cholesky };

  FbmSampler(std::size_t steps, double horizon, HurstIndex H);
  ~FbmSampler();
  FbmSampler(FbmSampler&&) noexcept;
  FbmSampler& operator=(FbmSampler&&) noexcept;

  std::size_t steps() const { return steps_; }
  double horizon() const { return horizon_; }
  HurstIndex hurst() const { return hurst_; }
  Method method() const { return method_; }
  double min_embedding_eigenvalue() const { return min_eigenvalue_; }

  /// Writes N increments W_{t_{i+1}} - W_{t_i} into `out`.
  void sample_increments(RandomStream& stream, std::vector<double>& out) const;

  /// One path per component; component c draws from `stream.derive(c)`.
  FbmPath sample(const RandomStream& stream, std::size_t components = 1) const;

 private:
  std::size_t steps_;
  double horizon_;
  HurstIndex hurst_;
  Method method_ = Method::circulant;
  double min_eigenvalue_ = 0.0;
  double scale_ = 1.0;            // (T/N)^H
  std::vector<double> sqrt_eig_;  // sqrt(lambda_k / 2N)
  Eigen::MatrixXd cholesky_;
};

FbmPath sample_fbm(std::size_t steps, double horizon, HurstIndex H, std::size_t components,
                   const RandomStream& stream);

}  // namespace slowfast
