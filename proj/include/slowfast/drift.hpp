#pragma once

// Trajectory-fitting and minimum-contrast drift estimators, their asymptotic
// variances and the fluctuation covariance matrix Xi.

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/averaging.hpp"
#include "slowfast/kernels.hpp"
#include "slowfast/optimize.hpp"
#include "slowfast/simulate.hpp"

namespace slowfast {

struct ContrastEvaluation {
  std::vector<double> theta;
  double value = 0.0;
  std::optional<Eigen::VectorXd> gradient;
};

struct QuadratureConfig {
  std::size_t cells = 512;  // per time axis; rounded up to a multiple of n
  Execution exec = Execution::parallel;
};

/// Xi = E[xi (x) xi] over the observation times t_k = T k / n, k = 1..n,
/// together with the limit trajectory and its sensitivities at those times.
struct XiMatrix {
  Eigen::MatrixXd matrix;  // nm x nm, symmetric
  Eigen::LLT<Eigen::MatrixXd> factor;
  std::vector<double> theta;
  double hurst = 0.0;
  std::size_t n = 0;
  double T = 1.0;
  std::size_t cells = 0;
  double jitter = 0.0;  // delta added to the diagonal, 0 if none was needed
  Eigen::MatrixXd trajectory;   // n x m, Xbar(t_k)
  Eigen::MatrixXd sensitivity;  // nm x p, stacked dXbar/dtheta(t_k)

  Eigen::VectorXd solve(const Eigen::VectorXd& r) const { return factor.solve(r); }
};

XiMatrix build_xi(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H, std::size_t n, double T,
                  const QuadratureConfig& q = {});

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::MatrixXd& A);

/// U(theta) = sum_{k=1}^n |x_k - Xbar_{t_k}|^2. The ODE runs on
/// n * ceil(ode_steps / n) steps; the gradient uses the variational
/// sensitivities from the same pass.
ContrastEvaluation tfe_contrast(const AveragedSystem& avg, std::span<const double> theta, const ObservationSeries& obs,
                                std::size_t ode_steps = 1000, bool with_gradient = false);

/// Residual quadratic form r^T Xi^{-1} r with r stacked over k = 1..n.
ContrastEvaluation mce_contrast(const AveragedSystem& avg, std::span<const double> theta, double H_param,
                                const ObservationSeries& obs, const XiMatrix& xi);

/// Concurrent read-mostly cache of Xi keyed by the exact theta bit pattern,
/// H, n, T and cell count.
class XiCache {
 public:
  explicit XiCache(std::size_t capacity = 512) : capacity_(capacity) {}
  std::shared_ptr<const XiMatrix> get(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H,
                                      std::size_t n, double T, const QuadratureConfig& q);
  std::size_t size() const;
  std::size_t hits() const { return hits_.load(); }

 private:
  using Key = std::vector<std::uint64_t>;
  std::size_t capacity_;
  mutable std::shared_mutex mutex_;
  std::map<Key, std::shared_ptr<const XiMatrix>> entries_;
  std::atomic<std::size_t> hits_{0};
};

enum class DriftMethod { tfe, mce };
std::string to_string(DriftMethod m);

struct DriftEstimate {
  std::vector<double> point;
  DriftMethod method = DriftMethod::tfe;
  double contrast = 0.0;
  OptimizeResult diagnostics;
  std::optional<Eigen::MatrixXd> asymptotic;  // M (TFE) or M^H (MCE)
  std::optional<Eigen::MatrixXd> covariance;  // epsilon * asymptotic
};

/// When set, the estimate carries its asymptotic covariance at the estimate.
struct VarianceRequest {
  double epsilon = 0.1;
  double hurst = 0.85;  // true (or plug-in) Hurst index
  QuadratureConfig quadrature;
};

struct TfeOptions {
  std::size_t ode_steps = 1000;
  OptimizerConfig optimizer;
  std::optional<VarianceRequest> variance;
};

struct MceOptions {
  double hurst_param = 0.85;  // the working Hurst index
  QuadratureConfig quadrature;
  OptimizerConfig optimizer;
  std::optional<VarianceRequest> variance;
};

/// Above this n the TFE covariance uses the limit form Mbar.
inline constexpr std::size_t kTfeLimitThreshold = 512;

DriftEstimate estimate_tfe(const AveragedSystem& avg, const ObservationSeries& obs, const Box& theta_box,
                           const TfeOptions& opt = {});

DriftEstimate estimate_mce(const AveragedSystem& avg, const ObservationSeries& obs, const Box& theta_box,
                           const MceOptions& opt = {}, XiCache* cache = nullptr);

/// M(theta, H; n): (D^T D)^{-1} (D^T Xi D) (D^T D)^{-1}, D = stacked sensitivities.
Eigen::MatrixXd tfe_variance(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H, std::size_t n,
                             double T = 1.0, const QuadratureConfig& q = {});

/// Mbar(theta, H): the n -> infinity limit in integral form.
Eigen::MatrixXd tfe_variance_limit(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H,
                                   double T = 1.0, const QuadratureConfig& q = {});

/// M^H(theta, H; n) = (D^T A^{-1} D)^{-1} (D^T A^{-1} Xi_H A^{-1} D) (D^T A^{-1} D)^{-1}
/// with A = Xi at the working index H_param and Xi_H at H_true.
Eigen::MatrixXd mce_variance(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H_true,
                             HurstIndex H_param, std::size_t n, double T = 1.0, const QuadratureConfig& q = {});

struct VarianceComparison {
  Eigen::VectorXd eigenvalues;  // of M - M^H
  double min_eigenvalue = 0.0;
  bool passed = false;  // min eigenvalue >= -1e-10
};

VarianceComparison variance_comparison(const Eigen::MatrixXd& M, const Eigen::MatrixXd& MH);

}  // namespace slowfast
