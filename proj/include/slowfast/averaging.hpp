#pragma once

// Averaged system, limit ODE, fundamental matrix, sensitivities and the
// covariance of the fluctuation process.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/fbm.hpp"
#include "slowfast/model.hpp"

namespace slowfast {

enum class FastDomain { line, circle };

/// Discrete approximation of the invariant measure of a scalar fast process.
/// Weights sum to one. `coarse_weights` is the rule on every second node and
/// drives the error estimate.
struct InvariantMeasure {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> coarse_weights;
  FastDomain domain = FastDomain::line;

  struct Value {
    double value;
    double error;
  };
  Value integrate(const std::function<double(double)>& g) const;
};

/// Gradient-form drift on the line (density ~ exp(2 int_0^y f / tau^2)) or
/// periodic drift on the circle. Resolution doubles until the normalisation
/// and low moments are stable to `tol`. Throws for non-normalisable
/// densities or a drift without zero mean over one period.
InvariantMeasure invariant_measure(const std::function<double(double)>& fast_drift, double tau, FastDomain domain,
                                   double tol = 1e-13);

/// Caller-supplied (unnormalised) density on [lo, hi]; `periodic` selects the
/// periodic trapezoid rule.
InvariantMeasure invariant_measure_from_density(const std::function<double(double)>& density, double lo, double hi,
                                                bool periodic, double tol = 1e-13);

/// Measure of a scalar fast process of a model (tau must be constant).
InvariantMeasure invariant_measure(const SlowFastModel& model, double tol = 1e-13);

/// int g dmu with the quadrature refined until the estimated error is below
/// tol (relative to max(1, |value|)).
InvariantMeasure::Value invariant_average(const std::function<double(double)>& fast_drift, double tau,
                                          const std::function<double(double)>& g, FastDomain domain,
                                          double tol = 1e-12);

/// Everything the limit theorems need. Callback matrices are row-major.
struct AveragedSystem {
  using Fn = std::function<void(std::span<const double> theta, std::span<const double> x, std::span<double> out)>;

  std::string name;
  std::size_t dim = 1;        // m
  std::size_t param_dim = 1;  // p
  Fn drift;                   // m
  Fn drift_jacobian_x;        // m x m
  Fn drift_jacobian_theta;    // m x p
  Eigen::MatrixXd sigma_bar;  // m x m~
  Fn sigma_phi;               // m x m, needed only when lambda > 0
  double lambda = 0.0;
  std::vector<double> x0;
  Box theta_box;

  void validate() const;
};

/// Averaged system of a built-in model; the y-averages are computed by
/// quadrature once at construction and the drift kept in closed form.
AveragedSystem averaged_system(const std::string& model_name, double lambda = 0.0);

/// Generic route: c-bar and sigma-bar by quadrature against `measure` at every
/// call. Jacobians use the model's analytic ones when present and central
/// differences otherwise.
AveragedSystem average_model(const SlowFastModel& model, const InvariantMeasure& measure, double lambda = 0.0);

/// Limit ODE on a uniform grid of M steps plus, from the same RK4 pass, the
/// variational sensitivities S = dXbar/dtheta and the one-step propagators of
/// the linearised flow.
struct OdeSolution {
  double T = 1.0;
  std::size_t steps = 0;
  std::vector<double> theta;
  std::vector<Eigen::VectorXd> states;         // M+1, each m
  std::vector<Eigen::MatrixXd> sensitivities;  // M+1, each m x p
  std::vector<Eigen::MatrixXd> propagators;    // M, Z(t_{k+1}, t_k)

  double time(std::size_t i) const { return T * static_cast<double>(i) / static_cast<double>(steps); }
  double step() const { return T / static_cast<double>(steps); }
};

OdeSolution solve_averaged_ode(const AveragedSystem& avg, std::span<const double> theta, double T, std::size_t M);

/// Z(t_i, t_j) for grid nodes i >= j, formed from the stored one-step
/// propagators. Immutable; safe for shared reads.
class FundamentalMatrixCache {
 public:
  explicit FundamentalMatrixCache(const OdeSolution& ode);

  std::size_t steps() const { return propagators_.size(); }
  std::size_t dim() const { return dim_; }
  const Eigen::MatrixXd& step_propagator(std::size_t k) const { return propagators_[k]; }

  /// Z(t_i, t_j); throws if i < j.
  Eigen::MatrixXd operator()(std::size_t i, std::size_t j) const;

  /// Z(t_i, t_j) for j = 0..i, computed by one backward sweep.
  std::vector<Eigen::MatrixXd> column_sweep(std::size_t i) const;

  /// Cross-check route: Z(t_i, 0) Z(t_j, 0)^{-1}.
  Eigen::MatrixXd by_inversion(std::size_t i, std::size_t j) const;

 private:
  std::size_t dim_;
  std::vector<Eigen::MatrixXd> propagators_;
  std::vector<Eigen::MatrixXd> from_origin_;  // Z(t_i, 0)
};

FundamentalMatrixCache fundamental_matrix(const AveragedSystem& avg, std::span<const double> theta,
                                          const OdeSolution& ode);

/// int_0^{t_i} Z(t_i, s) (grad_theta cbar)(Xbar_s) ds for every grid node,
/// by composite Simpson quadrature.
std::vector<Eigen::MatrixXd> theta_sensitivity(const AveragedSystem& avg, std::span<const double> theta,
                                               const OdeSolution& ode, const FundamentalMatrixCache& Z);

/// E[xi_{t1} xi_{t2}^T]. The ODE grid must have an even number of steps
/// M = 2 * cells; t1 and t2 must be cell boundaries. The singular kernel is
/// integrated exactly over each cell pair; the smooth factor is taken at cell
/// midpoints.
Eigen::MatrixXd fluctuation_covariance(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H,
                                       const OdeSolution& ode, const FundamentalMatrixCache& Z, double t1, double t2);

/// Composite Simpson weights on k intervals of width h (3/8 rule on the last
/// three intervals when k is odd; trapezoid when k = 1).
std::vector<double> simpson_weights(std::size_t k, double h);

}  // namespace slowfast
