#pragma once

// Slow-fast model class
//   dX = c_theta(X, Y) dt + sqrt(eps) sigma(Y) dW^H
//   dY = f(Y)/eta dt + tau(Y)/sqrt(eta) dB
// and the two built-in test models.

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace slowfast {

/// Axis-aligned parameter box.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t size() const { return lower.size(); }
  bool contains(std::span<const double> theta) const;
  void clamp(std::span<double> theta) const;
  double diameter() const;
  void validate() const;
};

/// Coefficient callbacks write into caller-owned spans; matrices are
/// row-major. All callbacks must be safe to call concurrently.
struct SlowFastModel {
  using SlowFn = std::function<void(std::span<const double> theta, std::span<const double> x,
                                    std::span<const double> y, std::span<double> out)>;
  using FastFn = std::function<void(std::span<const double> y, std::span<double> out)>;
  using AveragedFn = std::function<void(std::span<const double> theta, std::span<const double> x,
                                        std::span<double> out)>;

  std::string name;
  std::size_t slow_dim = 1;   // m
  std::size_t fast_dim = 1;   // d - m
  std::size_t noise_dim = 1;  // m~
  std::size_t param_dim = 1;  // p

  SlowFn drift;                 // m
  FastFn diffusion;             // m x m~
  FastFn fast_drift;            // d - m
  FastFn fast_diffusion;        // (d - m) x (d - m)
  SlowFn drift_jacobian_x;      // m x m, optional
  SlowFn drift_jacobian_theta;  // m x p, optional
  AveragedFn sigma_phi;         // m x m, optional; closed-form Poisson-equation correction

  Box theta_box;
  std::vector<double> x0;
  std::vector<double> y0;
  bool fast_on_circle = false;

  /// Evaluates every coefficient at the initial condition and the box centre
  /// and checks shapes and finiteness.
  void validate() const;
};

/// c = theta x y^2, sigma = 1, f = -y, tau = 1, x0 = 1, y0 = 0.
SlowFastModel constant_sigma_model();

/// c = theta x / 2, sigma = (L/2pi) e^{sin y + cos y}, f = (sin y - cos y)/2,
/// tau = 1, fast process on the circle, x0 = 1, y0 = 0.
SlowFastModel variable_sigma_model();

/// L = int_0^{2pi} e^{-(sin y + cos y)} dy, by quadrature.
double variable_sigma_normalizer();

SlowFastModel builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

}  // namespace slowfast
