#include "slowfast/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/trapezoidal.hpp>

namespace slowfast {

bool Box::contains(std::span<const double> theta) const {
  if (theta.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    if (theta[i] < lower[i] || theta[i] > upper[i]) return false;
  }
  return true;
}

void Box::clamp(std::span<double> theta) const {
  for (std::size_t i = 0; i < size(); ++i) theta[i] = std::clamp(theta[i], lower[i], upper[i]);
}

double Box::diameter() const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += (upper[i] - lower[i]) * (upper[i] - lower[i]);
  return std::sqrt(s);
}

void Box::validate() const {
  if (lower.empty() || lower.size() != upper.size()) throw std::invalid_argument("Box: bad dimensions");
  for (std::size_t i = 0; i < size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i])) {
      throw std::invalid_argument("Box: each axis needs finite lower < upper");
    }
  }
}

namespace {

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string("model: non-finite ") + what);
  }
}

}  // namespace

void SlowFastModel::validate() const {
  if (slow_dim == 0 || fast_dim == 0 || noise_dim == 0 || param_dim == 0) {
    throw std::invalid_argument("model " + name + ": zero dimension");
  }
  if (!drift || !diffusion || !fast_drift || !fast_diffusion) {
    throw std::invalid_argument("model " + name + ": missing coefficient");
  }
  theta_box.validate();
  if (theta_box.size() != param_dim) throw std::invalid_argument("model " + name + ": theta box size mismatch");
  if (x0.size() != slow_dim || y0.size() != fast_dim) {
    throw std::invalid_argument("model " + name + ": initial condition size mismatch");
  }
  std::vector<double> theta(param_dim);
  for (std::size_t i = 0; i < param_dim; ++i) theta[i] = 0.5 * (theta_box.lower[i] + theta_box.upper[i]);

  std::vector<double> out(slow_dim);
  drift(theta, x0, y0, out);
  check_finite(out, "drift");
  out.assign(slow_dim * noise_dim, 0.0);
  diffusion(y0, out);
  check_finite(out, "diffusion");
  out.assign(fast_dim, 0.0);
  fast_drift(y0, out);
  check_finite(out, "fast drift");
  out.assign(fast_dim * fast_dim, 0.0);
  fast_diffusion(y0, out);
  check_finite(out, "fast diffusion");
  if (drift_jacobian_x) {
    out.assign(slow_dim * slow_dim, 0.0);
    drift_jacobian_x(theta, x0, y0, out);
    check_finite(out, "drift x-jacobian");
  }
  if (drift_jacobian_theta) {
    out.assign(slow_dim * param_dim, 0.0);
    drift_jacobian_theta(theta, x0, y0, out);
    check_finite(out, "drift theta-jacobian");
  }
  if (sigma_phi) {
    out.assign(slow_dim * slow_dim, 0.0);
    sigma_phi(theta, x0, out);
    check_finite(out, "sigma_phi");
  }
}

SlowFastModel constant_sigma_model() {
  SlowFastModel m;
  m.name = "constant_sigma";
  m.drift = [](auto theta, auto x, auto y, auto out) { out[0] = theta[0] * x[0] * y[0] * y[0]; };
  m.diffusion = [](auto, auto out) { out[0] = 1.0; };
  m.fast_drift = [](auto y, auto out) { out[0] = -y[0]; };
  m.fast_diffusion = [](auto, auto out) { out[0] = 1.0; };
  m.drift_jacobian_x = [](auto theta, auto, auto y, auto out) { out[0] = theta[0] * y[0] * y[0]; };
  m.drift_jacobian_theta = [](auto, auto x, auto y, auto out) { out[0] = x[0] * y[0] * y[0]; };
  // Phi = (theta x / 2)(y^2 - 1/2) solves L Phi = -(c - cbar); averaging
  // (d_y Phi)^2 = theta^2 x^2 y^2 over N(0, 1/2) gives theta^2 x^2 / 2.
  m.sigma_phi = [](auto theta, auto x, auto out) { out[0] = theta[0] * x[0] / std::numbers::sqrt2; };
  m.theta_box = Box{{0.1}, {3.0}};
  m.x0 = {1.0};
  m.y0 = {0.0};
  return m;
}

double variable_sigma_normalizer() {
  using boost::math::quadrature::trapezoidal;
  return trapezoidal([](double y) { return std::exp(-(std::sin(y) + std::cos(y))); }, 0.0,
                     2.0 * std::numbers::pi, 1e-15);
}

SlowFastModel variable_sigma_model() {
  SlowFastModel m;
  m.name = "variable_sigma";
  const double scale = variable_sigma_normalizer() / (2.0 * std::numbers::pi);
  m.drift = [](auto theta, auto x, auto, auto out) { out[0] = 0.5 * theta[0] * x[0]; };
  m.diffusion = [scale](auto y, auto out) { out[0] = scale * std::exp(std::sin(y[0]) + std::cos(y[0])); };
  m.fast_drift = [](auto y, auto out) { out[0] = 0.5 * (std::sin(y[0]) - std::cos(y[0])); };
  m.fast_diffusion = [](auto, auto out) { out[0] = 1.0; };
  m.drift_jacobian_x = [](auto theta, auto, auto, auto out) { out[0] = 0.5 * theta[0]; };
  m.drift_jacobian_theta = [](auto, auto x, auto, auto out) { out[0] = 0.5 * x[0]; };
  // c does not depend on y, so Phi = 0.
  m.sigma_phi = [](auto, auto, auto out) { out[0] = 0.0; };
  m.theta_box = Box{{0.1}, {3.0}};
  m.x0 = {1.0};
  m.y0 = {0.0};
  m.fast_on_circle = true;
  return m;
}

SlowFastModel builtin_model(const std::string& name) {
  if (name == "constant_sigma") return constant_sigma_model();
  if (name == "variable_sigma") return variable_sigma_model();
  throw std::invalid_argument("unknown model '" + name + "' (expected constant_sigma or variable_sigma)");
}

std::vector<std::string> builtin_model_names() { return {"constant_sigma", "variable_sigma"}; }

}  // namespace slowfast
