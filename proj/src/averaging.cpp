#include "slowfast/averaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace slowfast {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMajor>;

// ---------------------------------------------------------------------------
// Invariant measure

namespace {

constexpr std::size_t kMinNodes = 64;
constexpr std::size_t kMaxNodes = std::size_t{1} << 20;
constexpr double kDropWeight = 1e-17;

double gauss_integral(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 15>::integrate(f, a, b);
}

// Log-density on n+1 (interval) or n (periodic) equispaced nodes.
struct DensityRule {
  double lo = 0.0;
  double hi = 0.0;
  bool periodic = false;
  std::function<std::vector<double>(std::size_t)> log_density;

  InvariantMeasure at(std::size_t n, FastDomain domain) const {
    const std::vector<double> ld = log_density(n);
    const std::size_t count = ld.size();
    const double h = (hi - lo) / static_cast<double>(n);
    const double top = *std::max_element(ld.begin(), ld.end());
    std::vector<double> fine(count), coarse(count, 0.0);
    double zf = 0.0;
    double zc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double end = (!periodic && (i == 0 || i + 1 == count)) ? 0.5 : 1.0;
      const double d = std::isfinite(ld[i]) ? std::exp(ld[i] - top) : 0.0;
      fine[i] = end * h * d;
      zf += fine[i];
      if (i % 2 == 0) {
        coarse[i] = end * 2.0 * h * d;
        zc += coarse[i];
      }
    }
    if (!(zf > 0.0) || !std::isfinite(zf)) throw std::runtime_error("invariant measure: density does not normalise");
    InvariantMeasure m;
    m.domain = domain;
    for (std::size_t i = 0; i < count; ++i) {
      const double wf = fine[i] / zf;
      const double wc = coarse[i] / zc;
      if (wf < kDropWeight && wc < kDropWeight) continue;
      m.nodes.push_back(lo + h * static_cast<double>(i));
      m.weights.push_back(wf);
      m.coarse_weights.push_back(wc);
    }
    return m;
  }
};

InvariantMeasure refine(const DensityRule& rule, FastDomain domain,
                        const std::vector<std::function<double(double)>>& tests, double tol) {
  for (std::size_t n = kMinNodes; n <= kMaxNodes; n *= 2) {
    InvariantMeasure m = rule.at(n, domain);
    bool ok = true;
    for (const auto& g : tests) {
      const auto v = m.integrate(g);
      if (!(v.error <= tol * std::max(1.0, std::abs(v.value)))) {
        ok = false;
        break;
      }
    }
    if (ok) return m;
  }
  throw std::runtime_error("invariant measure: quadrature did not converge");
}

DensityRule gradient_rule(const std::function<double(double)>& f, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("invariant measure: tau must be positive");
  const double scale = 2.0 / (tau * tau);
  // Scan outwards until the log-density is 50 below its running maximum.
  auto scan = [&](double dir) {
    constexpr double step = 0.25;
    double y = 0.0;
    double ld = 0.0;
    double top = 0.0;
    while (std::abs(y) < 1e4) {
      const double next = y + dir * step;
      ld += scale * gauss_integral(f, y, next);
      y = next;
      top = std::max(top, ld);
      if (!std::isfinite(ld)) break;
      if (ld < top - 50.0) return y;
    }
    throw std::runtime_error("invariant measure: density is not normalisable (no decay found)");
  };
  DensityRule r;
  r.hi = scan(1.0);
  r.lo = scan(-1.0);
  const double lo = r.lo;
  const double hi = r.hi;
  r.log_density = [f, scale, lo, hi](std::size_t n) {
    std::vector<double> ld(n + 1);
    const double h = (hi - lo) / static_cast<double>(n);
    ld[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = lo + h * static_cast<double>(i);
      ld[i + 1] = ld[i] + scale * gauss_integral(f, a, a + h);
    }
    return ld;
  };
  return r;
}

DensityRule circle_rule(const std::function<double(double)>& f, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("invariant measure: tau must be positive");
  constexpr double two_pi = 2.0 * std::numbers::pi;
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  const double period = GK::integrate(f, 0.0, two_pi, 10, 1e-14);
  const double mass = GK::integrate([&](double y) { return std::abs(f(y)); }, 0.0, two_pi, 10, 1e-14);
  if (std::abs(period) > 1e-10 * (1.0 + mass)) {
    throw std::invalid_argument("invariant measure: drift has nonzero mean over one period (" +
                                std::to_string(period) + "); the density is not periodic");
  }
  const double scale = 2.0 / (tau * tau);
  DensityRule r;
  r.lo = 0.0;
  r.hi = two_pi;
  r.periodic = true;
  r.log_density = [f, scale](std::size_t n) {
    std::vector<double> ld(n);
    const double h = two_pi / static_cast<double>(n);
    ld[0] = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double a = h * static_cast<double>(i);
      ld[i + 1] = ld[i] + scale * gauss_integral(f, a, a + h);
    }
    return ld;
  };
  return r;
}

// Probe functions for the resolution loop; periodic ones on the circle so
// the trapezoid rule keeps its spectral convergence.
const std::vector<std::function<double(double)>>& default_tests(FastDomain domain) {
  static const std::vector<std::function<double(double)>> line = {[](double y) { return y; },
                                                                   [](double y) { return y * y; }};
  static const std::vector<std::function<double(double)>> circle = {
      [](double y) { return std::cos(y); }, [](double y) { return std::sin(y); },
      [](double y) { return std::cos(2.0 * y); }};
  return domain == FastDomain::line ? line : circle;
}

}  // namespace

InvariantMeasure::Value InvariantMeasure::integrate(const std::function<double(double)>& g) const {
  double v = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double gi = g(nodes[i]);
    v += weights[i] * gi;
    c += coarse_weights[i] * gi;
  }
  return {v, std::abs(v - c)};
}

InvariantMeasure invariant_measure(const std::function<double(double)>& fast_drift, double tau, FastDomain domain,
                                   double tol) {
  const DensityRule rule = domain == FastDomain::line ? gradient_rule(fast_drift, tau) : circle_rule(fast_drift, tau);
  return refine(rule, domain, default_tests(domain), tol);
}

InvariantMeasure invariant_measure_from_density(const std::function<double(double)>& density, double lo, double hi,
                                                bool periodic, double tol) {
  if (!(hi > lo)) throw std::invalid_argument("invariant measure: need lo < hi");
  DensityRule r;
  r.lo = lo;
  r.hi = hi;
  r.periodic = periodic;
  r.log_density = [density, lo, hi, periodic](std::size_t n) {
    const std::size_t count = periodic ? n : n + 1;
    std::vector<double> ld(count);
    const double h = (hi - lo) / static_cast<double>(n);
    for (std::size_t i = 0; i < count; ++i) {
      const double d = density(lo + h * static_cast<double>(i));
      if (d < 0.0 || !std::isfinite(d)) throw std::invalid_argument("invariant measure: density must be finite and >= 0");
      ld[i] = d > 0.0 ? std::log(d) : -std::numeric_limits<double>::infinity();
    }
    return ld;
  };
  const FastDomain domain = periodic ? FastDomain::circle : FastDomain::line;
  return refine(r, domain, default_tests(domain), tol);
}

InvariantMeasure invariant_measure(const SlowFastModel& model, double tol) {
  if (model.fast_dim != 1) {
    throw std::invalid_argument("invariant_measure: only scalar fast processes are supported; supply a density");
  }
  auto tau_at = [&](double y) {
    double out = 0.0;
    model.fast_diffusion(std::span<const double>(&y, 1), std::span<double>(&out, 1));
    return out;
  };
  const double tau = tau_at(model.y0[0]);
  for (double y : {-2.0, -0.5, 0.7, 1.9, 3.1}) {
    if (std::abs(tau_at(y) - tau) > 1e-14 * std::abs(tau)) {
      throw std::invalid_argument("invariant_measure: fast diffusion is not constant; supply a density");
    }
  }
  auto f = [&model](double y) {
    double out = 0.0;
    model.fast_drift(std::span<const double>(&y, 1), std::span<double>(&out, 1));
    return out;
  };
  return invariant_measure(f, std::abs(tau), model.fast_on_circle ? FastDomain::circle : FastDomain::line, tol);
}

InvariantMeasure::Value invariant_average(const std::function<double(double)>& fast_drift, double tau,
                                          const std::function<double(double)>& g, FastDomain domain, double tol) {
  const DensityRule rule = domain == FastDomain::line ? gradient_rule(fast_drift, tau) : circle_rule(fast_drift, tau);
  return refine(rule, domain, {g}, tol).integrate(g);
}

// ---------------------------------------------------------------------------
// Averaged system

void AveragedSystem::validate() const {
  if (dim == 0 || param_dim == 0) throw std::invalid_argument("AveragedSystem: zero dimension");
  if (!drift || !drift_jacobian_x || !drift_jacobian_theta) {
    throw std::invalid_argument("AveragedSystem: drift and its jacobians are required");
  }
  if (static_cast<std::size_t>(sigma_bar.rows()) != dim || sigma_bar.cols() == 0) {
    throw std::invalid_argument("AveragedSystem: sigma_bar must be m x m~");
  }
  if (x0.size() != dim) throw std::invalid_argument("AveragedSystem: x0 has wrong size");
  if (!(lambda >= 0.0)) throw std::invalid_argument("AveragedSystem: lambda must be >= 0");
  if (lambda > 0.0 && !sigma_phi) throw std::invalid_argument("AveragedSystem: lambda > 0 requires sigma_phi");
  theta_box.validate();
  if (theta_box.size() != param_dim) throw std::invalid_argument("AveragedSystem: theta box size mismatch");
}

AveragedSystem averaged_system(const std::string& model_name, double lambda) {
  const SlowFastModel model = builtin_model(model_name);
  AveragedSystem a;
  a.name = model.name;
  a.lambda = lambda;
  a.x0 = model.x0;
  a.theta_box = model.theta_box;
  a.sigma_phi = model.sigma_phi;
  if (model_name == "constant_sigma") {
    const auto ou = [](double y) { return -y; };
    const double m2 = invariant_average(ou, 1.0, [](double y) { return y * y; }, FastDomain::line).value;
    a.drift = [m2](auto theta, auto x, auto out) { out[0] = theta[0] * x[0] * m2; };
    a.drift_jacobian_x = [m2](auto theta, auto, auto out) { out[0] = theta[0] * m2; };
    a.drift_jacobian_theta = [m2](auto, auto x, auto out) { out[0] = x[0] * m2; };
    a.sigma_bar = Eigen::MatrixXd::Constant(1, 1, 1.0);
  } else {
    const auto f = [](double y) { return 0.5 * (std::sin(y) - std::cos(y)); };
    const auto sigma = [&model](double y) {
      double out = 0.0;
      model.diffusion(std::span<const double>(&y, 1), std::span<double>(&out, 1));
      return out;
    };
    a.drift = [](auto theta, auto x, auto out) { out[0] = 0.5 * theta[0] * x[0]; };
    a.drift_jacobian_x = [](auto theta, auto, auto out) { out[0] = 0.5 * theta[0]; };
    a.drift_jacobian_theta = [](auto, auto x, auto out) { out[0] = 0.5 * x[0]; };
    a.sigma_bar = Eigen::MatrixXd::Constant(1, 1, invariant_average(f, 1.0, sigma, FastDomain::circle).value);
  }
  return a;
}

AveragedSystem average_model(const SlowFastModel& model, const InvariantMeasure& measure, double lambda) {
  model.validate();
  if (model.fast_dim != 1) throw std::invalid_argument("average_model: scalar fast process required");
  const std::size_t m = model.slow_dim;
  const std::size_t p = model.param_dim;
  const std::size_t mt = model.noise_dim;

  AveragedSystem a;
  a.name = model.name + "_averaged";
  a.dim = m;
  a.param_dim = p;
  a.lambda = lambda;
  a.x0 = model.x0;
  a.theta_box = model.theta_box;
  a.sigma_phi = model.sigma_phi;

  auto average_slow = [&measure](const SlowFastModel::SlowFn& fn, std::size_t size) {
    return [measure, fn, size](std::span<const double> theta, std::span<const double> x, std::span<double> out) {
      std::vector<double> buf(size);
      std::fill(out.begin(), out.end(), 0.0);
      for (std::size_t i = 0; i < measure.nodes.size(); ++i) {
        const double y = measure.nodes[i];
        fn(theta, x, std::span<const double>(&y, 1), buf);
        for (std::size_t k = 0; k < size; ++k) out[k] += measure.weights[i] * buf[k];
      }
    };
  };
  a.drift = average_slow(model.drift, m);

  if (model.drift_jacobian_x) {
    a.drift_jacobian_x = average_slow(model.drift_jacobian_x, m * m);
  } else {
    a.drift_jacobian_x = [drift = a.drift, m](std::span<const double> theta, std::span<const double> x,
                                              std::span<double> out) {
      std::vector<double> xp(x.begin(), x.end()), up(m), dn(m);
      for (std::size_t j = 0; j < m; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + h;
        drift(theta, xp, up);
        xp[j] = x[j] - h;
        drift(theta, xp, dn);
        xp[j] = x[j];
        for (std::size_t i = 0; i < m; ++i) out[i * m + j] = (up[i] - dn[i]) / (2.0 * h);
      }
    };
  }
  if (model.drift_jacobian_theta) {
    a.drift_jacobian_theta = average_slow(model.drift_jacobian_theta, m * p);
  } else {
    a.drift_jacobian_theta = [drift = a.drift, m, p](std::span<const double> theta, std::span<const double> x,
                                                     std::span<double> out) {
      std::vector<double> tp(theta.begin(), theta.end()), up(m), dn(m);
      for (std::size_t j = 0; j < p; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta[j]));
        tp[j] = theta[j] + h;
        drift(tp, x, up);
        tp[j] = theta[j] - h;
        drift(tp, x, dn);
        tp[j] = theta[j];
        for (std::size_t i = 0; i < m; ++i) out[i * p + j] = (up[i] - dn[i]) / (2.0 * h);
      }
    };
  }

  a.sigma_bar = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(mt));
  std::vector<double> buf(m * mt);
  for (std::size_t i = 0; i < measure.nodes.size(); ++i) {
    const double y = measure.nodes[i];
    model.diffusion(std::span<const double>(&y, 1), buf);
    a.sigma_bar += measure.weights[i] * RowMap(buf.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(mt));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Limit ODE

OdeSolution solve_averaged_ode(const AveragedSystem& avg, std::span<const double> theta, double T, std::size_t M) {
  if (M < 1) throw std::invalid_argument("solve_averaged_ode: M must be >= 1");
  if (!(T > 0.0)) throw std::invalid_argument("solve_averaged_ode: T must be positive");
  if (theta.size() != avg.param_dim) throw std::invalid_argument("solve_averaged_ode: theta has wrong size");
  const auto m = static_cast<Eigen::Index>(avg.dim);
  const auto p = static_cast<Eigen::Index>(avg.param_dim);
  const double h = T / static_cast<double>(M);

  OdeSolution sol;
  sol.T = T;
  sol.steps = M;
  sol.theta.assign(theta.begin(), theta.end());
  sol.states.resize(M + 1);
  sol.sensitivities.resize(M + 1);
  sol.propagators.resize(M);

  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(avg.x0.data(), m);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, p);
  sol.states[0] = x;
  sol.sensitivities[0] = S;

  std::vector<double> jxb(static_cast<std::size_t>(m * m)), jtb(static_cast<std::size_t>(m * p));
  Eigen::VectorXd xs(m), kx[4];
  Eigen::MatrixXd Ss(m, p), Ps(m, m), kS[4], kP[4];
  Eigen::MatrixXd Jx(m, m), Jt(m, p);
  for (int s = 0; s < 4; ++s) {
    kx[s].resize(m);
    kS[s].resize(m, p);
    kP[s].resize(m, m);
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  constexpr double a[4] = {0.0, 0.5, 0.5, 1.0};

  for (std::size_t k = 0; k < M; ++k) {
    for (int s = 0; s < 4; ++s) {
      if (s == 0) {
        xs = x;
        Ss = S;
        Ps = I;
      } else {
        xs = x + a[s] * h * kx[s - 1];
        Ss = S + a[s] * h * kS[s - 1];
        Ps = I + a[s] * h * kP[s - 1];
      }
      avg.drift(theta, std::span<const double>(xs.data(), m), std::span<double>(kx[s].data(), m));
      avg.drift_jacobian_x(theta, std::span<const double>(xs.data(), m), jxb);
      avg.drift_jacobian_theta(theta, std::span<const double>(xs.data(), m), jtb);
      Jx = RowMap(jxb.data(), m, m);
      Jt = RowMap(jtb.data(), m, p);
      kS[s].noalias() = Jx * Ss;
      kS[s] += Jt;
      kP[s].noalias() = Jx * Ps;
    }
    x += (h / 6.0) * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
    S += (h / 6.0) * (kS[0] + 2.0 * kS[1] + 2.0 * kS[2] + kS[3]);
    sol.propagators[k] = I + (h / 6.0) * (kP[0] + 2.0 * kP[1] + 2.0 * kP[2] + kP[3]);
    if (!x.allFinite() || !S.allFinite()) {
      throw std::runtime_error("solve_averaged_ode: non-finite state at step " + std::to_string(k + 1));
    }
    sol.states[k + 1] = x;
    sol.sensitivities[k + 1] = S;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Fundamental matrix

FundamentalMatrixCache::FundamentalMatrixCache(const OdeSolution& ode)
    : dim_(ode.states.empty() ? 0 : static_cast<std::size_t>(ode.states[0].size())), propagators_(ode.propagators) {
  const auto m = static_cast<Eigen::Index>(dim_);
  from_origin_.resize(propagators_.size() + 1);
  from_origin_[0] = Eigen::MatrixXd::Identity(m, m);
  for (std::size_t k = 0; k < propagators_.size(); ++k) from_origin_[k + 1] = propagators_[k] * from_origin_[k];
}

Eigen::MatrixXd FundamentalMatrixCache::operator()(std::size_t i, std::size_t j) const {
  if (i < j || i > steps()) throw std::out_of_range("FundamentalMatrixCache: need j <= i <= M");
  const auto m = static_cast<Eigen::Index>(dim_);
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(m, m);
  for (std::size_t k = j; k < i; ++k) z = propagators_[k] * z;
  return z;
}

std::vector<Eigen::MatrixXd> FundamentalMatrixCache::column_sweep(std::size_t i) const {
  if (i > steps()) throw std::out_of_range("FundamentalMatrixCache: node out of range");
  const auto m = static_cast<Eigen::Index>(dim_);
  std::vector<Eigen::MatrixXd> out(i + 1);
  out[i] = Eigen::MatrixXd::Identity(m, m);
  for (std::size_t j = i; j-- > 0;) out[j] = out[j + 1] * propagators_[j];
  return out;
}

Eigen::MatrixXd FundamentalMatrixCache::by_inversion(std::size_t i, std::size_t j) const {
  if (i < j || i > steps()) throw std::out_of_range("FundamentalMatrixCache: need j <= i <= M");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(from_origin_[j]);
  if (!lu.isInvertible()) throw std::runtime_error("FundamentalMatrixCache: singular Z(t_j, 0)");
  return from_origin_[i] * lu.inverse();
}

FundamentalMatrixCache fundamental_matrix(const AveragedSystem& avg, std::span<const double> theta,
                                          const OdeSolution& ode) {
  if (ode.theta.size() != theta.size() || !std::equal(theta.begin(), theta.end(), ode.theta.begin())) {
    throw std::invalid_argument("fundamental_matrix: ODE was solved at a different theta");
  }
  if (ode.states.empty() || static_cast<std::size_t>(ode.states[0].size()) != avg.dim) {
    throw std::invalid_argument("fundamental_matrix: ODE dimension mismatch");
  }
  for (std::size_t k = 0; k < ode.propagators.size(); ++k) {
    if (ode.propagators[k].determinant() == 0.0) {
      throw std::runtime_error("fundamental_matrix: singular propagator at step " + std::to_string(k));
    }
  }
  return FundamentalMatrixCache(ode);
}

// ---------------------------------------------------------------------------
// Sensitivities and fluctuation covariance

std::vector<double> simpson_weights(std::size_t k, double h) {
  std::vector<double> w(k + 1, 0.0);
  if (k == 0) return w;
  if (k == 1) {
    w[0] = w[1] = 0.5 * h;
    return w;
  }
  const std::size_t even = (k % 2 == 0) ? k : k - 3;
  for (std::size_t i = 0; i + 2 <= even; i += 2) {
    w[i] += h / 3.0;
    w[i + 1] += 4.0 * h / 3.0;
    w[i + 2] += h / 3.0;
  }
  if (even != k) {
    w[even] += 3.0 * h / 8.0;
    w[even + 1] += 9.0 * h / 8.0;
    w[even + 2] += 9.0 * h / 8.0;
    w[even + 3] += 3.0 * h / 8.0;
  }
  return w;
}

std::vector<Eigen::MatrixXd> theta_sensitivity(const AveragedSystem& avg, std::span<const double> theta,
                                               const OdeSolution& ode, const FundamentalMatrixCache& Z) {
  const auto m = static_cast<Eigen::Index>(avg.dim);
  const auto p = static_cast<Eigen::Index>(avg.param_dim);
  const std::size_t M = ode.steps;
  if (Z.steps() != M) throw std::invalid_argument("theta_sensitivity: Z and ODE grids differ");

  std::vector<Eigen::MatrixXd> g(M + 1);
  std::vector<double> buf(static_cast<std::size_t>(m * p));
  for (std::size_t j = 0; j <= M; ++j) {
    avg.drift_jacobian_theta(theta, std::span<const double>(ode.states[j].data(), m), buf);
    g[j] = RowMap(buf.data(), m, p);
  }
  std::vector<Eigen::MatrixXd> out(M + 1);
  Eigen::MatrixXd z(m, m), tmp(m, m);
  for (std::size_t i = 0; i <= M; ++i) {
    const std::vector<double> w = simpson_weights(i, ode.step());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, p);
    z.setIdentity();
    for (std::size_t j = i + 1; j-- > 0;) {
      acc.noalias() += w[j] * z * g[j];
      if (j > 0) {
        tmp.noalias() = z * Z.step_propagator(j - 1);
        z = tmp;
      }
    }
    out[i] = acc;
  }
  return out;
}

namespace {

std::size_t cell_index(double t, double T, std::size_t cells) {
  if (t < 0.0 || t > T * (1.0 + 1e-12)) throw std::invalid_argument("fluctuation_covariance: time outside [0, T]");
  const double x = t / T * static_cast<double>(cells);
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * static_cast<double>(cells)) {
    throw std::invalid_argument("fluctuation_covariance: time is not a quadrature cell boundary");
  }
  return static_cast<std::size_t>(r);
}

}  // namespace

Eigen::MatrixXd fluctuation_covariance(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H,
                                       const OdeSolution& ode, const FundamentalMatrixCache& Z, double t1, double t2) {
  if (avg.lambda > 0.0 && !avg.sigma_phi) throw std::invalid_argument("fluctuation_covariance: lambda > 0 needs sigma_phi");
  if (ode.steps % 2 != 0) throw std::invalid_argument("fluctuation_covariance: ODE grid must have 2 * cells steps");
  if (t1 > t2) return fluctuation_covariance(avg, theta, H, ode, Z, t2, t1).transpose();

  const auto m = static_cast<Eigen::Index>(avg.dim);
  const std::size_t cells = ode.steps / 2;
  const double h = ode.T / static_cast<double>(cells);
  const std::size_t c1 = cell_index(t1, ode.T, cells);
  const std::size_t c2 = cell_index(t2, ode.T, cells);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(m, m);
  if (c1 == 0 || c2 == 0) return cov;

  const auto sweep1 = Z.column_sweep(2 * c1);
  const auto sweep2 = Z.column_sweep(2 * c2);
  std::vector<Eigen::MatrixXd> A1(c1), A2(c2);
  for (std::size_t a = 0; a < c1; ++a) A1[a] = sweep1[2 * a + 1] * avg.sigma_bar;
  for (std::size_t b = 0; b < c2; ++b) A2[b] = sweep2[2 * b + 1] * avg.sigma_bar;

  std::vector<double> gamma(c2);
  for (std::size_t k = 0; k < c2; ++k) gamma[k] = fgn_autocovariance(static_cast<long>(k), H);
  const double kernel_scale = std::pow(h, 2.0 * H.value());

  for (std::size_t a = 0; a < c1; ++a) {
    Eigen::MatrixXd row = Eigen::MatrixXd::Zero(A2[0].rows(), A2[0].cols());
    for (std::size_t b = 0; b < c2; ++b) row += gamma[a > b ? a - b : b - a] * A2[b];
    cov.noalias() += A1[a] * row.transpose();
  }
  cov *= kernel_scale;

  if (avg.lambda > 0.0) {
    std::vector<double> buf(static_cast<std::size_t>(m * m));
    for (std::size_t a = 0; a < c1; ++a) {
      avg.sigma_phi(theta, std::span<const double>(ode.states[2 * a + 1].data(), m), buf);
      const Eigen::MatrixXd sp = RowMap(buf.data(), m, m);
      cov.noalias() += (avg.lambda * avg.lambda * h) * (sweep1[2 * a + 1] * sp) * (sweep2[2 * a + 1] * sp).transpose();
    }
  }
  return cov;
}

}  // namespace slowfast
