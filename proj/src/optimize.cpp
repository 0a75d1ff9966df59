#include "slowfast/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace slowfast {

std::vector<double> halton_point(std::size_t index, std::size_t dim) {
  static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (dim > std::size(primes)) throw std::invalid_argument("halton_point: dimension too large");
  std::vector<double> out(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    double f = 1.0;
    double r = 0.0;
    std::size_t i = index;
    while (i > 0) {
      f /= primes[d];
      r += f * static_cast<double>(i % primes[d]);
      i /= primes[d];
    }
    out[d] = r;
  }
  return out;
}

namespace {

using Vec = Eigen::VectorXd;

struct Evaluator {
  const Objective& f;
  const Box& box;
  const OptimizerConfig& cfg;
  bool analytic;
  std::size_t count = 0;

  double value(const Vec& x) {
    ++count;
    return f(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), {});
  }

  double value_and_gradient(const Vec& x, Vec& g) {
    const auto p = static_cast<std::size_t>(x.size());
    g.resize(x.size());
    if (analytic) {
      ++count;
      return f(std::span<const double>(x.data(), p), std::span<double>(g.data(), p));
    }
    const double fx = value(x);
    Vec xp = x;
    for (std::size_t j = 0; j < p; ++j) {
      const auto J = static_cast<Eigen::Index>(j);
      const double h = cfg.fd_step * std::max(1.0, std::abs(x[J]));
      const bool up_ok = x[J] + h <= box.upper[j];
      const bool dn_ok = x[J] - h >= box.lower[j];
      if (up_ok && dn_ok) {
        xp[J] = x[J] + h;
        const double fu = value(xp);
        xp[J] = x[J] - h;
        const double fd = value(xp);
        g[J] = (fu - fd) / (2.0 * h);
      } else if (up_ok) {
        xp[J] = x[J] + h;
        g[J] = (value(xp) - fx) / h;
      } else {
        xp[J] = x[J] - h;
        g[J] = (fx - value(xp)) / h;
      }
      xp[J] = x[J];
    }
    return fx;
  }

  Vec project(Vec x) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x[i] = std::clamp(x[i], box.lower[static_cast<std::size_t>(i)], box.upper[static_cast<std::size_t>(i)]);
    }
    return x;
  }
};

StartReport run_start(Evaluator& ev, const Vec& x0) {
  const auto p = x0.size();
  StartReport rep;
  rep.start.assign(x0.data(), x0.data() + p);
  Vec x = ev.project(x0);
  Vec g;
  double fx = ev.value_and_gradient(x, g);
  if (!std::isfinite(fx)) {
    rep.failure = "non-finite objective at start";
    return rep;
  }
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(p, p);
  bool fresh = true;  // Hinv is the identity
  const double diam = ev.box.diameter();

  for (rep.iterations = 0; rep.iterations < ev.cfg.max_iterations; ++rep.iterations) {
    const Vec pg = ev.project(x - g) - x;
    rep.projected_gradient = pg.norm();
    if (rep.projected_gradient <= ev.cfg.gradient_tolerance) {
      rep.converged = true;
      break;
    }
    Vec d = -Hinv * g;
    for (Eigen::Index i = 0; i < p; ++i) {
      const auto k = static_cast<std::size_t>(i);
      const bool at_lo = x[i] <= ev.box.lower[k] && g[i] > 0.0;
      const bool at_hi = x[i] >= ev.box.upper[k] && g[i] < 0.0;
      if (at_lo || at_hi) d[i] = 0.0;
    }
    if (!(g.dot(d) < 0.0)) {
      Hinv.setIdentity();
      fresh = true;
      d = pg;
    }
    double alpha = std::min(1.0, diam / std::max(d.norm(), 1e-300));
    bool accepted = false;
    Vec xn;
    double fn = 0.0;
    for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
      xn = ev.project(x + alpha * d);
      if ((xn - x).norm() == 0.0) break;
      fn = ev.value(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh) {
        Hinv.setIdentity();
        fresh = true;
        continue;
      }
      rep.converged = true;
      rep.stalled = true;
      break;
    }
    Vec gn;
    fn = ev.value_and_gradient(xn, gn);
    const Vec s = xn - x;
    const Vec y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) Hinv *= sy / y.dot(y);
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(p, p);
      Hinv = (I - rho * s * y.transpose()) * Hinv * (I - rho * y * s.transpose()) + rho * s * s.transpose();
      fresh = false;
    }
    x = xn;
    g = gn;
    fx = fn;
  }
  rep.point.assign(x.data(), x.data() + p);
  rep.value = fx;
  if (!rep.converged) rep.failure = "iteration limit reached";
  return rep;
}

}  // namespace

OptimizeResult minimize_box(const Objective& f, const Box& box, const OptimizerConfig& cfg, bool analytic_gradient) {
  box.validate();
  if (cfg.starts == 0) throw std::invalid_argument("minimize_box: need at least one start");
  Evaluator ev{f, box, cfg, analytic_gradient};
  const std::size_t p = box.size();

  OptimizeResult res;
  for (std::size_t s = 0; s < cfg.starts; ++s) {
    const std::vector<double> u = halton_point(s + 1, p);
    Vec x0(static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i) {
      x0[static_cast<Eigen::Index>(i)] = box.lower[i] + u[i] * (box.upper[i] - box.lower[i]);
    }
    try {
      res.starts.push_back(run_start(ev, x0));
    } catch (const std::exception& e) {
      StartReport rep;
      rep.start.assign(x0.data(), x0.data() + x0.size());
      rep.failure = e.what();
      res.starts.push_back(rep);
    }
  }
  res.evaluations = ev.count;

  const StartReport* best = nullptr;
  for (const auto& r : res.starts) {
    if (r.converged && (!best || r.value < best->value)) best = &r;
  }
  if (!best) {
    std::string why = res.starts.empty() ? "" : res.starts.front().failure;
    throw std::runtime_error("minimize_box: no start converged (" + why + ")");
  }
  res.point = best->point;
  res.value = best->value;

  const double diam = box.diameter();
  for (const auto& r : res.starts) {
    if (!r.converged || &r == best) continue;
    double dist = 0.0;
    for (std::size_t i = 0; i < p; ++i) dist += (r.point[i] - best->point[i]) * (r.point[i] - best->point[i]);
    const bool same_value = std::abs(r.value - best->value) <= 1e-8 * std::max(1.0, std::abs(best->value));
    if (same_value && std::sqrt(dist) > 1e-4 * diam) res.multiple_minima = true;
  }
  for (std::size_t i = 0; i < p; ++i) {
    const double tol = 1e-12 * (box.upper[i] - box.lower[i]);
    if (res.point[i] <= box.lower[i] + tol || res.point[i] >= box.upper[i] - tol) res.boundary_hit = true;
  }
  return res;
}

}  // namespace slowfast
