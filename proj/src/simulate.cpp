#include "slowfast/simulate.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace slowfast {

void SimConfig::validate() const {
  if (!(epsilon > 0.0) || !(eta > 0.0) || !(T > 0.0)) {
    throw std::invalid_argument("SimConfig: epsilon, eta and T must be positive");
  }
  if (fine_steps == 0) throw std::invalid_argument("SimConfig: fine_steps must be >= 1");
}

SimPath euler_maruyama(const SlowFastModel& model, std::span<const double> theta, HurstIndex H,
                       const SimConfig& cfg, const RandomStream& stream) {
  cfg.validate();
  return euler_maruyama(model, theta, FbmSampler(cfg.fine_steps, cfg.T, H), cfg, stream);
}

SimPath euler_maruyama(const SlowFastModel& model, std::span<const double> theta, const FbmSampler& sampler,
                       const SimConfig& cfg, const RandomStream& stream) {
  cfg.validate();
  if (sampler.steps() != cfg.fine_steps || sampler.horizon() != cfg.T) {
    throw std::invalid_argument("euler_maruyama: sampler grid does not match SimConfig");
  }
  if (theta.size() != model.param_dim) throw std::invalid_argument("euler_maruyama: theta has wrong size");

  const std::size_t m = model.slow_dim;
  const std::size_t q = model.fast_dim;
  const std::size_t mt = model.noise_dim;
  const std::size_t N = cfg.fine_steps;
  const double dt = cfg.T / static_cast<double>(N);

  SimPath path;
  path.T = cfg.T;
  path.steps = N;
  if (cfg.eta < 10.0 * dt) {
    std::ostringstream os;
    os << "eta = " << cfg.eta << " is below 10 fine steps (dt = " << dt << "); the fast process may be unstable";
    path.warnings.push_back(os.str());
  }

  const FbmPath w = sampler.sample(stream.derive(0), mt);
  RandomStream bm = stream.derive(1);

  path.slow.resize(static_cast<Eigen::Index>(N + 1), static_cast<Eigen::Index>(m));
  path.fast.resize(static_cast<Eigen::Index>(N + 1), static_cast<Eigen::Index>(q));

  std::vector<double> x(model.x0), y(model.y0);
  std::vector<double> c(m), sig(m * mt), f(q), tau(q * q), dw(mt), db(q);
  const double se = std::sqrt(cfg.epsilon);
  const double inv_eta = 1.0 / cfg.eta;
  const double sq_dt_eta = std::sqrt(dt / cfg.eta);
  constexpr double two_pi = 2.0 * std::numbers::pi;

  auto store = [&](std::size_t i) {
    for (std::size_t a = 0; a < m; ++a) path.slow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = x[a];
    for (std::size_t a = 0; a < q; ++a) path.fast(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = y[a];
  };
  if (model.fast_on_circle) {
    for (auto& v : y) v -= two_pi * std::floor(v / two_pi);
  }
  store(0);

  for (std::size_t i = 0; i < N; ++i) {
    model.drift(theta, x, y, c);
    model.diffusion(y, sig);
    model.fast_drift(y, f);
    model.fast_diffusion(y, tau);
    for (std::size_t k = 0; k < mt; ++k) dw[k] = w.values[k][i + 1] - w.values[k][i];
    for (std::size_t k = 0; k < q; ++k) db[k] = bm.normal();

    for (std::size_t a = 0; a < m; ++a) {
      double noise = 0.0;
      for (std::size_t k = 0; k < mt; ++k) noise += sig[a * mt + k] * dw[k];
      x[a] += c[a] * dt + se * noise;
    }
    for (std::size_t a = 0; a < q; ++a) {
      double noise = 0.0;
      for (std::size_t k = 0; k < q; ++k) noise += tau[a * q + k] * db[k];
      y[a] += f[a] * inv_eta * dt + sq_dt_eta * noise;
      if (model.fast_on_circle) y[a] -= two_pi * std::floor(y[a] / two_pi);
    }
    for (std::size_t a = 0; a < m; ++a) {
      if (!std::isfinite(x[a])) {
        throw SimulationError("euler_maruyama: non-finite slow state at step " + std::to_string(i + 1), i + 1);
      }
    }
    for (std::size_t a = 0; a < q; ++a) {
      if (!std::isfinite(y[a])) {
        throw SimulationError("euler_maruyama: non-finite fast state at step " + std::to_string(i + 1), i + 1);
      }
    }
    store(i + 1);
  }
  return path;
}

namespace {

ObservationSeries take_every(const Eigen::MatrixXd& values, double T, std::size_t steps, std::size_t n) {
  if (n == 0 || steps % n != 0) {
    throw std::invalid_argument("subsample: " + std::to_string(steps) + " steps not divisible by n = " +
                                std::to_string(n));
  }
  const std::size_t stride = steps / n;
  ObservationSeries obs;
  obs.T = T;
  obs.n = n;
  obs.values.resize(static_cast<Eigen::Index>(n + 1), values.cols());
  for (std::size_t k = 0; k <= n; ++k) {
    obs.values.row(static_cast<Eigen::Index>(k)) = values.row(static_cast<Eigen::Index>(k * stride));
  }
  return obs;
}

}  // namespace

ObservationSeries subsample(const SimPath& path, std::size_t n) { return take_every(path.slow, path.T, path.steps, n); }

ObservationSeries subsample(const ObservationSeries& obs, std::size_t n) {
  return take_every(obs.values, obs.T, obs.n, n);
}

ObservationSeries pure_fbm_observations(const FbmSampler& sampler, double epsilon, const Eigen::MatrixXd& sigma_bar,
                                        const RandomStream& stream) {
  const std::size_t mt = static_cast<std::size_t>(sigma_bar.cols());
  const FbmPath w = sampler.sample(stream, mt);
  ObservationSeries obs;
  obs.T = sampler.horizon();
  obs.n = sampler.steps();
  obs.values.resize(static_cast<Eigen::Index>(obs.n + 1), sigma_bar.rows());
  const double se = std::sqrt(epsilon);
  Eigen::VectorXd wk(static_cast<Eigen::Index>(mt));
  for (std::size_t k = 0; k <= obs.n; ++k) {
    for (std::size_t c = 0; c < mt; ++c) wk[static_cast<Eigen::Index>(c)] = w.values[c][k];
    obs.values.row(static_cast<Eigen::Index>(k)) = se * (sigma_bar * wk).transpose();
  }
  return obs;
}

}  // namespace slowfast
