#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/fbm.hpp"
#include "slowfast/model.hpp"
#include "slowfast/random.hpp"

namespace slowfast {

struct SimConfig {
  double epsilon = 0.1;
  double eta = 0.01;
  double T = 1.0;
  std::size_t fine_steps = 100000;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Fine-grid trajectory. Row i holds the state at t_i = i T / N.
struct SimPath {
  double T = 1.0;
  std::size_t steps = 0;
  Eigen::MatrixXd slow;  // (N+1) x m
  Eigen::MatrixXd fast;  // (N+1) x (d-m)
  std::vector<std::string> warnings;
};

/// Uniformly spaced slow-process samples at t_k = T k / n, k = 0..n.
struct ObservationSeries {
  double T = 1.0;
  std::size_t n = 0;
  Eigen::MatrixXd values;  // (n+1) x m

  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
  double time(std::size_t k) const { return T * static_cast<double>(k) / static_cast<double>(n); }
};

class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, std::size_t step) : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Explicit Euler-Maruyama on the fine grid. fBm increments come from
/// `stream.derive(0)` (one sub-stream per component), the fast Brownian
/// motion from `stream.derive(1)`. Throws SimulationError on a non-finite
/// state.
SimPath euler_maruyama(const SlowFastModel& model, std::span<const double> theta, HurstIndex H,
                       const SimConfig& cfg, const RandomStream& stream);

/// As above with a prebuilt sampler (must match cfg.fine_steps, cfg.T, H).
SimPath euler_maruyama(const SlowFastModel& model, std::span<const double> theta, const FbmSampler& sampler,
                       const SimConfig& cfg, const RandomStream& stream);

ObservationSeries subsample(const SimPath& path, std::size_t n);
ObservationSeries subsample(const ObservationSeries& obs, std::size_t n);

/// x_k = sqrt(eps) sigma_bar W^H_{t_k}, the pure-fBm surrogate of the slow process.
ObservationSeries pure_fbm_observations(const FbmSampler& sampler, double epsilon, const Eigen::MatrixXd& sigma_bar,
                                        const RandomStream& stream);

}  // namespace slowfast
