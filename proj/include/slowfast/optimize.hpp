#pragma once

// Multi-start projected quasi-Newton minimisation over a box.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slowfast/model.hpp"

namespace slowfast {

struct OptimizerConfig {
  std::size_t starts = 8;
  std::size_t max_iterations = 200;
  double gradient_tolerance = 1e-9;
  double fd_step = 1e-6;  // relative central-difference step when no gradient is supplied
};

/// Returns f(theta); writes the gradient into `grad` when it is non-empty.
using Objective = std::function<double(std::span<const double> theta, std::span<double> grad)>;

struct StartReport {
  std::vector<double> start;
  std::vector<double> point;
  double value = 0.0;
  double projected_gradient = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool stalled = false;  // line search exhausted at the precision floor
  std::string failure;
};

struct OptimizeResult {
  std::vector<double> point;
  double value = 0.0;
  std::vector<StartReport> starts;
  bool boundary_hit = false;
  bool multiple_minima = false;
  std::size_t evaluations = 0;
};

/// i-th point (i >= 1) of the Halton sequence in [0, 1)^dim.
std::vector<double> halton_point(std::size_t index, std::size_t dim);

/// Throws std::runtime_error when no start converges.
OptimizeResult minimize_box(const Objective& f, const Box& box, const OptimizerConfig& cfg, bool analytic_gradient);

}  // namespace slowfast
