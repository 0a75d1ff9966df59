#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "slowfast/simulate.hpp"

namespace slowfast {

/// Second-order differences z_k - 2 z_{k-1} + z_{k-2}, k = 2..n (row k-2).
struct FilteredSeries {
  Eigen::MatrixXd values;  // (n-1) x m
  std::size_t n = 0;
  double T = 1.0;

  /// sum_k |Delta^2 z_k|^2
  double sum_of_squares() const { return values.squaredNorm(); }
};

FilteredSeries second_order_filter(const ObservationSeries& obs);

/// phi(x) = (T/n)^{2x} (4 - 2^{2x}); strictly decreasing from 3 to 0 on [0, 1].
double phi(double n, double T, double x);

/// Left inverse of phi by bisection to 1e-14; 0 for v >= 3.
double phi_inverse(double n, double T, double v);

enum class HurstMethod { h1, h2 };
std::string to_string(HurstMethod m);

struct HurstEstimate {
  double point = 0.0;
  HurstMethod method = HurstMethod::h1;
  double theoretical_sd = 0.0;  // plug-in at `point`; NaN when point is outside (0, 1)
  double statistic = 0.0;       // the value inverted by phi (h1) or the ratio (h2)
  bool in_range = false;        // point in (1/2, 1)
  bool clamped = false;         // h1 only: statistic >= 3 or == 0
};

/// Epsilon-aware estimator from n+1 observations.
HurstEstimate estimate_h1(const ObservationSeries& obs, double epsilon, const Eigen::MatrixXd& sigma_bar);

/// Ratio estimator from 2n+1 observations (obs.n = 2n, even, >= 4).
/// `sigma_bar` only enters the plug-in sd.
HurstEstimate estimate_h2(const ObservationSeries& obs,
                          const Eigen::MatrixXd& sigma_bar = Eigen::MatrixXd::Identity(1, 1));

/// n^{2H-1} / (T^{2H} (4 - 2^{2H})) * |sigma_bar|^{-2} sum |Delta^2 x|^2.
double normalized_qv(const ObservationSeries& obs, const Eigen::MatrixXd& sigma_bar, HurstIndex H);

}  // namespace slowfast
