#include "slowfast/hurst.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace slowfast {

FilteredSeries second_order_filter(const ObservationSeries& obs) {
  if (obs.n < 2 || obs.values.rows() != static_cast<Eigen::Index>(obs.n + 1)) {
    throw std::invalid_argument("second_order_filter: need n >= 2 and n+1 rows");
  }
  FilteredSeries f;
  f.n = obs.n;
  f.T = obs.T;
  const auto rows = static_cast<Eigen::Index>(obs.n - 1);
  const auto& z = obs.values;
  f.values = z.bottomRows(rows) - 2.0 * z.middleRows(1, rows) + z.topRows(rows);
  return f;
}

double phi(double n, double T, double x) {
  if (!(n > T) || !(T > 0.0)) throw std::invalid_argument("phi: need n > T > 0");
  return std::pow(T / n, 2.0 * x) * (4.0 - std::exp2(2.0 * x));
}

double phi_inverse(double n, double T, double v) {
  if (!(n > T) || !(T > 0.0)) throw std::invalid_argument("phi_inverse: need n > T > 0");
  if (!(v >= 0.0)) throw std::invalid_argument("phi_inverse: v must be >= 0");
  if (v >= 3.0) return 0.0;
  if (v == 0.0) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > 1e-14) {
    const double mid = 0.5 * (lo + hi);
    if (phi(n, T, mid) > v) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::string to_string(HurstMethod m) { return m == HurstMethod::h1 ? "h1" : "h2"; }

namespace {

double plug_in(double point, auto&& sd) {
  if (!(point > 0.0 && point < 1.0)) return std::numeric_limits<double>::quiet_NaN();
  return sd(HurstIndex(point));
}

}  // namespace

HurstEstimate estimate_h1(const ObservationSeries& obs, double epsilon, const Eigen::MatrixXd& sigma_bar) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("estimate_h1: epsilon must be > 0");
  const double s2 = sigma_bar.squaredNorm();
  if (!(s2 > 0.0)) throw std::invalid_argument("estimate_h1: sigma_bar must be nonzero");
  const double n = static_cast<double>(obs.n);
  if (!(n > obs.T)) throw std::invalid_argument("estimate_h1: need n > T");
  if (static_cast<Eigen::Index>(obs.dim()) != sigma_bar.rows()) {
    throw std::invalid_argument("estimate_h1: sigma_bar rows must match the observation dimension");
  }
  const FilteredSeries f = second_order_filter(obs);
  HurstEstimate e;
  e.method = HurstMethod::h1;
  e.statistic = f.sum_of_squares() / (n * epsilon * s2);
  e.point = phi_inverse(n, obs.T, e.statistic);
  e.clamped = e.statistic >= 3.0 || e.statistic == 0.0;
  e.in_range = e.point > 0.5 && e.point < 1.0;
  e.theoretical_sd = plug_in(e.point, [&](HurstIndex H) { return theoretical_sd_h1(n, obs.T, H, sigma_bar); });
  return e;
}

HurstEstimate estimate_h2(const ObservationSeries& obs, const Eigen::MatrixXd& sigma_bar) {
  if (obs.n < 4 || obs.n % 2 != 0) throw std::invalid_argument("estimate_h2: sample count must be even and >= 4");
  const double num = second_order_filter(obs).sum_of_squares();
  const double den = second_order_filter(subsample(obs, obs.n / 2)).sum_of_squares();
  if (!(den > 0.0)) throw std::invalid_argument("estimate_h2: zero denominator");
  HurstEstimate e;
  e.method = HurstMethod::h2;
  e.statistic = num / den;
  e.point = 0.5 - std::log(e.statistic) / (2.0 * std::numbers::ln2);
  e.in_range = e.point > 0.5 && e.point < 1.0;
  e.theoretical_sd =
      plug_in(e.point, [&](HurstIndex H) { return theoretical_sd_h2(static_cast<double>(obs.n), H, sigma_bar); });
  return e;
}

double normalized_qv(const ObservationSeries& obs, const Eigen::MatrixXd& sigma_bar, HurstIndex H) {
  const double s2 = sigma_bar.squaredNorm();
  if (!(s2 > 0.0)) throw std::invalid_argument("normalized_qv: sigma_bar must be nonzero");
  const double p = 2.0 * H.value();
  const double n = static_cast<double>(obs.n);
  const double scale = std::pow(n, p - 1.0) / (std::pow(obs.T, p) * (4.0 - std::exp2(p)));
  return scale * second_order_filter(obs).sum_of_squares() / s2;
}

}  // namespace slowfast
