#include "slowfast/fbm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <fftw3.h>

namespace slowfast {

namespace {

// Stencil of the numerator: sum_k c_k |j + k|^{2H}, k = -half..half.
template <std::size_t N>
struct Stencil {
  std::array<double, N> coef;
  int half() const { return static_cast<int>(N / 2); }
};

constexpr Stencil<5> kRhoStencil{{-1.0, 4.0, -6.0, 4.0, -1.0}};
constexpr Stencil<7> kRhoTildeStencil{{-1.0, 2.0, 1.0, -4.0, 1.0, 2.0, -1.0}};
constexpr Stencil<3> kFgnStencil{{1.0, -2.0, 1.0}};

// Below this lag the direct sum is accurate; above it the terms cancel to
// O(j^{2H-4}) and the binomial expansion in k/j is used instead.
constexpr long kDirectLimit = 6;

constexpr int kMaxOrder = 80;

template <std::size_t N>
const std::array<double, kMaxOrder>& stencil_moments(const Stencil<N>& s) {
  static const std::array<double, kMaxOrder> moments = [&s] {
    std::array<double, kMaxOrder> m{};
    for (int r = 0; r < kMaxOrder; ++r) {
      for (int i = 0; i < static_cast<int>(N); ++i) m[r] += s.coef[i] * std::pow(static_cast<double>(i - s.half()), r);
    }
    return m;
  }();
  return moments;
}

template <std::size_t N>
double stencil_sum(const Stencil<N>& s, long j, double p) {
  const long aj = std::labs(j);
  if (aj < kDirectLimit) {
    double acc = 0.0;
    for (int i = 0; i < static_cast<int>(N); ++i) {
      acc += s.coef[i] * abs_pow(static_cast<double>(aj + i - s.half()), p);
    }
    return acc;
  }
  // |j+k|^p = j^p sum_r binom(p, r) (k/j)^r; the low moments M_r = sum_k c_k k^r
  // vanish, so the leading cancellation is exact.
  const double x = 1.0 / static_cast<double>(aj);
  double binom = 1.0;
  double xr = 1.0;
  double acc = 0.0;
  const auto& moments = stencil_moments(s);
  double weight = 0.0;
  for (double c : s.coef) weight += std::abs(c);
  const double reach = static_cast<double>(s.half());
  double reach_r = 1.0;
  for (int r = 0; r < kMaxOrder; ++r) {
    acc += binom * moments[r] * xr;
    // odd moments vanish, so bound the remainder by |binom| (half/j)^r sum|c_k|
    if (r > 4 && std::abs(binom) * xr * reach_r * weight <= 1e-18 * std::abs(acc)) break;
    reach_r *= reach;
    binom *= (p - r) / (r + 1.0);
    xr *= x;
  }
  return std::pow(static_cast<double>(aj), p) * acc;
}

double rho_denominator(double H) { return 2.0 * (4.0 - std::exp2(2.0 * H)); }

// Sum of squares of `term` over j in Z, truncated adaptively.
template <class F>
double symmetric_square_series(F term, std::vector<double>* table, long* truncation) {
  long J = 10000;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(J) + 1);
  for (long j = 0; j <= J; ++j) values.push_back(term(j));
  for (;;) {
    double block = 0.0;
    for (long j = 2 * J; j > J; --j) block += term(j) * term(j);
    if (2.0 * block < 1e-12 || J > (1L << 26)) break;
    for (long j = J + 1; j <= 2 * J; ++j) values.push_back(term(j));
    J *= 2;
  }
  double acc = 0.0;
  for (long j = J; j >= 1; --j) acc += values[j] * values[j];
  const double total = values[0] * values[0] + 2.0 * acc;
  if (table) *table = std::move(values);
  if (truncation) *truncation = J;
  return total;
}

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan forward_plan(int size) {
  std::lock_guard lock(plan_mutex());
  static std::map<int, fftw_plan> plans;
  auto it = plans.find(size);
  if (it != plans.end()) return it->second;
  std::vector<std::complex<double>> in(size), out(size);
  auto* pin = reinterpret_cast<fftw_complex*>(in.data());
  auto* pout = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan p = fftw_plan_dft_1d(size, pin, pout, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  if (!p) throw std::runtime_error("fftw: plan creation failed for size " + std::to_string(size));
  plans.emplace(size, p);
  return p;
}

void fft(int size, std::vector<std::complex<double>>& in, std::vector<std::complex<double>>& out) {
  fftw_execute_dft(forward_plan(size), reinterpret_cast<fftw_complex*>(in.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
}

constexpr std::size_t kCholeskyLimit = std::size_t{1} << 13;

}  // namespace

HurstIndex::HurstIndex(double value) : value_(value) {
  if (!(value > 0.0 && value < 1.0)) {
    throw std::invalid_argument("Hurst index must lie in (0, 1), got " + std::to_string(value));
  }
}

double abs_pow(double x, double p) {
  if (x == 0.0) return 0.0;
  return std::exp(p * std::log(std::abs(x)));
}

double fbm_covariance(double s, double t, HurstIndex H) {
  if (s < 0.0 || t < 0.0) throw std::invalid_argument("fbm_covariance: negative time");
  const double p = 2.0 * H.value();
  return 0.5 * (abs_pow(s, p) + abs_pow(t, p) - abs_pow(t - s, p));
}

double fgn_autocovariance(long k, HurstIndex H) {
  return 0.5 * stencil_sum(kFgnStencil, k, 2.0 * H.value());
}

double rho(long j, HurstIndex H) {
  if (j == 0) return 1.0;
  return stencil_sum(kRhoStencil, j, 2.0 * H.value()) / rho_denominator(H.value());
}

double rho_tilde(long j, HurstIndex H) {
  return stencil_sum(kRhoTildeStencil, j, 2.0 * H.value()) /
         (rho_denominator(H.value()) * std::exp2(H.value()));
}

AutocovarianceTable AutocovarianceTable::build(HurstIndex H) {
  AutocovarianceTable t{H, 0, {}, {}};
  long j1 = 0;
  long j2 = 0;
  symmetric_square_series([H](long j) { return slowfast::rho(j, H); }, &t.rho, &j1);
  symmetric_square_series([H](long j) { return slowfast::rho_tilde(j, H); }, &t.rho_tilde, &j2);
  t.truncation = std::min(j1, j2);
  t.rho.resize(static_cast<std::size_t>(t.truncation) + 1);
  t.rho_tilde.resize(static_cast<std::size_t>(t.truncation) + 1);
  return t;
}

double AutocovarianceTable::sigma1_sq() const { return slowfast::sigma1_sq(hurst); }
double AutocovarianceTable::sigma2_sq() const { return slowfast::sigma2_sq(hurst); }

double sigma1_sq(HurstIndex H) {
  return 2.0 * symmetric_square_series([H](long j) { return rho(j, H); }, nullptr, nullptr);
}

double sigma2_sq(HurstIndex H) {
  return symmetric_square_series([H](long j) { return rho_tilde(j, H); }, nullptr, nullptr);
}

double sigma_factor(const Eigen::MatrixXd& sigma_bar) {
  const double norm2 = sigma_bar.squaredNorm();
  if (sigma_bar.size() == 0 || norm2 == 0.0) throw std::invalid_argument("sigma_factor: zero sigma_bar");
  const Eigen::MatrixXd gram = sigma_bar * sigma_bar.transpose();
  return gram.squaredNorm() / (norm2 * norm2);
}

double sigma_star_sq(HurstIndex H, const Eigen::MatrixXd& sigma_bar) {
  return sigma1_sq(H) * sigma_factor(sigma_bar);
}

double sigma_star_star_sq(HurstIndex H, const Eigen::MatrixXd& sigma_bar) {
  const double v = (1.5 * sigma1_sq(H) - 2.0 * sigma2_sq(H)) * sigma_factor(sigma_bar);
  if (v < 0.0) throw std::logic_error("sigma_star_star_sq: negative variance " + std::to_string(v));
  return v;
}

double theoretical_sd_h1(double n, double T, HurstIndex H, const Eigen::MatrixXd& sigma_bar) {
  if (!(n > T) || !(T > 0.0)) throw std::invalid_argument("theoretical_sd_h1: need n > T > 0");
  return std::sqrt(sigma_star_sq(H, sigma_bar)) / (2.0 * std::sqrt(n) * std::log(n / T));
}

double theoretical_sd_h2(double sample_count, HurstIndex H, const Eigen::MatrixXd& sigma_bar) {
  if (!(sample_count >= 2.0)) throw std::invalid_argument("theoretical_sd_h2: sample count < 2");
  return std::sqrt(sigma_star_star_sq(H, sigma_bar)) /
         (2.0 * std::numbers::ln2 * std::sqrt(sample_count / 2.0));
}

FbmSampler::FbmSampler(std::size_t steps, double horizon, HurstIndex H)
    : steps_(steps), horizon_(horizon), hurst_(H) {
  if (steps == 0) throw std::invalid_argument("FbmSampler: steps must be >= 1");
  if (!(horizon > 0.0)) throw std::invalid_argument("FbmSampler: horizon must be > 0");
  scale_ = std::pow(horizon / static_cast<double>(steps), H.value());

  const std::size_t m = 2 * steps;
  std::vector<std::complex<double>> row(m), eig(m);
  for (std::size_t k = 0; k <= steps; ++k) row[k] = fgn_autocovariance(static_cast<long>(k), H);
  for (std::size_t k = steps + 1; k < m; ++k) row[k] = row[m - k];
  fft(static_cast<int>(m), row, eig);

  min_eigenvalue_ = eig[0].real();
  for (const auto& e : eig) min_eigenvalue_ = std::min(min_eigenvalue_, e.real());

  if (min_eigenvalue_ >= -1e-10) {
    sqrt_eig_.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
      sqrt_eig_[k] = std::sqrt(std::max(eig[k].real(), 0.0) / static_cast<double>(m));
    }
    return;
  }
  if (steps > kCholeskyLimit) {
    throw std::runtime_error("FbmSampler: circulant embedding has eigenvalue " + std::to_string(min_eigenvalue_) +
                             " and N exceeds the Cholesky fallback limit");
  }
  method_ = Method::cholesky;
  Eigen::MatrixXd cov(steps, steps);
  for (std::size_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < steps; ++j) {
      cov(i, j) = fgn_autocovariance(static_cast<long>(i) - static_cast<long>(j), H);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw std::runtime_error("FbmSampler: Cholesky fallback failed");
  cholesky_ = llt.matrixL();
}

FbmSampler::~FbmSampler() = default;
FbmSampler::FbmSampler(FbmSampler&&) noexcept = default;
FbmSampler& FbmSampler::operator=(FbmSampler&&) noexcept = default;

void FbmSampler::sample_increments(RandomStream& stream, std::vector<double>& out) const {
  out.resize(steps_);
  if (method_ == Method::cholesky) {
    Eigen::VectorXd z(steps_);
    for (std::size_t i = 0; i < steps_; ++i) z[i] = stream.normal();
    const Eigen::VectorXd x = cholesky_ * z;
    for (std::size_t i = 0; i < steps_; ++i) out[i] = scale_ * x[i];
    return;
  }
  const std::size_t m = 2 * steps_;
  std::vector<std::complex<double>> in(m), w(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double a = stream.normal();
    const double b = stream.normal();
    in[k] = sqrt_eig_[k] * std::complex<double>(a, b);
  }
  fft(static_cast<int>(m), in, w);
  for (std::size_t i = 0; i < steps_; ++i) out[i] = scale_ * w[i].real();
}

FbmPath FbmSampler::sample(const RandomStream& stream, std::size_t components) const {
  FbmPath path;
  path.horizon = horizon_;
  path.steps = steps_;
  path.hurst = hurst_.value();
  path.values.resize(components);
  std::vector<double> inc;
  for (std::size_t c = 0; c < components; ++c) {
    RandomStream sub = stream.derive(c);
    sample_increments(sub, inc);
    auto& v = path.values[c];
    v.resize(steps_ + 1);
    v[0] = 0.0;
    for (std::size_t i = 0; i < steps_; ++i) v[i + 1] = v[i] + inc[i];
  }
  return path;
}

FbmPath sample_fbm(std::size_t steps, double horizon, HurstIndex H, std::size_t components,
                   const RandomStream& stream) {
  return FbmSampler(steps, horizon, H).sample(stream, components);
}

}  // namespace slowfast
