#include "slowfast/drift.hpp"

#include <bit>
#include <cmath>
#include <mutex>
#include <stdexcept>

namespace slowfast {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMajor>;

namespace {

std::vector<double> gamma_table(std::size_t size, HurstIndex H) {
  std::vector<double> g(size);
  for (std::size_t k = 0; k < size; ++k) g[k] = fgn_autocovariance(static_cast<long>(k), H);
  return g;
}

Eigen::MatrixXd sigma_phi_at(const AveragedSystem& avg, std::span<const double> theta, const Eigen::VectorXd& x) {
  const auto m = static_cast<Eigen::Index>(avg.dim);
  std::vector<double> buf(static_cast<std::size_t>(m * m));
  avg.sigma_phi(theta, std::span<const double>(x.data(), static_cast<std::size_t>(m)), buf);
  return RowMap(buf.data(), m, m);
}

Eigen::MatrixXd sandwich_inverse(const Eigen::MatrixXd& info, const char* who) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-14 || !(info.diagonal().array() > 0.0).all()) {
    throw std::runtime_error(std::string(who) + ": singular information term");
  }
  return ldlt.solve(Eigen::MatrixXd::Identity(info.rows(), info.cols()));
}

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& A) { return 0.5 * (A + A.transpose()); }

void check_obs(const AveragedSystem& avg, const ObservationSeries& obs) {
  if (obs.n < 1 || obs.values.rows() != static_cast<Eigen::Index>(obs.n + 1)) {
    throw std::invalid_argument("observations: need n >= 1 and n+1 rows");
  }
  if (obs.dim() != avg.dim) throw std::invalid_argument("observations: dimension does not match the model");
}

}  // namespace

std::string to_string(DriftMethod m) { return m == DriftMethod::tfe ? "tfe" : "mce"; }

double min_eigenvalue(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

XiMatrix build_xi(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H, std::size_t n, double T,
                  const QuadratureConfig& q) {
  if (n < 1) throw std::invalid_argument("build_xi: n must be >= 1");
  if (avg.lambda > 0.0 && !avg.sigma_phi) throw std::invalid_argument("build_xi: lambda > 0 needs sigma_phi");
  const std::size_t r = std::max<std::size_t>(1, (q.cells + n - 1) / n);
  const std::size_t cells = n * r;
  const double h = T / static_cast<double>(cells);
  const OdeSolution ode = solve_averaged_ode(avg, theta, T, 2 * cells);

  const auto m = static_cast<Eigen::Index>(avg.dim);
  const auto mt = static_cast<Eigen::Index>(avg.sigma_bar.cols());
  const auto p = static_cast<Eigen::Index>(avg.param_dim);
  const auto nm = static_cast<Eigen::Index>(n) * m;

  // B_a = Z(t_{i+1}, s_a) sigma_bar for cell a in interval i, by a backward
  // sweep inside each interval; P_i = Z(t_{i+1}, t_i).
  Eigen::MatrixXd B(m, mt * static_cast<Eigen::Index>(cells));
  std::vector<Eigen::MatrixXd> P(n);
  std::vector<Eigen::MatrixXd> brownian(n, Eigen::MatrixXd::Zero(m, m));
  const double l2h = avg.lambda * avg.lambda * h;
  Eigen::MatrixXd z(m, m), tmp(m, m);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t start = 2 * r * i;
    const std::size_t end = 2 * r * (i + 1);
    z.setIdentity();
    for (std::size_t k = end; k-- > start;) {
      tmp.noalias() = z * ode.propagators[k];
      z = tmp;
      if (k % 2 == 1) {
        const auto a = static_cast<Eigen::Index>((k - 1) / 2);
        B.middleCols(a * mt, mt).noalias() = z * avg.sigma_bar;
        if (avg.lambda > 0.0) {
          const Eigen::MatrixXd zs = z * sigma_phi_at(avg, theta, ode.states[k]);
          brownian[i].noalias() += l2h * zs * zs.transpose();
        }
      }
    }
    P[i] = z;
  }

  Eigen::MatrixXd G = interval_gram(B, static_cast<std::size_t>(mt), gamma_table(cells, H), n, q.exec);
  G *= std::pow(h, 2.0 * H.value());
  if (avg.lambda > 0.0) {
    for (std::size_t i = 0; i < n; ++i) G.block(static_cast<Eigen::Index>(i) * m, static_cast<Eigen::Index>(i) * m, m, m) += brownian[i];
  }

  // Q block (j, i) = Z(t_{j+1}, t_{i+1}) for i <= j.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nm, nm);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd col = Eigen::MatrixXd::Identity(m, m);
    for (std::size_t j = i; j < n; ++j) {
      Q.block(static_cast<Eigen::Index>(j) * m, static_cast<Eigen::Index>(i) * m, m, m) = col;
      if (j + 1 < n) col = P[j + 1] * col;
    }
  }

  XiMatrix xi;
  xi.theta.assign(theta.begin(), theta.end());
  xi.hurst = H.value();
  xi.n = n;
  xi.T = T;
  xi.cells = cells;
  const Eigen::MatrixXd QG = Q.triangularView<Eigen::Lower>() * G;
  xi.matrix = symmetrize(QG * Q.transpose());

  xi.trajectory.resize(static_cast<Eigen::Index>(n), m);
  xi.sensitivity.resize(nm, p);
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t node = 2 * r * k;
    xi.trajectory.row(static_cast<Eigen::Index>(k - 1)) = ode.states[node].transpose();
    xi.sensitivity.middleRows(static_cast<Eigen::Index>(k - 1) * m, m) = ode.sensitivities[node];
  }

  xi.factor.compute(xi.matrix);
  if (xi.factor.info() != Eigen::Success) {
    const double scale = xi.matrix.trace() / static_cast<double>(nm);
    const double lmin = min_eigenvalue(xi.matrix);
    if (lmin < -1e-10 * scale) {
      throw std::runtime_error("build_xi: Xi is not positive semidefinite (min eigenvalue " + std::to_string(lmin) +
                               ", floor " + std::to_string(-1e-10 * scale) + ")");
    }
    xi.jitter = 1e-12 * scale;
    xi.factor.compute(xi.matrix + xi.jitter * Eigen::MatrixXd::Identity(nm, nm));
    if (xi.factor.info() != Eigen::Success) throw std::runtime_error("build_xi: factorisation failed after jitter");
  }
  return xi;
}

ContrastEvaluation tfe_contrast(const AveragedSystem& avg, std::span<const double> theta, const ObservationSeries& obs,
                                std::size_t ode_steps, bool with_gradient) {
  check_obs(avg, obs);
  const std::size_t stride = std::max<std::size_t>(1, (ode_steps + obs.n - 1) / obs.n);
  const OdeSolution ode = solve_averaged_ode(avg, theta, obs.T, obs.n * stride);
  ContrastEvaluation ev;
  ev.theta.assign(theta.begin(), theta.end());
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(avg.param_dim));
  for (std::size_t k = 1; k <= obs.n; ++k) {
    const Eigen::VectorXd res = obs.values.row(static_cast<Eigen::Index>(k)).transpose() - ode.states[k * stride];
    ev.value += res.squaredNorm();
    if (with_gradient) grad.noalias() -= 2.0 * ode.sensitivities[k * stride].transpose() * res;
  }
  if (with_gradient) ev.gradient = grad;
  return ev;
}

ContrastEvaluation mce_contrast(const AveragedSystem& avg, std::span<const double> theta, double H_param,
                                const ObservationSeries& obs, const XiMatrix& xi) {
  check_obs(avg, obs);
  if (xi.n != obs.n || xi.T != obs.T || xi.hurst != H_param || xi.theta.size() != theta.size() ||
      !std::equal(theta.begin(), theta.end(), xi.theta.begin())) {
    throw std::invalid_argument("mce_contrast: Xi was built for different (theta, H, n, T)");
  }
  const auto m = static_cast<Eigen::Index>(avg.dim);
  Eigen::VectorXd r(static_cast<Eigen::Index>(obs.n) * m);
  for (std::size_t k = 1; k <= obs.n; ++k) {
    r.segment(static_cast<Eigen::Index>(k - 1) * m, m) =
        (obs.values.row(static_cast<Eigen::Index>(k)) - xi.trajectory.row(static_cast<Eigen::Index>(k - 1))).transpose();
  }
  ContrastEvaluation ev;
  ev.theta.assign(theta.begin(), theta.end());
  ev.value = r.dot(xi.solve(r));
  return ev;
}

std::shared_ptr<const XiMatrix> XiCache::get(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H,
                                             std::size_t n, double T, const QuadratureConfig& q) {
  Key key;
  for (double t : theta) key.push_back(std::bit_cast<std::uint64_t>(t));
  key.push_back(std::bit_cast<std::uint64_t>(H.value()));
  key.push_back(n);
  key.push_back(std::bit_cast<std::uint64_t>(T));
  key.push_back(q.cells);
  {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      ++hits_;
      return it->second;
    }
  }
  auto xi = std::make_shared<const XiMatrix>(build_xi(avg, theta, H, n, T, q));
  std::unique_lock lock(mutex_);
  if (entries_.size() >= capacity_) entries_.clear();
  return entries_.emplace(std::move(key), std::move(xi)).first->second;
}

std::size_t XiCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

namespace {

void attach_variance(DriftEstimate& est, const Eigen::MatrixXd& M, double epsilon) {
  est.asymptotic = M;
  est.covariance = epsilon * M;
}

}  // namespace

DriftEstimate estimate_tfe(const AveragedSystem& avg, const ObservationSeries& obs, const Box& theta_box,
                           const TfeOptions& opt) {
  check_obs(avg, obs);
  const Objective f = [&](std::span<const double> theta, std::span<double> grad) {
    const ContrastEvaluation ev = tfe_contrast(avg, theta, obs, opt.ode_steps, !grad.empty());
    if (!grad.empty()) Eigen::Map<Eigen::VectorXd>(grad.data(), static_cast<Eigen::Index>(grad.size())) = *ev.gradient;
    return ev.value;
  };
  DriftEstimate est;
  est.method = DriftMethod::tfe;
  est.diagnostics = minimize_box(f, theta_box, opt.optimizer, true);
  est.point = est.diagnostics.point;
  est.contrast = est.diagnostics.value;
  if (opt.variance) {
    const HurstIndex H(opt.variance->hurst);
    const Eigen::MatrixXd M = obs.n <= kTfeLimitThreshold
                                  ? tfe_variance(avg, est.point, H, obs.n, obs.T, opt.variance->quadrature)
                                  : tfe_variance_limit(avg, est.point, H, obs.T, opt.variance->quadrature);
    attach_variance(est, M, opt.variance->epsilon);
  }
  return est;
}

DriftEstimate estimate_mce(const AveragedSystem& avg, const ObservationSeries& obs, const Box& theta_box,
                           const MceOptions& opt, XiCache* cache) {
  check_obs(avg, obs);
  const HurstIndex Hp(opt.hurst_param);
  XiCache local;
  XiCache& xc = cache ? *cache : local;
  const Objective f = [&](std::span<const double> theta, std::span<double>) {
    const auto xi = xc.get(avg, theta, Hp, obs.n, obs.T, opt.quadrature);
    return mce_contrast(avg, theta, opt.hurst_param, obs, *xi).value;
  };
  DriftEstimate est;
  est.method = DriftMethod::mce;
  est.diagnostics = minimize_box(f, theta_box, opt.optimizer, false);
  est.point = est.diagnostics.point;
  est.contrast = est.diagnostics.value;
  if (opt.variance) {
    const Eigen::MatrixXd M =
        mce_variance(avg, est.point, HurstIndex(opt.variance->hurst), Hp, obs.n, obs.T, opt.variance->quadrature);
    attach_variance(est, M, opt.variance->epsilon);
  }
  return est;
}

Eigen::MatrixXd tfe_variance(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H, std::size_t n,
                             double T, const QuadratureConfig& q) {
  const XiMatrix xi = build_xi(avg, theta, H, n, T, q);
  const Eigen::MatrixXd& D = xi.sensitivity;
  const Eigen::MatrixXd inv = sandwich_inverse(D.transpose() * D, "tfe_variance");
  return symmetrize(inv * (D.transpose() * xi.matrix * D) * inv);
}

Eigen::MatrixXd tfe_variance_limit(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H, double T,
                                   const QuadratureConfig& q) {
  if (avg.lambda > 0.0 && !avg.sigma_phi) throw std::invalid_argument("tfe_variance_limit: lambda > 0 needs sigma_phi");
  const std::size_t cells = std::max<std::size_t>(1, q.cells);
  const std::size_t M = 2 * cells;
  const OdeSolution ode = solve_averaged_ode(avg, theta, T, M);
  const double dt = ode.step();
  const double h = T / static_cast<double>(cells);
  const auto m = static_cast<Eigen::Index>(avg.dim);
  const auto p = static_cast<Eigen::Index>(avg.param_dim);
  const auto mt = static_cast<Eigen::Index>(avg.sigma_bar.cols());

  // W(s) = int_s^T S(t)^T Z(t, s) dt by a backward trapezoid recursion.
  std::vector<Eigen::MatrixXd> W(M + 1);
  W[M] = Eigen::MatrixXd::Zero(p, m);
  for (std::size_t k = M; k-- > 0;) {
    const Eigen::MatrixXd& Phi = ode.propagators[k];
    W[k] = W[k + 1] * Phi + 0.5 * dt * (ode.sensitivities[k].transpose() + ode.sensitivities[k + 1].transpose() * Phi);
  }

  Eigen::MatrixXd V(p, mt * static_cast<Eigen::Index>(cells));
  Eigen::MatrixXd middle_bm = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t a = 0; a < cells; ++a) {
    const std::size_t node = 2 * a + 1;
    V.middleCols(static_cast<Eigen::Index>(a) * mt, mt) = W[node] * avg.sigma_bar;
    if (avg.lambda > 0.0) {
      const Eigen::MatrixXd ws = W[node] * sigma_phi_at(avg, theta, ode.states[node]);
      middle_bm.noalias() += avg.lambda * avg.lambda * h * ws * ws.transpose();
    }
  }
  Eigen::MatrixXd middle = interval_gram(V, static_cast<std::size_t>(mt), gamma_table(cells, H), 1, q.exec);
  middle = middle * std::pow(h, 2.0 * H.value()) + middle_bm;

  const std::vector<double> w = simpson_weights(M, dt);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t k = 0; k <= M; ++k) info.noalias() += w[k] * ode.sensitivities[k].transpose() * ode.sensitivities[k];
  const Eigen::MatrixXd inv = sandwich_inverse(info, "tfe_variance_limit");
  return symmetrize(inv * middle * inv);
}

Eigen::MatrixXd mce_variance(const AveragedSystem& avg, std::span<const double> theta, HurstIndex H_true,
                             HurstIndex H_param, std::size_t n, double T, const QuadratureConfig& q) {
  const XiMatrix A = build_xi(avg, theta, H_param, n, T, q);
  const Eigen::MatrixXd& D = A.sensitivity;
  const Eigen::MatrixXd AinvD = A.factor.solve(D);
  const Eigen::MatrixXd inv = sandwich_inverse(D.transpose() * AinvD, "mce_variance");
  std::optional<XiMatrix> other;
  if (H_true.value() != H_param.value()) other = build_xi(avg, theta, H_true, n, T, q);
  const Eigen::MatrixXd& XH = other ? other->matrix : A.matrix;
  return symmetrize(inv * (AinvD.transpose() * XH * AinvD) * inv);
}

VarianceComparison variance_comparison(const Eigen::MatrixXd& M, const Eigen::MatrixXd& MH) {
  if (M.rows() != MH.rows() || M.cols() != MH.cols() || M.rows() != M.cols()) {
    throw std::invalid_argument("variance_comparison: dimension mismatch");
  }
  VarianceComparison c;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(M - MH), Eigen::EigenvaluesOnly);
  c.eigenvalues = es.eigenvalues();
  c.min_eigenvalue = c.eigenvalues.minCoeff();
  c.passed = c.min_eigenvalue >= -1e-10;
  return c;
}

}  // namespace slowfast
