#include "doctest.h"

#include <cmath>

#include "slowfast/model.hpp"
#include "slowfast/simulate.hpp"

using namespace slowfast;
using doctest::Approx;

namespace {
constexpr double kVariableSigmaL = 9.8399892540698621;  // 2 pi I0(sqrt 2)
}

TEST_CASE("built-in models") {
  const auto c = constant_sigma_model();
  c.validate();
  std::vector<double> out(1);
  const std::vector<double> th{1.0}, x{1.0}, y{2.0};
  c.drift(th, x, y, out);
  CHECK(out[0] == 4.0);

  const auto v = variable_sigma_model();
  v.validate();
  CHECK(v.fast_on_circle);
  CHECK(variable_sigma_normalizer() == Approx(kVariableSigmaL).epsilon(1e-12));
  const std::vector<double> y0{0.0};
  v.diffusion(y0, out);
  CHECK(out[0] == Approx(kVariableSigmaL * std::exp(1.0) / (2.0 * std::numbers::pi)).epsilon(1e-12));

  CHECK_THROWS_AS(builtin_model("nope"), std::invalid_argument);
  CHECK(builtin_model_names().size() == 2);
}

TEST_CASE("Box") {
  const Box b{{0.1, -1.0}, {3.0, 1.0}};
  b.validate();
  const std::vector<double> inside{1.0, 0.0}, outside{4.0, 0.0};
  CHECK(b.contains(inside));
  CHECK_FALSE(b.contains(outside));
  std::vector<double> p{4.0, -2.0};
  b.clamp(p);
  CHECK(p == std::vector<double>{3.0, -1.0});
  CHECK_THROWS(Box({{1.0}, {0.0}}).validate());
}

TEST_CASE("euler_maruyama is deterministic and matches the averaged limit for tiny scales") {
  const auto model = constant_sigma_model();
  const std::vector<double> th{1.0};
  // explicit Euler needs dt << eta for an unbiased fast average, so eta = 1e-5
  // on 10^7 steps stands in for eta = 1e-6
  SimConfig cfg{1e-6, 1e-5, 1.0, 10000000, 1};
  const auto a = euler_maruyama(model, th, HurstIndex(0.85), cfg, RandomStream(3));
  const auto b = euler_maruyama(model, th, HurstIndex(0.85), cfg, RandomStream(3));
  CHECK(a.slow == b.slow);
  CHECK(a.fast == b.fast);
  double sup = 0.0;
  for (std::size_t i = 0; i <= cfg.fine_steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(cfg.fine_steps);
    sup = std::max(sup, std::abs(a.slow(static_cast<Eigen::Index>(i), 0) - std::exp(0.5 * t)));
  }
  CHECK(sup < 0.01);
  CHECK(a.warnings.empty());
  SimConfig coarse{0.1, 1e-3, 1.0, 5000, 1};
  CHECK_FALSE(euler_maruyama(model, th, HurstIndex(0.85), coarse, RandomStream(3)).warnings.empty());
}

TEST_CASE("averaging error shrinks with (eps, eta)") {
  const auto model = constant_sigma_model();
  const std::vector<double> th{1.0};
  const FbmSampler sampler(100000, 1.0, HurstIndex(0.85));
  double previous = 1e300;
  for (auto [eps, eta] : {std::pair{0.1, 0.01}, std::pair{0.01, 0.001}, std::pair{0.001, 0.0001}}) {
    SimConfig cfg{eps, eta, 1.0, 100000, 1};
    double mean_sup = 0.0;
    for (std::uint64_t r = 0; r < 20; ++r) {
      const auto p = euler_maruyama(model, th, sampler, cfg, RandomStream(17, {r}));
      double sup = 0.0;
      for (Eigen::Index i = 0; i < p.slow.rows(); i += 10) {
        sup = std::max(sup, std::abs(p.slow(i, 0) - std::exp(0.5 * static_cast<double>(i) / 100000.0)));
      }
      mean_sup += sup / 20.0;
    }
    CHECK(mean_sup < previous);
    previous = mean_sup;
  }
}

TEST_CASE("zero dynamics keep x at x0") {
  auto model = constant_sigma_model();
  model.drift = [](auto, auto, auto, auto out) { out[0] = 0.0; };
  model.diffusion = [](auto, auto out) { out[0] = 0.0; };
  const std::vector<double> th{1.0};
  SimConfig cfg{0.1, 0.01, 1.0, 1000, 1};
  const auto p = euler_maruyama(model, th, HurstIndex(0.7), cfg, RandomStream(1));
  CHECK((p.slow.array() == 1.0).all());
}

TEST_CASE("fast OU process has invariant variance 1/2") {
  const auto model = constant_sigma_model();
  const std::vector<double> th{1.0};
  SimConfig cfg{0.01, 0.001, 1.0, 100000, 1};
  const auto p = euler_maruyama(model, th, HurstIndex(0.85), cfg, RandomStream(9));
  const auto half = static_cast<Eigen::Index>(cfg.fine_steps / 2);
  const double m2 = p.fast.col(0).tail(half).array().square().mean();
  // about 250 independent relaxation times in [T/2, T]
  CHECK(m2 == Approx(0.5).epsilon(0.2));
}

TEST_CASE("variable-sigma fast process stays on the circle") {
  const auto model = variable_sigma_model();
  const std::vector<double> th{1.0};
  SimConfig cfg{0.1, 0.01, 1.0, 10000, 1};
  const auto p = euler_maruyama(model, th, HurstIndex(0.85), cfg, RandomStream(2));
  CHECK(p.fast.minCoeff() >= 0.0);
  CHECK(p.fast.maxCoeff() < 2.0 * std::numbers::pi);
}

TEST_CASE("divergence reports the step") {
  auto model = constant_sigma_model();
  model.drift = [](auto, auto x, auto, auto out) { out[0] = x[0] * x[0] * 1e3; };
  const std::vector<double> th{1.0};
  SimConfig cfg{0.1, 0.01, 1.0, 1000, 1};
  try {
    euler_maruyama(model, th, HurstIndex(0.7), cfg, RandomStream(1));
    FAIL("expected SimulationError");
  } catch (const SimulationError& e) {
    CHECK(e.step() > 0);
  }
}

TEST_CASE("subsample") {
  const auto model = constant_sigma_model();
  const std::vector<double> th{1.0};
  SimConfig cfg{0.1, 0.01, 2.0, 1000, 1};
  const auto p = euler_maruyama(model, th, HurstIndex(0.7), cfg, RandomStream(1));
  const auto full = subsample(p, 1000);
  CHECK(full.values == p.slow);
  const auto half = subsample(p, 500);
  CHECK(half.values.rows() == 501);
  CHECK(half.values(3, 0) == p.slow(6, 0));
  CHECK(half.time(250) == Approx(1.0));
  const auto q = subsample(half, 100);
  CHECK(q.values(1, 0) == p.slow(10, 0));
  CHECK_THROWS(subsample(p, 300));
}

TEST_CASE("pure fBm observations scale with sqrt(eps) sigma_bar") {
  const FbmSampler s(128, 1.0, HurstIndex(0.85));
  const auto a = pure_fbm_observations(s, 0.04, Eigen::MatrixXd::Identity(1, 1), RandomStream(4));
  const auto b = pure_fbm_observations(s, 1.0, Eigen::MatrixXd::Constant(1, 1, 3.0), RandomStream(4));
  CHECK(a.values(0, 0) == 0.0);
  CHECK(b.values(77, 0) == Approx(15.0 * a.values(77, 0)).epsilon(1e-12));
}
