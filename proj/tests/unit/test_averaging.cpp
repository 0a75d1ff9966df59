#include "doctest.h"

#include <cmath>

#include "slowfast/averaging.hpp"

using namespace slowfast;
using doctest::Approx;

namespace {

constexpr double kXi11Constant = 1.6903674582029005;  // E[xi_1^2], constant model, lambda = 0, H = 0.85

// cbar = theta c0 for a fixed constant c0, sigma_bar = 1: Z = 1.
AveragedSystem pure_drift(double lambda = 0.0) {
  AveragedSystem a;
  a.name = "pure_drift";
  a.drift = [](auto theta, auto, auto out) { out[0] = theta[0]; };
  a.drift_jacobian_x = [](auto, auto, auto out) { out[0] = 0.0; };
  a.drift_jacobian_theta = [](auto, auto, auto out) { out[0] = 1.0; };
  a.sigma_bar = Eigen::MatrixXd::Identity(1, 1);
  a.sigma_phi = [](auto, auto, auto out) { out[0] = 1.0; };
  a.lambda = lambda;
  a.x0 = {0.0};
  a.theta_box = Box{{-5.0}, {5.0}};
  return a;
}

}  // namespace

TEST_CASE("invariant averages") {
  auto ou = [](double y) { return -y; };
  CHECK(invariant_average(ou, 1.0, [](double y) { return y * y; }, FastDomain::line).value ==
        Approx(0.5).epsilon(1e-10));
  CHECK(invariant_average(ou, 1.0, [](double) { return 1.0; }, FastDomain::line).value == Approx(1.0).epsilon(1e-12));

  const auto model = variable_sigma_model();
  const auto mu = invariant_measure(model);
  std::vector<double> out(1);
  const auto v = mu.integrate([&](double y) {
    const std::vector<double> yy{y};
    model.diffusion(yy, out);
    return out[0];
  });
  CHECK(v.value == Approx(1.0).epsilon(1e-8));
  CHECK(v.error < 1e-8);

  CHECK_THROWS(invariant_measure([](double y) { return y; }, 1.0, FastDomain::line));
  CHECK_THROWS(invariant_measure([](double) { return 1.0; }, 1.0, FastDomain::circle));
}

TEST_CASE("built-in averaged systems") {
  const auto c = averaged_system("constant_sigma");
  c.validate();
  const std::vector<double> th{2.0}, x{3.0};
  std::vector<double> out(1);
  c.drift(th, x, out);
  CHECK(out[0] == Approx(3.0));
  CHECK(c.sigma_bar(0, 0) == Approx(1.0));
  const auto v = averaged_system("variable_sigma");
  CHECK(v.sigma_bar(0, 0) == Approx(1.0).epsilon(1e-8));
  CHECK_THROWS(averaged_system("nope"));

  // generic route agrees with the closed form
  const auto model = constant_sigma_model();
  const auto g = average_model(model, invariant_measure(model));
  g.drift(th, x, out);
  CHECK(out[0] == Approx(3.0).epsilon(1e-10));
}

TEST_CASE("limit ODE, fundamental matrix and sensitivity for the constant model") {
  const auto avg = averaged_system("constant_sigma");
  const std::vector<double> th{1.0};
  const auto ode = solve_averaged_ode(avg, th, 1.0, 1000);
  CHECK(ode.states.front()[0] == 1.0);
  CHECK(ode.states.back()[0] == Approx(std::exp(0.5)).epsilon(1e-10));
  CHECK(ode.sensitivities.back()(0, 0) == Approx(0.5 * std::exp(0.5)).epsilon(1e-8));

  const auto Z = fundamental_matrix(avg, th, ode);
  CHECK(Z(1000, 0)(0, 0) == Approx(std::exp(0.5)).epsilon(1e-8));
  CHECK(Z(400, 400)(0, 0) == 1.0);
  CHECK((Z(900, 300) * Z(300, 100))(0, 0) == Approx(Z(900, 100)(0, 0)).epsilon(1e-12));
  CHECK(Z.by_inversion(700, 200)(0, 0) == Approx(Z(700, 200)(0, 0)).epsilon(1e-12));
  CHECK_THROWS(Z(1, 2));
  const auto sweep = Z.column_sweep(600);
  CHECK(sweep[150](0, 0) == Approx(Z(600, 150)(0, 0)).epsilon(1e-14));

  const auto S = theta_sensitivity(avg, th, ode, Z);
  CHECK(S.back()(0, 0) == Approx(0.5 * std::exp(0.5)).epsilon(1e-8));
  CHECK(S[500](0, 0) == Approx(0.25 * std::exp(0.25)).epsilon(1e-8));
}

TEST_CASE("zero drift keeps Xbar at x0 with zero sensitivity") {
  auto avg = pure_drift();
  const std::vector<double> th{0.0};
  const auto ode = solve_averaged_ode(avg, th, 1.0, 100);
  CHECK(ode.states.back()[0] == 0.0);
  avg.drift_jacobian_theta = [](auto, auto, auto out) { out[0] = 0.0; };
  const auto ode2 = solve_averaged_ode(avg, th, 1.0, 100);
  CHECK(ode2.sensitivities.back()(0, 0) == 0.0);
}

TEST_CASE("fluctuation covariance") {
  const HurstIndex H(0.85);
  const std::vector<double> th{0.0};
  const auto avg = pure_drift();
  const auto ode = solve_averaged_ode(avg, th, 1.0, 256);
  const auto Z = fundamental_matrix(avg, th, ode);
  CHECK(fluctuation_covariance(avg, th, H, ode, Z, 1.0, 1.0)(0, 0) == Approx(1.0).epsilon(1e-12));
  CHECK(fluctuation_covariance(avg, th, H, ode, Z, 0.5, 1.0)(0, 0) ==
        Approx(fbm_covariance(0.5, 1.0, H)).epsilon(1e-12));
  CHECK(fluctuation_covariance(avg, th, H, ode, Z, 0.0, 1.0)(0, 0) == 0.0);

  const auto bm = pure_drift(0.5);
  CHECK(fluctuation_covariance(bm, th, H, ode, Z, 0.5, 1.0)(0, 0) ==
        Approx(fbm_covariance(0.5, 1.0, H) + 0.25 * 0.5).epsilon(1e-12));

  const auto c = averaged_system("constant_sigma");
  const std::vector<double> one{1.0};
  const auto codes = solve_averaged_ode(c, one, 1.0, 1024);
  const auto cZ = fundamental_matrix(c, one, codes);
  const double v = fluctuation_covariance(c, one, H, codes, cZ, 1.0, 1.0)(0, 0);
  CHECK(v == Approx(kXi11Constant).epsilon(1e-5));
  const double a = fluctuation_covariance(c, one, H, codes, cZ, 0.25, 0.75)(0, 0);
  const double b = fluctuation_covariance(c, one, H, codes, cZ, 0.75, 0.25)(0, 0);
  CHECK(a == b);
  CHECK_THROWS(fluctuation_covariance(c, one, H, codes, cZ, 0.3, 1.0));
}

TEST_CASE("simpson weights integrate cubics exactly") {
  for (std::size_t k : {1u, 2u, 3u, 4u, 5u, 8u, 9u}) {
    const double h = 1.0 / static_cast<double>(k);
    const auto w = simpson_weights(k, h);
    REQUIRE(w.size() == k + 1);
    double s0 = 0.0, s3 = 0.0;
    for (std::size_t i = 0; i <= k; ++i) {
      const double t = static_cast<double>(i) * h;
      s0 += w[i];
      s3 += w[i] * t * t * t;
    }
    CHECK(s0 == Approx(1.0).epsilon(1e-14));
    if (k > 1) CHECK(s3 == Approx(0.25).epsilon(1e-14));
  }
}
