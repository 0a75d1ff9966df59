#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "slowfast/optimize.hpp"

using namespace slowfast;
using doctest::Approx;

TEST_CASE("halton points") {
  const auto p1 = halton_point(1, 2);
  CHECK(p1[0] == 0.5);
  CHECK(p1[1] == Approx(1.0 / 3.0));
  const auto p3 = halton_point(3, 2);
  CHECK(p3[0] == 0.75);
  CHECK(p3[1] == Approx(1.0 / 9.0));
}

TEST_CASE("quadratic bowl with analytic and numeric gradients") {
  const Box box{{-2.0, -2.0}, {2.0, 2.0}};
  const Objective f = [](std::span<const double> x, std::span<double> g) {
    const double a = x[0] - 0.3, b = x[1] + 1.1;
    if (!g.empty()) {
      g[0] = 2.0 * a + 0.5 * b;
      g[1] = 8.0 * b + 0.5 * a;
    }
    return a * a + 4.0 * b * b + 0.5 * a * b;
  };
  for (bool analytic : {true, false}) {
    const auto r = minimize_box(f, box, OptimizerConfig{}, analytic);
    CHECK(r.point[0] == Approx(0.3).epsilon(1e-6));
    CHECK(r.point[1] == Approx(-1.1).epsilon(1e-6));
    CHECK_FALSE(r.boundary_hit);
    CHECK(r.starts.size() == 8);
  }
}

TEST_CASE("minimum on the boundary") {
  const Box box{{0.1}, {3.0}};
  const Objective f = [](std::span<const double> x, std::span<double> g) {
    if (!g.empty()) g[0] = 2.0 * (x[0] + 1.0);
    return (x[0] + 1.0) * (x[0] + 1.0);
  };
  const auto r = minimize_box(f, box, OptimizerConfig{}, true);
  CHECK(r.point[0] == 0.1);
  CHECK(r.boundary_hit);
}

TEST_CASE("symmetric minima are reported") {
  const Box box{{-2.0}, {2.0}};
  const Objective f = [](std::span<const double> x, std::span<double> g) {
    const double u = x[0] * x[0] - 1.0;
    if (!g.empty()) g[0] = 4.0 * x[0] * u;
    return u * u;
  };
  const auto r = minimize_box(f, box, OptimizerConfig{}, true);
  CHECK(std::abs(r.point[0]) == Approx(1.0).epsilon(1e-6));
  CHECK(r.multiple_minima);
}

TEST_CASE("failure when nothing converges") {
  const Box box{{0.0}, {1.0}};
  const Objective f = [](std::span<const double>, std::span<double>) -> double { throw std::runtime_error("boom"); };
  CHECK_THROWS_AS(minimize_box(f, box, OptimizerConfig{}, false), std::runtime_error);
  OptimizerConfig none;
  none.starts = 0;
  CHECK_THROWS(minimize_box(f, box, none, false));
}
