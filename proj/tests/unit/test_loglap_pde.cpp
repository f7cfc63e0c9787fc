#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "superlln/loglap_pde.hpp"

using namespace superlln;

namespace {

SuperdiffusionSpec constant_spec(double beta, double alpha) {
  SuperdiffusionSpec s;
  s.beta = make_constant(1, beta);
  s.alpha = make_constant(1, alpha);
  s.beta_upper_bound = beta;
  return s;
}

TestFunction gaussian() {
  return [](std::span<const double> x) { return std::exp(-x[0] * x[0] / 2); };
}

double heat_solution(double x, double t) { return std::exp(-x * x / (2 * (1 + t))) / std::sqrt(1 + t); }

// Euler scheme for the Feller diffusion dY = beta Y dt + sqrt(2 alpha Y) dB.
double csbp_extinct_fraction(double beta, double alpha, double y0, double T, int paths, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  const double dt = 1e-3;
  int dead = 0;
  for (int p = 0; p < paths; ++p) {
    double y = y0;
    for (double t = 0; t < T && y > 0; t += dt) {
      y += beta * y * dt + std::sqrt(2 * alpha * y * dt) * z(rng);
      if (y > 60.0) break;
    }
    dead += y <= 0;
  }
  return double(dead) / paths;
}

}  // namespace

TEST(Pde, HeatKernelOracle) {
  Grid1D g;
  g.X = 10;
  g.dx = 0.01;
  g.dt = 1e-3;
  g.t_end = 1.0;
  const PDESolution s = solve_forward(constant_spec(0, 0), gaussian(), g);
  double sup = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i) sup = std::max(sup, std::abs(s.u.back()[i] - heat_solution(s.x[i], 1.0)));
  EXPECT_LT(sup, 1e-3);
}

TEST(Pde, ConstantBetaFactorizes) {
  Grid1D g;
  g.X = 10;
  g.t_end = 1.0;
  const PDESolution a = solve_forward(constant_spec(0, 0), gaussian(), g);
  const PDESolution b = solve_forward(constant_spec(1, 0), gaussian(), g);
  for (double x : {0.0, 0.7, -2.0}) EXPECT_NEAR(b.value(x), std::exp(1.0) * a.value(x), 2e-3);
}

TEST(Pde, LogisticFixedPoint) {
  Grid1D g;
  g.X = 40;
  g.dx = 0.05;
  g.t_end = 2.0;
  const TestFunction two = [](std::span<const double>) { return 2.0; };
  const PDESolution s = solve_forward(constant_spec(1.0, 0.5), two, g);
  EXPECT_NEAR(s.value(0.0), 2.0, 1e-12);
}

TEST(Pde, DomainDoublingAndMonotoneInBox) {
  Grid1D g;
  g.X = 10;
  g.t_end = 1.0;
  const TestFunction bump = [b = make_bump(1, 1.0)](std::span<const double> x) { return 0.5 * b.eval(x); };
  EXPECT_LT(domain_doubling_change(constant_spec(1, 0.5), bump, g), 1e-6);
  EXPECT_GE(box_monotonicity_margin(constant_spec(1, 0.5), bump, g, {2.0, 4.0, 8.0}), -1e-14);
}

TEST(Pde, RejectsBadInput) {
  Grid1D g;
  const TestFunction neg = [](std::span<const double>) { return -1.0; };
  EXPECT_THROW(solve_forward(constant_spec(1, 0.5), neg, g), std::invalid_argument);
  SuperdiffusionSpec two;
  two.dim = 2;
  EXPECT_THROW(solve_forward(two, gaussian(), g), std::invalid_argument);
  g.dx = 0.03;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(Laplace, Limits) {
  Grid1D g;
  g.X = 10;
  const InitialMeasure mu = {{Point{0.0}, 1.0}};
  const TestFunction zero = [](std::span<const double>) { return 0.0; };
  EXPECT_EQ(laplace_functional_pde(constant_spec(1, 0.5), mu, zero, 1.0, g), 1.0);
  g.dt = 1e-5;
  const double small_t = laplace_functional_pde(constant_spec(1, 0.5), mu, gaussian(), 1e-4, g);
  EXPECT_NEAR(small_t, std::exp(-1.0), 1e-3);
}

TEST(Extinction, ClosedFormAndCsbpOracle) {
  EXPECT_NEAR(extinction_probability_csbp(1.0, 0.5, 1.0), 0.135335, 1e-6);
  EXPECT_EQ(extinction_probability_csbp(0.0, 0.5, 1.0), 1.0);
  EXPECT_EQ(extinction_probability_csbp(1.0, 0.5, 0.0), 1.0);
  const int paths = 20000;
  const double p = csbp_extinct_fraction(1.0, 0.5, 1.0, 10.0, paths, 41);
  EXPECT_NEAR(p, extinction_probability_csbp(1.0, 0.5, 1.0), 3 * std::sqrt(p * (1 - p) / paths) + 0.005);
}
