#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "superlln/model.hpp"

using namespace superlln;

namespace {

SuperdiffusionSpec sbm(double beta, double alpha = 0.5) {
  SuperdiffusionSpec s;
  s.beta = make_constant(1, beta);
  s.alpha = make_constant(1, alpha);
  s.beta_upper_bound = beta;
  return s;
}

// Largest eigenvalue of the symmetric finite-difference (1/2) u'' + beta u on
// (-R, R) with zero boundary values.
double dense_grid_lambda(double beta, double R, int m) {
  const double h = 2 * R / (m + 1);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    A(i, i) = -1.0 / (h * h) + beta;
    if (i > 0) A(i, i - 1) = 0.5 / (h * h);
    if (i + 1 < m) A(i, i + 1) = 0.5 / (h * h);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

TEST(HTransform, SbmWithUnitH) {
  const SuperdiffusionSpec t = h_transform(sbm(1.0), {make_constant(1, 1.0), 1.0});
  const Point x{0.7};
  EXPECT_EQ(t.drift.eval(x)[0], 0.0);
  EXPECT_EQ(t.beta.eval(x), 0.0);
  EXPECT_EQ(t.alpha.eval(x), 0.5);
}

TEST(HTransform, ExponentialHGivesUnitDrift) {
  const SuperdiffusionSpec t = h_transform(sbm(1.0), {make_exp_linear(1, 1.0, 0), 1.5});
  for (double x : {-3.0, 0.0, 2.0}) EXPECT_NEAR(t.drift.eval(Point{x})[0], 1.0, 1e-14);
}

TEST(HTransform, GaussianHGivesOuDrift) {
  const SuperdiffusionSpec t = h_transform(sbm(1.0), {make_gaussian_quadratic(1, 0.5, -1), 0.0});
  for (double x : {-2.0, 0.5, 3.0}) EXPECT_NEAR(t.drift.eval(Point{x})[0], -x, 1e-12);
  EXPECT_TRUE(t.drift.affine_form());
}

TEST(HTransform, RejectsNonPositiveH) {
  const std::vector<Point> pts = {Point{0.0}, Point{3.0}};
  EXPECT_THROW(h_transform(sbm(1.0), {make_bump(1, 1.0), 0.0}, pts), std::invalid_argument);
}

TEST(InverseBeta, UnitHReturnsBetaMinusLambda) {
  const ScalarField b = inverse_beta_of_transform(sbm(1.0), {make_constant(1, 1.0), 0.25});
  EXPECT_NEAR(b.eval(Point{1.2}), 0.75, 1e-14);
}

TEST(InverseBeta, DriftExample) {
  for (double lam : {1.0, 1.5, 2.0}) {
    const ScalarField b = inverse_beta_of_transform(sbm(1.0), {make_exp_linear(1, 1.0, 0), lam});
    EXPECT_NEAR(b.eval(Point{0.3}), 1.5 - lam, 1e-12);
  }
}

TEST(InverseBeta, SouRecoversQuadraticBeta) {
  ModelParams p;
  p.c = 0.5;
  p.K = 1.0;
  const ExampleModel m = registry_example("sou_inward", p);
  for (double x : {-1.5, 0.0, 0.8})
    EXPECT_NEAR(m.base.beta.eval(Point{x}), 1.0 + 2 * 0.25 * x * x, 1e-12);
  const ScalarField r = inverse_beta_of_transform(m.base, m.transform);
  for (double x : {-1.5, 0.0, 0.8}) EXPECT_NEAR(r.eval(Point{x}), 0.0, 1e-12);
}

TEST(Registry, FiveRowsAndClosedForms) {
  ASSERT_EQ(registry_entries().size(), 5u);
  ModelParams p;
  EXPECT_EQ(lambda_c_closed_form("sbm", p), 1.0);
  p.c = 1.0;
  EXPECT_EQ(lambda_c_closed_form("sbm_drift", p), 1.5);
  p.c = std::sqrt(2.0);
  EXPECT_NEAR(lambda_c_closed_form("sbm_drift", p), 2.0, 1e-15);
  EXPECT_THROW(registry_example("nope", ModelParams{}), std::invalid_argument);
}

TEST(Registry, EveryModelHasGroundState) {
  for (int dim : {1, 2}) {
    ModelParams p;
    p.dim = dim;
    p.c = 0.6;
    p.K = 2.0;
    for (const RegistryEntry& e : registry_entries()) {
      const ExampleModel m = registry_example(e.id, p);
      for (const Point& x : sample_points(m.base.domain, 3.0, dim == 1 ? 13 : 5))
        EXPECT_LT(transform_residual(m.base, m.transform, x), 1e-9) << e.id << " d=" << dim;
    }
  }
}

TEST(Registry, SbmScaling) {
  const ExampleModel m = registry_example("sbm", ModelParams{});
  EXPECT_EQ(m.transform.lambda_c, 1.0);
  ASSERT_TRUE(m.scaling);
  EXPECT_NEAR(m.scaling->s(3.0), std::sqrt(2 * std::numbers::pi * 3.0), 1e-12);
  EXPECT_NEAR(m.scaling->z(2.0), (std::sqrt(2.0) + 0.5) * 2.0, 1e-12);
}

TEST(Registry, SouInwardTransformsToOu) {
  ModelParams p;
  p.c = 0.5;
  p.K = 1.0;
  const ExampleModel m = registry_example("sou_inward", p);
  for (double x : {-1.0, 0.4}) EXPECT_NEAR(m.base.drift.eval(Point{x})[0], -x, 1e-14);
}

TEST(Registry, Constraints) {
  ModelParams p;
  p.alpha = 0.0;
  EXPECT_THROW(registry_example("sbm", p), std::invalid_argument);
  ModelParams q;
  q.c = 2.0;
  EXPECT_THROW(validate_moving_window(q), std::invalid_argument);
  q.c = 1.5;
  try {
    validate_moving_window(q);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("c < sqrt(2*beta)"), std::string::npos);
  }
  q.c = 1.0;
  EXPECT_NO_THROW(validate_moving_window(q));
  ModelParams s;
  s.c = 1.0;
  s.K = 0.5;
  EXPECT_THROW(registry_example("sou_outward", s), std::invalid_argument);
}

TEST(CheckSpec, AlphaMustBePositive) {
  SuperdiffusionSpec s = sbm(1.0, 0.0);
  try {
    check_spec(s, sample_points(s.domain));
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("alpha must be positive"), std::string::npos);
  }
}

TEST(LambdaOracle, GridMatchesClosedForm) {
  EXPECT_NEAR(dense_grid_lambda(1.0, 6.0, 1200), 1.0 - std::numbers::pi * std::numbers::pi / 288.0, 1e-5);
}

TEST(LambdaEstimate, TransferOperatorWithinCi) {
  const double R = 2.0;
  const double oracle = dense_grid_lambda(1.0, R, 800);
  const LambdaEstimate e = estimate_lambda_c(sbm(1.0), Point{0.0}, R, 1.0, 40000, 7);
  EXPECT_FALSE(e.all_killed);
  EXPECT_GT(e.half_width, 0.0);
  EXPECT_LE(std::abs(e.value - oracle), e.half_width) << e.value << " vs " << oracle;
}

TEST(LambdaEstimate, CriticalIsNonPositive) {
  const LambdaEstimate e = estimate_lambda_c(sbm(0.0), Point{0.0}, 2.0, 1.0, 10000, 8);
  EXPECT_LE(e.value, 0.0);
}

TEST(LambdaEstimate, NondecreasingInRadius) {
  const LambdaEstimate a = estimate_lambda_c(sbm(1.0), Point{0.0}, 1.5, 1.0, 20000, 9);
  const LambdaEstimate b = estimate_lambda_c(sbm(1.0), Point{0.0}, 3.0, 1.0, 20000, 9);
  EXPECT_LE(a.value, b.value + a.half_width + b.half_width);
}
