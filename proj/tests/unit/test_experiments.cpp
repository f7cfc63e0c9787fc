#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "superlln/experiments.hpp"

using namespace superlln;

TEST(Summarize, Examples) {
  const std::vector<double> ones = {1, 1, 1, 1};
  const StatSummary a = summarize(ones);
  EXPECT_EQ(a.mean, 1.0);
  EXPECT_EQ(a.variance, 0.0);
  const std::vector<double> two = {0, 2};
  const StatSummary b = summarize(two);
  EXPECT_EQ(b.mean, 1.0);
  EXPECT_EQ(b.variance, 2.0);
  EXPECT_THROW(summarize(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Summarize, NormalDraws) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::vector<double> x(10000);
  for (double& v : x) v = z(rng);
  const StatSummary s = summarize(x);
  EXPECT_NEAR(s.mean, 0.0, 0.03);
  EXPECT_NEAR(s.standard_error, 0.01, 0.004);
  EXPECT_NEAR(s.variance, 1.0, 0.05);
}

TEST(Summarize, SmallSamplesUseSingleBatches) {
  const std::vector<double> x = {1, 2, 3, 4, 6};
  const StatSummary s = summarize(x);
  EXPECT_NEAR(s.standard_error, std::sqrt(s.variance / 5), 1e-15);
}

TEST(Statistics, CorrelationAndMedian) {
  const std::vector<double> x = {1, 2, 3, 4}, y = {2, 4, 6, 8}, c = {3, 3, 3, 3};
  EXPECT_NEAR(correlation(x, y), 1.0, 1e-15);
  EXPECT_EQ(correlation(x, c), 0.0);
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
}

TEST(Statistics, VarianceStandardErrorForNormals) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  std::vector<double> x(20000);
  for (double& v : x) v = z(rng);
  EXPECT_NEAR(variance_standard_error(x), std::sqrt(2.0 / 20000), 0.002);
}

// Variance target for W = e^{-beta t} Y_t from an Euler scheme of the Feller
// diffusion dY = beta Y dt + sqrt(2 alpha Y) dB, Y_0 = 1.
TEST(VarianceTarget, CsbpEulerOracle) {
  const double beta = 1.0, alpha = 0.5, t = 2.0, dt = 1e-3;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  const int paths = 20000;
  std::vector<double> w(paths);
  for (int p = 0; p < paths; ++p) {
    double y = 1.0;
    for (int k = 0; k < int(t / dt) && y > 0; ++k) y = std::max(0.0, y + beta * y * dt + std::sqrt(2 * alpha * y * dt) * z(rng));
    w[p] = std::exp(-beta * t) * y;
  }
  const StatSummary s = summarize(w);
  const double target = 2 * alpha / beta * (1 - std::exp(-beta * t));
  EXPECT_NEAR(target, 0.8647, 1e-4);
  EXPECT_NEAR(s.variance, target, 3 * variance_standard_error(w));
  EXPECT_NEAR(s.mean, 1.0, 3 * s.standard_error);
}

TEST(ParticleExtinction, FixedPoint) {
  EXPECT_EQ(particle_extinction_probability(make_offspring_law(1.0, 1.0)), 1.0);
  const OffspringLaw l = make_offspring_law(1.0 + 1.0 / 200, 1.0);
  const double q = particle_extinction_probability(l);
  EXPECT_NEAR(l.p0 + l.p1 * q + l.pK * std::pow(q, l.K), q, 1e-15);
  EXPECT_LT(q, 1.0);
  EXPECT_NEAR(std::pow(q, 200), std::exp(-2.0), 0.01);
}

TEST(Experiments, MartingaleSmallRun) {
  ExperimentConfig c;
  c.n = 50;
  c.replicates = 60;
  c.times = {0.0, 1.0};
  c.seed = 3;
  const ExperimentResult r = run_martingale(c);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.stats.at("w_bar").size(), 2u);
  EXPECT_EQ(r.samples.size(), 2u * 2u * 60u);
}

TEST(Experiments, InsufficientReplicatesWarning) {
  ExperimentConfig c;
  c.n = 20;
  c.replicates = 2;
  c.times = {0.5};
  const ExperimentResult r = run_martingale(c);
  bool warned = false;
  for (const auto& w : r.warnings) warned = warned || w.find("insufficient-replicates") == 0;
  EXPECT_TRUE(warned);
}

TEST(Experiments, RatioIsHomogeneous) {
  ExperimentConfig c;
  c.kind = "lln";
  c.n = 50;
  c.replicates = 10;
  c.times = {1.0, 2.0};
  c.test_function = "bump:1";
  const ExperimentResult a = run_lln(c);
  c.test_function = "scale(10,bump:1)";
  const ExperimentResult b = run_lln(c);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    if (a.samples[i].metric == "ratio") EXPECT_NEAR(a.samples[i].value, b.samples[i].value, 1e-12 * (1 + a.samples[i].value));
}

TEST(Experiments, MovingWindowRejectsFastWindow) {
  ExperimentConfig c;
  c.kind = "moving_window";
  c.model = "sbm_drift";
  c.params.c = 1.5;
  EXPECT_THROW(build_model(c), std::invalid_argument);
  c.model = "sbm";
  c.params.c = 1.0;
  EXPECT_THROW(build_model(c), std::invalid_argument);
}

TEST(Experiments, MovingWindowAtZeroSpeedMatchesLln) {
  ExperimentConfig c;
  c.kind = "lln";
  c.n = 40;
  c.replicates = 8;
  c.times = {1.0, 2.0};
  const ExperimentResult a = run_lln(c);
  c.kind = "moving_window";
  c.model = "sbm_drift";
  c.params.c = 0.0;
  const ExperimentResult b = run_moving_window(c);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].metric, b.samples[i].metric);
    EXPECT_EQ(a.samples[i].value, b.samples[i].value);
  }
}

TEST(Experiments, SpreadHugeEpsilon) {
  ExperimentConfig c;
  c.kind = "spread";
  c.n = 50;
  c.replicates = 20;
  c.times = {1.0, 2.0};
  c.params.epsilon = 10.0;
  c.epsilons = {0.1, 1.0};
  const ExperimentResult r = run_spread(c);
  for (const auto& s : r.stats.at("exceedance")) EXPECT_EQ(s.mean, 0.0);
  for (const auto& f : r.flags)
    if (f.name == "epsilon-monotone") EXPECT_TRUE(f.passed);
}

TEST(Conservativeness, RegistryMotions) {
  const std::vector<double> radii = {10.0, 100.0, 1000.0};
  ModelParams p;
  p.c = 0.5;
  p.K = 2.0;
  const ExperimentResult bm = conservativeness_diagnostic(registry_example("sbm", p).base, 5.0, 2000, 1, radii, 0.01);
  EXPECT_EQ(bm.scalars.at("explosion_frequency"), 0.0);
  ExperimentConfig c;
  c.kind = "conservativeness";
  c.model = "sou_outward";
  c.params = p;
  c.conservativeness.paths = 2000;
  const ExperimentResult h = run_conservativeness(c);
  EXPECT_TRUE(h.passed());
  c.conservativeness.drift_rate = 2 * p.c;
  const ExperimentResult out = run_conservativeness(c);
  EXPECT_TRUE(out.passed());
  bool transient = false;
  for (const auto& w : out.warnings) transient = transient || w.find("conservative but transient") == 0;
  EXPECT_TRUE(transient);
  c.conservativeness.drift_rate = -2 * p.c;
  const ExperimentResult in = run_conservativeness(c);
  EXPECT_TRUE(in.passed());
  EXPECT_EQ(in.scalars.at("exit_frequency_R=10"), 0.0);
  EXPECT_TRUE(in.warnings.empty());
}

TEST(HInvariance, OperatorIdentityOnRegistry) {
  ModelParams p;
  p.c = 0.7;
  p.K = 2.0;
  for (const RegistryEntry& e : registry_entries())
    EXPECT_LT(operator_identity_deviation(registry_example(e.id, p), 20, 50, 11), 1e-6) << e.id;
}
