#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "superlln/branching_sim.hpp"

using namespace superlln;

namespace {

SuperdiffusionSpec sbm(double beta, double alpha = 0.5) {
  SuperdiffusionSpec s;
  s.beta = make_constant(1, beta);
  s.alpha = make_constant(1, alpha);
  s.beta_upper_bound = beta;
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Two-sample Kolmogorov-Smirnov distance.
double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

template <class Cdf>
double ks_one_sample(std::vector<double> a, Cdf cdf) {
  std::sort(a.begin(), a.end());
  double d = 0.0;
  const double n = static_cast<double>(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double F = cdf(a[i]);
    d = std::max({d, std::abs(F - i / n), std::abs(F - (i + 1) / n)});
  }
  return d;
}

}  // namespace

TEST(Offspring, WorkedExample) {
  const OffspringLaw l = make_offspring_law(1.01, 1.0);
  EXPECT_EQ(l.K, 3);
  EXPECT_NEAR(l.pK, 0.168350, 1e-6);
  EXPECT_NEAR(l.p1, 0.504950, 1e-6);
  EXPECT_NEAR(l.p0, 0.326700, 1e-6);
  EXPECT_NEAR(l.p0 + l.p1 + l.pK, 1.0, 1e-15);
}

TEST(Offspring, DegenerateLaws) {
  const OffspringLaw d = make_offspring_law(1.0, 0.0);
  EXPECT_EQ(d.K, 2);
  EXPECT_EQ(d.pK, 0.0);
  EXPECT_EQ(d.p1, 1.0);
  EXPECT_EQ(d.p0, 0.0);
  const OffspringLaw b = make_offspring_law(1.0, 1.0);
  EXPECT_EQ(b.K, 2);
  EXPECT_DOUBLE_EQ(b.pK, 0.5);
  EXPECT_DOUBLE_EQ(b.p1, 0.0);
  EXPECT_DOUBLE_EQ(b.p0, 0.5);
}

TEST(Offspring, MomentsOverRandomParameters) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> beta(-2.0, 4.0), alpha(0.01, 5.0);
  std::uniform_int_distribution<int> n(20, 2000);
  for (int i = 0; i < 10000; ++i) {
    const double m = 1.0 + beta(rng) / n(rng), v = 2.0 * alpha(rng);
    const OffspringLaw l = make_offspring_law(m, v);
    ASSERT_NEAR(l.mean(), m, 1e-12);
    ASSERT_NEAR(l.variance(), v, 1e-12);
    ASSERT_GE(l.p0, 0.0);
    ASSERT_GE(l.p1, 0.0);
  }
}

TEST(Offspring, InfeasibleParametersThrow) {
  EXPECT_THROW(make_offspring_law(3.0, 0.1), std::invalid_argument);
  EXPECT_THROW(make_offspring_law(-0.1, 1.0), std::invalid_argument);
  EXPECT_THROW(make_offspring_law(1.0, -1.0), std::invalid_argument);
  EXPECT_THROW(make_offspring_law(1.0, 1e9), std::invalid_argument);
}

TEST(Offspring, FlooredLawKeepsMean) {
  const double m = 1.01;
  EXPECT_NEAR(offspring_variance_floor(m), 0.01 * 0.99, 1e-15);
  EXPECT_EQ(offspring_variance_floor(1.0), 0.0);
  EXPECT_EQ(offspring_variance_floor(2.5), 0.0);
  EXPECT_THROW(make_offspring_law(m, 1e-3), std::invalid_argument);
  const OffspringLaw l = make_offspring_law_floored(m, 1e-3);
  EXPECT_NEAR(l.mean(), m, 1e-12);
  EXPECT_NEAR(l.variance(), offspring_variance_floor(m), 1e-12);
  const OffspringLaw u = make_offspring_law_floored(m, 0.5);
  EXPECT_NEAR(u.variance(), 0.5, 1e-12);
}

TEST(Offspring, SamplingFrequencies) {
  const OffspringLaw l = make_offspring_law(1.01, 1.0);
  Rng rng = make_stream(1, 0);
  const int N = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < N; ++i) {
    const int k = l.sample(rng);
    s += k;
    s2 += double(k) * k;
  }
  const double mean = s / N;
  EXPECT_NEAR(mean, 1.01, 4.0 * std::sqrt(1.0 / N));
  EXPECT_NEAR(s2 / N - mean * mean, 1.0, 0.03);
}

TEST(Motion, BrownianIncrements) {
  const SuperdiffusionSpec s = sbm(0.0);
  Rng rng = make_stream(2, 0);
  const int N = 100000;
  double m = 0, v = 0;
  for (int i = 0; i < N; ++i) {
    const double y = step_motion(Point{0.0}, 0.3, s, rng)[0];
    m += y;
    v += y * y;
  }
  EXPECT_NEAR(m / N, 0.0, 4 * std::sqrt(0.3 / N));
  EXPECT_NEAR(v / N, 0.3, 0.006);
}

TEST(Motion, ConstantDriftMean) {
  SuperdiffusionSpec s;
  s.dim = 2;
  s.diffusion = DiffusionMatrix::identity(2);
  s.drift = VectorField::constant(Point{1.0, 0.0});
  s.beta = make_constant(2, 0.0);
  s.alpha = make_constant(2, 1.0);
  s.domain = Domain::whole_space(2);
  Rng rng = make_stream(3, 0);
  const int N = 100000;
  double m0 = 0, m1 = 0;
  for (int i = 0; i < N; ++i) {
    const Point y = step_motion(Point{0.0, 0.0}, 0.01, s, rng);
    m0 += y[0];
    m1 += y[1];
  }
  EXPECT_NEAR(m0 / N, 0.01, 4 * 0.1 / std::sqrt(N));
  EXPECT_NEAR(m1 / N, 0.0, 4 * 0.1 / std::sqrt(N));
}

TEST(Motion, OuExactAgreesWithEulerAndClosedForm) {
  SuperdiffusionSpec s = sbm(0.0);
  s.drift = VectorField::linear(1, -1.0);
  MotionSampler exact(s, 1.0), euler(s, 1.0);
  ASSERT_TRUE(exact.exact());
  Rng r1 = make_stream(4, 0), r2 = make_stream(4, 1);
  const int N = 100000, steps = 200;
  std::vector<double> a(N), b(N);
  for (int i = 0; i < N; ++i) {
    double x = 1.0;
    exact.exact_step(&x, 1.0, r1);
    a[i] = x;
    double y = 1.0;
    for (int k = 0; k < steps; ++k) euler.euler_step(&y, 1.0 / steps, r2);
    b[i] = y;
  }
  EXPECT_LT(ks_distance(a, b), 0.01);
  const double mu = std::exp(-1.0), sd = std::sqrt((1 - std::exp(-2.0)) / 2);
  EXPECT_LT(ks_one_sample(a, [&](double x) { return normal_cdf((x - mu) / sd); }), 0.01);
}

TEST(Pairing, Examples) {
  ParticleCloud c;
  c.n = 1;
  c.dim = 1;
  c.positions = {0.0, 1.0, 2.0};
  EXPECT_EQ(pair(c, parse_field("quad:0:1", 1)), 5.0);
  EXPECT_EQ(pair(c, make_constant(1, 1.0)), c.total_mass());
  ParticleCloud far;
  far.n = 1;
  far.dim = 1;
  far.positions = {-2.5, 3.0, 2.1};
  EXPECT_EQ(pair(far, make_bump(1, 1.0)), 0.0);
  EXPECT_EQ(support_radius(far), 3.0);
}

TEST(Pairing, HWeightedMass) {
  ParticleCloud c;
  c.n = 1;
  c.dim = 1;
  c.t = 0.0;
  c.positions = {0.5};
  EXPECT_EQ(h_weighted_mass(c, {make_constant(1, 1.0), 1.0}), 1.0);
  const HTransformSpec tr{make_exp_linear(1, 1.0, 0), 1.5};
  c.t = 2.0;
  EXPECT_NEAR(h_weighted_mass(c, tr), std::exp(-3.0) * std::exp(0.5), 1e-15);
  c.positions = {0.5, -1.0, 2.0, 0.1};
  c.n = 7;
  EXPECT_NEAR(h_weighted_mass(c, tr), std::exp(-3.0) * pair(c, tr.h), 1e-15);
}

TEST(Pairing, MovingWindow) {
  ParticleCloud c;
  c.n = 1;
  c.dim = 2;
  c.positions = {0.3, 0.2, -1.0, 0.4};
  const ScalarField f = make_bump(2, 1.0);
  EXPECT_EQ(moving_pair(c, f, 0.0, 5.0), pair(c, f));
  const double ct = 1.2;
  ParticleCloud one;
  one.n = 1;
  one.dim = 2;
  one.positions = {ct, 0.0};
  EXPECT_EQ(moving_pair(one, f, 1.0, ct), 0.0);
  one.positions = {-ct, 0.0};
  EXPECT_EQ(moving_pair(one, f, 1.0, ct), f.eval(Point{0.0, 0.0}));
}

TEST(Simulate, MeanTotalMassGrowsExponentially) {
  const std::vector<double> times = {1.0, 2.0};
  SimOptions o;
  o.n = 100;
  const InitialMeasure mu = {{Point{0.0}, 1.0}};
  const auto runs = simulate_replicates(sbm(1.0), {make_constant(1, 1.0), 1.0}, mu, times, 200, 21, o);
  for (std::size_t k = 0; k < times.size(); ++k) {
    double s = 0, s2 = 0;
    for (const auto& r : runs) {
      s += r.snapshots[k].total_mass;
      s2 += r.snapshots[k].total_mass * r.snapshots[k].total_mass;
    }
    const double m = s / runs.size(), se = std::sqrt((s2 / runs.size() - m * m) / runs.size());
    EXPECT_NEAR(m, std::exp(times[k]), 3 * se);
  }
}

TEST(Simulate, CriticalMassIsMartingale) {
  const std::vector<double> times = {0.0, 1.0, 3.0};
  SimOptions o;
  o.n = 100;
  const InitialMeasure mu = {{Point{0.0}, 2.0}};
  const auto runs = simulate_replicates(sbm(0.0), {make_constant(1, 1.0), 0.0}, mu, times, 300, 22, o);
  EXPECT_EQ(runs[0].snapshots[0].total_mass, 2.0);
  for (std::size_t k = 1; k < times.size(); ++k) {
    double s = 0, s2 = 0;
    for (const auto& r : runs) {
      s += r.snapshots[k].total_mass;
      s2 += r.snapshots[k].total_mass * r.snapshots[k].total_mass;
    }
    const double m = s / runs.size(), se = std::sqrt((s2 / runs.size() - m * m) / runs.size());
    EXPECT_NEAR(m, 2.0, 3 * se);
  }
}

TEST(Simulate, FirstEventIsExponential) {
  SimOptions o;
  o.n = 1;
  const InitialMeasure mu = {{Point{0.0}, 1.0}};
  const std::vector<double> times = {20.0};
  std::vector<double> first;
  for (int r = 0; r < 3000; ++r) {
    double t0 = -1.0;
    o.event_observer = [&t0](double t, int) {
      if (t0 < 0) t0 = t;
    };
    Rng rng = make_stream(23, r);
    simulate(sbm(0.0, 0.5), {make_constant(1, 1.0), 0.0}, mu, times, rng, o);
    if (t0 >= 0) first.push_back(t0);
  }
  ASSERT_GT(first.size(), 2990u);
  EXPECT_LT(ks_one_sample(first, [](double x) { return 1 - std::exp(-x); }), 1.63 / std::sqrt(first.size()));
}

TEST(Simulate, DeterministicAndWorkerIndependent) {
  const std::vector<double> times = {0.5, 1.5};
  SimOptions o;
  o.n = 50;
  const InitialMeasure mu = {{Point{0.0}, 1.0}};
  const std::vector<Functional> fs = {{"f", make_bump(1, 1.0), 0.0}};
  const HTransformSpec tr{make_constant(1, 1.0), 1.0};
  const auto a = simulate_replicates(sbm(1.0), tr, mu, times, 12, 99, o, fs, 1);
  const auto b = simulate_replicates(sbm(1.0), tr, mu, times, 12, 99, o, fs, 3);
  std::ostringstream sa, sb;
  write_trajectories_csv(sa, a, fs);
  write_trajectories_csv(sb, b, fs);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "replicate,t,total_mass,w_bar,support_radius,f");
}

TEST(Simulate, PopulationCapAborts) {
  SimOptions o;
  o.n = 200;
  o.population_cap = 2000;
  const InitialMeasure mu = {{Point{0.0}, 1.0}};
  const std::vector<double> times = {1.0, 4.0, 8.0};
  const Trajectory t = simulate(sbm(2.0), {make_constant(1, 1.0), 2.0}, mu, times, 5, o);
  EXPECT_TRUE(t.exploded);
  EXPECT_LT(t.snapshots.size(), times.size());
}

TEST(Simulate, BadInputThrows) {
  const InitialMeasure mu = {{Point{0.0}, 1.0}};
  const std::vector<double> decreasing = {2.0, 1.0};
  EXPECT_THROW(simulate(sbm(1.0), {}, mu, decreasing, 1), std::invalid_argument);
}
