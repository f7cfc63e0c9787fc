#pragma once

// Replicated experiments on registry models and their statistical checks.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "superlln/branching_sim.hpp"
#include "superlln/loglap_pde.hpp"
#include "superlln/model.hpp"
#include "superlln/semigroups.hpp"

namespace superlln {

// ---------------------------------------------------------------------------
// Statistics.

struct StatSummary {
  double mean = 0.0;
  double variance = 0.0;        // unbiased
  double standard_error = 0.0;  // batch means
  std::size_t count = 0;
};

inline constexpr int kSummaryBatches = 30;

/// Mean, unbiased variance and batch-means standard error: 30 batches of
/// near-equal size when there are at least 60 samples, single-sample batches
/// otherwise. Throws std::invalid_argument for fewer than 2 samples.
StatSummary summarize(std::span<const double> samples);

/// Standard error of the unbiased sample variance, from the fourth central moment.
double variance_standard_error(std::span<const double> samples);

/// Pearson correlation; 0 when either side is constant.
double correlation(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> v);

// ---------------------------------------------------------------------------
// Configuration and results.

struct LaplaceSettings {
  std::string g = "scale(0.5,bump:1)";
  double X = 10.0;
  double dx = 0.01;
  double dt = 1e-3;

  bool operator==(const LaplaceSettings&) const = default;
};

struct LambdaSettings {
  double radius = 6.0;
  double t = 8.0;
  std::int64_t paths = 200000;
  std::string method = "transfer";  // transfer | finite_time
  int cells = 96;
  int batches = 10;
  Point x;  // defaults to the origin

  bool operator==(const LambdaSettings&) const = default;
};

struct ConservativenessSettings {
  double T = 5.0;
  std::int64_t paths = 10000;
  std::vector<double> radii = {10.0, 100.0, 1000.0};
  /// Optional motion override: drift rate k in b(x) = k x (plain Brownian when 0).
  std::optional<double> drift_rate;

  bool operator==(const ConservativenessSettings&) const = default;
};

struct ExperimentConfig {
  std::string kind = "martingale";
  std::string model = "sbm";
  ModelParams params;
  int n = 200;
  int replicates = 200;
  std::vector<double> times = {1.0, 2.0, 4.0};
  std::uint64_t seed = 1;
  double dt_max = 0.01;
  std::int64_t population_cap = 5'000'000;
  InitialMeasure initial;  // empty means one unit of mass at the origin
  std::string test_function = "bump:1";
  /// Threshold on the terminal correlation (lln), exceedance fraction (spread).
  double correlation_min = 0.9;
  double exceedance_max = 0.05;
  std::vector<double> epsilons;  // spread: extra epsilons to compare
  double stop_probability = 1e-15;  // extinction: survival certainty cut-off
  LaplaceSettings laplace;
  LambdaSettings lambda;
  ConservativenessSettings conservativeness;
  int workers = 1;

  InitialMeasure initial_measure() const;
};

struct Flag {
  std::string name;
  bool passed = true;
  std::string detail;
};

struct SampleRow {
  int replicate = 0;
  double t = 0.0;
  std::string metric;
  double value = 0.0;
};

struct ExperimentResult {
  std::string kind;
  std::vector<double> times;
  /// metric -> one summary per observation time
  std::map<std::string, std::vector<StatSummary>> stats;
  std::map<std::string, double> scalars;
  std::vector<Flag> flags;
  std::vector<std::string> warnings;
  std::vector<SampleRow> samples;  // long format

  bool passed() const;
  const Flag* first_failure() const;
  void add_flag(std::string name, bool ok, std::string detail);
};

/// Builds the model, checks it against its sample points, and applies
/// kind-specific preconditions. Throws std::invalid_argument naming the
/// violated constraint.
ExampleModel build_model(const ExperimentConfig& cfg);

/// Replicated trajectories for the config's model and times.
std::vector<Trajectory> run_ensemble(const ExperimentConfig& cfg, const ExampleModel& model,
                                     std::span<const Functional> functionals,
                                     const SimOptions* override_options = nullptr);

// ---------------------------------------------------------------------------
// Experiments. Each run_* simulates and then calls the matching analyze_*,
// which can also be applied to an existing ensemble.

ExperimentResult run_martingale(const ExperimentConfig& cfg);
ExperimentResult analyze_martingale(const ExperimentConfig& cfg, const ExampleModel& model,
                                    std::span<const Trajectory> runs);

/// Ratio R_t = <X_t, f^{(ct)}> / E<X_t, f^{(ct)}>, discrepancy D_t and
/// correlations. c = 0 gives the plain law of large numbers.
ExperimentResult run_lln(const ExperimentConfig& cfg);
ExperimentResult run_moving_window(const ExperimentConfig& cfg);
ExperimentResult analyze_ratio(const ExperimentConfig& cfg, const ExampleModel& model,
                               std::span<const Trajectory> runs, double speed);

ExperimentResult run_spread(const ExperimentConfig& cfg);
ExperimentResult analyze_spread(const ExperimentConfig& cfg, const ExampleModel& model,
                                std::span<const Trajectory> runs);

ExperimentResult run_extinction(const ExperimentConfig& cfg);
ExperimentResult run_laplace(const ExperimentConfig& cfg);
ExperimentResult run_local_extinction(const ExperimentConfig& cfg);
ExperimentResult run_lambda(const ExperimentConfig& cfg);

/// Paths of the transformed motion L + a grad(h)/h . grad (or of an explicit
/// motion) up to T: explosion and box-exit frequencies, radius growth.
ExperimentResult run_conservativeness(const ExperimentConfig& cfg);
ExperimentResult conservativeness_diagnostic(const SuperdiffusionSpec& motion, double T,
                                             std::int64_t paths, std::uint64_t seed,
                                             std::span<const double> radii, double dt);

/// Pathwise reweighting identities on the model's own trajectories and the
/// operator identity h^{-1}(L + beta - lambda)(h u) = L_0^h u on random (u, x).
ExperimentResult run_h_invariance(const ExperimentConfig& cfg);
double operator_identity_deviation(const ExampleModel& model, int functions, int points,
                                   std::uint64_t seed);

/// Dispatches on cfg.kind.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Smallest fixed point of the offspring generating function: extinction
/// probability of one particle's line at level n.
double particle_extinction_probability(const OffspringLaw& law);

}  // namespace superlln
