#pragma once

// Branching-particle approximation at level n: particles of mass 1/n with
// exponential(mean 1/n) lifetimes, moment-matched offspring at the death
// position, and diffusion motion between events.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "superlln/model.hpp"
#include "superlln/random.hpp"

namespace superlln {

/// Offspring law on {0, 1, K}.
struct OffspringLaw {
  int K = 2;
  double p0 = 0.0, p1 = 1.0, pK = 0.0;
  double target_mean = 1.0, target_variance = 0.0;

  double mean() const { return p1 + K * pK; }
  double variance() const;
  int sample(Rng& rng) const;
};

inline constexpr int kMaxOffspringSupport = 1'000'000;

/// Minimal K >= 2 for which p_K = (v + m(m-1)) / (K(K-1)), p_1 = m - K p_K and
/// p_0 = 1 - p_1 - p_K are probabilities. Throws std::invalid_argument when
/// m <= 0, v < 0, or no K up to kMaxOffspringSupport works (raise n).
OffspringLaw make_offspring_law(double m, double v);

/// Smallest variance of an integer-valued law with mean m: (m - 1)(2 - m) for
/// 1 < m < 2, otherwise 0.
double offspring_variance_floor(double m);

/// make_offspring_law(m, max(v, offspring_variance_floor(m))). The mean stays
/// exact; target_variance keeps the requested v.
OffspringLaw make_offspring_law_floored(double m, double v);

/// Motion of a spec between branching events. Exact transitions for affine
/// drift b0 + k x with constant a; Euler-Maruyama substeps of at most dt_max
/// otherwise. On a bounded domain the path is checked after every substep of
/// at most dt_max.
class MotionSampler {
 public:
  MotionSampler(const SuperdiffusionSpec& spec, double dt_max);

  bool exact() const { return exact_; }
  /// Moves x forward by dt; false if the path left the domain.
  bool advance(double* x, double dt, Rng& rng);
  void exact_step(double* x, double dt, Rng& rng);
  void euler_step(double* x, double h, Rng& rng);

 private:
  const SuperdiffusionSpec& spec_;
  int d_;
  double dt_max_;
  SquareMatrix sigma_;
  bool exact_ = false, bounded_ = false, zero_drift_ = false;
  Point offset_;
  double rate_ = 0.0;
  std::vector<double> xi_, b_;
  std::normal_distribution<double> normal_;
};

/// Samples the motion of `spec` over dt: exact for affine drift b0 + k x with
/// constant a (Brownian, Brownian with drift, Ornstein-Uhlenbeck), otherwise
/// a single Euler-Maruyama step.
Point step_motion(std::span<const double> x, double dt, const SuperdiffusionSpec& spec, Rng& rng);

/// Positions with uniform mass 1/n.
struct ParticleCloud {
  int n = 1;
  int dim = 1;
  double t = 0.0;
  std::vector<double> positions;  // count * dim, particle-major

  std::int64_t count() const { return static_cast<std::int64_t>(positions.size()) / dim; }
  double total_mass() const { return static_cast<double>(count()) / n; }
  std::span<const double> particle(std::int64_t i) const {
    return {positions.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

/// (1/n) sum f(x_i).
double pair(const ParticleCloud& cloud, const ScalarField& f);
/// e^{-lambda_c t} (1/n) sum h(x_i).
double h_weighted_mass(const ParticleCloud& cloud, const HTransformSpec& tr);
/// (1/n) sum f(x_i1 + c t, x_i2, ...).
double moving_pair(const ParticleCloud& cloud, const ScalarField& f, double c, double t);
/// max |x_i|, 0 for an empty cloud.
double support_radius(const ParticleCloud& cloud);

/// Finite atomic initial measure; each atom becomes round(mass * n) particles.
struct Atom {
  Point x;
  double mass = 1.0;
};
using InitialMeasure = std::vector<Atom>;

/// <X_t, f(. + speed t e_1)>, recorded at every snapshot.
struct Functional {
  std::string name;
  ScalarField f;
  double speed = 0.0;
};

struct Snapshot {
  double t = 0.0;
  std::int64_t count = 0;
  double total_mass = 0.0;
  double w_bar = 0.0;
  double support_radius = 0.0;
  std::vector<double> values;  // one per Functional
  std::optional<ParticleCloud> cloud;
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  bool exploded = false;       // population cap hit; snapshots stop before it
  bool stopped_early = false;  // stop_after returned true
  std::int64_t events = 0;
  /// Branching events whose requested variance 2 alpha(x) was below the floor.
  std::int64_t floored_events = 0;
};

struct SimOptions {
  int n = 200;
  double dt_max = 0.01;
  std::int64_t population_cap = 5'000'000;
  bool keep_clouds = false;
  /// Called with (time, offspring count) at every branching event.
  std::function<void(double, int)> event_observer;
  /// Checked after each snapshot; returning true ends the replicate.
  std::function<bool(const Snapshot&)> stop_after;
};

/// One replicate driven by `rng`. Throws std::invalid_argument for bad input;
/// offspring-law failures propagate.
Trajectory simulate(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                    const InitialMeasure& mu, std::span<const double> obs_times, Rng& rng,
                    const SimOptions& options = {}, std::span<const Functional> functionals = {});

/// One replicate with the stream (seed, 0).
Trajectory simulate(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                    const InitialMeasure& mu, std::span<const double> obs_times,
                    std::uint64_t seed, const SimOptions& options = {},
                    std::span<const Functional> functionals = {});

/// Replicate r uses the stream (seed, r); the result does not depend on `workers`.
std::vector<Trajectory> simulate_replicates(const SuperdiffusionSpec& spec,
                                            const HTransformSpec& tr, const InitialMeasure& mu,
                                            std::span<const double> obs_times, int replicates,
                                            std::uint64_t seed, const SimOptions& options,
                                            std::span<const Functional> functionals = {},
                                            int workers = 1);

/// replicate,t,total_mass,w_bar,support_radius,<functional names>
void write_trajectories_csv(std::ostream& out, std::span<const Trajectory> runs,
                            std::span<const Functional> functionals);

/// Description of the offspring family, for output metadata.
std::string offspring_family_description();

}  // namespace superlln
