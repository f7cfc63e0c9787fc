#include "superlln/branching_sim.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace superlln {

// ---------------------------------------------------------------------------
// Offspring laws.

double OffspringLaw::variance() const {
  const double m = mean();
  return p1 + static_cast<double>(K) * K * pK - m * m;
}

int OffspringLaw::sample(Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < pK) return K;
  if (u < pK + p1) return 1;
  return 0;
}

OffspringLaw make_offspring_law(double m, double v) {
  if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("offspring mean must be positive");
  if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("offspring variance must be >= 0");
  // s = E[N(N-1)]
  double s = v + m * (m - 1.0);
  if (s < -1e-12 * std::max(1.0, m))
    throw std::invalid_argument("no integer offspring law with mean " + format_double(m) +
                                " and variance " + format_double(v));
  s = std::max(s, 0.0);
  double k = std::max(2.0, std::ceil(1.0 + s / m - 1e-12));
  if (k > kMaxOffspringSupport)
    throw std::invalid_argument("offspring support would exceed the cap; raise n");
  OffspringLaw law;
  law.target_mean = m;
  law.target_variance = v;
  for (int attempt = 0; attempt < 2; ++attempt, k += 1.0) {
    const int K = static_cast<int>(k);
    const double pK = s / (k * (k - 1.0));
    double p1 = m - k * pK;
    if (p1 < -1e-14) continue;
    p1 = std::max(p1, 0.0);
    const double p0 = 1.0 - p1 - pK;
    if (p0 < -1e-14)
      throw std::invalid_argument("no offspring law on {0,1,K} with mean " + format_double(m) +
                                  " and variance " + format_double(v) + "; raise n");
    law.K = K;
    law.pK = pK;
    law.p1 = p1;
    law.p0 = std::max(p0, 0.0);
    return law;
  }
  throw std::invalid_argument("no offspring law on {0,1,K} with mean " + format_double(m) +
                              " and variance " + format_double(v));
}

double offspring_variance_floor(double m) { return m > 1.0 && m < 2.0 ? (m - 1.0) * (2.0 - m) : 0.0; }

OffspringLaw make_offspring_law_floored(double m, double v) {
  OffspringLaw law = make_offspring_law(m, std::max(v, offspring_variance_floor(m)));
  law.target_variance = v;
  return law;
}

std::string offspring_family_description() {
  return "three-point law on {0,1,K}, minimal K, mean 1+beta/n, variance max(2*alpha, (m-1)(2-m))";
}

// ---------------------------------------------------------------------------
// Motion.

MotionSampler::MotionSampler(const SuperdiffusionSpec& spec, double dt_max)
    : spec_(spec), d_(spec.dim), dt_max_(dt_max), sigma_(spec.diffusion.factor(Point(spec.dim, 0.0))),
      xi_(spec.dim), b_(spec.dim) {
  if (!(dt_max > 0.0)) throw std::invalid_argument("dt_max must be positive");
  if (const auto& af = spec.drift.affine_form()) {
    exact_ = true;
    offset_ = af->offset;
    rate_ = af->rate;
    zero_drift_ = spec.drift.is_zero();
  }
  bounded_ = spec.domain.bounded();
}

bool MotionSampler::advance(double* x, double dt, Rng& rng) {
  if (dt <= 0.0) return true;
  if (exact_ && !bounded_) {
    exact_step(x, dt, rng);
    return true;
  }
  const int steps = std::max(1, static_cast<int>(std::ceil(dt / dt_max_ - 1e-9)));
  const double h = dt / steps;
  for (int k = 0; k < steps; ++k) {
    if (exact_)
      exact_step(x, h, rng);
    else
      euler_step(x, h, rng);
    if (bounded_ && !spec_.domain.contains(std::span<const double>(x, d_))) return false;
  }
  return true;
}

void MotionSampler::exact_step(double* x, double dt, Rng& rng) {
  double ef = 1.0, shift = dt, var = dt;
  if (rate_ != 0.0) {
    ef = std::exp(rate_ * dt);
    shift = std::expm1(rate_ * dt) / rate_;
    var = std::expm1(2.0 * rate_ * dt) / (2.0 * rate_);
  }
  const double sd = std::sqrt(var);
  if (d_ == 1) {
    x[0] = x[0] * ef + (zero_drift_ ? 0.0 : offset_[0] * shift) + sd * sigma_(0, 0) * normal_(rng);
    return;
  }
  for (int i = 0; i < d_; ++i) xi_[i] = normal_(rng);
  for (int i = 0; i < d_; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += sigma_(i, j) * xi_[j];
    x[i] = x[i] * ef + offset_[i] * shift + sd * s;
  }
}

void MotionSampler::euler_step(double* x, double h, Rng& rng) {
  spec_.drift.eval_into(std::span<const double>(x, d_), b_);
  const double sq = std::sqrt(h);
  for (int i = 0; i < d_; ++i) xi_[i] = normal_(rng);
  for (int i = 0; i < d_; ++i) {
    double s = 0.0;
    for (int j = 0; j <= i; ++j) s += sigma_(i, j) * xi_[j];
    x[i] += b_[i] * h + sq * s;
  }
}

Point step_motion(std::span<const double> x, double dt, const SuperdiffusionSpec& spec, Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_motion: dt must be positive");
  MotionSampler motion(spec, dt);
  Point y(x.begin(), x.end());
  if (motion.exact())
    motion.exact_step(y.data(), dt, rng);
  else
    motion.euler_step(y.data(), dt, rng);
  return y;
}

// ---------------------------------------------------------------------------
// Pairings.

double pair(const ParticleCloud& cloud, const ScalarField& f) {
  if (auto v = f.constant_value()) return *v * cloud.total_mass();
  double s = 0.0;
  for (std::int64_t i = 0; i < cloud.count(); ++i) s += f.eval(cloud.particle(i));
  return s / cloud.n;
}

double h_weighted_mass(const ParticleCloud& cloud, const HTransformSpec& tr) {
  return std::exp(-tr.lambda_c * cloud.t) * pair(cloud, tr.h);
}

double moving_pair(const ParticleCloud& cloud, const ScalarField& f, double c, double t) {
  if (c == 0.0) return pair(cloud, f);
  const double shift = c * t;
  Point y(cloud.dim);
  double s = 0.0;
  for (std::int64_t i = 0; i < cloud.count(); ++i) {
    const auto x = cloud.particle(i);
    std::copy(x.begin(), x.end(), y.begin());
    y[0] += shift;
    s += f.eval(y);
  }
  return s / cloud.n;
}

double support_radius(const ParticleCloud& cloud) {
  double r2 = 0.0;
  for (std::int64_t i = 0; i < cloud.count(); ++i) {
    double s = 0.0;
    for (double v : cloud.particle(i)) s += v * v;
    r2 = std::max(r2, s);
  }
  return std::sqrt(r2);
}

// ---------------------------------------------------------------------------
// Simulation.

namespace {

Snapshot take_snapshot(const ParticleCloud& cloud, const HTransformSpec& tr,
                       std::span<const Functional> functionals, bool keep) {
  Snapshot s;
  s.t = cloud.t;
  s.count = cloud.count();
  s.total_mass = cloud.total_mass();
  s.w_bar = h_weighted_mass(cloud, tr);
  s.support_radius = support_radius(cloud);
  s.values.reserve(functionals.size());
  for (const Functional& f : functionals) s.values.push_back(moving_pair(cloud, f.f, f.speed, cloud.t));
  if (keep) s.cloud = cloud;
  return s;
}

}  // namespace

Trajectory simulate(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                    const InitialMeasure& mu, std::span<const double> obs_times, Rng& rng,
                    const SimOptions& opt, std::span<const Functional> functionals) {
  const int d = spec.dim;
  const int n = opt.n;
  if (n < 1) throw std::invalid_argument("level n must be at least 1");
  for (std::size_t k = 0; k < obs_times.size(); ++k) {
    if (!(obs_times[k] >= 0.0)) throw std::invalid_argument("observation times must be >= 0");
    if (k && !(obs_times[k] > obs_times[k - 1]))
      throw std::invalid_argument("observation times must be strictly increasing");
  }
  if (tr.h.dim() != d) throw std::invalid_argument("h has wrong dimension");
  for (const Functional& f : functionals)
    if (f.f.dim() != d) throw std::invalid_argument("functional '" + f.name + "' has wrong dimension");

  ParticleCloud cloud;
  cloud.n = n;
  cloud.dim = d;
  for (const Atom& a : mu) {
    if (static_cast<int>(a.x.size()) != d) throw std::invalid_argument("initial atom has wrong dimension");
    if (!(a.mass >= 0.0)) throw std::invalid_argument("initial atom mass must be >= 0");
    if (!spec.domain.contains(a.x)) throw std::invalid_argument("initial atom lies outside the domain");
    const auto k = static_cast<std::int64_t>(std::llround(a.mass * n));
    for (std::int64_t i = 0; i < k; ++i) cloud.positions.insert(cloud.positions.end(), a.x.begin(), a.x.end());
  }

  const auto beta_c = spec.beta.constant_value();
  const auto alpha_c = spec.alpha.constant_value();
  MotionSampler motion(spec, opt.dt_max);
  std::optional<OffspringLaw> const_law;
  if (beta_c && alpha_c) const_law = make_offspring_law_floored(1.0 + *beta_c / n, 2.0 * *alpha_c);
  // With constant coefficients and an exact kernel, single-offspring events
  // change nothing and motion can be deferred to the next real branching.
  const bool lazy = const_law && motion.exact() && !spec.domain.bounded() && !opt.event_observer;
  double rate = n;
  double p_many = 0.0;
  if (lazy) {
    rate = n * (1.0 - const_law->p1);
    p_many = const_law->p1 < 1.0 ? const_law->pK / (1.0 - const_law->p1) : 0.0;
  }

  Trajectory traj;
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> stack_x, stack_t, next;
  Point x(d);
  double tcur = 0.0;

  for (const double t_end : obs_times) {
    if (t_end > tcur && cloud.count() > 0) {
      stack_x.clear();
      stack_t.clear();
      next.clear();
      // processing order: last particle of the cloud first
      stack_x = cloud.positions;
      stack_t.assign(static_cast<std::size_t>(cloud.count()), tcur);
      bool exploded = false;
      while (!stack_t.empty()) {
        double s = stack_t.back();
        stack_t.pop_back();
        std::copy(stack_x.end() - d, stack_x.end(), x.begin());
        stack_x.resize(stack_x.size() - d);
        for (;;) {
          const double death = rate > 0.0 ? s + expo(rng) / rate : t_end;
          if (death >= t_end) {
            if (motion.advance(x.data(), t_end - s, rng)) next.insert(next.end(), x.begin(), x.end());
            break;
          }
          ++traj.events;
          int children;
          if (lazy) {
            if (unif(rng) >= p_many) break;
            motion.advance(x.data(), death - s, rng);
            children = const_law->K;
          } else {
            if (!motion.advance(x.data(), death - s, rng)) break;
            if (const_law) {
              children = const_law->sample(rng);
            } else {
              const double m = 1.0 + spec.beta.eval(x) / n, v = 2.0 * spec.alpha.eval(x);
              if (v < offspring_variance_floor(m)) ++traj.floored_events;
              children = make_offspring_law_floored(m, v).sample(rng);
            }
            if (opt.event_observer) opt.event_observer(death, children);
            if (children == 0) break;
          }
          for (int c = 1; c < children; ++c) {
            stack_x.insert(stack_x.end(), x.begin(), x.end());
            stack_t.push_back(death);
          }
          s = death;
          if (static_cast<std::int64_t>(stack_t.size() + next.size() / d) > opt.population_cap) {
            exploded = true;
            break;
          }
        }
        if (exploded) break;
      }
      if (exploded) {
        traj.exploded = true;
        return traj;
      }
      cloud.positions.swap(next);
    }
    tcur = t_end;
    cloud.t = t_end;
    traj.snapshots.push_back(take_snapshot(cloud, tr, functionals, opt.keep_clouds));
    if (opt.stop_after && opt.stop_after(traj.snapshots.back())) {
      traj.stopped_early = true;
      return traj;
    }
    if (cloud.count() > opt.population_cap) {
      traj.exploded = true;
      return traj;
    }
  }
  return traj;
}

Trajectory simulate(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                    const InitialMeasure& mu, std::span<const double> obs_times,
                    std::uint64_t seed, const SimOptions& options,
                    std::span<const Functional> functionals) {
  Rng rng = make_stream(seed, 0);
  return simulate(spec, tr, mu, obs_times, rng, options, functionals);
}

std::vector<Trajectory> simulate_replicates(const SuperdiffusionSpec& spec,
                                            const HTransformSpec& tr, const InitialMeasure& mu,
                                            std::span<const double> obs_times, int replicates,
                                            std::uint64_t seed, const SimOptions& options,
                                            std::span<const Functional> functionals, int workers) {
  if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
  std::vector<Trajectory> out(static_cast<std::size_t>(replicates));
  parallel_for(out.size(), workers, [&](std::size_t r) {
    Rng rng = make_stream(seed, r);
    out[r] = simulate(spec, tr, mu, obs_times, rng, options, functionals);
  });
  return out;
}

void write_trajectories_csv(std::ostream& out, std::span<const Trajectory> runs,
                            std::span<const Functional> functionals) {
  out << "replicate,t,total_mass,w_bar,support_radius";
  for (const Functional& f : functionals) out << ',' << f.name;
  out << '\n';
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const Snapshot& s : runs[r].snapshots) {
      out << r << ',' << format_double(s.t) << ',' << format_double(s.total_mass) << ','
          << format_double(s.w_bar) << ',' << format_double(s.support_radius);
      for (double v : s.values) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

}  // namespace superlln
