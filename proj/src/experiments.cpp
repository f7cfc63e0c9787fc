#include "superlln/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace superlln {

// ---------------------------------------------------------------------------
// Statistics.

StatSummary summarize(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("summarize needs at least 2 samples");
  const std::size_t R = xs.size();
  StatSummary s;
  s.count = R;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(R);
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.variance = ss / static_cast<double>(R - 1);

  const std::size_t B = R >= 2 * kSummaryBatches ? kSummaryBatches : R;
  const std::size_t base = R / B, extra = R % B;
  double se2 = 0.0;
  std::size_t pos = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    double m = 0.0;
    for (std::size_t i = 0; i < size; ++i) m += xs[pos + i];
    m /= static_cast<double>(size);
    pos += size;
    const double w = static_cast<double>(size) / static_cast<double>(R);
    se2 += w * w * (m - s.mean) * (m - s.mean);
  }
  se2 *= static_cast<double>(B) / static_cast<double>(B - 1);
  s.standard_error = std::sqrt(se2);
  return s;
}

double variance_standard_error(std::span<const double> xs) {
  if (xs.size() < 4) throw std::invalid_argument("variance_standard_error needs at least 4 samples");
  const double R = static_cast<double>(xs.size());
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / R;
  double m2 = 0.0, m4 = 0.0;
  for (double x : xs) {
    const double d2 = (x - m) * (x - m);
    m2 += d2;
    m4 += d2 * d2;
  }
  const double s2 = m2 / (R - 1.0);
  m4 /= R;
  return std::sqrt(std::max(0.0, (m4 - s2 * s2 * (R - 3.0) / (R - 1.0)) / R));
}

double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("correlation: size mismatch");
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Results.

bool ExperimentResult::passed() const {
  return std::all_of(flags.begin(), flags.end(), [](const Flag& f) { return f.passed; });
}

const Flag* ExperimentResult::first_failure() const {
  for (const Flag& f : flags)
    if (!f.passed) return &f;
  return nullptr;
}

void ExperimentResult::add_flag(std::string name, bool ok, std::string detail) {
  flags.push_back({std::move(name), ok, std::move(detail)});
}

InitialMeasure ExperimentConfig::initial_measure() const {
  if (!initial.empty()) return initial;
  return {Atom{Point(params.dim, 0.0), 1.0}};
}

namespace {

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string at(double t) { return "@t=" + fmt(t); }

double mu_mass(const InitialMeasure& mu) {
  double m = 0.0;
  for (const Atom& a : mu) m += a.mass;
  return m;
}

double mu_pair(const InitialMeasure& mu, const ScalarField& h) {
  double m = 0.0;
  for (const Atom& a : mu) m += a.mass * h.eval(a.x);
  return m;
}

bool spatially_constant(const SuperdiffusionSpec& s) {
  return s.beta.constant_value() && s.alpha.constant_value() && !s.domain.bounded();
}

// Collects one value per replicate at time index k; fails the result if a
// replicate has no snapshot there.
template <class Get>
std::vector<double> column(std::span<const Trajectory> runs, std::size_t k, Get get) {
  std::vector<double> out;
  out.reserve(runs.size());
  for (const Trajectory& tr : runs) {
    if (k >= tr.snapshots.size())
      throw std::runtime_error("population-explosion: a replicate stopped before the last observation time");
    out.push_back(get(tr.snapshots[k]));
  }
  return out;
}

void check_explosions(ExperimentResult& res, std::span<const Trajectory> runs) {
  std::size_t exploded = 0;
  std::int64_t floored = 0, events = 0;
  for (const Trajectory& t : runs) {
    exploded += t.exploded ? 1 : 0;
    floored += t.floored_events;
    events += t.events;
  }
  res.scalars["exploded_replicates"] = static_cast<double>(exploded);
  res.scalars["branching_events"] = static_cast<double>(events);
  res.scalars["variance_floored_events"] = static_cast<double>(floored);
  if (floored)
    res.warnings.push_back("offspring variance floored at (m-1)(2-m) in " + std::to_string(floored) +
                           " branching events where 2*alpha(x) < beta/n");
  if (exploded)
    throw std::runtime_error("population-explosion in " + std::to_string(exploded) +
                             " replicate(s); raise population_cap or lower the horizon");
}

void replicate_warning(ExperimentResult& res, int replicates) {
  if (replicates < 30)
    res.warnings.push_back("insufficient-replicates: R=" + std::to_string(replicates) +
                           " is too small for reliable standard errors");
}

void push_samples(ExperimentResult& res, double t, const std::string& metric,
                  const std::vector<double>& values) {
  for (std::size_t r = 0; r < values.size(); ++r)
    res.samples.push_back({static_cast<int>(r), t, metric, values[r]});
}

bool within(double value, double target, double se, double k = 3.0) {
  return std::abs(value - target) <= k * se;
}

// f(x + c t e_1) with its support box.
struct MovingTest {
  TestFunction fn;
  QuadratureOptions box;
};

MovingTest moving_test(const ScalarField& f, double c, double t) {
  const double shift = c * t;
  MovingTest m;
  m.fn = [f, shift](std::span<const double> y) {
    Point z(y.begin(), y.end());
    z[0] += shift;
    return f.eval(z);
  };
  if (auto r = f.support_radius()) {
    m.box = QuadratureOptions::ball(f.dim(), *r);
    m.box.support_lo[0] -= shift;
    m.box.support_hi[0] -= shift;
  }
  return m;
}

SimOptions sim_options(const ExperimentConfig& cfg) {
  SimOptions o;
  o.n = cfg.n;
  o.dt_max = cfg.dt_max;
  o.population_cap = cfg.population_cap;
  return o;
}

}  // namespace

ExampleModel build_model(const ExperimentConfig& cfg) {
  if (cfg.replicates < 2 && cfg.kind != "lambda_c" && cfg.kind != "conservativeness" &&
      cfg.kind != "scaling")
    throw std::invalid_argument("replicates must be at least 2");
  if (cfg.n < 1) throw std::invalid_argument("n must be at least 1");
  if (!(cfg.dt_max > 0.0)) throw std::invalid_argument("dt_max must be positive");
  for (std::size_t k = 1; k < cfg.times.size(); ++k)
    if (!(cfg.times[k] > cfg.times[k - 1])) throw std::invalid_argument("times must be strictly increasing");
  if (cfg.kind == "moving_window") {
    if (cfg.model != "sbm_drift") throw std::invalid_argument("moving_window requires model sbm_drift");
    validate_moving_window(cfg.params);
  }
  ExampleModel m = registry_example(cfg.model, cfg.params);
  const auto pts = sample_points(m.base.domain, 4.0, cfg.params.dim == 1 ? 81 : 17);
  check_spec(m.base, pts);
  return m;
}

std::vector<Trajectory> run_ensemble(const ExperimentConfig& cfg, const ExampleModel& model,
                                     std::span<const Functional> functionals,
                                     const SimOptions* override_options) {
  const SimOptions opt = override_options ? *override_options : sim_options(cfg);
  return simulate_replicates(model.base, model.transform, cfg.initial_measure(), cfg.times,
                             cfg.replicates, cfg.seed, opt, functionals, cfg.workers);
}

// ---------------------------------------------------------------------------
// Martingale and variance.

ExperimentResult run_martingale(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const auto runs = run_ensemble(cfg, model, {});
  return analyze_martingale(cfg, model, runs);
}

ExperimentResult analyze_martingale(const ExperimentConfig& cfg, const ExampleModel& model,
                                    std::span<const Trajectory> runs) {
  ExperimentResult res;
  res.kind = "martingale";
  res.times = cfg.times;
  replicate_warning(res, static_cast<int>(runs.size()));
  check_explosions(res, runs);
  const InitialMeasure mu = cfg.initial_measure();
  const double w0 = mu_pair(mu, model.transform.h);
  const double mass0 = mu_mass(mu);
  const bool constant = spatially_constant(model.base);
  const double beta = model.params.beta, alpha = model.params.alpha;
  res.scalars["w_bar_initial"] = w0;

  std::vector<StatSummary> ws, ms;
  for (std::size_t k = 0; k < cfg.times.size(); ++k) {
    const double t = cfg.times[k];
    const auto w = column(runs, k, [](const Snapshot& s) { return s.w_bar; });
    const auto m = column(runs, k, [](const Snapshot& s) { return s.total_mass; });
    push_samples(res, t, "w_bar", w);
    push_samples(res, t, "total_mass", m);
    const StatSummary sw = summarize(w);
    ws.push_back(sw);
    ms.push_back(summarize(m));
    if (t == 0.0) {
      const bool exact = std::all_of(w.begin(), w.end(), [&](double v) { return std::abs(v - w0) <= 1e-12 * std::max(1.0, w0); });
      res.add_flag("w_bar-initial", exact, "W_0 equals <mu,h> = " + fmt(w0));
      continue;
    }
    res.add_flag("mean-one" + at(t), within(sw.mean, w0, sw.standard_error),
                 "mean W=" + fmt(sw.mean) + " target " + fmt(w0) + " se " + fmt(sw.standard_error));
    if (constant && beta > 0.0 && model.id == "sbm" && w.size() >= 4) {
      const double target = 2.0 * alpha * mass0 / beta * (1.0 - std::exp(-beta * t));
      const double vse = variance_standard_error(w);
      res.scalars["variance_target" + at(t)] = target;
      res.scalars["variance_se" + at(t)] = vse;
      res.add_flag("variance" + at(t), within(sw.variance, target, vse),
                   "var W=" + fmt(sw.variance) + " target (2 alpha/beta)(1-e^{-beta t})=" + fmt(target) +
                       " se " + fmt(vse));
    }
  }
  res.stats["w_bar"] = ws;
  res.stats["total_mass"] = ms;
  bool nonincreasing = true;
  for (std::size_t k = 1; k < ws.size(); ++k) {
    const double tol = 2.0 * std::hypot(ws[k].standard_error, ws[k - 1].standard_error);
    if (ws[k].mean > ws[k - 1].mean + tol) nonincreasing = false;
  }
  res.add_flag("supermartingale", nonincreasing, "replicate mean of W is nonincreasing within 2 se");
  if (!runs.empty() && !cfg.times.empty()) {
    const auto last = column(runs, cfg.times.size() - 1, [](const Snapshot& s) { return s.count == 0 ? 1.0 : 0.0; });
    res.scalars["extinct_fraction_final"] = std::accumulate(last.begin(), last.end(), 0.0) / static_cast<double>(last.size());
  }
  if (constant && model.id == "sbm")
    res.warnings.push_back("variance convention: offspring variance 2*alpha, checked against the Feller-diffusion value");
  return res;
}

// ---------------------------------------------------------------------------
// Ratio experiments.

ExperimentResult run_lln(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const ScalarField f = parse_field(cfg.test_function, cfg.params.dim);
  const std::vector<Functional> fs = {{"f", f, 0.0}};
  const auto runs = run_ensemble(cfg, model, fs);
  return analyze_ratio(cfg, model, runs, 0.0);
}

ExperimentResult run_moving_window(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const ScalarField f = parse_field(cfg.test_function, cfg.params.dim);
  // Window f(x_1 - ct) follows the drift of the h-transform with h = e^{c x_1};
  // the mirrored window f(x_1 + ct) is reported as a diagnostic only.
  const double c = cfg.params.c;
  const std::vector<Functional> fs = {{"f", f, -c}, {"f_mirrored", f, c}};
  const auto runs = run_ensemble(cfg, model, fs);
  ExperimentResult res = analyze_ratio(cfg, model, runs, -c);
  res.kind = "moving_window";
  if (c == 0.0) return res;
  const InitialMeasure mu = cfg.initial_measure();
  for (std::size_t k = 0; k < cfg.times.size(); ++k) {
    const double t = cfg.times[k];
    const MovingTest mt = moving_test(f, c, t);
    double denom = 0.0;
    for (const Atom& a : mu) denom += a.mass * model_expectation(model, mt.fn, a.x, t, mt.box);
    auto ratio = column(runs, k, [](const Snapshot& s) { return s.values.at(1); });
    for (double& v : ratio) v /= denom;
    const StatSummary s = summarize(ratio);
    res.scalars["mirrored_ratio_mean" + at(t)] = s.mean;
    res.scalars["mirrored_ratio_se" + at(t)] = s.standard_error;
  }
  return res;
}

ExperimentResult analyze_ratio(const ExperimentConfig& cfg, const ExampleModel& model,
                               std::span<const Trajectory> runs, double speed) {
  ExperimentResult res;
  res.kind = "lln";
  res.times = cfg.times;
  replicate_warning(res, static_cast<int>(runs.size()));
  check_explosions(res, runs);
  const ScalarField f = parse_field(cfg.test_function, cfg.params.dim);
  if (!f.support_radius()) throw std::invalid_argument("test function must have compact support");
  const InitialMeasure mu = cfg.initial_measure();
  const double w0 = mu_pair(mu, model.transform.h);

  std::vector<StatSummary> rs, ds, ws;
  std::vector<std::vector<double>> ratio_cols, w_cols;
  std::vector<double> denominators;
  for (std::size_t k = 0; k < cfg.times.size(); ++k) {
    const double t = cfg.times[k];
    if (!(t > 0.0)) throw std::invalid_argument("ratio experiments need observation times > 0");
    const MovingTest mt = moving_test(f, speed, t);
    double denom = 0.0;
    for (const Atom& a : mu) denom += a.mass * model_expectation(model, mt.fn, a.x, t, mt.box);
    if (!(denom > 0.0)) throw std::runtime_error("zero denominator E<X_t,f> at t=" + fmt(t));
    denominators.push_back(denom);
    res.scalars["denominator" + at(t)] = denom;
    const auto local = column(runs, k, [](const Snapshot& s) { return s.values.at(0); });
    const auto w = column(runs, k, [](const Snapshot& s) { return s.w_bar; });
    std::vector<double> ratio(local.size()), disc(local.size());
    for (std::size_t r = 0; r < local.size(); ++r) {
      ratio[r] = local[r] / denom;
      disc[r] = std::abs(ratio[r] - w[r] / w0);
    }
    push_samples(res, t, "local_mass", local);
    push_samples(res, t, "ratio", ratio);
    push_samples(res, t, "discrepancy", disc);
    push_samples(res, t, "w_bar", w);
    const StatSummary sr = summarize(ratio);
    rs.push_back(sr);
    ds.push_back(summarize(disc));
    ws.push_back(summarize(w));
    res.add_flag("ratio-mean-one" + at(t), within(sr.mean, 1.0, sr.standard_error),
                 "mean R=" + fmt(sr.mean) + " se " + fmt(sr.standard_error));
    ratio_cols.push_back(std::move(ratio));
    w_cols.push_back(w);
  }
  res.stats["ratio"] = rs;
  res.stats["discrepancy"] = ds;
  res.stats["w_bar"] = ws;

  bool decreasing = true;
  std::string trail;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    trail += (k ? " > " : "") + fmt(ds[k].mean);
    if (k && !(ds[k].mean < ds[k - 1].mean)) decreasing = false;
  }
  res.add_flag("discrepancy-decreasing", decreasing, "mean D_t: " + trail);

  if (!ratio_cols.empty()) {
    const auto& rT = ratio_cols.back();
    const auto& wT = w_cols.back();
    std::vector<double> rs_surv, ws_surv, early_surv;
    const auto& w_early = w_cols.front();
    for (std::size_t r = 0; r < rT.size(); ++r) {
      if (runs[r].snapshots.at(cfg.times.size() - 1).count == 0) continue;
      rs_surv.push_back(rT[r]);
      ws_surv.push_back(wT[r]);
      early_surv.push_back(w_early[r]);
    }
    const double c_all = correlation(rT, wT);
    const double c_surv = correlation(rs_surv, ws_surv);
    const double c_early = correlation(rs_surv, early_surv);
    res.scalars["corr_ratio_w_final"] = c_all;
    res.scalars["corr_ratio_w_final_survival"] = c_surv;
    res.scalars["corr_ratio_final_w_first_survival"] = c_early;
    res.scalars["surviving_replicates"] = static_cast<double>(rs_surv.size());
    if (speed == 0.0 && cfg.correlation_min > 0.0)
      res.add_flag("terminal-correlation", c_surv >= cfg.correlation_min,
                   "corr(R_T, W_T | survival) = " + fmt(c_surv) + " (min " + fmt(cfg.correlation_min) + ")");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Spread.

ExperimentResult run_spread(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const auto runs = run_ensemble(cfg, model, {});
  return analyze_spread(cfg, model, runs);
}

ExperimentResult analyze_spread(const ExperimentConfig& cfg, const ExampleModel& model,
                                std::span<const Trajectory> runs) {
  ExperimentResult res;
  res.kind = "spread";
  res.times = cfg.times;
  replicate_warning(res, static_cast<int>(runs.size()));
  check_explosions(res, runs);
  const double base_speed = std::sqrt(2.0 * std::max(model.params.beta, 0.0));
  auto fractions = [&](double eps, std::vector<StatSummary>* out) {
    std::vector<double> f;
    for (std::size_t k = 0; k < cfg.times.size(); ++k) {
      const double z = (base_speed + eps) * cfg.times[k];
      const auto ex = column(runs, k, [z](const Snapshot& s) { return s.count > 0 && s.support_radius > z ? 1.0 : 0.0; });
      const double frac = std::accumulate(ex.begin(), ex.end(), 0.0) / static_cast<double>(ex.size());
      f.push_back(frac);
      if (out) {
        out->push_back(summarize(ex));
        push_samples(res, cfg.times[k], "exceeds", ex);
      }
    }
    return f;
  };
  const double eps = cfg.params.epsilon;
  std::vector<StatSummary> st;
  const auto main = fractions(eps, &st);
  res.stats["exceedance"] = st;
  for (std::size_t k = 0; k < cfg.times.size(); ++k) {
    const auto radii = column(runs, k, [](const Snapshot& s) { return s.support_radius; });
    push_samples(res, cfg.times[k], "support_radius", radii);
    res.scalars["exceedance" + at(cfg.times[k])] = main[k];
  }
  const double final_frac = main.empty() ? 0.0 : main.back();
  res.add_flag("exceedance-final", final_frac <= cfg.exceedance_max,
               "fraction beyond (sqrt(2 beta)+eps) t at t=" + fmt(cfg.times.back()) + ": " +
                   fmt(final_frac) + " (max " + fmt(cfg.exceedance_max) + ")");
  bool trend = true;
  for (std::size_t k = 1; k < st.size(); ++k) {
    const double tol = 2.0 * std::hypot(st[k].standard_error, st[k - 1].standard_error);
    if (st[k].mean > st[k - 1].mean + tol) trend = false;
  }
  res.add_flag("exceedance-trend", trend, "exceedance fractions nonincreasing in t within 2 se");

  std::vector<double> es = cfg.epsilons;
  es.push_back(eps);
  std::sort(es.begin(), es.end());
  es.erase(std::unique(es.begin(), es.end()), es.end());
  bool monotone = true;
  std::vector<double> prev;
  for (auto it = es.rbegin(); it != es.rend(); ++it) {
    const auto fr = fractions(*it, nullptr);
    for (std::size_t k = 0; k < fr.size(); ++k) {
      res.scalars["exceedance_eps=" + fmt(*it) + at(cfg.times[k])] = fr[k];
      if (!prev.empty() && fr[k] < prev[k]) monotone = false;
    }
    prev = fr;
  }
  res.add_flag("epsilon-monotone", monotone, "fractions nondecreasing as epsilon decreases");
  return res;
}

// ---------------------------------------------------------------------------
// Extinction.

double particle_extinction_probability(const OffspringLaw& law) {
  if (law.mean() <= 1.0 + 1e-15) return 1.0;
  double q = 0.0;
  for (int it = 0; it < 10'000'000; ++it) {
    const double next = law.p0 + law.p1 * q + law.pK * std::pow(q, law.K);
    if (std::abs(next - q) <= 1e-17) return next;
    q = next;
  }
  return q;
}

ExperimentResult run_extinction(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  if (!spatially_constant(model.base))
    throw std::invalid_argument("extinction experiment needs spatially constant beta and alpha");
  const double beta = *model.base.beta.constant_value();
  const double alpha = *model.base.alpha.constant_value();
  const OffspringLaw law = make_offspring_law(1.0 + beta / cfg.n, 2.0 * alpha);
  const double q = particle_extinction_probability(law);
  SimOptions opt = sim_options(cfg);
  if (q < 1.0) {
    const double log_q = std::log(q);
    const double cut = std::log(cfg.stop_probability);
    // the whole population dies out with probability q^count
    opt.stop_after = [log_q, cut](const Snapshot& s) { return static_cast<double>(s.count) * log_q < cut; };
  }
  const auto runs = run_ensemble(cfg, model, {}, &opt);

  ExperimentResult res;
  res.kind = "extinction";
  res.times = cfg.times;
  replicate_warning(res, cfg.replicates);
  std::vector<double> extinct(runs.size());
  std::size_t stopped = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Trajectory& tr = runs[r];
    if (tr.exploded) throw std::runtime_error("population-explosion in replicate " + std::to_string(r));
    stopped += tr.stopped_early ? 1 : 0;
    extinct[r] = !tr.stopped_early && !tr.snapshots.empty() && tr.snapshots.back().count == 0 ? 1.0 : 0.0;
  }
  const double t_end = cfg.times.back();
  push_samples(res, t_end, "extinct", extinct);
  const StatSummary s = summarize(extinct);
  res.stats["extinct"] = {s};
  const double mass0 = mu_mass(cfg.initial_measure());
  const double target = extinction_probability_csbp(beta, alpha, mass0);
  res.scalars["extinct_fraction"] = s.mean;
  res.scalars["target"] = target;
  res.scalars["target_finite_time"] =
      beta > 0.0 ? std::exp(-(beta / alpha) * mass0 / -std::expm1(-beta * t_end)) : 1.0;
  res.scalars["level_n_eventual"] = std::pow(q, std::llround(mass0 * cfg.n));
  res.scalars["stopped_as_surviving"] = static_cast<double>(stopped);
  res.add_flag("extinction" + at(t_end), within(s.mean, target, s.standard_error),
               "fraction " + fmt(s.mean) + " target e^{-(beta/alpha) m} = " + fmt(target) + " se " +
                   fmt(s.standard_error));
  return res;
}

// ---------------------------------------------------------------------------
// Laplace functional.

ExperimentResult run_laplace(const ExperimentConfig& cfg) {
  if (cfg.params.dim != 1) throw std::invalid_argument("laplace experiment is one-dimensional");
  const ExampleModel model = build_model(cfg);
  const ScalarField g = parse_field(cfg.laplace.g, 1);
  const std::vector<Functional> fs = {{"g", g, 0.0}};
  const double t = cfg.times.back();
  ExperimentConfig c = cfg;
  c.times = {t};
  const auto runs = run_ensemble(c, model, fs);

  ExperimentResult res;
  res.kind = "laplace";
  res.times = {t};
  replicate_warning(res, cfg.replicates);
  check_explosions(res, runs);
  const auto pairs = column(runs, 0, [](const Snapshot& s) { return s.values.at(0); });
  std::vector<double> e(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) e[r] = std::exp(-pairs[r]);
  push_samples(res, t, "exp_minus_pair", e);
  const StatSummary s = summarize(e);
  res.stats["laplace"] = {s};

  Grid1D grid;
  grid.X = cfg.laplace.X;
  grid.dx = cfg.laplace.dx;
  grid.dt = cfg.laplace.dt;
  const double pde = laplace_functional_pde(model.base, c.initial_measure(),
                                            [&g](std::span<const double> y) { return g.eval(y); }, t, grid);
  res.scalars["mc"] = s.mean;
  res.scalars["mc_se"] = s.standard_error;
  res.scalars["pde"] = pde;
  res.add_flag("laplace-3se", within(s.mean, pde, s.standard_error),
               "MC " + fmt(s.mean) + " PDE " + fmt(pde) + " se " + fmt(s.standard_error));
  res.add_flag("laplace-relative", std::abs(s.mean - pde) <= 0.05 * std::abs(pde),
               "relative difference " + fmt(std::abs(s.mean - pde) / pde));
  return res;
}

// ---------------------------------------------------------------------------
// Local extinction.

ExperimentResult run_local_extinction(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  if (model.transform.lambda_c > 0.0)
    throw std::invalid_argument("local extinction contrast needs lambda_c <= 0");
  const ScalarField f = parse_field(cfg.test_function, cfg.params.dim);
  const std::vector<Functional> fs = {{"f", f, 0.0}};
  const auto runs = run_ensemble(cfg, model, fs);

  ExperimentResult res;
  res.kind = "local_extinction";
  res.times = cfg.times;
  replicate_warning(res, cfg.replicates);
  check_explosions(res, runs);
  const InitialMeasure mu = cfg.initial_measure();
  std::vector<StatSummary> st;
  std::vector<double> medians;
  for (std::size_t k = 0; k < cfg.times.size(); ++k) {
    const double t = cfg.times[k];
    const auto local = column(runs, k, [](const Snapshot& s) { return s.values.at(0); });
    push_samples(res, t, "local_mass", local);
    const StatSummary s = summarize(local);
    st.push_back(s);
    medians.push_back(median(local));
    res.scalars["median" + at(t)] = medians.back();
    if (t > 0.0) {
      double expected = 0.0;
      for (const Atom& a : mu)
        expected += a.mass * model_expectation(model, [&f](std::span<const double> y) { return f.eval(y); }, a.x, t,
                                               QuadratureOptions::ball(f.dim(), *f.support_radius()));
      res.scalars["expected" + at(t)] = expected;
      res.add_flag("mean-bounded" + at(t), within(s.mean, expected, s.standard_error),
                   "mean " + fmt(s.mean) + " vs E<X_t,f> " + fmt(expected) + " se " + fmt(s.standard_error));
    }
  }
  res.stats["local_mass"] = st;
  bool decreasing = true;
  std::string trail;
  for (std::size_t k = 0; k < medians.size(); ++k) {
    trail += (k ? " > " : "") + fmt(medians[k]);
    if (k && !(medians[k] < medians[k - 1])) decreasing = false;
  }
  res.add_flag("median-decreasing", decreasing, "median <X_t,f>: " + trail);
  return res;
}

// ---------------------------------------------------------------------------
// Principal eigenvalue.

namespace {

// Principal eigenvalue of the finite-difference (1/2) a u'' + b u' + beta u on
// (c - R, c + R) with zero boundary values, by shifted inverse iteration.
double grid_lambda_1d(const SuperdiffusionSpec& spec, double c, double R, int nodes) {
  const int m = nodes;  // interior nodes
  const double h = 2.0 * R / (m + 1);
  const double a = spec.diffusion.eval(Point{0.0})(0, 0);
  std::vector<double> lo(m), di(m), up(m), beta(m);
  double shift = -std::numeric_limits<double>::infinity();
  Point p(1);
  for (int i = 0; i < m; ++i) {
    p[0] = c - R + (i + 1) * h;
    beta[i] = spec.beta.eval(p);
    const double b = spec.drift.eval(p)[0];
    lo[i] = 0.5 * a / (h * h) - 0.5 * b / h;
    up[i] = 0.5 * a / (h * h) + 0.5 * b / h;
    di[i] = -a / (h * h) + beta[i];
    shift = std::max(shift, beta[i]);
  }
  shift += 1.0;
  // (shift - A) v_new = v
  std::vector<double> v(m, 1.0), w(m);
  double lam = 0.0;
  for (int it = 0; it < 500; ++it) {
    std::vector<double> d(m), r = v;
    for (int i = 0; i < m; ++i) d[i] = shift - di[i];
    for (int i = 1; i < m; ++i) {
      const double f = -lo[i] / d[i - 1];
      d[i] -= f * -up[i - 1];
      r[i] -= f * r[i - 1];
    }
    w[m - 1] = r[m - 1] / d[m - 1];
    for (int i = m - 1; i-- > 0;) w[i] = (r[i] + up[i] * w[i + 1]) / d[i];
    double num = 0.0, den = 0.0;
    for (int i = 0; i < m; ++i) {
      num += v[i] * v[i];
      den += v[i] * w[i];
    }
    const double next = shift - num / den;
    double norm = 0.0;
    for (double x : w) norm = std::max(norm, std::abs(x));
    for (int i = 0; i < m; ++i) v[i] = w[i] / norm;
    if (it > 5 && std::abs(next - lam) < 1e-13) {
      lam = next;
      break;
    }
    lam = next;
  }
  return lam;
}

}  // namespace

ExperimentResult run_lambda(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const LambdaSettings& ls = cfg.lambda;
  LambdaOptions opt;
  if (ls.method == "transfer")
    opt.method = LambdaMethod::transfer_operator;
  else if (ls.method == "finite_time")
    opt.method = LambdaMethod::finite_time;
  else
    throw std::invalid_argument("lambda method must be transfer or finite_time");
  opt.dt = cfg.dt_max;
  opt.cells = ls.cells;
  opt.batches = ls.batches;
  opt.workers = cfg.workers;
  const Point x = ls.x.empty() ? Point(cfg.params.dim, 0.0) : ls.x;
  const LambdaEstimate est = estimate_lambda_c(model.base, x, ls.radius, ls.t, ls.paths, cfg.seed, opt);

  ExperimentResult res;
  res.kind = "lambda_c";
  res.times = {ls.t};
  res.samples.push_back({0, ls.t, "lambda_estimate", est.value});
  res.samples.push_back({0, ls.t, "lambda_half_width", est.half_width});
  res.scalars["estimate"] = est.value;
  res.scalars["half_width"] = est.half_width;
  res.scalars["standard_error"] = est.standard_error;
  res.scalars["closed_form_whole_space"] = model.transform.lambda_c;
  res.warnings.push_back(est.diagnostic);
  if (est.all_killed) {
    res.add_flag("lambda-finite", false, est.diagnostic);
    return res;
  }
  if (cfg.params.dim == 1) {
    const double oracle = grid_lambda_1d(model.base, x[0], ls.radius, 4000);
    res.scalars["grid_oracle"] = oracle;
    res.add_flag("lambda-within-ci", std::abs(est.value - oracle) <= est.half_width,
                 "estimate " + fmt(est.value) + " +- " + fmt(est.half_width) + " vs grid eigenvalue " + fmt(oracle));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Conservativeness.

ExperimentResult conservativeness_diagnostic(const SuperdiffusionSpec& motion, double T,
                                             std::int64_t paths, std::uint64_t seed,
                                             std::span<const double> radii, double dt) {
  if (!(T > 0.0) || paths < 1) throw std::invalid_argument("conservativeness: T and paths must be positive");
  const int B = 20;
  const std::int64_t per = (paths + B - 1) / B;
  const int steps = std::max(2, static_cast<int>(std::ceil(T / dt - 1e-9)));
  const double h = T / steps;
  const int d = motion.dim;
  struct Batch {
    std::int64_t exploded = 0;
    std::vector<std::int64_t> exits;
    std::vector<double> mid, end;
  };
  std::vector<Batch> batches(B);
  parallel_for(B, 1, [&](std::size_t b) {
    Rng rng = make_stream(seed, b);
    MotionSampler ms(motion, h);
    Batch& out = batches[b];
    out.exits.assign(radii.size(), 0);
    Point y(d);
    for (std::int64_t k = 0; k < per; ++k) {
      std::fill(y.begin(), y.end(), 0.0);
      double rmax = 0.0;
      bool exploded = false;
      for (int s = 0; s < steps; ++s) {
        if (ms.exact())
          ms.exact_step(y.data(), h, rng);
        else
          ms.euler_step(y.data(), h, rng);
        double r2 = 0.0;
        for (double v : y) r2 += v * v;
        const double r = std::sqrt(r2);
        if (!std::isfinite(r) || r > 1e100) {
          exploded = true;
          break;
        }
        rmax = std::max(rmax, r);
        if (s == steps / 2 - 1) out.mid.push_back(r);
      }
      if (exploded) {
        ++out.exploded;
        continue;
      }
      double r2 = 0.0;
      for (double v : y) r2 += v * v;
      out.end.push_back(std::sqrt(r2));
      for (std::size_t i = 0; i < radii.size(); ++i)
        if (rmax > radii[i]) ++out.exits[i];
    }
  });
  ExperimentResult res;
  res.kind = "conservativeness";
  res.times = {T};
  std::int64_t exploded = 0;
  std::vector<std::int64_t> exits(radii.size(), 0);
  std::vector<double> mid, end;
  for (const Batch& b : batches) {
    exploded += b.exploded;
    for (std::size_t i = 0; i < radii.size(); ++i) exits[i] += b.exits[i];
    mid.insert(mid.end(), b.mid.begin(), b.mid.end());
    end.insert(end.end(), b.end.begin(), b.end.end());
  }
  const double total = static_cast<double>(per * B);
  res.scalars["explosion_frequency"] = exploded / total;
  for (std::size_t i = 0; i < radii.size(); ++i)
    res.scalars["exit_frequency_R=" + fmt(radii[i])] = exits[i] / total;
  const double med_mid = mid.empty() ? 0.0 : median(mid);
  const double med_end = end.empty() ? 0.0 : median(end);
  res.scalars["median_radius_half_T"] = med_mid;
  res.scalars["median_radius_T"] = med_end;
  const double growth = med_mid > 0.0 ? med_end / med_mid : 0.0;
  res.scalars["radius_growth_second_half"] = growth;
  res.samples.push_back({0, T, "explosion_frequency", exploded / total});
  res.samples.push_back({0, T, "median_radius", med_end});
  res.add_flag("conservative", exploded == 0, "explosion frequency " + fmt(exploded / total));
  if (growth > 4.0) res.warnings.push_back("conservative but transient: radius grows exponentially");
  return res;
}

ExperimentResult run_conservativeness(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const ConservativenessSettings& cs = cfg.conservativeness;
  SuperdiffusionSpec motion;
  if (cs.drift_rate) {
    motion = model.base;
    motion.drift = VectorField::linear(cfg.params.dim, *cs.drift_rate);
    motion.beta = make_constant(cfg.params.dim, 0.0);
  } else {
    motion = h_transform(model.base, model.transform);
  }
  ExperimentResult res = conservativeness_diagnostic(motion, cs.T, cs.paths, cfg.seed, cs.radii, cfg.dt_max);
  res.scalars["drift_is_affine"] = motion.drift.affine_form() ? 1.0 : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// H-transform identities.

double operator_identity_deviation(const ExampleModel& model, int functions, int points,
                                   std::uint64_t seed) {
  const int d = model.params.dim;
  const SuperdiffusionSpec& base = model.base;
  const SuperdiffusionSpec tr = h_transform(base, model.transform);
  const ScalarField& h = model.transform.h;
  const double lam = model.transform.lambda_c;
  Rng rng = make_stream(seed, 0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < functions; ++k) {
    const double k0 = 0.5 + 1.5 * U(rng), k1 = -1.0 + 2.0 * U(rng);
    const double c1 = -1.0 + 2.0 * U(rng), c2 = 0.1 + 0.9 * U(rng);
    const int axis = static_cast<int>(U(rng) * d) % d;
    const ScalarField u = add(make_constant(d, k0),
                              scale(k1, multiply(make_exp_linear(d, c1, axis), make_gaussian_quadratic(d, c2, -1))));
    const ScalarField hu = multiply(h, u);
    for (int j = 0; j < points; ++j) {
      Point x(d);
      for (double& v : x) v = -2.0 + 4.0 * U(rng);
      const double lhs = (apply_generator(base, hu, x) + (base.beta.eval(x) - lam) * hu.eval(x)) / h.eval(x);
      const double rhs = apply_generator(tr, u, x);
      worst = std::max(worst, std::abs(lhs - rhs) / (std::abs(rhs) + std::abs(u.eval(x))));
    }
  }
  return worst;
}

ExperimentResult run_h_invariance(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const ScalarField f = parse_field(cfg.test_function, cfg.params.dim);
  const ScalarField& h = model.transform.h;
  const double lam = model.transform.lambda_c;
  const ScalarField hf = multiply(h, f);
  SimOptions opt = sim_options(cfg);
  opt.keep_clouds = true;
  const auto runs = run_ensemble(cfg, model, {}, &opt);

  ExperimentResult res;
  res.kind = "h_invariance";
  res.times = cfg.times;
  check_explosions(res, runs);
  const InitialMeasure mu = cfg.initial_measure();
  double worst_pair = 0.0, worst_ratio = 0.0, worst_wbar = 0.0;
  for (std::size_t k = 0; k < cfg.times.size(); ++k) {
    const double t = cfg.times[k];
    double denom = 0.0;
    if (t > 0.0)
      for (const Atom& a : mu)
        denom += a.mass * model_expectation(model, [&hf](std::span<const double> y) { return hf.eval(y); }, a.x, t,
                                            QuadratureOptions::ball(f.dim(), *f.support_radius()));
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const ParticleCloud& cloud = *runs[r].snapshots.at(k).cloud;
      const double decay = std::exp(-lam * t);
      // X^H as a weighted measure: weights e^{-lambda t} h(x_i) / n
      double weighted = 0.0, wsum = 0.0;
      for (std::int64_t i = 0; i < cloud.count(); ++i) {
        const auto x = cloud.particle(i);
        const double w = decay * h.eval(x);
        weighted += w * f.eval(x);
        wsum += w;
      }
      weighted /= cloud.n;
      wsum /= cloud.n;
      const double base_pair = pair(cloud, hf);
      const double via_base = decay * base_pair;
      const double scale_ref = std::max({std::abs(weighted), std::abs(via_base), 1e-300});
      const double dp = std::abs(weighted - via_base) / scale_ref;
      worst_pair = std::max(worst_pair, dp);
      const double ws = runs[r].snapshots[k].w_bar;
      worst_wbar = std::max(worst_wbar, std::abs(ws - wsum) / std::max({std::abs(ws), std::abs(wsum), 1e-300}));
      res.samples.push_back({static_cast<int>(r), t, "pair_H", weighted});
      res.samples.push_back({static_cast<int>(r), t, "pair_identity_deviation", dp});
      if (denom > 0.0) {
        const double ratio_h = weighted / (decay * denom);
        const double ratio_base = base_pair / denom;
        const double dr = std::abs(ratio_h - ratio_base) / std::max({std::abs(ratio_h), std::abs(ratio_base), 1e-300});
        worst_ratio = std::max(worst_ratio, dr);
      }
    }
  }
  const double op = operator_identity_deviation(model, 20, 50, cfg.seed);
  res.scalars["max_pair_deviation"] = worst_pair;
  res.scalars["max_ratio_deviation"] = worst_ratio;
  res.scalars["max_w_bar_deviation"] = worst_wbar;
  res.scalars["operator_identity_deviation"] = op;
  res.add_flag("pathwise-reweighting", worst_pair <= 1e-12, "max relative deviation " + fmt(worst_pair));
  res.add_flag("ratio-invariance", worst_ratio <= 1e-12, "max relative deviation " + fmt(worst_ratio));
  res.add_flag("w_bar-reweighting", worst_wbar <= 1e-12, "max relative deviation " + fmt(worst_wbar));
  res.add_flag("operator-identity", op <= 1e-6, "max relative deviation " + fmt(op));
  return res;
}

// ---------------------------------------------------------------------------

namespace {

ExperimentResult run_scaling(const ExperimentConfig& cfg) {
  const ExampleModel model = build_model(cfg);
  const ScalarField f = parse_field(cfg.test_function, cfg.params.dim);
  std::vector<Point> pts;
  const double zmax = model.scaling ? model.scaling->z(cfg.times.back()) : 0.0;
  for (int i = -10; i <= 10; ++i) {
    Point x(cfg.params.dim, 0.0);
    x[0] = zmax * i / 10.0;
    pts.push_back(x);
  }
  const ScalingReport rep = scaling_check(model, f, pts, cfg.times);
  ExperimentResult res;
  res.kind = "scaling";
  res.times = cfg.times;
  res.scalars["target"] = rep.target;
  for (const ScalingRow& r : rep.rows) {
    if (r.x[0] != 0.0) continue;
    res.samples.push_back({0, r.t, "scaled_at_origin", r.scaled});
    res.samples.push_back({0, r.t, "deviation_at_origin", r.deviation});
  }
  for (const UniformRow& u : rep.uniform) {
    res.samples.push_back({0, u.t, "uniform_sup_deviation", u.sup_deviation});
    res.scalars["uniform_sup_deviation" + at(u.t)] = u.sup_deviation;
  }
  double final_dev = 0.0;
  for (const ScalingRow& r : rep.rows)
    if (r.t == cfg.times.back() && r.x[0] == 0.0) final_dev = r.deviation;
  const double rel = rep.target != 0.0 ? final_dev / std::abs(rep.target) : final_dev;
  res.scalars["relative_deviation_final"] = rel;
  res.add_flag("scaling-limit", rel <= 0.02, "relative deviation at x=0, t=" + fmt(cfg.times.back()) + ": " + fmt(rel));
  bool mono = true;
  for (const auto& v : rep.monotonicity_violations)
    if (v.second[0] == 0.0) mono = false;
  res.add_flag("scaling-monotone", mono, "deviation at x=0 shrinks along the t grid");
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.kind == "martingale") return run_martingale(cfg);
  if (cfg.kind == "lln") return run_lln(cfg);
  if (cfg.kind == "moving_window") return run_moving_window(cfg);
  if (cfg.kind == "spread") return run_spread(cfg);
  if (cfg.kind == "extinction") return run_extinction(cfg);
  if (cfg.kind == "laplace") return run_laplace(cfg);
  if (cfg.kind == "local_extinction") return run_local_extinction(cfg);
  if (cfg.kind == "lambda_c") return run_lambda(cfg);
  if (cfg.kind == "conservativeness") return run_conservativeness(cfg);
  if (cfg.kind == "h_invariance") return run_h_invariance(cfg);
  if (cfg.kind == "scaling") return run_scaling(cfg);
  throw std::invalid_argument("unknown experiment kind '" + cfg.kind + "'");
}

}  // namespace superlln
