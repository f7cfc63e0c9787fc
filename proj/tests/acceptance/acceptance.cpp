// Acceptance suite: one PASS/FAIL line per criterion, driven by the shipped
// configs. Exit status 0 iff every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "superlln/config.hpp"

using namespace superlln;

namespace {

std::filesystem::path config_dir = SUPERLLN_CONFIG_DIR;
int failures = 0;

ExperimentConfig load(const std::string& name) { return parse_config(config_dir / (name + ".yaml")).experiment; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void report(const std::string& id, bool ok, const std::string& what, double seconds) {
  std::cout << id << (id.size() < 3 ? "  " : " ") << (ok ? "PASS" : "FAIL") << "  " << what << "  [" << fmt(seconds)
            << " s]" << std::endl;
  if (!ok) ++failures;
}

// All flags whose name starts with `prefix`; detail of the failures, or of all when none fail.
bool flags_pass(const ExperimentResult& r, const std::string& prefix, std::string& detail) {
  bool ok = true, any = false;
  std::string good, bad;
  for (const Flag& f : r.flags) {
    if (f.name.rfind(prefix, 0) != 0) continue;
    any = true;
    (f.passed ? good : bad) += (f.name + ": " + f.detail + "; ");
    ok = ok && f.passed;
  }
  detail = ok ? good : bad;
  return ok && any;
}

template <class Fn>
void criterion(const std::string& id, Fn fn) {
  const auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string what;
  try {
    ok = fn(what);
  } catch (const std::exception& e) {
    what = std::string("exception: ") + e.what();
  }
  report(id, ok, what, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string csv_of(const std::vector<SampleRow>& rows) {
  ExperimentResult r;
  r.samples = rows;
  std::ostringstream out;
  write_results_csv(out, r);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) config_dir = argv[1];
  const int workers = default_workers();

  // A1, A2: one martingale ensemble.
  {
    ExperimentConfig cfg = load("a1_martingale");
    cfg.workers = workers;
    ExperimentResult res;
    criterion("A1", [&](std::string& w) {
      const ExampleModel model = build_model(cfg);
      const auto runs = run_ensemble(cfg, model, {});
      res = analyze_martingale(cfg, model, runs);
      return flags_pass(res, "mean-one", w);
    });
    criterion("A2", [&](std::string& w) {
      const bool ok = flags_pass(res, "variance", w);
      w += "target at t=2: " + fmt(2 * 0.5 / 1.0 * (1 - std::exp(-2.0))) +
           " (Feller-diffusion value with offspring variance 2*alpha)";
      return ok;
    });
  }

  criterion("A3", [&](std::string& w) {
    ExperimentConfig cfg = load("a3_extinction");
    cfg.workers = workers;
    const ExperimentResult r = run_extinction(cfg);
    return flags_pass(r, "extinction", w);
  });

  // A4, A7 (c = 0 identity), A8: one LLN ensemble.
  std::vector<SampleRow> lln_rows;
  {
    ExperimentConfig cfg = load("a4_lln");
    cfg.workers = workers;
    ExampleModel model;
    std::vector<Trajectory> runs;
    criterion("A4", [&](std::string& w) {
      model = build_model(cfg);
      const std::vector<Functional> fs = {{"f", parse_field(cfg.test_function, cfg.params.dim), 0.0}};
      runs = run_ensemble(cfg, model, fs);
      const ExperimentResult r = analyze_ratio(cfg, model, runs, 0.0);
      lln_rows = r.samples;
      std::string d1, d2, d3;
      const bool i = flags_pass(r, "ratio-mean-one", d1);
      const bool ii = flags_pass(r, "discrepancy-decreasing", d2);
      const bool iii = flags_pass(r, "terminal-correlation", d3);
      w = std::string("(i) ") + (i ? "ok " : "FAIL ") + d1 + "(ii) " + (ii ? "ok " : "FAIL ") + d2 + "(iii) " +
          (iii ? "ok " : "FAIL ") + d3 + "unconditional corr " + fmt(r.scalars.at("corr_ratio_w_final"));
      return i && ii && iii;
    });
    criterion("A8", [&](std::string& w) {
      ExperimentConfig sc = load("a8_spread");
      if (sc.seed != cfg.seed || sc.n != cfg.n || sc.replicates != cfg.replicates || sc.times != cfg.times)
        throw std::runtime_error("a8_spread must share seed, n, R and times with a4_lln");
      if (runs.empty()) throw std::runtime_error("A4 ensemble unavailable");
      const ExperimentResult r = analyze_spread(sc, model, runs);
      return flags_pass(r, "exceedance-final", w);
    });
  }

  criterion("A5", [&](std::string& w) {
    ExperimentConfig cfg = load("a5_laplace");
    cfg.workers = workers;
    const ExperimentResult r = run_laplace(cfg);
    std::string a, b;
    const bool ok = flags_pass(r, "laplace-3se", a) && flags_pass(r, "laplace-relative", b);
    flags_pass(r, "laplace", w);
    return ok;
  });

  criterion("A6", [&](std::string& w) {
    ExperimentConfig cfg = load("a6_h_invariance");
    cfg.workers = workers;
    const ExperimentResult r = run_h_invariance(cfg);
    std::string d;
    bool ok = flags_pass(r, "pathwise-reweighting", d);
    w = d;
    ok = flags_pass(r, "operator-identity", d) && ok;
    w += d + "operator identity per registry model:";
    ModelParams p;
    p.c = 0.7;
    p.K = 2.0;
    for (const RegistryEntry& e : registry_entries()) {
      const double dev = operator_identity_deviation(registry_example(e.id, p), 20, 50, cfg.seed);
      w += " " + e.id + "=" + fmt(dev);
      ok = ok && dev <= 1e-6;
    }
    return ok;
  });

  criterion("A7", [&](std::string& w) {
    ExperimentConfig cfg = load("a7_moving_window");
    cfg.workers = workers;
    const ExperimentResult r = run_moving_window(cfg);
    std::string d;
    const bool mean_one = flags_pass(r, "ratio-mean-one", d);
    w = d;
    ExperimentConfig zero = load("a4_lln");
    zero.kind = "moving_window";
    zero.model = "sbm_drift";
    zero.params.c = 0.0;
    zero.replicates = 60;
    zero.workers = workers;
    const ExperimentResult z = run_moving_window(zero);
    std::vector<SampleRow> head;
    for (const SampleRow& row : lln_rows)
      if (row.replicate < zero.replicates) head.push_back(row);
    const bool identical = !head.empty() && csv_of(head) == csv_of(z.samples);
    w += std::string("c=0 results.csv ") + (identical ? "byte-identical" : "DIFFERS") + " to the A4 pipeline on " +
         std::to_string(zero.replicates) + " shared replicates";
    return mean_one && identical;
  });

  criterion("A9", [&](std::string& w) {
    ExperimentConfig cfg = load("a9_lambda");
    cfg.workers = workers;
    const ExperimentResult r = run_lambda(cfg);
    const double R = cfg.lambda.radius;
    const double closed = 1.0 - std::numbers::pi * std::numbers::pi / (8 * R * R);
    const double est = r.scalars.at("estimate"), hw = r.scalars.at("half_width");
    std::string d;
    const bool grid = flags_pass(r, "lambda-within-ci", d);
    w = d + "closed form " + fmt(closed);
    return grid && std::abs(est - closed) <= hw;
  });

  criterion("A10", [&](std::string& w) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> beta(-2.0, 4.0), alpha(0.05, 5.0);
    std::uniform_int_distribution<int> n(200, 5000);
    double worst_m = 0.0, worst_v = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const double b = beta(rng), a = alpha(rng);
      const int level = n(rng);
      const OffspringLaw l = make_offspring_law(1.0 + b / level, 2.0 * a);
      worst_m = std::max(worst_m, std::abs(l.mean() - (1.0 + b / level)));
      worst_v = std::max(worst_v, std::abs(l.variance() - 2.0 * a));
    }
    w = "10^4 draws, max |mean error| " + fmt(worst_m) + ", max |variance error| " + fmt(worst_v);
    return worst_m <= 1e-12 && worst_v <= 1e-12;
  });

  criterion("A11", [&](std::string& w) {
    ExperimentConfig cfg = load("a11_local_extinction");
    cfg.workers = workers;
    const ExperimentResult r = run_local_extinction(cfg);
    return flags_pass(r, "median-decreasing", w);
  });

  criterion("A12", [&](std::string& w) {
    SuperdiffusionSpec heat;
    heat.alpha = make_constant(1, 0.0);
    Grid1D g;
    g.X = 10;
    g.dx = 0.01;
    g.dt = 1e-3;
    g.t_end = 1.0;
    const TestFunction gauss = [](std::span<const double> x) { return std::exp(-x[0] * x[0] / 2); };
    const PDESolution s = solve_forward(heat, gauss, g);
    double sup = 0.0;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      sup = std::max(sup, std::abs(s.u.back()[i] - std::exp(-s.x[i] * s.x[i] / 4) / std::sqrt(2.0)));
    SuperdiffusionSpec sbm;
    sbm.beta = make_constant(1, 1.0);
    sbm.alpha = make_constant(1, 0.5);
    sbm.beta_upper_bound = 1.0;
    const TestFunction bump = [b = make_bump(1, 1.0)](std::span<const double> x) { return 0.5 * b.eval(x); };
    const double doubling = domain_doubling_change(sbm, bump, g);
    const double margin = box_monotonicity_margin(sbm, bump, g, {2.0, 4.0, 8.0});
    w = "heat sup error " + fmt(sup) + " (< 1e-3), domain doubling " + fmt(doubling) + " (< 1e-6), box margin " +
        fmt(margin) + " (>= -1e-12, rounding)";
    return sup < 1e-3 && doubling < 1e-6 && margin >= -1e-12;
  });

  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
