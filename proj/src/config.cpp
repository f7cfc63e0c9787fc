#include "superlln/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

namespace superlln {

using nlohmann::json;

ConfigError::ConfigError(const std::string& what, int line)
    : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + what : what), line_(line) {}

bool operator==(const RunConfig& a, const RunConfig& b) {
  const ExperimentConfig& x = a.experiment;
  const ExperimentConfig& y = b.experiment;
  auto same_measure = [](const InitialMeasure& p, const InitialMeasure& q) {
    if (p.size() != q.size()) return false;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i].x != q[i].x || p[i].mass != q[i].mass) return false;
    return true;
  };
  return a.out_dir == b.out_dir && x.kind == y.kind && x.model == y.model && x.params == y.params &&
         x.n == y.n && x.replicates == y.replicates && x.times == y.times && x.seed == y.seed &&
         x.dt_max == y.dt_max && x.population_cap == y.population_cap &&
         same_measure(x.initial, y.initial) && x.test_function == y.test_function &&
         x.correlation_min == y.correlation_min && x.exceedance_max == y.exceedance_max &&
         x.epsilons == y.epsilons && x.stop_probability == y.stop_probability && x.laplace == y.laplace &&
         x.lambda == y.lambda && x.conservativeness == y.conservativeness && x.workers == y.workers;
}

namespace {

const std::set<std::string> kKinds = {"martingale", "lln", "moving_window", "spread",
                                      "extinction", "laplace", "local_extinction", "lambda_c",
                                      "conservativeness", "h_invariance", "scaling"};

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

void expect_map(const YAML::Node& n, const std::string& where) {
  if (!n.IsMap()) throw ConfigError(where + " must be a mapping", line_of(n));
}

void allow_keys(const YAML::Node& n, const std::set<std::string>& keys, const std::string& where) {
  expect_map(n, where);
  for (const auto& kv : n) {
    const std::string k = kv.first.as<std::string>();
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where, line_of(kv.first));
  }
}

template <class T>
T get(const YAML::Node& n, const std::string& name) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + name + "'", line_of(n));
  }
}

template <class T>
void read(const YAML::Node& parent, const char* key, T& out, const std::string& where) {
  if (const YAML::Node n = parent[key]) out = get<T>(n, where + "." + key);
}

Point read_point(const YAML::Node& n, const std::string& name) {
  if (n.IsScalar()) return Point{get<double>(n, name)};
  if (!n.IsSequence()) throw ConfigError(name + " must be a number or a list", line_of(n));
  return get<std::vector<double>>(n, name);
}

RunConfig from_yaml(const YAML::Node& root) {
  RunConfig rc;
  ExperimentConfig& c = rc.experiment;
  allow_keys(root, {"experiment", "model", "simulation", "initial", "test_function", "checks", "laplace",
                    "lambda", "conservativeness", "output"},
             "top level");
  if (!root["experiment"]) throw ConfigError("missing required key 'experiment'");
  c.kind = get<std::string>(root["experiment"], "experiment");
  if (!kKinds.count(c.kind)) throw ConfigError("unknown experiment '" + c.kind + "'", line_of(root["experiment"]));

  if (const YAML::Node m = root["model"]) {
    allow_keys(m, {"id", "dim", "beta", "alpha", "c", "K", "epsilon"}, "model");
    read(m, "id", c.model, "model");
    read(m, "dim", c.params.dim, "model");
    read(m, "beta", c.params.beta, "model");
    read(m, "alpha", c.params.alpha, "model");
    read(m, "c", c.params.c, "model");
    read(m, "epsilon", c.params.epsilon, "model");
    if (m["K"]) c.params.K = get<double>(m["K"], "model.K");
  }
  if (const YAML::Node s = root["simulation"]) {
    allow_keys(s, {"n", "replicates", "times", "seed", "dt_max", "population_cap", "workers"}, "simulation");
    read(s, "n", c.n, "simulation");
    read(s, "replicates", c.replicates, "simulation");
    read(s, "times", c.times, "simulation");
    read(s, "seed", c.seed, "simulation");
    read(s, "dt_max", c.dt_max, "simulation");
    read(s, "population_cap", c.population_cap, "simulation");
    read(s, "workers", c.workers, "simulation");
  }
  if (const YAML::Node init = root["initial"]) {
    if (!init.IsSequence()) throw ConfigError("initial must be a list of atoms", line_of(init));
    for (const auto& a : init) {
      allow_keys(a, {"x", "mass"}, "initial atom");
      Atom atom;
      if (!a["x"]) throw ConfigError("initial atom needs 'x'", line_of(a));
      atom.x = read_point(a["x"], "initial.x");
      read(a, "mass", atom.mass, "initial");
      c.initial.push_back(atom);
    }
  }
  read(root, "test_function", c.test_function, "top level");
  if (const YAML::Node k = root["checks"]) {
    allow_keys(k, {"correlation_min", "exceedance_max", "epsilons", "stop_probability"}, "checks");
    read(k, "correlation_min", c.correlation_min, "checks");
    read(k, "exceedance_max", c.exceedance_max, "checks");
    read(k, "epsilons", c.epsilons, "checks");
    read(k, "stop_probability", c.stop_probability, "checks");
  }
  if (const YAML::Node l = root["laplace"]) {
    allow_keys(l, {"g", "X", "dx", "dt"}, "laplace");
    read(l, "g", c.laplace.g, "laplace");
    read(l, "X", c.laplace.X, "laplace");
    read(l, "dx", c.laplace.dx, "laplace");
    read(l, "dt", c.laplace.dt, "laplace");
  }
  if (const YAML::Node l = root["lambda"]) {
    allow_keys(l, {"radius", "t", "paths", "method", "cells", "batches", "x"}, "lambda");
    read(l, "radius", c.lambda.radius, "lambda");
    read(l, "t", c.lambda.t, "lambda");
    read(l, "paths", c.lambda.paths, "lambda");
    read(l, "method", c.lambda.method, "lambda");
    read(l, "cells", c.lambda.cells, "lambda");
    read(l, "batches", c.lambda.batches, "lambda");
    if (l["x"]) c.lambda.x = read_point(l["x"], "lambda.x");
  }
  if (const YAML::Node v = root["conservativeness"]) {
    allow_keys(v, {"T", "paths", "radii", "drift_rate"}, "conservativeness");
    read(v, "T", c.conservativeness.T, "conservativeness");
    read(v, "paths", c.conservativeness.paths, "conservativeness");
    read(v, "radii", c.conservativeness.radii, "conservativeness");
    if (v["drift_rate"]) c.conservativeness.drift_rate = get<double>(v["drift_rate"], "conservativeness.drift_rate");
  }
  if (const YAML::Node o = root["output"]) {
    allow_keys(o, {"dir"}, "output");
    read(o, "dir", rc.out_dir, "output");
  }
  return rc;
}

void validate(const RunConfig& rc) {
  const ExperimentConfig& c = rc.experiment;
  if (c.times.empty()) throw ConfigError("simulation.times must not be empty");
  if (c.workers < 1) throw ConfigError("simulation.workers must be at least 1");
  for (const Atom& a : c.initial) {
    if (static_cast<int>(a.x.size()) != c.params.dim)
      throw ConfigError("initial atom dimension does not match model.dim");
    if (!(a.mass > 0.0)) throw ConfigError("initial atom mass must be positive");
  }
  try {
    build_model(c);
    parse_field(c.test_function, c.params.dim);
    if (c.kind == "laplace") parse_field(c.laplace.g, c.params.dim);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void emit_list(YAML::Emitter& e, const std::vector<double>& v) {
  e << YAML::Flow << YAML::BeginSeq;
  for (double x : v) e << format_double(x);
  e << YAML::EndSeq;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1);
  }
  RunConfig rc = from_yaml(root);
  validate(rc);
  return rc;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string emit_config(const RunConfig& rc) {
  const ExperimentConfig& c = rc.experiment;
  YAML::Emitter e;
  e << YAML::BeginMap;
  e << YAML::Key << "experiment" << YAML::Value << c.kind;
  e << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "id" << YAML::Value << c.model;
  e << YAML::Key << "dim" << YAML::Value << c.params.dim;
  e << YAML::Key << "beta" << YAML::Value << format_double(c.params.beta);
  e << YAML::Key << "alpha" << YAML::Value << format_double(c.params.alpha);
  e << YAML::Key << "c" << YAML::Value << format_double(c.params.c);
  if (c.params.K) e << YAML::Key << "K" << YAML::Value << format_double(*c.params.K);
  e << YAML::Key << "epsilon" << YAML::Value << format_double(c.params.epsilon);
  e << YAML::EndMap;
  e << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "n" << YAML::Value << c.n;
  e << YAML::Key << "replicates" << YAML::Value << c.replicates;
  e << YAML::Key << "times" << YAML::Value;
  emit_list(e, c.times);
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "dt_max" << YAML::Value << format_double(c.dt_max);
  e << YAML::Key << "population_cap" << YAML::Value << c.population_cap;
  e << YAML::Key << "workers" << YAML::Value << c.workers;
  e << YAML::EndMap;
  if (!c.initial.empty()) {
    e << YAML::Key << "initial" << YAML::Value << YAML::BeginSeq;
    for (const Atom& a : c.initial) {
      e << YAML::BeginMap << YAML::Key << "x" << YAML::Value;
      emit_list(e, a.x);
      e << YAML::Key << "mass" << YAML::Value << format_double(a.mass) << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  e << YAML::Key << "test_function" << YAML::Value << c.test_function;
  e << YAML::Key << "checks" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "correlation_min" << YAML::Value << format_double(c.correlation_min);
  e << YAML::Key << "exceedance_max" << YAML::Value << format_double(c.exceedance_max);
  e << YAML::Key << "epsilons" << YAML::Value;
  emit_list(e, c.epsilons);
  e << YAML::Key << "stop_probability" << YAML::Value << format_double(c.stop_probability);
  e << YAML::EndMap;
  e << YAML::Key << "laplace" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "g" << YAML::Value << c.laplace.g;
  e << YAML::Key << "X" << YAML::Value << format_double(c.laplace.X);
  e << YAML::Key << "dx" << YAML::Value << format_double(c.laplace.dx);
  e << YAML::Key << "dt" << YAML::Value << format_double(c.laplace.dt);
  e << YAML::EndMap;
  e << YAML::Key << "lambda" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "radius" << YAML::Value << format_double(c.lambda.radius);
  e << YAML::Key << "t" << YAML::Value << format_double(c.lambda.t);
  e << YAML::Key << "paths" << YAML::Value << c.lambda.paths;
  e << YAML::Key << "method" << YAML::Value << c.lambda.method;
  e << YAML::Key << "cells" << YAML::Value << c.lambda.cells;
  e << YAML::Key << "batches" << YAML::Value << c.lambda.batches;
  if (!c.lambda.x.empty()) {
    e << YAML::Key << "x" << YAML::Value;
    emit_list(e, c.lambda.x);
  }
  e << YAML::EndMap;
  e << YAML::Key << "conservativeness" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "T" << YAML::Value << format_double(c.conservativeness.T);
  e << YAML::Key << "paths" << YAML::Value << c.conservativeness.paths;
  e << YAML::Key << "radii" << YAML::Value;
  emit_list(e, c.conservativeness.radii);
  if (c.conservativeness.drift_rate)
    e << YAML::Key << "drift_rate" << YAML::Value << format_double(*c.conservativeness.drift_rate);
  e << YAML::EndMap;
  e << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "dir" << YAML::Value << rc.out_dir;
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

void write_results_csv(std::ostream& out, const ExperimentResult& res) {
  out << "replicate,t,metric,value\n";
  for (const SampleRow& r : res.samples)
    out << r.replicate << ',' << format_double(r.t) << ',' << r.metric << ',' << format_double(r.value) << '\n';
}

namespace {

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string summary_json(const RunConfig& cfg, const ExperimentResult& res) {
  json j;
  j["schema"] = kSummarySchema;
  j["results_schema"] = kResultsSchema;
  j["version"] = kVersion;
  j["experiment"] = res.kind;
  j["model"] = cfg.experiment.model;
  j["seed"] = cfg.experiment.seed;
  j["config"] = emit_config(cfg);
  j["times"] = res.times;
  json stats = json::object();
  for (const auto& [metric, rows] : res.stats) {
    json arr = json::array();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const StatSummary& s = rows[k];
      arr.push_back({{"t", k < res.times.size() ? num(res.times[k]) : json(nullptr)},
                     {"mean", num(s.mean)},
                     {"variance", num(s.variance)},
                     {"standard_error", num(s.standard_error)},
                     {"ci_half_width", num(3.0 * s.standard_error)},
                     {"count", s.count}});
    }
    stats[metric] = arr;
  }
  j["stats"] = stats;
  json scalars = json::object();
  for (const auto& [k, v] : res.scalars) scalars[k] = num(v);
  j["scalars"] = scalars;
  json flags = json::array();
  for (const Flag& f : res.flags) flags.push_back({{"name", f.name}, {"passed", f.passed}, {"detail", f.detail}});
  j["flags"] = flags;
  j["warnings"] = res.warnings;
  j["passed"] = res.passed();
  if (const Flag* f = res.first_failure()) j["first_failure"] = f->name;
  return j.dump(2) + "\n";
}

RunOutcome run(const RunConfig& cfg) {
  RunOutcome out;
  out.result = run_experiment(cfg.experiment);
  const std::filesystem::path dir(cfg.out_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "results.csv");
    write_results_csv(f, out.result);
  }
  {
    std::ofstream f(dir / "summary.json");
    f << summary_json(cfg, out.result);
  }
  const std::string text = emit_config(cfg);
  {
    std::ofstream f(dir / "config.yaml");
    f << text;
  }
  {
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(text);
    json p;
    p["schema"] = kProvenanceSchema;
    p["version"] = kVersion;
    p["config_hash_fnv1a64"] = hash.str();
    p["seed"] = cfg.experiment.seed;
    p["workers"] = cfg.experiment.workers;
    p["offspring_family"] = offspring_family_description();
    p["config"] = text;
    std::ofstream f(dir / "provenance.json");
    f << p.dump(2) << "\n";
  }
  if (const Flag* f = out.result.first_failure()) {
    out.exit_code = 1;
    out.message = "failed: " + f->name + " (" + f->detail + ")";
  } else {
    out.message = "all " + std::to_string(out.result.flags.size()) + " checks passed";
  }
  return out;
}

void list_examples(std::ostream& out) {
  out << std::left << std::setw(13) << "id" << std::setw(50) << "example" << std::setw(26) << "lambda_c"
      << std::setw(26) << "alpha growth" << "constraints\n";
  for (const RegistryEntry& e : registry_entries())
    out << std::setw(13) << e.id << std::setw(50) << e.example << std::setw(26) << e.lambda_formula
        << std::setw(26) << e.alpha_growth << e.constraints << '\n';
}

bool check_fields(std::ostream& out, int dim) {
  ModelParams p;
  p.dim = dim;
  p.c = 0.5;
  p.K = 2.0;
  const auto pts = sample_points(Domain::whole_space(dim), 3.0, dim == 1 ? 13 : 5);
  bool ok = true;
  out << std::left << std::setw(13) << "model" << std::setw(7) << "field" << std::setw(14) << "grad dev"
      << std::setw(14) << "hess dev" << "status  descriptor\n";
  for (const RegistryEntry& e : registry_entries()) {
    const ExampleModel m = registry_example(e.id, p);
    const std::pair<const char*, const ScalarField*> fields[] = {
        {"h", &m.transform.h}, {"beta", &m.base.beta}, {"alpha", &m.base.alpha}};
    for (const auto& [name, f] : fields) {
      FdReport r;
      try {
        r = fd_check(*f, pts, 1e-5);
      } catch (const std::logic_error&) {
        out << std::setw(13) << e.id << std::setw(7) << name << std::setw(28) << "(evaluation only)"
            << "skip    " << f->descriptor() << '\n';
        continue;
      }
      ok = ok && r.passed;
      out << std::setw(13) << e.id << std::setw(7) << name << std::setw(14) << r.max_grad_deviation
          << std::setw(14) << r.max_hessian_deviation << std::setw(8) << (r.passed ? "ok" : "FAIL")
          << f->descriptor() << '\n';
    }
  }
  return ok;
}

}  // namespace superlln
