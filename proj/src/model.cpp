#include "superlln/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "superlln/random.hpp"

namespace superlln {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string point_string(std::span<const double> x) {
  std::string s = "(";
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += ", ";
    s += format_double(x[i]);
  }
  return s + ")";
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain.

Domain Domain::whole_space(int dim) {
  if (dim < 1) throw std::invalid_argument("domain dimension must be at least 1");
  Domain d;
  d.dim_ = dim;
  return d;
}

Domain Domain::box(Point lo, Point hi) {
  if (lo.empty() || lo.size() != hi.size())
    throw std::invalid_argument("box domain: lo and hi must have the same positive size");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw std::invalid_argument("box domain: need lo < hi on every axis");
  Domain d;
  d.dim_ = static_cast<int>(lo.size());
  d.lo_ = std::move(lo);
  d.hi_ = std::move(hi);
  return d;
}

bool Domain::contains(std::span<const double> x) const {
  if (!bounded()) return true;
  for (int i = 0; i < dim_; ++i)
    if (!(x[i] > lo_[i] && x[i] < hi_[i])) return false;
  return true;
}

std::string Domain::descriptor() const {
  if (!bounded()) return "R^" + std::to_string(dim_);
  return "box" + point_string(lo_) + point_string(hi_);
}

// ---------------------------------------------------------------------------
// Spec checks and generator.

std::vector<Point> sample_points(const Domain& domain, double r, int per_axis) {
  const int d = domain.dim();
  if (per_axis < 2) per_axis = 2;
  std::vector<Point> out;
  std::vector<int> idx(d, 0);
  for (;;) {
    Point x(d);
    for (int i = 0; i < d; ++i) {
      double lo = -r, hi = r;
      if (domain.bounded()) {
        // stay strictly inside the box
        const double pad = 1e-6 * (domain.hi()[i] - domain.lo()[i]);
        lo = std::max(lo, domain.lo()[i] + pad);
        hi = std::min(hi, domain.hi()[i] - pad);
      }
      x[i] = lo + (hi - lo) * idx[i] / (per_axis - 1);
    }
    out.push_back(std::move(x));
    int k = 0;
    while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
    if (k == d) break;
  }
  return out;
}

void check_spec(const SuperdiffusionSpec& spec, std::span<const Point> samples) {
  const int d = spec.dim;
  if (d < 1) throw std::invalid_argument("dimension must be at least 1");
  if (spec.diffusion.dim() != d || spec.drift.dim() != d || spec.beta.dim() != d ||
      spec.alpha.dim() != d || spec.domain.dim() != d)
    throw std::invalid_argument("coefficient dimensions do not match the model dimension");
  for (const Point& x : samples) {
    if (static_cast<int>(x.size()) != d) throw std::invalid_argument("sample point has wrong dimension");
    if (!spec.domain.contains(x)) continue;
    const double a = spec.alpha.eval(x);
    if (!(a > 0.0))
      throw std::invalid_argument("alpha must be positive (alpha=" + format_double(a) + " at " +
                                  point_string(x) + ")");
    const double b = spec.beta.eval(x);
    if (!std::isfinite(b) || b > spec.beta_upper_bound)
      throw std::invalid_argument("beta exceeds its declared upper bound " +
                                  format_double(spec.beta_upper_bound) + " at " + point_string(x));
  }
}

double apply_generator(const SuperdiffusionSpec& spec, const ScalarField& f,
                       std::span<const double> x) {
  const Point g = f.grad(x);
  const Point b = spec.drift.eval(x);
  double drift = 0.0;
  for (int i = 0; i < spec.dim; ++i) drift += b[i] * g[i];
  return 0.5 * f.div_a_grad(x, spec.diffusion) + drift;
}

// ---------------------------------------------------------------------------
// H-transform.

namespace {

// b(x) + a grad(h)(x) / h(x)
class HDrift final : public VectorField::Impl {
 public:
  HDrift(VectorField base, DiffusionMatrix a, ScalarField h)
      : Impl(base.dim()), base_(std::move(base)), a_(std::move(a)), h_(std::move(h)) {}

  void eval(std::span<const double> x, std::span<double> out) const override {
    base_.eval_into(x, out);
    const Point g = h_.grad(x);
    const double hv = h_.eval(x);
    const SquareMatrix& a = a_.eval(x);
    for (int i = 0; i < dim(); ++i) {
      double s = 0.0;
      for (int j = 0; j < dim(); ++j) s += a(i, j) * g[j];
      out[i] += s / hv;
    }
  }
  std::string descriptor() const override {
    return "hdrift(" + base_.descriptor() + "," + h_.descriptor() + ")";
  }

 private:
  VectorField base_;
  DiffusionMatrix a_;
  ScalarField h_;
};

// Fields known only through a pointwise formula.
class EvalOnlyField final : public ScalarField::Impl {
 public:
  using Fn = std::function<double(std::span<const double>)>;
  EvalOnlyField(int dim, Fn fn, std::string desc) : Impl(dim), fn_(std::move(fn)), desc_(std::move(desc)) {}
  double eval(std::span<const double> x) const override { return fn_(x); }
  void grad(std::span<const double>, std::span<double>) const override {
    throw std::logic_error("no analytic gradient for " + desc_);
  }
  void hessian(std::span<const double>, std::span<double>) const override {
    throw std::logic_error("no analytic hessian for " + desc_);
  }
  std::string descriptor() const override { return desc_; }

 private:
  Fn fn_;
  std::string desc_;
};

}  // namespace

SuperdiffusionSpec h_transform(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                               std::span<const Point> samples) {
  if (tr.h.dim() != spec.dim) throw std::invalid_argument("h has wrong dimension");
  if (!std::isfinite(tr.lambda_c)) throw std::invalid_argument("lambda_c must be finite");
  std::vector<Point> own;
  if (samples.empty()) {
    own = sample_points(spec.domain);
    samples = own;
  }
  for (const Point& x : samples) {
    const double v = tr.h.eval(x);
    if (!(v > 0.0))
      throw std::invalid_argument("h must be positive; h=" + format_double(v) + " at " +
                                  point_string(x));
  }

  SuperdiffusionSpec out = spec;
  const auto& base = spec.drift.affine_form();
  const auto lg = tr.h.log_gradient_affine();
  const auto sv = spec.diffusion.scalar_variance();
  if (base && lg && sv) {
    Point offset(spec.dim);
    for (int i = 0; i < spec.dim; ++i) offset[i] = base->offset[i] + *sv * lg->offset[i];
    out.drift = VectorField::affine(std::move(offset), base->rate + *sv * lg->rate);
  } else {
    out.drift = VectorField::generic(std::make_shared<HDrift>(spec.drift, spec.diffusion, tr.h));
  }
  out.beta = make_constant(spec.dim, 0.0);
  out.beta_upper_bound = 0.0;
  out.alpha = multiply(spec.alpha, tr.h);
  out.label = spec.label.empty() ? "transformed" : spec.label + "^H";
  out.transformed_by = tr;
  return out;
}

ScalarField inverse_beta_of_transform(const SuperdiffusionSpec& spec, const HTransformSpec& tr) {
  const int d = spec.dim;
  const auto& base = spec.drift.affine_form();
  const auto lg = tr.h.log_gradient_affine();
  const auto sv = spec.diffusion.scalar_variance();
  if (base && lg && sv) {
    // grad h / h = o + q x, Hess h / h = q I + (o + q x)(o + q x)^T, b = b0 + r x:
    // L h / h = (s/2)(d q + |o + q x|^2) + (b0 + r x).(o + q x)
    //         = k0 + k1.x + k2 |x|^2.
    const Point& o = lg->offset;
    const double q = lg->rate;
    const Point& b0 = base->offset;
    const double r = base->rate;
    double k0 = 0.5 * *sv * d * q, k2 = 0.5 * *sv * q * q + r * q;
    bool linear_free = true;
    for (int i = 0; i < d; ++i) {
      k0 += 0.5 * *sv * o[i] * o[i] + b0[i] * o[i];
      const double k1 = *sv * o[i] * q + b0[i] * q + r * o[i];
      if (k1 != 0.0) linear_free = false;
    }
    if (linear_free) return add(spec.beta, make_quadratic(d, k0 - tr.lambda_c, k2));
  }
  const SuperdiffusionSpec s = spec;
  const HTransformSpec t = tr;
  return ScalarField(std::make_shared<EvalOnlyField>(
      d,
      [s, t](std::span<const double> x) {
        return s.beta.eval(x) + apply_generator(s, t.h, x) / t.h.eval(x) - t.lambda_c;
      },
      "invbeta(" + spec.beta.descriptor() + "," + tr.h.descriptor() + "," +
          format_double(tr.lambda_c) + ")"));
}

double transform_residual(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                          std::span<const double> x) {
  const double hv = tr.h.eval(x);
  return std::abs(apply_generator(spec, tr.h, x) + (spec.beta.eval(x) - tr.lambda_c) * hv) / hv;
}

// ---------------------------------------------------------------------------
// Scaling.

double ScalingTriple::s(double t) const { return std::pow(s_scale * t, s_power); }
double ScalingTriple::z(double t) const { return spread_speed * t; }
double ScalingTriple::zhat(double t) const { return std::pow(t, zhat_power); }

// ---------------------------------------------------------------------------
// Registry.

const std::vector<RegistryEntry>& registry_entries() {
  static const std::vector<RegistryEntry> entries = {
      {"sbm", "supercritical super-Brownian motion",
       "beta constant, alpha > 0 constant", "lambda_c = beta", "O(1)"},
      {"sbm_drift", "super-Brownian motion with drift c in x1",
       "beta > 0, c >= 0, alpha = alpha0 exp(-c x1)", "lambda_c = beta + c^2/2",
       "alpha^h = O(e^{c x1})"},
      {"sbm_outward", "super-Brownian motion with outward drift c",
       "beta > 0, c >= 0, h = exp(c sqrt(|x|^2+1))", "lambda_c = beta + c^2/2",
       "alpha^h = O(e^{c|x|})"},
      {"sou_inward", "super-Ornstein-Uhlenbeck with drift -2cx",
       "c > 0, K > -c d, beta(x) = K + 2c^2|x|^2", "lambda_c = K + c d",
       "alpha^h = O(e^{-c|x|^2})"},
      {"sou_outward", "outward super-Ornstein-Uhlenbeck with drift +2cx",
       "c > 0, K > c d, beta(x) = K + 2c^2|x|^2", "lambda_c = K - c d",
       "alpha^h = O(e^{c|x|^2})"},
  };
  return entries;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

void check_common(const ModelParams& p) {
  require(p.dim >= 1, "dim must be at least 1");
  require(std::isfinite(p.beta) && std::isfinite(p.c), "beta and c must be finite");
  require(p.alpha > 0.0, "alpha must be positive");
  require(p.epsilon > 0.0, "epsilon must be positive");
}

double sou_K(const ModelParams& p) { return p.K.value_or(p.beta); }

}  // namespace

double lambda_c_closed_form(const std::string& id, const ModelParams& p) {
  if (id == "sbm") return p.beta;
  if (id == "sbm_drift" || id == "sbm_outward") return p.beta + 0.5 * p.c * p.c;
  if (id == "sou_inward") return sou_K(p) + p.c * p.dim;
  if (id == "sou_outward") return sou_K(p) - p.c * p.dim;
  throw std::invalid_argument("unknown example id '" + id + "'");
}

ExampleModel registry_example(const std::string& id, const ModelParams& p) {
  check_common(p);
  const int d = p.dim;
  ExampleModel m;
  m.id = id;
  m.params = p;
  SuperdiffusionSpec& s = m.base;
  s.dim = d;
  s.diffusion = DiffusionMatrix::identity(d);
  s.drift = VectorField::zero(d);
  s.domain = Domain::whole_space(d);
  s.label = id;
  const double lam = lambda_c_closed_form(id, p);

  ScalingTriple heat_scaling;
  heat_scaling.s_scale = 2.0 * kPi;
  heat_scaling.s_power = 0.5 * d;
  heat_scaling.zhat_power = 3.0;

  if (id == "sbm") {
    s.beta = make_constant(d, p.beta);
    s.beta_upper_bound = p.beta;
    s.alpha = make_constant(d, p.alpha);
    m.transform = {make_constant(d, 1.0), lam};
    heat_scaling.spread_speed = std::sqrt(2.0 * std::max(p.beta, 0.0)) + p.epsilon;
    heat_scaling.r_density = make_constant(d, 1.0);
    m.scaling = heat_scaling;
    m.transformed_kernel = KernelId::heat();
  } else if (id == "sbm_drift") {
    require(p.beta > 0.0, "sbm_drift requires beta > 0");
    require(p.c >= 0.0, "sbm_drift requires c >= 0");
    s.beta = make_constant(d, p.beta);
    s.beta_upper_bound = p.beta;
    s.alpha = scale(p.alpha, make_exp_linear(d, -p.c, 0));
    m.transform = {make_exp_linear(d, p.c, 0), lam};
    m.transformed_kernel = p.c == 0.0 ? KernelId::heat() : KernelId::heat_drift(p.c);
  } else if (id == "sbm_outward") {
    require(p.beta > 0.0, "sbm_outward requires beta > 0");
    require(p.c >= 0.0, "sbm_outward requires c >= 0");
    s.beta = p.c == 0.0 ? make_constant(d, p.beta) : make_exp_norm_ground_beta(d, lam, p.c);
    s.beta_upper_bound = lam;
    s.alpha = p.c == 0.0 ? make_constant(d, p.alpha)
                         : scale(p.alpha, reciprocal(make_exp_norm(d, p.c)));
    m.transform = {p.c == 0.0 ? make_constant(d, 1.0) : make_exp_norm(d, p.c), lam};
    if (p.c == 0.0) m.transformed_kernel = KernelId::heat();
  } else if (id == "sou_inward" || id == "sou_outward") {
    const bool inward = id == "sou_inward";
    const double K = sou_K(p);
    require(p.c > 0.0, id + " requires c > 0");
    if (inward)
      require(K > -p.c * d, "sou_inward requires K > -c*d");
    else
      require(K > p.c * d, "sou_outward requires K > c*d");
    const int sign = inward ? 1 : -1;  // sign of the exponent in h
    s.drift = VectorField::linear(d, -2.0 * sign * p.c);
    s.beta = make_quadratic(d, K, 2.0 * p.c * p.c);
    // declared bound on the simulation box |x_i| <= 8
    s.beta_upper_bound = K + 2.0 * p.c * p.c * 64.0 * d;
    s.alpha = scale(p.alpha, make_gaussian_quadratic(d, p.c, -sign));
    m.transform = {make_gaussian_quadratic(d, p.c, sign), lam};
    heat_scaling.spread_speed = 0.0;
    heat_scaling.r_density = reciprocal(m.transform.h);
    m.scaling = heat_scaling;
    m.transformed_kernel = KernelId::heat();
  } else {
    throw std::invalid_argument("unknown example id '" + id + "'");
  }
  return m;
}

void validate_moving_window(const ModelParams& p) {
  if (!(p.beta > 0.0))
    throw std::invalid_argument("moving window requires beta > 0");
  if (!(p.c >= 0.0)) throw std::invalid_argument("moving window requires c >= 0");
  if (!(p.c < std::sqrt(2.0 * p.beta)))
    throw std::invalid_argument("moving window requires c < sqrt(2*beta) (c=" +
                                format_double(p.c) + ", beta=" + format_double(p.beta) + ")");
}

// ---------------------------------------------------------------------------
// Principal eigenvalue estimation.

namespace {

struct KilledPath {
  double weight = 0.0;  // exp(int beta) times the survival factor; 0 if killed
  Point end;
};

// Euler (or exact, for zero drift) killed path on the box lo < x < hi. The
// survival factor multiplies, per step and axis, the probability that the
// Brownian bridge between consecutive positions stays inside.
class PathKiller {
 public:
  PathKiller(const SuperdiffusionSpec& spec, Point lo, Point hi, double dt)
      : spec_(spec), lo_(std::move(lo)), hi_(std::move(hi)), dt_(dt) {
    const SquareMatrix& a = spec.diffusion.eval(Point(spec.dim, 0.0));
    for (int i = 0; i < spec.dim; ++i) var_.push_back(a(i, i));
    beta_const_ = spec.beta.constant_value();
  }

  KilledPath run(Point x, double t, Rng& rng) const {
    const int d = spec_.dim;
    std::normal_distribution<double> normal;
    const int steps = std::max(1, static_cast<int>(std::ceil(t / dt_ - 1e-9)));
    const double h = t / steps;
    const double sq = std::sqrt(h);
    const SquareMatrix& sigma = spec_.diffusion.factor(x);
    Point b(d), xi(d), y(d);
    double log_w = beta_const_ ? *beta_const_ * t : 0.0;
    double surv = 1.0;
    double beta_prev = beta_const_ ? 0.0 : spec_.beta.eval(x);
    const bool zero_drift = spec_.drift.is_zero();
    for (int k = 0; k < steps; ++k) {
      if (!zero_drift) spec_.drift.eval_into(x, b);
      for (int i = 0; i < d; ++i) xi[i] = normal(rng);
      for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j <= i; ++j) s += sigma(i, j) * xi[j];
        y[i] = x[i] + (zero_drift ? 0.0 : b[i] * h) + sq * s;
      }
      for (int i = 0; i < d; ++i) {
        if (!(y[i] > lo_[i] && y[i] < hi_[i])) return {};
        const double dl = (x[i] - lo_[i]) * (y[i] - lo_[i]);
        const double dh = (hi_[i] - x[i]) * (hi_[i] - y[i]);
        surv *= (1.0 - std::exp(-2.0 * dl / (var_[i] * h))) *
                (1.0 - std::exp(-2.0 * dh / (var_[i] * h)));
      }
      if (!spec_.domain.contains(y)) return {};
      if (!beta_const_) {
        const double bn = spec_.beta.eval(y);
        log_w += 0.5 * (beta_prev + bn) * h;
        beta_prev = bn;
      }
      std::swap(x, y);
    }
    return {surv * std::exp(log_w), std::move(x)};
  }

 private:
  const SuperdiffusionSpec& spec_;
  Point lo_, hi_;
  double dt_;
  std::vector<double> var_;
  std::optional<double> beta_const_;
};

double perron_root(const std::vector<double>& A, int m) {
  std::vector<double> v(m, 1.0), w(m);
  double rho = 0.0;
  for (int it = 0; it < 20000; ++it) {
    // w = v A (row vector times matrix); same root as A v
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) w[j] += v[i] * A[static_cast<std::size_t>(i) * m + j];
    double s = 0.0;
    for (double x : w) s += x;
    if (s <= 0.0) return 0.0;
    for (double& x : w) x /= s;
    // the sum of v is 1 after the first step, so s is the Rayleigh-type ratio
    const double prev = rho;
    rho = s / std::accumulate(v.begin(), v.end(), 0.0);
    v.swap(w);
    if (it > 50 && std::abs(rho - prev) <= 1e-15 * rho) break;
  }
  return rho;
}

double batch_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  if (xs.size() < 2) return std::numeric_limits<double>::infinity();
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

}  // namespace

LambdaEstimate estimate_lambda_c(const SuperdiffusionSpec& spec, std::span<const double> x,
                                 double radius, double t, std::int64_t paths, std::uint64_t seed,
                                 const LambdaOptions& opt) {
  if (!(radius > 0.0) || !(t > 0.0) || paths <= 0)
    throw std::invalid_argument("estimate_lambda_c: radius, t and paths must be positive");
  if (static_cast<int>(x.size()) != spec.dim)
    throw std::invalid_argument("estimate_lambda_c: point has wrong dimension");
  const int d = spec.dim;
  const int B = std::max(2, opt.batches);
  Point lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = x[i] - radius;
    hi[i] = x[i] + radius;
  }
  const PathKiller killer(spec, lo, hi, opt.dt);
  LambdaEstimate est;

  if (opt.method == LambdaMethod::transfer_operator && d == 1) {
    const int m = std::max(2, opt.cells);
    const double w = 2.0 * radius / m;
    const std::int64_t per_cell = std::max<std::int64_t>(1, paths / (static_cast<std::int64_t>(B) * m));
    std::vector<std::vector<double>> mats(B, std::vector<double>(static_cast<std::size_t>(m) * m, 0.0));
    parallel_for(B, opt.workers, [&](std::size_t b) {
      Rng rng = make_stream(seed, b);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      auto& A = mats[b];
      for (int i = 0; i < m; ++i) {
        for (std::int64_t k = 0; k < per_cell; ++k) {
          const double x0 = lo[0] + (i + unif(rng)) * w;
          KilledPath p = killer.run(Point{x0}, t, rng);
          if (p.weight <= 0.0) continue;
          const int j = std::clamp(static_cast<int>((p.end[0] - lo[0]) / w), 0, m - 1);
          A[static_cast<std::size_t>(i) * m + j] += p.weight;
        }
      }
      for (double& v : A) v /= static_cast<double>(per_cell);
    });
    std::vector<double> pooled(static_cast<std::size_t>(m) * m, 0.0);
    std::vector<double> lams;
    bool any_dead = false;
    for (const auto& A : mats) {
      for (std::size_t k = 0; k < A.size(); ++k) pooled[k] += A[k] / B;
      const double rho = perron_root(A, m);
      if (rho <= 0.0) {
        any_dead = true;
        continue;
      }
      lams.push_back(std::log(rho) / t);
    }
    const double rho = perron_root(pooled, m);
    if (rho <= 0.0) {
      est.value = -std::numeric_limits<double>::infinity();
      est.all_killed = true;
      est.diagnostic = "all paths killed before t";
      return est;
    }
    est.value = std::log(rho) / t;
    est.standard_error = any_dead ? std::numeric_limits<double>::infinity() : batch_se(lams);
    est.half_width = 3.0 * est.standard_error;
    est.diagnostic = "transfer operator, " + std::to_string(m) + " cells, " +
                     std::to_string(per_cell * m * B) + " paths";
    return est;
  }

  const std::int64_t per_batch = std::max<std::int64_t>(1, paths / B);
  std::vector<double> means(B, 0.0);
  parallel_for(B, opt.workers, [&](std::size_t b) {
    Rng rng = make_stream(seed, b);
    double sum = 0.0;
    const Point x0(x.begin(), x.end());
    for (std::int64_t k = 0; k < per_batch; ++k) sum += killer.run(x0, t, rng).weight;
    means[b] = sum / static_cast<double>(per_batch);
  });
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / B;
  if (mean <= 0.0) {
    est.value = -std::numeric_limits<double>::infinity();
    est.all_killed = true;
    est.diagnostic = "all paths killed before t";
    return est;
  }
  est.value = std::log(mean) / t;
  // delta method: se(log M / t) = se(M) / (M t)
  est.standard_error = batch_se(means) / (mean * t);
  est.half_width = 3.0 * est.standard_error;
  est.diagnostic = "finite time, " + std::to_string(per_batch * B) + " paths";
  return est;
}

}  // namespace superlln
