#include "superlln/semigroups.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "superlln/branching_sim.hpp"
#include "superlln/random.hpp"

namespace superlln {

void KernelId::validate() const {
  if (!std::isfinite(drift) || !std::isfinite(rate) || !std::isfinite(variance) ||
      !std::isfinite(growth))
    throw std::invalid_argument("kernel parameters must be finite");
  if (!(variance > 0.0)) throw std::invalid_argument("kernel variance must be positive");
  if (kind == Kind::ou && !(rate > 0.0)) throw std::invalid_argument("ou kernel needs rate > 0");
}

std::string KernelId::describe() const {
  std::string s;
  switch (kind) {
    case Kind::heat: s = "heat"; break;
    case Kind::heat_drift: s = "heat_drift(" + format_double(drift) + ")"; break;
    case Kind::ou: s = "ou(" + format_double(rate) + ")"; break;
  }
  if (variance != 1.0) s += "*var(" + format_double(variance) + ")";
  if (growth != 0.0) s += "*exp(" + format_double(growth) + "t)";
  return s;
}

QuadratureOptions QuadratureOptions::ball(int dim, double radius) {
  QuadratureOptions q;
  q.support_lo.assign(dim, -radius);
  q.support_hi.assign(dim, radius);
  return q;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

using Integrator = boost::math::quadrature::gauss_kronrod<double, 31>;

// Integrates g over the box [lo, hi] by nested adaptive Gauss-Kronrod,
// innermost axis last. `y` holds the coordinates fixed so far.
double nested_integral(const std::function<double(std::span<const double>)>& g, const Point& lo,
                       const Point& hi, Point& y, int axis, const QuadratureOptions& opt) {
  const int d = static_cast<int>(lo.size());
  if (!(lo[axis] < hi[axis])) return 0.0;
  auto inner = [&](double v) {
    y[axis] = v;
    if (axis + 1 == d) return g(y);
    return nested_integral(g, lo, hi, y, axis + 1, opt);
  };
  return Integrator::integrate(inner, lo[axis], hi[axis], opt.max_depth, opt.tolerance);
}

struct GaussianLaw {
  Point mean;
  double sd = 0.0;
};

GaussianLaw transition(const KernelId& k, std::span<const double> x, double t) {
  GaussianLaw g;
  g.mean.assign(x.begin(), x.end());
  double var = k.variance * t;
  switch (k.kind) {
    case KernelId::Kind::heat:
      break;
    case KernelId::Kind::heat_drift:
      g.mean[0] += k.drift * t;
      break;
    case KernelId::Kind::ou: {
      const double e = std::exp(-k.rate * t);
      for (double& m : g.mean) m *= e;
      var = -k.variance * std::expm1(-2.0 * k.rate * t) / (2.0 * k.rate);
      break;
    }
  }
  g.sd = std::sqrt(var);
  return g;
}

bool has_box(const QuadratureOptions& opt, int d) {
  if (opt.support_lo.empty() && opt.support_hi.empty()) return false;
  if (static_cast<int>(opt.support_lo.size()) != d || static_cast<int>(opt.support_hi.size()) != d)
    throw std::invalid_argument("quadrature support box has wrong dimension");
  return true;
}

}  // namespace

double expectation(const KernelId& kernel, const TestFunction& f, std::span<const double> x,
                   double t, const QuadratureOptions& opt) {
  if (!(t > 0.0)) throw std::invalid_argument("expectation: t must be positive");
  kernel.validate();
  const int d = static_cast<int>(x.size());
  if (d < 1) throw std::invalid_argument("expectation: empty point");
  const GaussianLaw law = transition(kernel, x, t);
  const bool box = has_box(opt, d);
  Point lo(d), hi(d);
  for (int i = 0; i < d; ++i) {
    lo[i] = law.mean[i] - opt.tail_sigmas * law.sd;
    hi[i] = law.mean[i] + opt.tail_sigmas * law.sd;
    if (box) {
      lo[i] = std::max(lo[i], opt.support_lo[i]);
      hi[i] = std::min(hi[i], opt.support_hi[i]);
    }
    if (!(lo[i] < hi[i])) return 0.0;
  }
  const double norm = std::pow(2.0 * kPi * law.sd * law.sd, -0.5 * d);
  const double inv2v = 1.0 / (2.0 * law.sd * law.sd);
  auto g = [&](std::span<const double> y) {
    double q = 0.0;
    for (int i = 0; i < d; ++i) q += (y[i] - law.mean[i]) * (y[i] - law.mean[i]);
    const double w = std::exp(-q * inv2v);
    return w == 0.0 ? 0.0 : w * f(y);
  };
  Point y(d);
  return std::exp(kernel.growth * t) * norm * nested_integral(g, lo, hi, y, 0, opt);
}

double expectation(const KernelId& kernel, const ScalarField& f, std::span<const double> x,
                   double t) {
  QuadratureOptions opt;
  if (auto r = f.support_radius()) opt = QuadratureOptions::ball(f.dim(), *r);
  return expectation(kernel, TestFunction([&f](std::span<const double> y) { return f.eval(y); }),
                     x, t, opt);
}

double model_expectation(const ExampleModel& model, const TestFunction& f,
                         std::span<const double> x, double t, const QuadratureOptions& opt) {
  if (!model.transformed_kernel)
    throw std::invalid_argument("model '" + model.id + "' has no analytic kernel; use feynman_kac");
  const ScalarField& h = model.transform.h;
  const double lam = model.transform.lambda_c;
  if (h.constant_value()) return std::exp(lam * t) * expectation(*model.transformed_kernel, f, x, t, opt);
  auto g = [&](std::span<const double> y) {
    const double v = f(y);
    return v == 0.0 ? 0.0 : v / h.eval(y);
  };
  return std::exp(lam * t) * h.eval(x) * expectation(*model.transformed_kernel, g, x, t, opt);
}

double limit_pairing(const ExampleModel& model, const ScalarField& f) {
  if (!model.scaling) throw std::invalid_argument("model '" + model.id + "' has no scaling functions");
  const auto r = f.support_radius();
  if (!r) throw std::invalid_argument("limit_pairing needs a compactly supported test function");
  const int d = f.dim();
  if (*r == 0.0) return 0.0;
  QuadratureOptions opt;
  Point lo(d, -*r), hi(d, *r), y(d);
  const ScalarField& rd = model.scaling->r_density;
  auto g = [&](std::span<const double> z) { return f.eval(z) * rd.eval(z); };
  return nested_integral(g, lo, hi, y, 0, opt);
}

McEstimate feynman_kac(const SuperdiffusionSpec& spec, const TestFunction& f,
                       std::span<const double> x, double t, std::int64_t paths,
                       std::uint64_t seed, const FeynmanKacOptions& opt) {
  if (paths < 1) throw std::invalid_argument("feynman_kac: paths must be at least 1");
  if (!(t > 0.0)) throw std::invalid_argument("feynman_kac: t must be positive");
  if (static_cast<int>(x.size()) != spec.dim) throw std::invalid_argument("feynman_kac: wrong dimension");
  const int B = std::max(2, opt.batches);
  const std::int64_t per_batch = (paths + B - 1) / B;
  const int steps = std::max(1, static_cast<int>(std::ceil(t / opt.dt - 1e-9)));
  const double h = t / steps;
  const auto beta_c = spec.beta.constant_value();
  std::vector<double> means(B, 0.0);
  parallel_for(B, opt.workers, [&](std::size_t b) {
    Rng rng = make_stream(seed, b);
    MotionSampler motion(spec, h);
    const int d = spec.dim;
    Point y(d);
    double sum = 0.0;
    for (std::int64_t k = 0; k < per_batch; ++k) {
      std::copy(x.begin(), x.end(), y.begin());
      double log_w = beta_c ? *beta_c * t : 0.0;
      double b_prev = beta_c ? 0.0 : spec.beta.eval(y);
      bool alive = true;
      for (int s = 0; s < steps && alive; ++s) {
        if (motion.exact())
          motion.exact_step(y.data(), h, rng);
        else
          motion.euler_step(y.data(), h, rng);
        if (!spec.domain.contains(y)) {
          alive = false;
          break;
        }
        if (!beta_c) {
          const double bn = spec.beta.eval(y);
          log_w += 0.5 * (b_prev + bn) * h;
          b_prev = bn;
        }
      }
      if (alive) sum += std::exp(log_w) * f(y);
    }
    means[b] = sum / static_cast<double>(per_batch);
  });
  McEstimate est;
  est.value = std::accumulate(means.begin(), means.end(), 0.0) / B;
  double ss = 0.0;
  for (double m : means) ss += (m - est.value) * (m - est.value);
  est.standard_error = std::sqrt(ss / (B - 1.0) / B);
  est.half_width = 3.0 * est.standard_error;
  return est;
}

ScalingReport scaling_check(const ExampleModel& model, const ScalarField& f,
                            std::span<const Point> points, std::span<const double> t_grid) {
  if (!model.scaling) throw std::invalid_argument("model '" + model.id + "' has no scaling functions");
  if (!model.transformed_kernel)
    throw std::invalid_argument("model '" + model.id + "' has no analytic kernel");
  const auto rad = f.support_radius();
  if (!rad) throw std::invalid_argument("scaling_check needs a compactly supported test function");
  const ScalingTriple& sc = *model.scaling;
  const ScalarField& h = model.transform.h;
  const KernelId& kernel = *model.transformed_kernel;
  const QuadratureOptions opt = QuadratureOptions::ball(f.dim(), *rad);
  auto g = [&](std::span<const double> y) {
    const double v = f.eval(y);
    return v == 0.0 ? 0.0 : v / h.eval(y);
  };
  ScalingReport rep;
  rep.target = limit_pairing(model, f);
  std::vector<double> prev(points.size(), -1.0);
  for (double t : t_grid) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      ScalingRow row;
      row.t = t;
      row.x = points[i];
      row.scaled = *rad == 0.0 ? 0.0 : sc.s(t) * expectation(kernel, g, points[i], t, opt);
      row.deviation = std::abs(row.scaled - rep.target);
      if (prev[i] >= 0.0 && row.deviation > prev[i] * (1.0 + 1e-9) + 1e-14)
        rep.monotonicity_violations.emplace_back(t, points[i]);
      prev[i] = row.deviation;
      rep.rows.push_back(std::move(row));
    }
    UniformRow u;
    u.t = t;
    u.zhat = sc.zhat(t);
    u.radius = sc.z(t);
    for (const Point& x : points) {
      double r2 = 0.0;
      for (double v : x) r2 += v * v;
      if (std::sqrt(r2) > u.radius + 1e-12) continue;
      ++u.points_used;
      const double val = *rad == 0.0 ? 0.0 : sc.s(u.zhat) * expectation(kernel, g, x, u.zhat, opt);
      u.sup_deviation = std::max(u.sup_deviation, std::abs(val - rep.target));
    }
    rep.uniform.push_back(u);
  }
  return rep;
}

void write_scaling_csv(std::ostream& out, const ScalingReport& report) {
  out << "t,x,scaled,deviation\n";
  for (const ScalingRow& r : report.rows) {
    out << format_double(r.t) << ',';
    for (std::size_t i = 0; i < r.x.size(); ++i) {
      if (i) out << ';';
      out << format_double(r.x[i]);
    }
    out << ',' << format_double(r.scaled) << ',' << format_double(r.deviation) << '\n';
  }
}

ScalingTripleDiagnostics diagnose_scaling(const ScalingTriple& triple) {
  ScalingTripleDiagnostics d;
  const int m = 400;
  for (int k = 0; k <= m; ++k) {
    const double t = 2.0 * std::pow(5e5, static_cast<double>(k) / m);
    d.max_log_ratio = std::max(d.max_log_ratio, std::abs(std::log(triple.s(t)) / std::log(t)));
  }
  for (int k = 1; k <= 20; ++k) {
    const double t = std::ldexp(1.0, k);
    const double zh = triple.zhat(t);
    d.shift_ratios.push_back(triple.s(t + zh) / triple.s(zh));
  }
  return d;
}

}  // namespace superlln
