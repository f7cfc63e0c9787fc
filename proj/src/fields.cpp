#include "superlln/fields.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

namespace superlln {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

SquareMatrix SquareMatrix::identity(int dim, double scale) {
  SquareMatrix m(dim);
  for (int i = 0; i < dim; ++i) m(i, i) = scale;
  return m;
}

DiffusionMatrix::DiffusionMatrix(SquareMatrix a) : a_(std::move(a)), chol_(a_.dim()) {
  const int d = a_.dim();
  if (d < 1) throw std::invalid_argument("diffusion matrix: dimension must be positive");
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j)
      if (std::abs(a_(i, j) - a_(j, i)) > 1e-12 * (1.0 + std::abs(a_(i, j))))
        throw std::invalid_argument("diffusion matrix: not symmetric");
  // Cholesky.
  for (int j = 0; j < d; ++j) {
    double diag = a_(j, j);
    for (int k = 0; k < j; ++k) diag -= chol_(j, k) * chol_(j, k);
    if (!(diag > 0.0)) throw std::invalid_argument("diffusion matrix: not positive definite");
    chol_(j, j) = std::sqrt(diag);
    for (int i = j + 1; i < d; ++i) {
      double s = a_(i, j);
      for (int k = 0; k < j; ++k) s -= chol_(i, k) * chol_(j, k);
      chol_(i, j) = s / chol_(j, j);
    }
  }
  bool is_scalar = true;
  for (int i = 0; i < d && is_scalar; ++i)
    for (int j = 0; j < d; ++j)
      if ((i == j && a_(i, j) != a_(0, 0)) || (i != j && a_(i, j) != 0.0)) {
        is_scalar = false;
        break;
      }
  if (is_scalar) scalar_ = a_(0, 0);
}

std::string DiffusionMatrix::descriptor() const {
  if (scalar_) return "scalar:" + format_double(*scalar_);
  std::string s = "matrix:";
  for (std::size_t i = 0; i < a_.data().size(); ++i) {
    if (i) s += ',';
    s += format_double(a_.data()[i]);
  }
  return s;
}

ScalarField::ScalarField(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {
  if (!impl_) throw std::invalid_argument("scalar field: null implementation");
}

Point ScalarField::grad(std::span<const double> x) const {
  Point g(dim());
  impl_->grad(x, g);
  return g;
}

SquareMatrix ScalarField::hessian(std::span<const double> x) const {
  const int d = dim();
  std::vector<double> h(static_cast<std::size_t>(d) * d);
  impl_->hessian(x, h);
  SquareMatrix m(d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = h[static_cast<std::size_t>(i) * d + j];
  return m;
}

double ScalarField::div_a_grad(std::span<const double> x, const DiffusionMatrix& a) const {
  const int d = dim();
  const SquareMatrix& am = a.eval(x);
  const SquareMatrix h = hessian(x);
  double tr = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) tr += am(i, j) * h(j, i);
  const Point div = a.divergence(x);
  const Point g = grad(x);
  for (int j = 0; j < d; ++j) tr += div[j] * g[j];
  return tr;
}

namespace {

double norm_sq(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

class ConstantField final : public ScalarField::Impl {
 public:
  ConstantField(int dim, double v) : Impl(dim), v_(v) {}
  double eval(std::span<const double>) const override { return v_; }
  void grad(std::span<const double>, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  void hessian(std::span<const double>, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
  }
  std::string descriptor() const override { return "const:" + format_double(v_); }
  std::optional<double> support_radius() const override {
    if (v_ == 0.0) return 0.0;
    return std::nullopt;
  }
  std::optional<double> constant_value() const override { return v_; }
  std::optional<AffineMap> log_gradient_affine() const override {
    if (v_ <= 0.0) return std::nullopt;
    return AffineMap{Point(dim(), 0.0), 0.0};
  }

 private:
  double v_;
};

class ExpLinearField final : public ScalarField::Impl {
 public:
  ExpLinearField(int dim, double c, int axis) : Impl(dim), c_(c), axis_(axis) {}
  double eval(std::span<const double> x) const override { return std::exp(c_ * x[axis_]); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[axis_] = c_ * eval(x);
  }
  void hessian(std::span<const double> x, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(axis_) * dim() + axis_] = c_ * c_ * eval(x);
  }
  std::string descriptor() const override {
    return "explin:" + format_double(c_) + ":" + std::to_string(axis_);
  }
  std::optional<AffineMap> log_gradient_affine() const override {
    AffineMap m{Point(dim(), 0.0), 0.0};
    m.offset[axis_] = c_;
    return m;
  }

 private:
  double c_;
  int axis_;
};

// f(x) = g(|x|^2). With s = |x|^2: grad f = 2 g'(s) x, Hess f = 2 g'(s) I + 4 g''(s) x x^T.
struct RadialProfile {
  double g, g1, g2;
};

class RadialField : public ScalarField::Impl {
 public:
  using Impl::Impl;
  virtual RadialProfile profile(double s) const = 0;

  double eval(std::span<const double> x) const override { return profile(norm_sq(x)).g; }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const RadialProfile p = profile(norm_sq(x));
    for (int i = 0; i < dim(); ++i) out[i] = 2.0 * p.g1 * x[i];
  }
  void hessian(std::span<const double> x, std::span<double> out) const override {
    const RadialProfile p = profile(norm_sq(x));
    const int d = dim();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        out[static_cast<std::size_t>(i) * d + j] =
            4.0 * p.g2 * x[i] * x[j] + (i == j ? 2.0 * p.g1 : 0.0);
  }
};

class GaussianQuadraticField final : public RadialField {
 public:
  GaussianQuadraticField(int dim, double c, int sign) : RadialField(dim), c_(c), sign_(sign) {}
  RadialProfile profile(double s) const override {
    const double k = sign_ * c_;
    const double g = std::exp(k * s);
    return {g, k * g, k * k * g};
  }
  std::string descriptor() const override {
    return "gaussquad:" + format_double(c_) + ":" + std::to_string(sign_);
  }
  std::optional<AffineMap> log_gradient_affine() const override {
    return AffineMap{Point(dim(), 0.0), 2.0 * sign_ * c_};
  }

 private:
  double c_;
  int sign_;
};

class ExpNormField final : public RadialField {
 public:
  ExpNormField(int dim, double c) : RadialField(dim), c_(c) {}
  RadialProfile profile(double s) const override {
    const double q = s + 1.0;
    const double r = std::sqrt(q);
    const double g = std::exp(c_ * r);
    return {g, c_ / (2.0 * r) * g, (c_ * c_ / (4.0 * q) - c_ / (4.0 * q * r)) * g};
  }
  std::string descriptor() const override { return "expnorm:" + format_double(c_); }

 private:
  double c_;
};

class ExpNormGroundBetaField final : public RadialField {
 public:
  ExpNormGroundBetaField(int dim, double lam, double c) : RadialField(dim), lam_(lam), c_(c) {}
  // (1/2) Lap h / h = (1/2)[c^2 (1 - 1/q) + c (d-1) q^{-1/2} + c q^{-3/2}], q = s + 1.
  RadialProfile profile(double s) const override {
    const double q = s + 1.0;
    const double d1 = dim() - 1.0;
    const double c = c_;
    const double g = lam_ - 0.5 * (c * c * (1.0 - 1.0 / q) + c * d1 * std::pow(q, -0.5) +
                                   c * std::pow(q, -1.5));
    const double g1 = -0.5 * (c * c * std::pow(q, -2.0) - 0.5 * c * d1 * std::pow(q, -1.5) -
                              1.5 * c * std::pow(q, -2.5));
    const double g2 = -0.5 * (-2.0 * c * c * std::pow(q, -3.0) +
                              0.75 * c * d1 * std::pow(q, -2.5) + 3.75 * c * std::pow(q, -3.5));
    return {g, g1, g2};
  }
  std::string descriptor() const override {
    return "expnorm_gs:" + format_double(lam_) + ":" + format_double(c_);
  }

 private:
  double lam_;
  double c_;
};

class QuadraticField final : public RadialField {
 public:
  QuadraticField(int dim, double k, double q) : RadialField(dim), k_(k), q_(q) {}
  RadialProfile profile(double s) const override { return {k_ + q_ * s, q_, 0.0}; }
  std::string descriptor() const override {
    return "quad:" + format_double(k_) + ":" + format_double(q_);
  }

 private:
  double k_;
  double q_;
};

// exp(1 - 1/(1 - |x|^2/r^2)) inside the ball of radius r, zero outside; peak 1.
class BumpField final : public RadialField {
 public:
  BumpField(int dim, double r) : RadialField(dim), r_(r), r2_(r * r) {}
  RadialProfile profile(double s) const override {
    const double w = 1.0 - s / r2_;
    if (w <= 0.0) return {0.0, 0.0, 0.0};
    const double g = std::exp(1.0 - 1.0 / w);
    const double w2 = w * w;
    const double g1 = -g / (r2_ * w2);
    const double g2 = g * (1.0 - 2.0 * w) / (r2_ * r2_ * w2 * w2);
    return {g, g1, g2};
  }
  std::string descriptor() const override { return "bump:" + format_double(r_); }
  std::optional<double> support_radius() const override { return r_; }

 private:
  double r_;
  double r2_;
};

class ScaledField final : public ScalarField::Impl {
 public:
  ScaledField(double k, ScalarField f) : Impl(f.dim()), k_(k), f_(std::move(f)) {}
  double eval(std::span<const double> x) const override { return k_ * f_.eval(x); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const Point g = f_.grad(x);
    for (int i = 0; i < dim(); ++i) out[i] = k_ * g[i];
  }
  void hessian(std::span<const double> x, std::span<double> out) const override {
    const SquareMatrix h = f_.hessian(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = k_ * h.data()[i];
  }
  std::string descriptor() const override {
    return "scale(" + format_double(k_) + "," + f_.descriptor() + ")";
  }
  std::optional<double> support_radius() const override {
    if (k_ == 0.0) return 0.0;
    return f_.support_radius();
  }
  std::optional<double> constant_value() const override {
    if (auto v = f_.constant_value()) return k_ * *v;
    return std::nullopt;
  }
  std::optional<AffineMap> log_gradient_affine() const override {
    if (k_ <= 0.0) return std::nullopt;
    return f_.log_gradient_affine();
  }

 private:
  double k_;
  ScalarField f_;
};

class ProductField final : public ScalarField::Impl {
 public:
  ProductField(ScalarField f, ScalarField g) : Impl(f.dim()), f_(std::move(f)), g_(std::move(g)) {}
  double eval(std::span<const double> x) const override { return f_.eval(x) * g_.eval(x); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const double fv = f_.eval(x), gv = g_.eval(x);
    const Point fg = f_.grad(x), gg = g_.grad(x);
    for (int i = 0; i < dim(); ++i) out[i] = fg[i] * gv + fv * gg[i];
  }
  void hessian(std::span<const double> x, std::span<double> out) const override {
    const int d = dim();
    const double fv = f_.eval(x), gv = g_.eval(x);
    const Point fg = f_.grad(x), gg = g_.grad(x);
    const SquareMatrix fh = f_.hessian(x), gh = g_.hessian(x);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        out[static_cast<std::size_t>(i) * d + j] =
            fh(i, j) * gv + fv * gh(i, j) + fg[i] * gg[j] + fg[j] * gg[i];
  }
  std::string descriptor() const override {
    return "mul(" + f_.descriptor() + "," + g_.descriptor() + ")";
  }
  std::optional<double> support_radius() const override {
    const auto a = f_.support_radius(), b = g_.support_radius();
    if (a && b) return std::min(*a, *b);
    return a ? a : b;
  }
  std::optional<double> constant_value() const override {
    const auto a = f_.constant_value(), b = g_.constant_value();
    if (a && b) return *a * *b;
    return std::nullopt;
  }
  std::optional<AffineMap> log_gradient_affine() const override {
    auto a = f_.log_gradient_affine();
    const auto b = g_.log_gradient_affine();
    if (!a || !b) return std::nullopt;
    for (int i = 0; i < dim(); ++i) a->offset[i] += b->offset[i];
    a->rate += b->rate;
    return a;
  }

 private:
  ScalarField f_, g_;
};

class SumField final : public ScalarField::Impl {
 public:
  SumField(ScalarField f, ScalarField g) : Impl(f.dim()), f_(std::move(f)), g_(std::move(g)) {}
  double eval(std::span<const double> x) const override { return f_.eval(x) + g_.eval(x); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const Point fg = f_.grad(x), gg = g_.grad(x);
    for (int i = 0; i < dim(); ++i) out[i] = fg[i] + gg[i];
  }
  void hessian(std::span<const double> x, std::span<double> out) const override {
    const SquareMatrix fh = f_.hessian(x), gh = g_.hessian(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fh.data()[i] + gh.data()[i];
  }
  std::string descriptor() const override {
    return "add(" + f_.descriptor() + "," + g_.descriptor() + ")";
  }
  std::optional<double> support_radius() const override {
    const auto a = f_.support_radius(), b = g_.support_radius();
    if (a && b) return std::max(*a, *b);
    return std::nullopt;
  }
  std::optional<double> constant_value() const override {
    const auto a = f_.constant_value(), b = g_.constant_value();
    if (a && b) return *a + *b;
    return std::nullopt;
  }

 private:
  ScalarField f_, g_;
};

// grad(1/f) = -grad f / f^2, Hess(1/f) = -Hess f / f^2 + 2 grad f grad f^T / f^3.
class ReciprocalField final : public ScalarField::Impl {
 public:
  explicit ReciprocalField(ScalarField f) : Impl(f.dim()), f_(std::move(f)) {}
  double eval(std::span<const double> x) const override { return 1.0 / f_.eval(x); }
  void grad(std::span<const double> x, std::span<double> out) const override {
    const double fv = f_.eval(x);
    const Point fg = f_.grad(x);
    for (int i = 0; i < dim(); ++i) out[i] = -fg[i] / (fv * fv);
  }
  void hessian(std::span<const double> x, std::span<double> out) const override {
    const int d = dim();
    const double fv = f_.eval(x);
    const Point fg = f_.grad(x);
    const SquareMatrix fh = f_.hessian(x);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        out[static_cast<std::size_t>(i) * d + j] =
            -fh(i, j) / (fv * fv) + 2.0 * fg[i] * fg[j] / (fv * fv * fv);
  }
  std::string descriptor() const override { return "recip(" + f_.descriptor() + ")"; }
  std::optional<AffineMap> log_gradient_affine() const override {
    auto a = f_.log_gradient_affine();
    if (!a) return std::nullopt;
    for (double& v : a->offset) v = -v;
    a->rate = -a->rate;
    return a;
  }
  std::optional<double> constant_value() const override {
    if (auto v = f_.constant_value()) return 1.0 / *v;
    return std::nullopt;
  }

 private:
  ScalarField f_;
};

void require_dim(int dim) {
  if (dim < 1) throw std::invalid_argument("field dimension must be at least 1");
}

}  // namespace

ScalarField make_constant(int dim, double value) {
  require_dim(dim);
  return ScalarField(std::make_shared<ConstantField>(dim, value));
}

ScalarField make_exp_linear(int dim, double c, int axis) {
  require_dim(dim);
  if (axis < 0 || axis >= dim) throw std::invalid_argument("explin: axis out of range");
  // e^{0 x} is the constant 1; keeping it constant lets the simulator take
  // its spatially homogeneous path.
  if (c == 0.0) return make_constant(dim, 1.0);
  return ScalarField(std::make_shared<ExpLinearField>(dim, c, axis));
}

ScalarField make_gaussian_quadratic(int dim, double c, int sign) {
  require_dim(dim);
  if (!(c > 0.0)) throw std::invalid_argument("gaussquad: c must be positive");
  if (sign != 1 && sign != -1) throw std::invalid_argument("gaussquad: sign must be +1 or -1");
  return ScalarField(std::make_shared<GaussianQuadraticField>(dim, c, sign));
}

ScalarField make_exp_norm(int dim, double c) {
  require_dim(dim);
  return ScalarField(std::make_shared<ExpNormField>(dim, c));
}

ScalarField make_quadratic(int dim, double k, double q) {
  require_dim(dim);
  if (q == 0.0) return make_constant(dim, k);
  return ScalarField(std::make_shared<QuadraticField>(dim, k, q));
}

ScalarField make_bump(int dim, double radius) {
  require_dim(dim);
  if (!(radius > 0.0)) throw std::invalid_argument("bump: radius must be positive");
  return ScalarField(std::make_shared<BumpField>(dim, radius));
}

ScalarField make_exp_norm_ground_beta(int dim, double lam, double c) {
  require_dim(dim);
  return ScalarField(std::make_shared<ExpNormGroundBetaField>(dim, lam, c));
}

ScalarField scale(double k, const ScalarField& f) {
  if (auto v = f.constant_value()) return make_constant(f.dim(), k * *v);
  if (k == 1.0) return f;
  return ScalarField(std::make_shared<ScaledField>(k, f));
}

ScalarField multiply(const ScalarField& f, const ScalarField& g) {
  if (f.dim() != g.dim()) throw std::invalid_argument("mul: dimension mismatch");
  if (auto v = f.constant_value()) return scale(*v, g);
  if (auto v = g.constant_value()) return scale(*v, f);
  return ScalarField(std::make_shared<ProductField>(f, g));
}

ScalarField add(const ScalarField& f, const ScalarField& g) {
  if (f.dim() != g.dim()) throw std::invalid_argument("add: dimension mismatch");
  const auto a = f.constant_value(), b = g.constant_value();
  if (a && b) return make_constant(f.dim(), *a + *b);
  return ScalarField(std::make_shared<SumField>(f, g));
}

ScalarField reciprocal(const ScalarField& f) {
  if (auto v = f.constant_value()) return make_constant(f.dim(), 1.0 / *v);
  return ScalarField(std::make_shared<ReciprocalField>(f));
}

// ---------------------------------------------------------------------------
// Descriptor parsing.

namespace {

class DescriptorParser {
 public:
  DescriptorParser(const std::string& text, int dim) : s_(text), dim_(dim) {}

  ScalarField parse() {
    ScalarField f = field();
    if (pos_ != s_.size()) fail("trailing characters");
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("field descriptor '" + s_ + "': " + what + " at offset " +
                                std::to_string(pos_));
  }

  std::string word() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected a name");
    return s_.substr(start, pos_ - start);
  }

  void expect(char c) {
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  double number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ':' && s_[pos_] != ',' && s_[pos_] != ')') ++pos_;
    const std::string tok = s_.substr(start, pos_ - start);
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::exception&) {
      pos_ = start;
      fail("bad number '" + tok + "'");
    }
  }

  int integer() {
    const double v = number();
    if (v != std::floor(v)) fail("expected an integer");
    return static_cast<int>(v);
  }

  ScalarField field() {
    const std::string name = word();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      ++pos_;
      if (name == "scale") {
        const double k = number();
        expect(',');
        ScalarField f = field();
        expect(')');
        return scale(k, f);
      }
      if (name == "mul" || name == "add") {
        ScalarField f = field();
        expect(',');
        ScalarField g = field();
        expect(')');
        return name == "mul" ? multiply(f, g) : add(f, g);
      }
      if (name == "recip") {
        ScalarField f = field();
        expect(')');
        return reciprocal(f);
      }
      fail("unknown composite '" + name + "'");
    }
    expect(':');
    if (name == "const") return make_constant(dim_, number());
    if (name == "explin") {
      const double c = number();
      expect(':');
      return make_exp_linear(dim_, c, integer());
    }
    if (name == "gaussquad") {
      const double c = number();
      expect(':');
      return make_gaussian_quadratic(dim_, c, integer());
    }
    if (name == "expnorm") return make_exp_norm(dim_, number());
    if (name == "quad") {
      const double k = number();
      expect(':');
      return make_quadratic(dim_, k, number());
    }
    if (name == "bump") return make_bump(dim_, number());
    if (name == "expnorm_gs") {
      const double lam = number();
      expect(':');
      return make_exp_norm_ground_beta(dim_, lam, number());
    }
    fail("unknown field kind '" + name + "'");
  }

  const std::string& s_;
  int dim_;
  std::size_t pos_ = 0;
};

}  // namespace

ScalarField parse_field(const std::string& descriptor, int dim) {
  return DescriptorParser(descriptor, dim).parse();
}

void FieldRegistry::define(const std::string& name, ScalarField field) {
  named_.insert_or_assign(name, std::move(field));
}

ScalarField FieldRegistry::resolve(const std::string& name_or_descriptor, int dim) const {
  if (auto it = named_.find(name_or_descriptor); it != named_.end()) {
    if (it->second.dim() != dim)
      throw std::invalid_argument("field '" + name_or_descriptor + "' has dimension " +
                                  std::to_string(it->second.dim()));
    return it->second;
  }
  return parse_field(name_or_descriptor, dim);
}

std::vector<std::string> FieldRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : named_) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------
// Vector fields.

VectorField VectorField::zero(int dim) { return affine(Point(dim, 0.0), 0.0); }
VectorField VectorField::constant(Point offset) { return affine(std::move(offset), 0.0); }
VectorField VectorField::linear(int dim, double rate) { return affine(Point(dim, 0.0), rate); }

VectorField VectorField::affine(Point offset, double rate) {
  if (offset.empty()) throw std::invalid_argument("vector field: dimension must be positive");
  VectorField v;
  v.dim_ = static_cast<int>(offset.size());
  v.affine_ = Affine{std::move(offset), rate};
  return v;
}

VectorField VectorField::generic(std::shared_ptr<const Impl> impl) {
  if (!impl) throw std::invalid_argument("vector field: null implementation");
  VectorField v;
  v.dim_ = impl->dim();
  v.generic_ = std::move(impl);
  return v;
}

void VectorField::eval_into(std::span<const double> x, std::span<double> out) const {
  if (affine_) {
    for (int i = 0; i < dim_; ++i) out[i] = affine_->offset[i] + affine_->rate * x[i];
  } else {
    generic_->eval(x, out);
  }
}

Point VectorField::eval(std::span<const double> x) const {
  Point out(dim_);
  eval_into(x, out);
  return out;
}

bool VectorField::is_zero() const {
  if (!affine_ || affine_->rate != 0.0) return false;
  return std::all_of(affine_->offset.begin(), affine_->offset.end(),
                     [](double v) { return v == 0.0; });
}

std::string VectorField::descriptor() const {
  if (!affine_) return generic_->descriptor();
  std::string s = "affine:" + format_double(affine_->rate) + ":";
  for (int i = 0; i < dim_; ++i) {
    if (i) s += ',';
    s += format_double(affine_->offset[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------

FdReport fd_check(const ScalarField& field, std::span<const Point> points, double tol,
                  double step) {
  FdReport report;
  const int d = field.dim();
  auto deviation = [](double analytic, double numeric, double fx) {
    return std::abs(analytic - numeric) / (std::abs(numeric) + std::abs(fx) + 1e-10);
  };
  for (const Point& x : points) {
    const double fx = field.eval(x);
    const Point g = field.grad(x);
    const SquareMatrix h = field.hessian(x);
    Point xp = x, xm = x;
    double lap_fd = 0.0;
    double lap = 0.0;
    double worst = 0.0;
    for (int i = 0; i < d; ++i) {
      xp[i] = x[i] + step;
      xm[i] = x[i] - step;
      const double fp = field.eval(xp), fm = field.eval(xm);
      const double dgrad = deviation(g[i], (fp - fm) / (2.0 * step), fx);
      report.max_grad_deviation = std::max(report.max_grad_deviation, dgrad);
      worst = std::max(worst, dgrad);
      lap_fd += (fp - 2.0 * fx + fm) / (step * step);
      lap += h(i, i);
      const Point gp = field.grad(xp), gm = field.grad(xm);
      for (int j = 0; j < d; ++j) {
        const double dh = deviation(h(j, i), (gp[j] - gm[j]) / (2.0 * step), fx);
        report.max_hessian_deviation = std::max(report.max_hessian_deviation, dh);
        worst = std::max(worst, dh);
      }
      xp[i] = x[i];
      xm[i] = x[i];
    }
    const double dlap = deviation(lap, lap_fd, fx);
    report.max_hessian_deviation = std::max(report.max_hessian_deviation, dlap);
    if (std::max(worst, dlap) > tol && report.passed) {
      report.passed = false;
      report.worst_point = x;
    }
  }
  return report;
}

}  // namespace superlln
