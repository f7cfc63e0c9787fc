#pragma once

// Smooth coefficient fields on R^d with analytic first and second derivatives.
//
// A ScalarField is an immutable, cheaply copyable handle. Derivatives are part
// of each field's definition; finite differences only appear in fd_check,
// which exists to audit those definitions.

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace superlln {

using Point = std::vector<double>;

/// Row-major dense square matrix.
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(int dim, double fill = 0.0)
      : dim_(dim), data_(static_cast<std::size_t>(dim) * dim, fill) {}

  static SquareMatrix identity(int dim, double scale = 1.0);

  int dim() const { return dim_; }
  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * dim_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * dim_ + j]; }
  std::span<const double> data() const { return data_; }

  bool operator==(const SquareMatrix&) const = default;

 private:
  int dim_ = 0;
  std::vector<double> data_;
};

/// The matrix a(x) of the second-order part (1/2) div(a grad). Registry models
/// only need constant matrices, so a(x) is constant here; the x argument keeps
/// call sites independent of that restriction.
class DiffusionMatrix {
 public:
  /// Throws std::invalid_argument unless `a` is symmetric positive definite.
  explicit DiffusionMatrix(SquareMatrix a);

  static DiffusionMatrix identity(int dim) { return DiffusionMatrix(SquareMatrix::identity(dim)); }
  static DiffusionMatrix scalar(int dim, double variance) {
    return DiffusionMatrix(SquareMatrix::identity(dim, variance));
  }

  int dim() const { return a_.dim(); }
  const SquareMatrix& eval(std::span<const double> /*x*/) const { return a_; }
  /// Lower-triangular sigma with sigma * sigma^T = a.
  const SquareMatrix& factor(std::span<const double> /*x*/) const { return chol_; }
  /// Column divergence sum_i d_i a_ij; identically zero for constant a.
  Point divergence(std::span<const double> /*x*/) const { return Point(dim(), 0.0); }
  /// Set when a = s * I.
  std::optional<double> scalar_variance() const { return scalar_; }
  std::string descriptor() const;

 private:
  SquareMatrix a_;
  SquareMatrix chol_;
  std::optional<double> scalar_;
};

/// offset + rate * x.
struct AffineMap {
  Point offset;
  double rate = 0.0;
};

class ScalarField {
 public:
  class Impl {
   public:
    explicit Impl(int dim) : dim_(dim) {}
    virtual ~Impl() = default;
    int dim() const { return dim_; }
    virtual double eval(std::span<const double> x) const = 0;
    virtual void grad(std::span<const double> x, std::span<double> out) const = 0;
    /// Writes the row-major Hessian into `out` (size dim*dim).
    virtual void hessian(std::span<const double> x, std::span<double> out) const = 0;
    virtual std::string descriptor() const = 0;
    /// Radius R with support inside the closed ball B_R(0), when compact.
    virtual std::optional<double> support_radius() const { return std::nullopt; }
    virtual std::optional<double> constant_value() const { return std::nullopt; }
    /// grad(log f) when it is an affine map of x.
    virtual std::optional<AffineMap> log_gradient_affine() const { return std::nullopt; }

   private:
    int dim_;
  };

  explicit ScalarField(std::shared_ptr<const Impl> impl);

  int dim() const { return impl_->dim(); }
  double eval(std::span<const double> x) const { return impl_->eval(x); }
  double operator()(std::span<const double> x) const { return impl_->eval(x); }
  Point grad(std::span<const double> x) const;
  SquareMatrix hessian(std::span<const double> x) const;
  /// div(a grad f)(x) = tr(a H) + div(a) . grad f.
  double div_a_grad(std::span<const double> x, const DiffusionMatrix& a) const;
  std::string descriptor() const { return impl_->descriptor(); }
  std::optional<double> support_radius() const { return impl_->support_radius(); }
  std::optional<double> constant_value() const { return impl_->constant_value(); }
  std::optional<AffineMap> log_gradient_affine() const { return impl_->log_gradient_affine(); }

 private:
  std::shared_ptr<const Impl> impl_;
};

// Elementary fields. Descriptor strings are listed next to each factory.

ScalarField make_constant(int dim, double value);                      // const:v
ScalarField make_exp_linear(int dim, double c, int axis);              // explin:c:axis
ScalarField make_gaussian_quadratic(int dim, double c, int sign);      // gaussquad:c:sign
ScalarField make_exp_norm(int dim, double c);                          // expnorm:c
ScalarField make_quadratic(int dim, double k, double q);               // quad:k:q   k + q|x|^2
ScalarField make_bump(int dim, double radius);                         // bump:r
/// lam - (1/2) (Laplacian h) / h for h = expnorm:c, i.e. the mass creation
/// that makes expnorm:c an eigenfunction of (1/2)Laplacian + beta with
/// eigenvalue lam.
ScalarField make_exp_norm_ground_beta(int dim, double lam, double c);  // expnorm_gs:lam:c

// Composites.
ScalarField scale(double k, const ScalarField& f);                     // scale(k,f)
ScalarField multiply(const ScalarField& f, const ScalarField& g);      // mul(f,g)
ScalarField add(const ScalarField& f, const ScalarField& g);           // add(f,g)
ScalarField reciprocal(const ScalarField& f);                          // recip(f)

/// Parses a descriptor produced by any factory above. Throws
/// std::invalid_argument naming the offending token.
ScalarField parse_field(const std::string& descriptor, int dim);

/// Named fields for configuration files. Names resolve before descriptors.
class FieldRegistry {
 public:
  void define(const std::string& name, ScalarField field);
  ScalarField resolve(const std::string& name_or_descriptor, int dim) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, ScalarField> named_;
};

/// Affine drift b(x) = offset + rate * x, or an opaque generic drift.
class VectorField {
 public:
  class Impl {
   public:
    explicit Impl(int dim) : dim_(dim) {}
    virtual ~Impl() = default;
    int dim() const { return dim_; }
    virtual void eval(std::span<const double> x, std::span<double> out) const = 0;
    virtual std::string descriptor() const = 0;

   private:
    int dim_;
  };

  using Affine = AffineMap;

  static VectorField zero(int dim);
  static VectorField constant(Point offset);
  static VectorField linear(int dim, double rate);
  static VectorField affine(Point offset, double rate);
  static VectorField generic(std::shared_ptr<const Impl> impl);

  int dim() const { return dim_; }
  Point eval(std::span<const double> x) const;
  void eval_into(std::span<const double> x, std::span<double> out) const;
  std::string descriptor() const;
  const std::optional<Affine>& affine_form() const { return affine_; }
  bool is_zero() const;

 private:
  int dim_ = 0;
  std::optional<Affine> affine_;
  std::shared_ptr<const Impl> generic_;
};

struct FdReport {
  double max_grad_deviation = 0.0;
  double max_hessian_deviation = 0.0;
  Point worst_point;
  bool passed = true;
};

/// Compares analytic gradient and Laplacian against centered finite
/// differences with the given step. Deviations are |analytic - fd| divided by
/// (|fd| + |f(x)| + 1e-10).
FdReport fd_check(const ScalarField& field, std::span<const Point> points, double tol,
                  double step = 1e-4);

/// Formats a double so that parsing it back yields the same value.
std::string format_double(double v);

}  // namespace superlln
