#pragma once

// (L, beta, alpha; D)-superdiffusion models, H-transforms, principal
// eigenvalue estimates, and the registry of worked examples.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "superlln/fields.hpp"
#include "superlln/kernel.hpp"

namespace superlln {

/// All of R^d, or the open box (lo, hi).
class Domain {
 public:
  static Domain whole_space(int dim);
  static Domain box(Point lo, Point hi);

  int dim() const { return dim_; }
  bool bounded() const { return !lo_.empty(); }
  bool contains(std::span<const double> x) const;
  const Point& lo() const { return lo_; }
  const Point& hi() const { return hi_; }
  std::string descriptor() const;

 private:
  int dim_ = 0;
  Point lo_, hi_;
};

/// H(x, t) = e^{-lambda t} h(x).
struct HTransformSpec {
  ScalarField h = make_constant(1, 1.0);
  double lambda_c = 0.0;
};

/// L = (1/2) div(a grad) + b . grad, with mass creation beta and intensity
/// alpha on the domain.
struct SuperdiffusionSpec {
  int dim = 1;
  DiffusionMatrix diffusion = DiffusionMatrix::identity(1);
  VectorField drift = VectorField::zero(1);
  ScalarField beta = make_constant(1, 0.0);
  ScalarField alpha = make_constant(1, 1.0);
  Domain domain = Domain::whole_space(1);
  std::string label;
  /// Declared upper bound for beta, checked by sampling.
  double beta_upper_bound = 0.0;
  /// Set on the output of h_transform.
  std::optional<HTransformSpec> transformed_by;
};

/// Validates dimensions, alpha > 0 and beta <= beta_upper_bound at the sample
/// points. Throws std::invalid_argument naming the violated constraint.
void check_spec(const SuperdiffusionSpec& spec, std::span<const Point> samples);

/// Default deterministic sample points: a grid on [-r, r]^d (clipped to the domain).
std::vector<Point> sample_points(const Domain& domain, double r = 4.0, int per_axis = 17);

/// (L f)(x) = (1/2) div(a grad f)(x) + b(x) . grad f(x).
double apply_generator(const SuperdiffusionSpec& spec, const ScalarField& f,
                       std::span<const double> x);

/// Transformed model (L + a grad(h)/h . grad, 0, alpha h; D). The factor
/// e^{-lambda t} is not part of the returned coefficients: simulators carry
/// it as a deterministic weight. Throws std::invalid_argument with the
/// offending point if h is not positive on the samples.
SuperdiffusionSpec h_transform(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                               std::span<const Point> samples = {});

/// beta + L h / h - lambda. Zero exactly when h is an eigenfunction of L + beta
/// with eigenvalue lambda. Analytic derivatives are available when the result
/// is a quadratic in |x|; otherwise the field evaluates only.
ScalarField inverse_beta_of_transform(const SuperdiffusionSpec& spec, const HTransformSpec& tr);

/// |(L + beta - lambda) h|(x) / h(x).
double transform_residual(const SuperdiffusionSpec& spec, const HTransformSpec& tr,
                          std::span<const double> x);

// ---------------------------------------------------------------------------
// Scaling functions.

/// s_t = (s_scale * t)^{s_power}, z_t = spread_speed * t, zhat_t = t^{zhat_power},
/// and the limiting measure r(dy) = r_density(y) dy.
struct ScalingTriple {
  double s_scale = 2.0 * 3.14159265358979323846;
  double s_power = 0.5;
  double spread_speed = 0.0;
  double zhat_power = 3.0;
  ScalarField r_density = make_constant(1, 1.0);

  double s(double t) const;
  double z(double t) const;
  double zhat(double t) const;
};

// ---------------------------------------------------------------------------
// Registry.

struct ModelParams {
  int dim = 1;
  double beta = 1.0;
  double alpha = 0.5;
  double c = 0.0;
  std::optional<double> K;
  double epsilon = 0.5;

  bool operator==(const ModelParams&) const = default;
};

struct ExampleModel {
  std::string id;
  ModelParams params;
  SuperdiffusionSpec base;
  HTransformSpec transform;
  /// Present where the model satisfies the scaling and spread assumptions
  /// directly (sbm, sou_inward, sou_outward).
  std::optional<ScalingTriple> scaling;
  /// Kernel of the transformed motion L + a grad(h)/h . grad, when Gaussian.
  std::optional<KernelId> transformed_kernel;
};

struct RegistryEntry {
  std::string id;
  std::string example;  // which worked example it reproduces
  std::string constraints;
  std::string lambda_formula;
  std::string alpha_growth;
};

const std::vector<RegistryEntry>& registry_entries();

/// Builds a fully wired example. Throws std::invalid_argument for unknown ids
/// or parameter combinations outside the example's constraints.
ExampleModel registry_example(const std::string& id, const ModelParams& params);

/// The example's eigenvalue from its closed form.
double lambda_c_closed_form(const std::string& id, const ModelParams& params);

/// Throws std::invalid_argument("... c < sqrt(2*beta) ...") unless the
/// parameters admit a moving-window law of large numbers.
void validate_moving_window(const ModelParams& params);

// ---------------------------------------------------------------------------
// Monte Carlo principal eigenvalue on a box.

struct LambdaEstimate {
  double value = 0.0;
  double half_width = 0.0;  // 3 batch-means standard errors
  double standard_error = 0.0;
  bool all_killed = false;  // value is -infinity
  std::string diagnostic;
};

enum class LambdaMethod {
  /// (1/t) log E^x[exp(int_0^t beta(Y)) ; tau > t]. Carries an O(1/t) bias
  /// from the prefactor of the leading mode.
  finite_time,
  /// Principal eigenvalue of the Monte Carlo transfer operator over lag t on
  /// a cell partition of the box (d = 1), which removes the prefactor and
  /// the initial transient. Falls back to finite_time for d > 1.
  transfer_operator,
};

struct LambdaOptions {
  LambdaMethod method = LambdaMethod::transfer_operator;
  double dt = 0.01;
  int cells = 96;
  int batches = 10;
  int workers = 1;
};

/// Estimates the principal eigenvalue of L + beta on the box of half-width
/// `radius` centred at x, from killed diffusion paths.
LambdaEstimate estimate_lambda_c(const SuperdiffusionSpec& spec, std::span<const double> x,
                                 double radius, double t, std::int64_t paths,
                                 std::uint64_t seed, const LambdaOptions& options = {});

}  // namespace superlln
