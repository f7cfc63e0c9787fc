#pragma once

// Expectation semigroups: Gaussian-kernel quadrature for registry models,
// Feynman-Kac Monte Carlo for everything else, and scaling diagnostics.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "superlln/kernel.hpp"
#include "superlln/model.hpp"

namespace superlln {

using TestFunction = std::function<double(std::span<const double>)>;

/// Quadrature controls. f is assumed to vanish outside the box
/// [support_lo, support_hi] when those are set.
struct QuadratureOptions {
  Point support_lo, support_hi;
  double tolerance = 1e-10;
  unsigned max_depth = 18;
  double tail_sigmas = 12.0;

  static QuadratureOptions ball(int dim, double radius);
};

/// (S_t f)(x) = e^{growth t} E f(Y_t) with Y_t from the Gaussian kernel.
/// Throws std::invalid_argument for t <= 0.
double expectation(const KernelId& kernel, const TestFunction& f, std::span<const double> x,
                   double t, const QuadratureOptions& options = {});
double expectation(const KernelId& kernel, const ScalarField& f, std::span<const double> x,
                   double t);

/// E^x <X_t, f> = e^{lambda_c t} h(x) (S^h_t (f/h))(x), with S^h the kernel of
/// the transformed motion. Throws std::invalid_argument when the model has
/// no analytic kernel.
double model_expectation(const ExampleModel& model, const TestFunction& f,
                         std::span<const double> x, double t, const QuadratureOptions& options = {});

/// <f, r> for the model's limiting measure, by quadrature over the support box.
double limit_pairing(const ExampleModel& model, const ScalarField& f);

struct McEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  double half_width = 0.0;  // 3 standard errors
};

struct FeynmanKacOptions {
  double dt = 0.01;
  int batches = 20;
  int workers = 1;
};

/// Monte Carlo E^x[exp(int_0^t beta(Y_s) ds) f(Y_t); t < tau_D] over paths of
/// the L-diffusion, trapezoidal in time, batch-means standard error.
McEstimate feynman_kac(const SuperdiffusionSpec& spec, const TestFunction& f,
                       std::span<const double> x, double t, std::int64_t paths,
                       std::uint64_t seed, const FeynmanKacOptions& options = {});

struct ScalingRow {
  double t = 0.0;
  Point x;
  double scaled = 0.0;     // s_t (S^h_t (f/h))(x)
  double deviation = 0.0;  // |scaled - <f, r>|
};

struct UniformRow {
  double t = 0.0;
  double zhat = 0.0;
  double radius = 0.0;         // z_t
  double sup_deviation = 0.0;  // over sample points with |x| <= z_t
  int points_used = 0;
};

struct ScalingReport {
  double target = 0.0;  // <f, r>
  std::vector<ScalingRow> rows;
  std::vector<UniformRow> uniform;
  /// (t, x) pairs where the deviation grew from the previous t on the grid.
  std::vector<std::pair<double, Point>> monotonicity_violations;
};

/// Tabulates s_t (S_t^{beta - lambda_c} f)(x) / h(x) against <f, r> and the
/// uniform deviation at time zhat_t over |x| <= z_t. Requires f with compact
/// support and a model with scaling functions and an analytic kernel.
ScalingReport scaling_check(const ExampleModel& model, const ScalarField& f,
                            std::span<const Point> points, std::span<const double> t_grid);

/// t,x,scaled,deviation (x coordinates joined by ';').
void write_scaling_csv(std::ostream& out, const ScalingReport& report);

struct ScalingTripleDiagnostics {
  double max_log_ratio = 0.0;  // max over t in [2, 1e6] of log s_t / log t
  std::vector<double> shift_ratios;  // s_{t + zhat_t} / s_{zhat_t} along t = 2^k, k = 1..20
};

ScalingTripleDiagnostics diagnose_scaling(const ScalingTriple& triple);

}  // namespace superlln
