#pragma once

// One-dimensional solver for u_t = L u + beta u - alpha u^2 with zero
// Dirichlet data on [-X, X]: implicit diffusion and drift (tridiagonal),
// explicit reaction.

#include <iosfwd>
#include <string>
#include <vector>

#include "superlln/branching_sim.hpp"
#include "superlln/model.hpp"
#include "superlln/semigroups.hpp"

namespace superlln {

struct Grid1D {
  double X = 10.0;
  double dx = 0.01;
  double dt = 1e-3;
  double t_end = 1.0;
  /// Stored frames after s = 0, equally spaced up to t_end.
  int frames = 1;

  int nodes() const;
  void validate() const;
};

struct PDESolution {
  Grid1D grid;
  std::vector<double> x;
  std::vector<double> times;
  std::vector<std::vector<double>> u;  // one row per stored time
  std::string scheme;
  double dt_used = 0.0;
  int steps = 0;
  double min_value = 0.0;
  double max_value = 0.0;

  /// Linear interpolation of the last frame; 0 outside the grid.
  double value(double xq) const { return value_at(u.size() - 1, xq); }
  double value_at(std::size_t frame, double xq) const;
};

/// Throws std::invalid_argument for d != 1 or negative initial data and
/// std::runtime_error if the scheme goes negative (below -1e-10) or non-finite.
PDESolution solve_forward(const SuperdiffusionSpec& spec, const TestFunction& g, const Grid1D& grid);

/// exp(-sum_i mass_i u(x_i, t)) with u from solve_forward.
double laplace_functional_pde(const SuperdiffusionSpec& spec, const InitialMeasure& mu,
                              const TestFunction& g, double t, Grid1D grid);

/// e^{-(beta/alpha) mass} for beta > 0, else 1.
double extinction_probability_csbp(double beta, double alpha, double initial_mass);

/// max over |x| <= X/2 of |u_{2X} - u_X| at t_end.
double domain_doubling_change(const SuperdiffusionSpec& spec, const TestFunction& g, const Grid1D& grid);

/// min over common nodes of u_{X_{k+1}} - u_{X_k} at t_end for increasing X_k;
/// nonnegative when solutions increase with the box.
double box_monotonicity_margin(const SuperdiffusionSpec& spec, const TestFunction& g,
                               const Grid1D& grid, const std::vector<double>& half_widths);

/// x,s,u
void write_solution_csv(std::ostream& out, const PDESolution& sol);

}  // namespace superlln
