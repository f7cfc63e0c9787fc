#include "superlln/loglap_pde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace superlln {

int Grid1D::nodes() const { return static_cast<int>(std::llround(2.0 * X / dx)) + 1; }

void Grid1D::validate() const {
  if (!(X > 0.0) || !(dx > 0.0) || !(dt > 0.0) || !(t_end > 0.0))
    throw std::invalid_argument("grid: X, dx, dt and t_end must be positive");
  if (frames < 1) throw std::invalid_argument("grid: frames must be at least 1");
  if (nodes() < 3) throw std::invalid_argument("grid: need at least 3 nodes");
  if (std::abs((nodes() - 1) * dx - 2.0 * X) > 1e-9 * X)
    throw std::invalid_argument("grid: 2X must be a multiple of dx");
}

double PDESolution::value_at(std::size_t frame, double xq) const {
  const std::vector<double>& row = u.at(frame);
  if (xq <= x.front() || xq >= x.back()) return 0.0;
  const double pos = (xq - x.front()) / grid.dx;
  const auto i = std::min(static_cast<std::size_t>(pos), x.size() - 2);
  const double w = pos - static_cast<double>(i);
  return (1.0 - w) * row[i] + w * row[i + 1];
}

namespace {

// Thomas algorithm for lower/diag/upper with right-hand side; overwrites rhs.
void solve_tridiagonal(const std::vector<double>& lo, std::vector<double> diag,
                       const std::vector<double>& up, std::vector<double>& rhs) {
  const std::size_t m = diag.size();
  for (std::size_t i = 1; i < m; ++i) {
    const double w = lo[i] / diag[i - 1];
    diag[i] -= w * up[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[m - 1] /= diag[m - 1];
  for (std::size_t i = m - 1; i-- > 0;) rhs[i] = (rhs[i] - up[i] * rhs[i + 1]) / diag[i];
}

}  // namespace

PDESolution solve_forward(const SuperdiffusionSpec& spec, const TestFunction& g, const Grid1D& grid) {
  if (spec.dim != 1) throw std::invalid_argument("solve_forward supports d = 1 only");
  grid.validate();
  const int N = grid.nodes();
  PDESolution sol;
  sol.grid = grid;
  sol.x.resize(N);
  for (int i = 0; i < N; ++i) sol.x[i] = -grid.X + i * grid.dx;

  const double a = spec.diffusion.eval(Point{0.0})(0, 0);
  std::vector<double> beta(N), alpha(N), b(N), u(N);
  double gmax = 0.0, bmax = 0.0, bpos = 0.0, amax = 0.0, amin = std::numeric_limits<double>::infinity();
  Point p(1);
  for (int i = 0; i < N; ++i) {
    p[0] = sol.x[i];
    beta[i] = spec.beta.eval(p);
    alpha[i] = spec.alpha.eval(p);
    b[i] = spec.drift.eval(p)[0];
    u[i] = g(p);
    if (!(u[i] >= 0.0) || !std::isfinite(u[i]))
      throw std::invalid_argument("initial data must be finite and nonnegative (x=" +
                                  format_double(sol.x[i]) + ")");
    if (alpha[i] < 0.0) throw std::invalid_argument("alpha must be nonnegative on the grid");
    gmax = std::max(gmax, u[i]);
    bmax = std::max(bmax, std::abs(beta[i]));
    bpos = std::max(bpos, beta[i]);
    amax = std::max(amax, alpha[i]);
    amin = std::min(amin, alpha[i]);
  }
  u.front() = u.back() = 0.0;

  // A priori bound on u from the reaction ODE, so the step does not depend
  // on the box size.
  const double ubound = amin > 0.0 ? std::max(gmax, bpos / amin) : gmax * std::exp(bpos * grid.t_end);
  const double reaction = bmax + 2.0 * amax * ubound;
  const double cap = reaction > 0.0 ? 0.1 / reaction : grid.dt;
  const double frame_dt = grid.t_end / grid.frames;
  const int sub = std::max(1, static_cast<int>(std::ceil(frame_dt / std::min(grid.dt, cap) - 1e-9)));
  const double dt = frame_dt / sub;
  sol.dt_used = dt;

  // interior operator rows: lo u_{i-1} + di u_i + up u_{i+1}
  const double diff = 0.5 * a / (grid.dx * grid.dx);
  std::vector<double> L(N, 0.0), D(N, 1.0), U(N, 0.0);
  bool upwind = false;
  for (int i = 1; i < N - 1; ++i) {
    double l = diff, c = -2.0 * diff, r = diff;
    if (std::abs(b[i]) * grid.dx > a) {
      upwind = true;
      if (b[i] > 0.0) {
        r += b[i] / grid.dx;
        c -= b[i] / grid.dx;
      } else {
        l -= b[i] / grid.dx;
        c += b[i] / grid.dx;
      }
    } else {
      r += 0.5 * b[i] / grid.dx;
      l -= 0.5 * b[i] / grid.dx;
    }
    L[i] = -dt * l;
    D[i] = 1.0 - dt * c;
    U[i] = -dt * r;
  }
  sol.scheme = std::string("implicit Euler diffusion/drift (") + (upwind ? "upwind" : "central") +
               "), explicit reaction";

  sol.times.push_back(0.0);
  sol.u.push_back(u);
  sol.min_value = *std::min_element(u.begin(), u.end());
  sol.max_value = gmax;
  std::vector<double> rhs(N);
  for (int f = 1; f <= grid.frames; ++f) {
    for (int k = 0; k < sub; ++k) {
      for (int i = 0; i < N; ++i) rhs[i] = u[i] + dt * (beta[i] * u[i] - alpha[i] * u[i] * u[i]);
      rhs.front() = rhs.back() = 0.0;
      solve_tridiagonal(L, D, U, rhs);
      u.swap(rhs);
      ++sol.steps;
      for (int i = 0; i < N; ++i) {
        if (!std::isfinite(u[i]) || u[i] < -1e-10)
          throw std::runtime_error("log-Laplace scheme unstable at x=" + format_double(sol.x[i]) +
                                   ", s=" + format_double(sol.steps * dt) +
                                   ", u=" + format_double(u[i]));
        sol.min_value = std::min(sol.min_value, u[i]);
        sol.max_value = std::max(sol.max_value, u[i]);
      }
    }
    sol.times.push_back(f * frame_dt);
    sol.u.push_back(u);
  }
  return sol;
}

double laplace_functional_pde(const SuperdiffusionSpec& spec, const InitialMeasure& mu,
                              const TestFunction& g, double t, Grid1D grid) {
  grid.t_end = t;
  grid.frames = 1;
  for (const Atom& a : mu)
    if (a.x.size() != 1 || std::abs(a.x[0]) >= grid.X)
      throw std::invalid_argument("initial atom outside the PDE grid");
  const PDESolution sol = solve_forward(spec, g, grid);
  double s = 0.0;
  for (const Atom& a : mu) s += a.mass * sol.value(a.x[0]);
  return std::exp(-s);
}

double extinction_probability_csbp(double beta, double alpha, double initial_mass) {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (beta <= 0.0 || initial_mass <= 0.0) return 1.0;
  return std::exp(-(beta / alpha) * initial_mass);
}

double domain_doubling_change(const SuperdiffusionSpec& spec, const TestFunction& g, const Grid1D& grid) {
  Grid1D wide = grid;
  wide.X = 2.0 * grid.X;
  const PDESolution a = solve_forward(spec, g, grid);
  const PDESolution b = solve_forward(spec, g, wide);
  const int offset = static_cast<int>(std::llround(grid.X / grid.dx));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.x.size(); ++i) {
    if (std::abs(a.x[i]) > 0.5 * grid.X + 1e-12) continue;
    worst = std::max(worst, std::abs(b.u.back()[i + offset] - a.u.back()[i]));
  }
  return worst;
}

double box_monotonicity_margin(const SuperdiffusionSpec& spec, const TestFunction& g,
                               const Grid1D& grid, const std::vector<double>& half_widths) {
  double margin = std::numeric_limits<double>::infinity();
  std::optional<PDESolution> prev;
  for (double X : half_widths) {
    Grid1D gr = grid;
    gr.X = X;
    PDESolution sol = solve_forward(spec, g, gr);
    if (prev) {
      if (!(X > prev->grid.X)) throw std::invalid_argument("box half-widths must increase");
      const int offset = static_cast<int>(std::llround((X - prev->grid.X) / grid.dx));
      for (std::size_t i = 0; i < prev->x.size(); ++i)
        margin = std::min(margin, sol.u.back()[i + offset] - prev->u.back()[i]);
    }
    prev = std::move(sol);
  }
  return margin;
}

void write_solution_csv(std::ostream& out, const PDESolution& sol) {
  out << "x,s,u\n";
  for (std::size_t k = 0; k < sol.times.size(); ++k)
    for (std::size_t i = 0; i < sol.x.size(); ++i)
      out << format_double(sol.x[i]) << ',' << format_double(sol.times[k]) << ','
          << format_double(sol.u[k][i]) << '\n';
}

}  // namespace superlln
