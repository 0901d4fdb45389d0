#pragma once
// Divergence solvers.
//
// dirichlet_divsolve: given cell data f with zero total mass, builds a face
// field u supported in the window (boundary faces zero) with discrete
// divergence equal to f at machine level. Two passes: a Dirichlet Poisson
// gradient, then a grounded-Neumann pass that absorbs the defect created by
// zeroing the boundary-normal faces.
//
// radial_divsolve: the radial primitive v(r) = r^{-d} int_0^r F(s) s^{d-1} ds
// so that V(x) = v(|x|) x satisfies div V = F on the ball.

#include <cmath>
#include <functional>
#include <vector>

#include "core.hpp"
#include "poisson.hpp"
#include "quadrature.hpp"

namespace branchflow {

// Sum of squared link differences of both components, zero ghosts at the
// domain boundary; the discrete H1(0) seminorm squared (times cell area).
inline double grad_norm_sq(const GridField& u) {
  const double hx = u.hx(), hy = u.hy(), area = hx * hy;
  const double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy);
  double s = 0.0;
  // ux lattice, (nx+1) x ny, ghost ring of zeros
  for (int j = 0; j < u.ny; ++j)
    for (int i = -1; i <= u.nx; ++i) {  // x links
      const double a = (i < 0) ? 0.0 : u.ux_at(i, j);
      const double b = (i + 1 > u.nx) ? 0.0 : u.ux_at(i + 1, j);
      s += (b - a) * (b - a) * ax * area;
    }
  for (int i = 0; i <= u.nx; ++i)
    for (int j = -1; j < u.ny; ++j) {  // y links
      const double a = (j < 0) ? 0.0 : u.ux_at(i, j);
      const double b = (j + 1 >= u.ny) ? 0.0 : u.ux_at(i, j + 1);
      s += (b - a) * (b - a) * ay * area;
    }
  // uy lattice, nx x (ny+1)
  for (int j = 0; j <= u.ny; ++j)
    for (int i = -1; i < u.nx; ++i) {  // x links
      const double a = (i < 0) ? 0.0 : u.uy_at(i, j);
      const double b = (i + 1 >= u.nx) ? 0.0 : u.uy_at(i + 1, j);
      s += (b - a) * (b - a) * ax * area;
    }
  for (int i = 0; i < u.nx; ++i)
    for (int j = -1; j <= u.ny; ++j) {  // y links
      const double a = (j < 0) ? 0.0 : u.uy_at(i, j);
      const double b = (j + 1 > u.ny) ? 0.0 : u.uy_at(i, j + 1);
      s += (b - a) * (b - a) * ay * area;
    }
  return s;
}

struct DivsolveLog {
  int n = 0;          // max(nx, ny)
  double h = 0.0;     // max spacing
  double ratio_h1 = 0.0;  // |grad u|_L2 / |f|_L2
  double ratio_l1 = 0.0;  // |u|_L1 / (L |f|_L1)
  double residual_linf = 0.0;
};

// Gradient using interior faces only; boundary faces stay zero.
inline GridField interior_gradient(const ScalarGrid& p) {
  GridField g(p.nx, p.ny, p.Lx, p.Ly, p.x0, p.y0);
  const double ihx = 1.0 / p.hx(), ihy = 1.0 / p.hy();
  for (int j = 0; j < p.ny; ++j)
    for (int i = 1; i < p.nx; ++i)
      g.ux_at(i, j) = (p.at(i, j) - p.at(i - 1, j)) * ihx;
  for (int i = 0; i < p.nx; ++i)
    for (int j = 1; j < p.ny; ++j)
      g.uy_at(i, j) = (p.at(i, j) - p.at(i, j - 1)) * ihy;
  return g;
}

inline GridField dirichlet_divsolve(const ScalarGrid& f,
                                    DivsolveLog* log = nullptr) {
  const double mass = f.integral();
  const double l1 = f.l1();
  if (std::fabs(mass) > 1e-10 * (l1 + 1e-300))
    throw std::domain_error(
        "dirichlet_divsolve: total mass must vanish (|int f| <= 1e-10 |f|_L1)");

  // pass 1: Dirichlet gradient, then drop the boundary-normal faces
  ScalarGrid phi = poisson_solve(f, PoissonKind::dirichlet);
  GridField u = scalar_gradient(phi);
  for (int j = 0; j < u.ny; ++j) u.ux_at(0, j) = u.ux_at(u.nx, j) = 0.0;
  for (int i = 0; i < u.nx; ++i) u.uy_at(i, 0) = u.uy_at(i, u.ny) = 0.0;

  // pass 2: absorb the defect with the grounded interior-face operator
  ScalarGrid d = grid_divergence(u);
  for (std::size_t k = 0; k < d.v.size(); ++k) d.v[k] -= f.v[k];
  double dm = 0.0;
  for (double x : d.v) dm += x;
  dm /= (double)d.v.size();
  for (double& x : d.v) x -= dm;
  for (double& x : d.v) x = -x;
  ScalarGrid psi = poisson_solve(d, PoissonKind::grounded_neumann);
  u.axpy(1.0, interior_gradient(psi));

  if (log) {
    ScalarGrid r = grid_divergence(u);
    double rmax = 0.0;
    for (std::size_t k = 0; k < r.v.size(); ++k)
      rmax = std::max(rmax, std::fabs(r.v[k] - f.v[k]));
    log->n = std::max(f.nx, f.ny);
    log->h = std::max(f.hx(), f.hy());
    const double fl2 = std::sqrt(f.l2sq());
    log->ratio_h1 = fl2 > 0.0 ? std::sqrt(grad_norm_sq(u)) / fl2 : 0.0;
    const double L = std::max(f.Lx, f.Ly);
    log->ratio_l1 = l1 > 0.0 ? field_l1(u) / (L * l1) : 0.0;
    log->residual_linf = rmax;
  }
  return u;
}

// ----------------------------------------------------------------- radial

struct RadialField {
  int d = 2;
  double R = 0.0;
  std::vector<double> r;   // n+1 uniform nodes on [0, R]
  std::vector<double> v;   // v(r_k)
  std::vector<double> dv;  // v'(r_k)

  // cubic Hermite evaluation; zero outside [0, R]
  double eval(double rr) const {
    if (rr < 0.0) rr = -rr;
    if (rr >= R) return 0.0;
    const int n = (int)r.size() - 1;
    const double h = R / n;
    int k = (int)(rr / h);
    if (k >= n) k = n - 1;
    const double t = (rr - r[k]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    return h00 * v[k] + h10 * h * dv[k] + h01 * v[k + 1] + h11 * h * dv[k + 1];
  }
};

// F must be evaluable on [0, R]; n+1 uniform samples are produced. Accuracy
// is quadrature-grade when F is smooth between consecutive nodes. With
// require_zero_mean the ball integral of F must vanish so the field carries
// no flux across |x| = R; pass false to solve for a plain source, whose
// r^{-d} far field is then v(R) R^d / r^d.
inline RadialField radial_divsolve(const std::function<double(double)>& F,
                                   double R, int n = 2048, int d = 2,
                                   bool require_zero_mean = true) {
  if (!(R > 0.0) || n < 8) throw std::domain_error("radial_divsolve: bad R/n");
  RadialField out;
  out.d = d;
  out.R = R;
  out.r.resize(n + 1);
  out.v.resize(n + 1);
  out.dv.resize(n + 1);
  const double h = R / n;
  double acc = 0.0;   // int_0^{r_k} F(s) s^{d-1} ds
  double aabs = 0.0;  // same with |F|, for the compatibility scale
  out.r[0] = 0.0;
  out.v[0] = F(0.0) / d;  // limit of r^{-d} int: F(0) r^d / (d r^d)
  out.dv[0] = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double a = (k - 1) * h, b = k * h;
    acc += gauss16([&](double s) { return F(s) * std::pow(s, d - 1); }, a, b);
    aabs += gauss16(
        [&](double s) { return std::fabs(F(s)) * std::pow(s, d - 1); }, a, b);
    out.r[k] = b;
    out.v[k] = acc / std::pow(b, d);
    out.dv[k] = (F(b) - d * out.v[k]) / b;  // from r v' + d v = F
  }
  // the ball integral of F must vanish, else v(R) != 0 and V leaks flux
  if (require_zero_mean && std::fabs(acc) > 1e-8 * (aabs + 1e-300))
    throw std::domain_error("radial_divsolve: F must have zero ball mean");
  return out;
}

// max over samples of the Frobenius norm of grad V, V(x) = v(|x|) x:
// eigenvalues v + r v' (radial) and v (tangential, d-1 fold).
inline double radial_grad_linf(const RadialField& rf) {
  double m = 0.0;
  for (std::size_t k = 0; k < rf.r.size(); ++k) {
    const double t = rf.v[k] + rf.r[k] * rf.dv[k];
    const double fro =
        std::sqrt(t * t + (rf.d - 1) * rf.v[k] * rf.v[k]);
    m = std::max(m, fro);
  }
  return m;
}

}  // namespace branchflow
