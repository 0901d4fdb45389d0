#pragma once
// The two energies.
//
// malpha_graph: sum l_i m_i^alpha over a transport graph, after merging
// collinear overlapping segments (signed multiplicities on the common line).
//
// malpha_eps: eps^{-gamma1} int (|u|^2+delta^2)^{beta/2} + eps^{gamma2} int
// |grad u|^2 on the staggered grid. |u| is cell-centered; the gradient term
// sums squared differences over lattice links of each component, one-sided
// at the boundary (no ghost values), so constant fields carry no Dirichlet
// energy. Window ownership: the across-cell links of a component belong to
// the cell they span (partitions cover these exactly); the along-lattice
// links belong to a window only when strictly interior to it or on a domain
// edge the window touches, so a partition misses only links on the one-cell
// seam between windows.
//
// malpha_eps_gradient is the exact adjoint of that sum divided by the cell
// measure: pairing sum(g*h)*hx*hy against a perturbation h reproduces the
// directional derivative to rounding.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "core.hpp"

namespace branchflow {

struct EnergyBreakdown {
  double eps = 0.0;
  double lower_order = 0.0;
  double dirichlet = 0.0;
  double total = 0.0;
};

// ------------------------------------------------------------ graph energy

namespace detail {

struct MergedSegment {
  Vec2 a, b;
  double mass = 0.0;  // signed along (b - a)
};

// Splits the edge set into collinear groups and resolves signed overlaps.
inline std::vector<MergedSegment> merge_collinear(const TransportGraph& g,
                                                  double tol) {
  const int ne = (int)g.edges.size();
  std::vector<int> group(ne, -1);
  std::vector<MergedSegment> out;
  for (int e = 0; e < ne; ++e) {
    if (group[e] >= 0) continue;
    const Vec2 pa = g.vertices[g.edges[e].a], pb = g.vertices[g.edges[e].b];
    Vec2 dir = pb - pa;
    const double l = norm(dir);
    dir = (1.0 / l) * dir;
    std::vector<int> members;
    for (int f = e; f < ne; ++f) {
      if (group[f] >= 0) continue;
      const Vec2 qa = g.vertices[g.edges[f].a], qb = g.vertices[g.edges[f].b];
      if (std::fabs(cross(qa - pa, dir)) <= tol &&
          std::fabs(cross(qb - pa, dir)) <= tol) {
        group[f] = e;
        members.push_back(f);
      }
    }
    if (members.size() == 1) {
      out.push_back({pa, pb, g.edges[e].mass});
      continue;
    }
    // signed coverage along the common line
    std::vector<double> cuts;
    for (int f : members) {
      cuts.push_back(dot(g.vertices[g.edges[f].a] - pa, dir));
      cuts.push_back(dot(g.vertices[g.edges[f].b] - pa, dir));
    }
    std::sort(cuts.begin(), cuts.end());
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double s0 = cuts[k], s1 = cuts[k + 1];
      if (s1 - s0 <= tol) continue;
      double m = 0.0;
      for (int f : members) {
        double ta = dot(g.vertices[g.edges[f].a] - pa, dir);
        double tb = dot(g.vertices[g.edges[f].b] - pa, dir);
        const double sgn = (tb >= ta) ? 1.0 : -1.0;
        if (std::min(ta, tb) <= s0 + tol && std::max(ta, tb) >= s1 - tol)
          m += sgn * g.edges[f].mass;
      }
      out.push_back({pa + s0 * dir, pa + s1 * dir, m});
    }
  }
  return out;
}

}  // namespace detail

inline double malpha_graph(const TransportGraph& g, double alpha) {
  g.validate();
  double scale = 0.0;
  for (const auto& e : g.edges)
    scale = std::max(scale, norm(g.vertices[e.a] - g.vertices[e.b]));
  const double tol = 1e-9 * (scale > 0.0 ? scale : 1.0);
  double s = 0.0;
  for (const auto& seg : detail::merge_collinear(g, tol)) {
    const double m = std::fabs(seg.mass);
    if (m <= 1e-14) continue;
    s += std::pow(m, alpha) * norm(seg.b - seg.a);
  }
  return s;
}

// ------------------------------------------------------- phase-field energy

namespace detail {

// Dirichlet link sum of one component lattice restricted to a cell window.
inline double dirichlet_component_sum(const GridField& u, bool is_ux,
                                      const RectWindow& w) {
  const double hx = u.hx(), hy = u.hy(), area = hx * hy;
  const double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy);
  const int nx = u.nx, ny = u.ny;
  double s = 0.0;
  if (is_ux) {
    // across-cell links: difference of the two x-faces of each owned cell
    for (int j = w.j0; j < w.j1; ++j)
      for (int i = w.i0; i < w.i1; ++i) {
        const double d = u.ux_at(i + 1, j) - u.ux_at(i, j);
        s += d * d * ax * area;
      }
    // along-column links: columns strictly inside, or on a touched domain edge
    const int ca = (w.i0 == 0) ? 0 : w.i0 + 1;
    const int cb = (w.i1 == nx) ? nx : w.i1 - 1;
    const int ja = w.j0;
    const int jb = std::min(w.j1 - 2, ny - 2);
    for (int i = ca; i <= cb; ++i)
      for (int j = ja; j <= jb; ++j) {
        const double d = u.ux_at(i, j + 1) - u.ux_at(i, j);
        s += d * d * ay * area;
      }
  } else {
    for (int j = w.j0; j < w.j1; ++j)
      for (int i = w.i0; i < w.i1; ++i) {
        const double d = u.uy_at(i, j + 1) - u.uy_at(i, j);
        s += d * d * ay * area;
      }
    const int ra = (w.j0 == 0) ? 0 : w.j0 + 1;
    const int rb = (w.j1 == ny) ? ny : w.j1 - 1;
    const int ia = w.i0;
    const int ib = std::min(w.i1 - 2, nx - 2);
    for (int j = ra; j <= rb; ++j)
      for (int i = ia; i <= ib; ++i) {
        const double d = u.uy_at(i + 1, j) - u.uy_at(i, j);
        s += d * d * ax * area;
      }
  }
  return s;
}

}  // namespace detail

inline EnergyBreakdown malpha_eps(const GridField& u, const ExponentPack& ep,
                                  double eps, double delta,
                                  const RectWindow* window = nullptr) {
  if (!(eps > 0.0)) throw std::domain_error("malpha_eps: eps must be > 0");
  if (delta < 0.0) throw std::domain_error("malpha_eps: delta must be >= 0");
  RectWindow w = window ? *window : full_window(u);
  if (w.i0 < 0 || w.j0 < 0 || w.i1 > u.nx || w.j1 > u.ny || w.i0 >= w.i1 ||
      w.j0 >= w.j1)
    throw std::domain_error("malpha_eps: bad window");
  const double area = u.hx() * u.hy();
  double lo = 0.0;
  for (int j = w.j0; j < w.j1; ++j)
    for (int i = w.i0; i < w.i1; ++i) {
      const double m2 =
          u.cx(i, j) * u.cx(i, j) + u.cy(i, j) * u.cy(i, j) + delta * delta;
      lo += std::pow(m2, 0.5 * ep.beta);
    }
  lo *= area * std::pow(eps, -ep.gamma1);
  const double dir =
      std::pow(eps, ep.gamma2) * (detail::dirichlet_component_sum(u, true, w) +
                                  detail::dirichlet_component_sum(u, false, w));
  EnergyBreakdown b;
  b.eps = eps;
  b.lower_order = lo;
  b.dirichlet = dir;
  b.total = lo + dir;
  return b;
}

// Exact gradient of the full-domain malpha_eps with respect to face values,
// divided by the cell measure. Requires delta > 0 (the lower-order term is
// not differentiable at |u| = 0 otherwise).
inline GridField malpha_eps_gradient(const GridField& u,
                                     const ExponentPack& ep, double eps,
                                     double delta) {
  if (!(delta > 0.0))
    throw std::domain_error("malpha_eps_gradient: requires delta > 0");
  if (!(eps > 0.0))
    throw std::domain_error("malpha_eps_gradient: eps must be > 0");
  GridField g(u.nx, u.ny, u.Lx, u.Ly, u.x0, u.y0);
  const double cl = std::pow(eps, -ep.gamma1);
  // lower-order term through the face-average interpolation weights
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i) {
      const double m2 =
          u.cx(i, j) * u.cx(i, j) + u.cy(i, j) * u.cy(i, j) + delta * delta;
      const double q = cl * ep.beta * std::pow(m2, 0.5 * ep.beta - 1.0);
      const double gx = 0.5 * q * u.cx(i, j);
      const double gy = 0.5 * q * u.cy(i, j);
      g.ux_at(i, j) += gx;
      g.ux_at(i + 1, j) += gx;
      g.uy_at(i, j) += gy;
      g.uy_at(i, j + 1) += gy;
    }
  // Dirichlet term: -2 eps^{gamma2} times the lattice graph Laplacian of
  // each component (links only where both endpoints exist)
  const double cd = 2.0 * std::pow(eps, ep.gamma2);
  const double ax = 1.0 / (u.hx() * u.hx()), ay = 1.0 / (u.hy() * u.hy());
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i <= u.nx; ++i) {
      double acc = 0.0;
      const double c = u.ux_at(i, j);
      if (i > 0) acc += ax * (c - u.ux_at(i - 1, j));
      if (i < u.nx) acc += ax * (c - u.ux_at(i + 1, j));
      if (j > 0) acc += ay * (c - u.ux_at(i, j - 1));
      if (j < u.ny - 1) acc += ay * (c - u.ux_at(i, j + 1));
      g.ux_at(i, j) += cd * acc;
    }
  for (int j = 0; j <= u.ny; ++j)
    for (int i = 0; i < u.nx; ++i) {
      double acc = 0.0;
      const double c = u.uy_at(i, j);
      if (i > 0) acc += ax * (c - u.uy_at(i - 1, j));
      if (i < u.nx - 1) acc += ax * (c - u.uy_at(i + 1, j));
      if (j > 0) acc += ay * (c - u.uy_at(i, j - 1));
      if (j < u.ny) acc += ay * (c - u.uy_at(i, j + 1));
      g.uy_at(i, j) += cd * acc;
    }
  return g;
}

// Pairing consistent with malpha_eps_gradient.
inline double field_dot(const GridField& a, const GridField& b) {
  require_same_layout(a, b, "field_dot");
  double s = 0.0;
  for (std::size_t k = 0; k < a.ux.size(); ++k) s += a.ux[k] * b.ux[k];
  for (std::size_t k = 0; k < a.uy.size(); ++k) s += a.uy[k] * b.uy[k];
  return s * a.hx() * a.hy();
}

}  // namespace branchflow
