#pragma once
// Dyadic decomposition of a nonnegative density f on a square, selection of
// the diffusion level by the kernel-fit test, and the certified local
// transport field.
//
//   build_tree      full quadtree down to 2-cell cubes; theta_Q from a
//                   summed-area table, R_Q = ridge_radius(theta_Q, eps);
//                   a cube "fits" when R_Q * r_supp <= side/2, and the
//                   admitted set grows by whole sibling quadruples only.
//   lambda_eps      kernel and atomic approximations of f carried by the
//                   minimal admitted cubes.
//   xia_field       center-to-child-center transport graph over the admitted
//                   tree; tails sit at the children, so the graph divergence
//                   is (atomic approximation) - (root atom).
//   tube_field      kernel-width tube along the segment child -> parent,
//                   exact chord integrals of the kernel at face quadrature
//                   points; divergence = rho at the child - rho at the parent.
//   node_correction radial field per split cube solving div W = h_Q where
//                   h_Q = rho_Q - sum of child kernels recentered at c_Q.
//   assemble_local  V = tubes - node corrections + per-minimal-cube Dirichlet
//                   fields + one global Dirichlet pass, so that
//                   grid_divergence(V) = f - rho_root exactly; energy, mass
//                   and residual go into a certificate.
//
// Faces are rasterized with Gauss-3 averages of the normal component, so a
// cell's discrete divergence is the cell average of the continuum divergence
// up to quadrature error; the final Dirichlet pass absorbs exactly that
// rasterization residual. Cell rasters of kernels are renormalized to their
// target mass, which keeps every Dirichlet right-hand side mean-free.

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "divsolve.hpp"
#include "energy.hpp"
#include "kernel.hpp"

namespace branchflow {

struct DyadicCube {
  Vec2 center;
  double side = 0.0;
  double theta = 0.0;  // mass of f in the cube
  double R = 0.0;      // ridge radius of (theta, eps); 0 when theta = 0
  int level = 0;
  int ix = 0, iy = 0;  // dyadic position within the level
  int parent = -1;
  std::array<int, 4> child{{-1, -1, -1, -1}};
  bool fits = false;      // R * kernel support <= side / 2
  bool admitted = false;  // member of the diffusion level
  bool minimal = false;   // admitted with no admitted children
  bool truncated = false; // minimal only because refinement hit the grid
};

struct DyadicTree {
  std::vector<DyadicCube> cubes;  // breadth-first, root first, full levels
  std::vector<int> diffusion;     // admitted cubes in breadth-first order
  std::vector<int> minimal;       // admitted, children not admitted
  std::vector<int> split;         // admitted, children admitted
  ExponentPack ep;
  double eps = 0.0;
  RadialKernel kernel;  // unit-mass kernel shared by all cubes
  GridSpec grid;
  int levels = 0;  // deepest stored generation
  bool root_admitted = false;

  static int level_offset(int j) { return ((1 << (2 * j)) - 1) / 3; }
  int index_of(int j, int ix, int iy) const {
    return level_offset(j) + (iy << j) + ix;
  }
  const DyadicCube& root() const { return cubes[0]; }
};

struct LocalCertificate {
  double theta = 0.0;
  double L = 0.0;
  double eps = 0.0;
  EnergyBreakdown energy;
  double l1_norm = 0.0;
  double div_residual_linf = 0.0;
  int depth = 0;            // deepest admitted generation
  int truncated_cubes = 0;  // minimal cubes stopped by the grid, not the fit
  std::string branch;       // "interior-kernel" or "oversized-kernel"
};

struct LocalResult {
  GridField u;
  LocalCertificate cert;
};

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Gauss-3 average of g over the segment [p0, p1]; exact through degree 5.
template <class F>
inline double face_average(Vec2 p0, Vec2 p1, F&& g) {
  const Vec2 mid = 0.5 * (p0 + p1);
  const Vec2 d = p1 - p0;
  constexpr double t = 0.3872983346207417;  // sqrt(3/5) / 2
  constexpr double w = 5.0 / 18.0;
  return w * g(mid - t * d) + (1.0 - 2.0 * w) * g(mid) + w * g(mid + t * d);
}

// Adds a cell-center sampled copy of mass * k recentered at c, rescaled so
// the discrete mass added is exactly `mass`. A kernel narrower than a cell
// degenerates to a single-cell deposit.
inline void splat_kernel(ScalarGrid& g, Vec2 c, const RadialKernel& k,
                         double mass) {
  if (mass == 0.0) return;
  const double hx = g.hx(), hy = g.hy(), area = hx * hy;
  const double supp = k.r_supp;
  const int i0 = std::max(0, (int)std::floor((c.x - supp - g.x0) / hx));
  const int i1 = std::min(g.nx - 1, (int)std::ceil((c.x + supp - g.x0) / hx));
  const int j0 = std::max(0, (int)std::floor((c.y - supp - g.y0) / hy));
  const int j1 = std::min(g.ny - 1, (int)std::ceil((c.y + supp - g.y0) / hy));
  double raw = 0.0;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i)
      raw += k.eval(norm(g.cell_center(i, j) - c));
  raw *= area;
  if (raw <= 0.0) {
    const int ic = std::clamp((int)((c.x - g.x0) / hx), 0, g.nx - 1);
    const int jc = std::clamp((int)((c.y - g.y0) / hy), 0, g.ny - 1);
    g.at(ic, jc) += mass / area;
    return;
  }
  const double scale = mass / raw;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i)
      g.at(i, j) += scale * k.eval(norm(g.cell_center(i, j) - c));
}

// Face-index window covering [xmin, xmax] x [ymin, ymax], clamped. For
// x-faces: i indexes faces (0..nx), j indexes cells (0..ny-1); swap for y.
struct FaceBox {
  int i0, i1, j0, j1;
};
inline FaceBox xface_box(const GridSpec& s, double xmin, double xmax,
                         double ymin, double ymax) {
  return {std::max(0, (int)std::ceil((xmin - s.x0) / s.hx() - 1e-12)),
          std::min(s.nx, (int)std::floor((xmax - s.x0) / s.hx() + 1e-12)),
          std::max(0, (int)std::floor((ymin - s.y0) / s.hy())),
          std::min(s.ny - 1, (int)std::floor((ymax - s.y0) / s.hy()))};
}
inline FaceBox yface_box(const GridSpec& s, double xmin, double xmax,
                         double ymin, double ymax) {
  return {std::max(0, (int)std::floor((xmin - s.x0) / s.hx())),
          std::min(s.nx - 1, (int)std::floor((xmax - s.x0) / s.hx())),
          std::max(0, (int)std::ceil((ymin - s.y0) / s.hy() - 1e-12)),
          std::min(s.ny, (int)std::floor((ymax - s.y0) / s.hy() + 1e-12))};
}

}  // namespace detail

inline DyadicTree build_tree(const ScalarGrid& f, double eps,
                             const ExponentPack& ep,
                             const RadialKernel& kernel) {
  if (f.nx != f.ny || !detail::is_pow2(f.nx) || f.nx < 4)
    throw std::domain_error("build_tree: grid must be square, 2^k >= 4 cells");
  if (std::fabs(f.Lx - f.Ly) > 1e-12 * f.Lx)
    throw std::domain_error("build_tree: domain must be square");
  if (!(eps > 0.0)) throw std::domain_error("build_tree: eps must be > 0");
  if (ep.d != 2) throw std::domain_error("build_tree: d = 2 only");
  double neg = 0.0;
  for (double v : f.v) neg = std::min(neg, v);
  if (neg < -1e-12 * f.linf())
    throw std::domain_error("build_tree: f must be nonnegative");

  const int n = f.nx;
  const double area = f.hx() * f.hy();
  // summed-area table over cells: S(i, j) = sum over [0,i) x [0,j)
  std::vector<double> S((std::size_t)(n + 1) * (n + 1), 0.0);
  auto sat = [&](int i, int j) -> double& {
    return S[(std::size_t)j * (n + 1) + i];
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      sat(i + 1, j + 1) = std::max(f.at(i, j), 0.0) + sat(i, j + 1) +
                          sat(i + 1, j) - sat(i, j);
  auto cube_mass = [&](int i0, int i1, int j0, int j1) {
    const double m =
        sat(i1, j1) - sat(i0, j1) - sat(i1, j0) + sat(i0, j0);
    return std::max(m, 0.0) * area;
  };

  DyadicTree t;
  t.ep = ep;
  t.eps = eps;
  t.kernel = kernel;
  t.grid = f.spec();
  // deepest generation keeps 2 cells per cube side (4 cells per cube)
  int levels = 0;
  while ((n >> (levels + 1)) >= 2) ++levels;
  t.levels = levels;
  t.cubes.resize(DyadicTree::level_offset(levels + 1));

  const double L = f.Lx;
  for (int j = 0; j <= levels; ++j) {
    const int w = 1 << j;
    const int m = n >> j;  // cells per cube side
    const double side = L / w;
    for (int iy = 0; iy < w; ++iy)
      for (int ix = 0; ix < w; ++ix) {
        DyadicCube& q = t.cubes[t.index_of(j, ix, iy)];
        q.level = j;
        q.ix = ix;
        q.iy = iy;
        q.side = side;
        q.center = {f.x0 + (ix + 0.5) * side, f.y0 + (iy + 0.5) * side};
        q.theta = cube_mass(ix * m, (ix + 1) * m, iy * m, (iy + 1) * m);
        q.R = ep.ridge_radius(q.theta, eps);
        q.fits = q.R * kernel.r_supp <= 0.5 * side;
        if (j > 0)
          q.parent = t.index_of(j - 1, ix >> 1, iy >> 1);
        if (j < levels)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              q.child[2 * dy + dx] =
                  t.index_of(j + 1, 2 * ix + dx, 2 * iy + dy);
      }
  }

  // diffusion-level induction: admit the root if its kernel fits, then admit
  // a sibling quadruple only when every child fits its own cube
  t.root_admitted = t.cubes[0].fits;
  if (t.root_admitted) {
    t.cubes[0].admitted = true;
    t.diffusion.push_back(0);
  }
  for (std::size_t bf = 0; bf < t.diffusion.size(); ++bf) {
    const int qi = t.diffusion[bf];
    DyadicCube& q = t.cubes[qi];
    if (q.level == levels || !(q.theta > 0.0)) {
      q.minimal = true;
      q.truncated = q.level == levels && q.theta > 0.0;
      t.minimal.push_back(qi);
      continue;
    }
    bool all_fit = true;
    for (int ci : q.child) all_fit = all_fit && t.cubes[ci].fits;
    if (all_fit) {
      t.split.push_back(qi);
      for (int ci : q.child) {
        t.cubes[ci].admitted = true;
        t.diffusion.push_back(ci);
      }
    } else {
      q.minimal = true;
      t.minimal.push_back(qi);
    }
  }
  return t;
}

// Kernel and atomic approximations of f carried by the minimal cubes; with
// an empty diffusion level both fall back to the (grid-clipped, mass-exact)
// root kernel and atom.
inline std::pair<ScalarGrid, AtomicMeasure> lambda_eps(const DyadicTree& t) {
  ScalarGrid g(t.grid);
  AtomicMeasure a;
  auto put = [&](const DyadicCube& q) {
    if (!(q.theta > 0.0)) return;
    detail::splat_kernel(
        g, q.center, kernel_rescale(t.kernel, q.theta, t.eps, t.ep), q.theta);
    a.atoms.push_back({q.center, q.theta});
  };
  if (t.root_admitted)
    for (int qi : t.minimal) put(t.cubes[qi]);
  else
    put(t.cubes[0]);
  return {std::move(g), std::move(a)};
}

// Center-to-center transport graph over the admitted tree: one edge per
// admitted non-root cube with positive mass, tail at the child's center.
// graph_divergence of the result is the atomic approximation minus the root
// atom (tails count positive).
inline TransportGraph xia_field(const DyadicTree& t) {
  if (t.diffusion.empty())
    throw std::domain_error(
        "xia_field: empty diffusion level, use the oversized-kernel branch");
  TransportGraph g;
  std::vector<int> vertex(t.cubes.size(), -1);
  auto vid = [&](int qi) {
    if (vertex[qi] < 0) {
      vertex[qi] = (int)g.vertices.size();
      g.vertices.push_back(t.cubes[qi].center);
    }
    return vertex[qi];
  };
  for (int qi : t.split)
    for (int ci : t.cubes[qi].child) {
      const DyadicCube& c = t.cubes[ci];
      if (c.theta > 0.0) g.edges.push_back({vid(ci), vid(qi), c.theta});
    }
  return g;
}

// Max over stored cubes Q with positive mass of
//   sum over descendants Q' of theta_{Q'}^lam diam(Q')
// divided by theta_Q^lam diam(Q). Bounded by the geometric series
// 1 / (1 - 2^{d-1-lam d}) for any mass distribution.
inline double dyadic_sum_check(const DyadicTree& t, double lam) {
  const double lo = 1.0 - 1.0 / t.ep.d;
  if (!(lam > lo && lam <= 1.0))
    throw std::domain_error("dyadic_sum_check: need 1 - 1/d < lam <= 1");
  const double diag = std::sqrt(2.0);
  std::vector<double> s(t.cubes.size(), 0.0);
  double worst = 0.0;
  for (int qi = (int)t.cubes.size() - 1; qi >= 0; --qi) {
    const DyadicCube& q = t.cubes[qi];
    const double own =
        q.theta > 0.0 ? std::pow(q.theta, lam) * diag * q.side : 0.0;
    s[qi] = own;
    if (q.level < t.levels)
      for (int ci : q.child) s[qi] += s[ci];
    if (own > 0.0) worst = std::max(worst, s[qi] / own);
  }
  return worst;
}

// Tube along the segment from the cube's center (tail) to its parent's
// center (head), carrying mass theta_Q at kernel width R_Q. Face values are
// Gauss-3 averages of the exact kernel chord integrals, normalized by the
// sampled kernel mass so a cross-section integrates to theta_Q exactly; the
// continuum divergence is theta_Q (rho at the tail - rho at the head) / mass
// and the support stays within R_Q * r_supp of the segment.
inline GridField tube_field(const DyadicTree& t, int qi,
                            const RadialKernel& base, const GridSpec& gs) {
  const DyadicCube& q = t.cubes[qi];
  if (q.parent < 0) throw std::domain_error("tube_field: cube has no parent");
  if (!(q.theta > 0.0)) throw std::domain_error("tube_field: theta must be > 0");
  const RadialKernel k = kernel_rescale(base, q.theta, t.eps, t.ep);
  const double amp = q.theta / k.mass;
  const Vec2 a = q.center;
  const Vec2 b = t.cubes[q.parent].center;
  const double ell = norm(b - a);
  const Vec2 n = (1.0 / ell) * (b - a);
  const double supp = k.r_supp;

  // cumulative chord integral difference: the transverse profile of the tube
  auto chord = [&](Vec2 p) {
    const Vec2 r = p - a;
    const double s = dot(r, n);
    if (s <= -supp || s - ell >= supp) return 0.0;
    const double q2 = cross(n, r);
    if (std::fabs(q2) >= supp) return 0.0;
    return kernel_line_integral(k, s, q2) - kernel_line_integral(k, s - ell, q2);
  };

  GridField u(gs);
  const double xmin = std::min(a.x, b.x) - supp, xmax = std::max(a.x, b.x) + supp;
  const double ymin = std::min(a.y, b.y) - supp, ymax = std::max(a.y, b.y) + supp;
  if (n.x != 0.0) {
    const auto fb = detail::xface_box(gs, xmin, xmax, ymin, ymax);
    for (int j = fb.j0; j <= fb.j1; ++j)
      for (int i = fb.i0; i <= fb.i1; ++i) {
        const Vec2 p0{gs.x0 + i * gs.hx(), gs.y0 + j * gs.hy()};
        const Vec2 p1{p0.x, p0.y + gs.hy()};
        u.ux_at(i, j) = amp * n.x * detail::face_average(p0, p1, chord);
      }
  }
  if (n.y != 0.0) {
    const auto fb = detail::yface_box(gs, xmin, xmax, ymin, ymax);
    for (int j = fb.j0; j <= fb.j1; ++j)
      for (int i = fb.i0; i <= fb.i1; ++i) {
        const Vec2 p0{gs.x0 + i * gs.hx(), gs.y0 + j * gs.hy()};
        const Vec2 p1{p0.x + gs.hx(), p0.y};
        u.uy_at(i, j) = amp * n.y * detail::face_average(p0, p1, chord);
      }
  }
  return u;
}

// Sum over split cubes of the radial field W_Q on B_Q = supp rho_Q solving
// div W_Q = h_Q, where h_Q = rho_Q - sum of child kernels recentered at c_Q.
// h_Q has zero ball mean because the children's masses add up to theta_Q,
// so W_Q vanishes on (and outside) the ball boundary.
inline GridField node_correction(const DyadicTree& t, const GridSpec& gs) {
  GridField u(gs);
  if (t.split.empty()) return u;
  // One radial solve of the unit base kernel serves every node at every
  // scale: the field of the kernel rescaled by s is v(r/s)/s^d with the
  // scale-free tail C/r^d, so parent and child tails cancel at any mass
  // skew, where a shared quadrature grid would resolve them unevenly.
  const double Rbase = t.kernel.r_supp;
  const RadialField rf = radial_divsolve(
      [&](double r) { return t.kernel.eval(r); }, Rbase, 2048, 2, false);
  const double Ctail = rf.v.back() * Rbase * Rbase;
  for (int qi : t.split) {
    const DyadicCube& q = t.cubes[qi];
    if (!(q.theta > 0.0)) continue;
    // children far below the parent mass carry no usable kernel; fold their
    // mass into the siblings and leave the dust to the global residual pass
    std::vector<double> sc, mc;
    double kept = 0.0;
    for (int ci : q.child) {
      const DyadicCube& c = t.cubes[ci];
      if (c.theta > 1e-5 * q.theta) {
        sc.push_back(t.ep.ridge_radius(c.theta, t.eps));
        mc.push_back(c.theta);
        kept += c.theta;
      }
    }
    for (double& m : mc) m *= q.theta / kept;  // restore the zero ball mean
    const double sp = t.ep.ridge_radius(q.theta, t.eps);
    const double Rb = sp * Rbase;  // children kernels are narrower, they fit
    auto vker = [&](double r, double s) {
      const double x = r / s;
      return x < Rbase ? rf.eval(x) / (s * s) : Ctail / (r * r);
    };
    auto amp = [&](double r) {
      if (r >= Rb) return 0.0;  // tails cancel: the masses match
      double a = q.theta * vker(r, sp);
      for (std::size_t m = 0; m < mc.size(); ++m) a -= mc[m] * vker(r, sc[m]);
      return a / t.kernel.mass;  // same normalization as the tube fields
    };
    const Vec2 c = q.center;

    const auto xb = detail::xface_box(gs, c.x - Rb, c.x + Rb, c.y - Rb, c.y + Rb);
    for (int j = xb.j0; j <= xb.j1; ++j)
      for (int i = xb.i0; i <= xb.i1; ++i) {
        const Vec2 p0{gs.x0 + i * gs.hx(), gs.y0 + j * gs.hy()};
        const Vec2 p1{p0.x, p0.y + gs.hy()};
        u.ux_at(i, j) += detail::face_average(p0, p1, [&](Vec2 p) {
          return amp(norm(p - c)) * (p.x - c.x);
        });
      }
    const auto yb = detail::yface_box(gs, c.x - Rb, c.x + Rb, c.y - Rb, c.y + Rb);
    for (int j = yb.j0; j <= yb.j1; ++j)
      for (int i = yb.i0; i <= yb.i1; ++i) {
        const Vec2 p0{gs.x0 + i * gs.hx(), gs.y0 + j * gs.hy()};
        const Vec2 p1{p0.x + gs.hx(), p0.y};
        u.uy_at(i, j) += detail::face_average(p0, p1, [&](Vec2 p) {
          return amp(norm(p - c)) * (p.y - c.y);
        });
      }
  }
  return u;
}

// The certified local field: grid_divergence(u) = f - rho_root exactly (to
// solver precision), boundary faces zero. With an admitted root the field is
//   tubes - node corrections + per-minimal-cube Dirichlet fields + one
//   global Dirichlet pass on the rasterization residual;
// with an oversized root kernel it is a single Dirichlet solve on a grid
// enlarged (same spacing, powers of two) until the kernel fits with margin.
inline LocalResult assemble_local(const ScalarGrid& f, double eps,
                                  const ExponentPack& ep,
                                  const RadialKernel& kernel) {
  const DyadicTree t = build_tree(f, eps, ep, kernel);
  const GridSpec gs = f.spec();
  const double theta = t.root().theta;

  LocalCertificate cert;
  cert.theta = theta;
  cert.L = f.Lx;
  cert.eps = eps;
  for (int qi : t.diffusion)
    cert.depth = std::max(cert.depth, t.cubes[qi].level);
  for (int qi : t.minimal)
    if (t.cubes[qi].truncated) ++cert.truncated_cubes;

  if (!(theta > 0.0)) {  // nothing to transport
    cert.branch = "interior-kernel";
    return {GridField(gs), cert};
  }

  if (!t.root_admitted) {
    cert.branch = "oversized-kernel";
    const double supp = ep.ridge_radius(theta, eps) * kernel.r_supp;
    int grow = 1;
    while (0.5 * f.Lx * grow < supp + 2.0 * f.hx()) grow *= 2;
    if ((std::size_t)f.nx * grow > 4096)
      throw std::length_error("assemble_local: oversized kernel needs a grid beyond 4096^2");
    const int nb = f.nx * grow;
    const int off = (nb - f.nx) / 2;
    ScalarGrid big(nb, nb, f.Lx * grow, f.Ly * grow,
                   f.x0 - off * f.hx(), f.y0 - off * f.hy());
    for (int j = 0; j < f.ny; ++j)
      for (int i = 0; i < f.nx; ++i) big.at(i + off, j + off) = f.at(i, j);
    const double mass = big.integral();
    ScalarGrid rhs = big;
    detail::splat_kernel(rhs, t.root().center,
                         kernel_rescale(kernel, theta, eps, ep), -mass);
    DivsolveLog log;
    GridField u = dirichlet_divsolve(rhs, &log);
    cert.energy = malpha_eps(u, ep, eps, 0.0);
    cert.l1_norm = field_l1(u);
    cert.div_residual_linf = log.residual_linf;
    return {std::move(u), cert};
  }

  cert.branch = "interior-kernel";
  GridField u(gs);
  for (int qi : t.diffusion) {
    const DyadicCube& q = t.cubes[qi];
    if (q.parent >= 0 && q.theta > 0.0)
      u.axpy(1.0, tube_field(t, qi, kernel, gs));
  }
  u.axpy(-1.0, node_correction(t, gs));

  // per-minimal-cube Dirichlet fields: div = f - (kernel approximation),
  // supported strictly inside their cubes
  for (int qi : t.minimal) {
    const DyadicCube& q = t.cubes[qi];
    if (!(q.theta > 0.0)) continue;
    const int m = f.nx >> q.level;
    const int i0 = q.ix * m, j0 = q.iy * m;
    ScalarGrid sub(m, m, q.side, q.side, f.x0 + i0 * f.hx(),
                   f.y0 + j0 * f.hy());
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) sub.at(i, j) = f.at(i0 + i, j0 + j);
    const double mass = sub.integral();
    detail::splat_kernel(sub, q.center,
                         kernel_rescale(kernel, q.theta, t.eps, ep), -mass);
    // deep-tail cubes hold a single dominant cell the deposit cancels almost
    // exactly; the leftover is roundoff with no solvable balance, so leave
    // it to the global pass instead of feeding the solver an ill-posed rhs
    if (std::fabs(sub.integral()) > 1e-11 * sub.l1()) continue;
    const GridField us = dirichlet_divsolve(sub);
    for (int j = 0; j < m; ++j)
      for (int i = 0; i <= m; ++i)
        u.ux_at(i0 + i, j0 + j) += us.ux_at(i, j);
    for (int j = 0; j <= m; ++j)
      for (int i = 0; i < m; ++i)
        u.uy_at(i0 + i, j0 + j) += us.uy_at(i, j);
  }

  // target divergence f - rho_root, then one global pass on the residual
  ScalarGrid target = f;
  detail::splat_kernel(target, t.root().center,
                       kernel_rescale(kernel, theta, eps, ep), -f.integral());
  ScalarGrid resid = grid_divergence(u);
  for (std::size_t k = 0; k < resid.v.size(); ++k)
    resid.v[k] = target.v[k] - resid.v[k];
  // rasterization conserves mass only to roundoff; shift the residual to the
  // exactly balanced rhs the box solve needs (the shift lands in the
  // divergence certificate, and is noise-level whenever the tree is sane)
  const double shift = resid.integral() / (resid.Lx * resid.Ly);
  for (double& v : resid.v) v -= shift;
  u.axpy(1.0, dirichlet_divsolve(resid));

  const ScalarGrid after = grid_divergence(u);
  double rmax = 0.0;
  for (std::size_t k = 0; k < after.v.size(); ++k)
    rmax = std::max(rmax, std::fabs(after.v[k] - target.v[k]));
  cert.div_residual_linf = rmax;
  cert.energy = malpha_eps(u, ep, eps, 0.0);
  cert.l1_norm = field_l1(u);
  return {std::move(u), cert};
}

}  // namespace branchflow
