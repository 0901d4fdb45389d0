#pragma once
// Core vocabulary: exponent algebra of the phase-field energy, atomic
// measures, transport graphs, staggered (MAC) grids and the discrete
// calculus on them.
//
// Grid conventions, used everywhere downstream:
//   - cells (i,j), i in [0,nx), j in [0,ny), center ((i+.5)hx, (j+.5)hy),
//     row-major storage idx = j*nx + i;
//   - ux lives on vertical faces, (nx+1) x ny, position (i*hx, (j+.5)hy);
//   - uy lives on horizontal faces, nx x (ny+1), position ((i+.5)hx, j*hy);
//   - div u | cell (i,j) = (ux[i+1,j]-ux[i,j])/hx + (uy[i,j+1]-uy[i,j])/hy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace branchflow {

// ---------------------------------------------------------------- exponents

// All derived exponents of the energy family in dimension d. The admissible
// range 1 - 1/d < alpha < 1 keeps beta in (0,1) and gamma in (1/2, 2/3)
// when d = 2.
struct ExponentPack {
  double alpha = 0.0;
  int d = 2;
  double beta = 0.0;    // exponent of the lower-order term
  double gamma1 = 0.0;  // eps^{-gamma1} prefactor
  double gamma2 = 0.0;  // eps^{+gamma2} prefactor
  double gamma = 0.0;   // ridge-width exponent

  ExponentPack() = default;
  ExponentPack(double alpha_, int d_ = 2) : alpha(alpha_), d(d_) {
    if (d < 2)
      throw std::domain_error("ExponentPack: requires d >= 2, got d = " +
                              std::to_string(d));
    const double lo = 1.0 - 1.0 / d;
    if (!(alpha > lo && alpha < 1.0))
      throw std::domain_error(
          "ExponentPack: requires 1 - 1/d < alpha < 1, got alpha = " +
          std::to_string(alpha) + " with d = " + std::to_string(d));
    beta = (2.0 - 2.0 * d + 2.0 * alpha * d) / (3.0 - d + alpha * (d - 1.0));
    gamma1 = (d - 1.0) * (1.0 - alpha);
    gamma2 = 3.0 - d + alpha * (d - 1.0);
    const double g_width = 2.0 / (2.0 * d - beta * (d - 1.0));
    const double g_ratio = gamma2 / (d + 1.0);
    if (std::fabs(g_width - g_ratio) > 1e-12)
      throw std::logic_error("ExponentPack: gamma identities disagree");
    gamma = g_ratio;
  }

  // Width of the optimal ridge for flux theta at parameter eps.
  double ridge_radius(double theta, double eps) const {
    if (theta <= 0.0) return 0.0;
    return std::pow(eps, gamma) * std::pow(theta, (1.0 - gamma) / (d - 1.0));
  }
};

// ------------------------------------------------------------------- points

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// ---------------------------------------------------------- atomic measures

struct Atom {
  Vec2 p;
  double mass = 0.0;  // signed
};

struct AtomicMeasure {
  std::vector<Atom> atoms;

  double total_mass() const {
    double s = 0.0;
    for (const auto& a : atoms) s += a.mass;
    return s;
  }
  double total_variation() const {
    double s = 0.0;
    for (const auto& a : atoms) s += std::fabs(a.mass);
    return s;
  }
  AtomicMeasure positive_part() const {
    AtomicMeasure r;
    for (const auto& a : atoms)
      if (a.mass > 0.0) r.atoms.push_back(a);
    return r;
  }
  AtomicMeasure negative_part() const {  // returned with positive masses
    AtomicMeasure r;
    for (const auto& a : atoms)
      if (a.mass < 0.0) r.atoms.push_back({a.p, -a.mass});
    return r;
  }
  // Diameter of the support's bounding box.
  double bbox_diameter() const {
    if (atoms.empty()) return 0.0;
    double x0 = atoms[0].p.x, x1 = x0, y0 = atoms[0].p.y, y1 = y0;
    for (const auto& a : atoms) {
      x0 = std::min(x0, a.p.x);
      x1 = std::max(x1, a.p.x);
      y0 = std::min(y0, a.p.y);
      y1 = std::max(y1, a.p.y);
    }
    return std::hypot(x1 - x0, y1 - y0);
  }
};

// Merges atoms closer than tol (default 1e-9 * bounding diameter) at the
// mass-weighted centroid; atoms whose merged mass cancels below
// 1e-12 * total variation are dropped.
inline AtomicMeasure merged(const AtomicMeasure& m, double tol = -1.0) {
  if (m.atoms.empty()) return m;
  if (tol < 0.0) tol = 1e-9 * m.bbox_diameter();
  const double tv = m.total_variation();
  std::vector<Atom> out;
  std::vector<double> absmass;  // accumulated |mass| for centroid weights
  for (const auto& a : m.atoms) {
    bool placed = false;
    for (std::size_t k = 0; k < out.size(); ++k) {
      if (norm(out[k].p - a.p) <= tol) {
        const double wa = std::fabs(a.mass);
        const double w = absmass[k] + wa;
        if (w > 0.0)
          out[k].p = (1.0 / w) * (absmass[k] * out[k].p + wa * a.p);
        out[k].mass += a.mass;
        absmass[k] = w;
        placed = true;
        break;
      }
    }
    if (!placed) {
      out.push_back(a);
      absmass.push_back(std::fabs(a.mass));
    }
  }
  AtomicMeasure r;
  for (const auto& a : out)
    if (std::fabs(a.mass) > 1e-12 * tv) r.atoms.push_back(a);
  return r;
}

// --------------------------------------------------------- transport graphs

struct GraphEdge {
  int a = 0, b = 0;    // tail, head vertex index
  double mass = 0.0;   // multiplicity, >= 0
};

struct TransportGraph {
  std::vector<Vec2> vertices;
  std::vector<GraphEdge> edges;

  void validate() const {
    for (const auto& e : edges) {
      if (e.a < 0 || e.b < 0 || e.a >= (int)vertices.size() ||
          e.b >= (int)vertices.size())
        throw std::domain_error("TransportGraph: edge endpoint out of range");
      if (e.mass < 0.0)
        throw std::domain_error("TransportGraph: negative edge mass");
      if (norm(vertices[e.a] - vertices[e.b]) == 0.0)
        throw std::domain_error("TransportGraph: zero-length edge");
    }
  }
  double total_length_mass() const {  // sum_i l_i * m_i
    double s = 0.0;
    for (const auto& e : edges)
      s += e.mass * norm(vertices[e.a] - vertices[e.b]);
    return s;
  }
};

// Net vertex masses of the flow: + at the tail, - at the head of each edge.
// Balanced interior vertices cancel exactly and are dropped.
inline AtomicMeasure graph_divergence(const TransportGraph& g) {
  g.validate();
  std::vector<double> net(g.vertices.size(), 0.0);
  double tv = 0.0;
  for (const auto& e : g.edges) {
    net[e.a] += e.mass;
    net[e.b] -= e.mass;
    tv += std::fabs(e.mass);
  }
  AtomicMeasure r;
  for (std::size_t i = 0; i < net.size(); ++i)
    if (std::fabs(net[i]) > 1e-12 * (tv + 1e-300))
      r.atoms.push_back({g.vertices[i], net[i]});
  return r;
}

// ------------------------------------------------------------------- grids

// Cheap geometry-only description used when a caller must build fields or
// densities with matching layout.
struct GridSpec {
  int nx = 0, ny = 0;
  double Lx = 0.0, Ly = 0.0;
  double x0 = 0.0, y0 = 0.0;
  double hx() const { return Lx / nx; }
  double hy() const { return Ly / ny; }
};

struct ScalarGrid {
  int nx = 0, ny = 0;
  double Lx = 0.0, Ly = 0.0;
  double x0 = 0.0, y0 = 0.0;  // anchor; (0,0) for serialized grids
  std::vector<double> v;

  ScalarGrid() = default;
  ScalarGrid(int nx_, int ny_, double Lx_, double Ly_, double x0_ = 0.0,
             double y0_ = 0.0)
      : nx(nx_), ny(ny_), Lx(Lx_), Ly(Ly_), x0(x0_), y0(y0_) {
    if (nx <= 0 || ny <= 0 || Lx <= 0.0 || Ly <= 0.0)
      throw std::domain_error("ScalarGrid: nonpositive size");
    v.assign((std::size_t)nx * ny, 0.0);
  }
  explicit ScalarGrid(const GridSpec& s)
      : ScalarGrid(s.nx, s.ny, s.Lx, s.Ly, s.x0, s.y0) {}
  GridSpec spec() const { return {nx, ny, Lx, Ly, x0, y0}; }
  double hx() const { return Lx / nx; }
  double hy() const { return Ly / ny; }
  std::size_t idx(int i, int j) const { return (std::size_t)j * nx + i; }
  double& at(int i, int j) { return v[idx(i, j)]; }
  double at(int i, int j) const { return v[idx(i, j)]; }
  Vec2 cell_center(int i, int j) const {
    return {x0 + (i + 0.5) * hx(), y0 + (j + 0.5) * hy()};
  }
  double cell_area() const { return hx() * hy(); }

  double integral() const {
    double s = 0.0;
    for (double a : v) s += a;
    return s * cell_area();
  }
  double l1() const {
    double s = 0.0;
    for (double a : v) s += std::fabs(a);
    return s * cell_area();
  }
  double l2sq() const {
    double s = 0.0;
    for (double a : v) s += a * a;
    return s * cell_area();
  }
  double linf() const {
    double s = 0.0;
    for (double a : v) s = std::max(s, std::fabs(a));
    return s;
  }
};

struct GridField {
  int nx = 0, ny = 0;
  double Lx = 0.0, Ly = 0.0;
  double x0 = 0.0, y0 = 0.0;
  std::vector<double> ux;  // (nx+1) x ny
  std::vector<double> uy;  // nx x (ny+1)

  GridField() = default;
  GridField(int nx_, int ny_, double Lx_, double Ly_, double x0_ = 0.0,
            double y0_ = 0.0)
      : nx(nx_), ny(ny_), Lx(Lx_), Ly(Ly_), x0(x0_), y0(y0_) {
    if (nx <= 0 || ny <= 0 || Lx <= 0.0 || Ly <= 0.0)
      throw std::domain_error("GridField: nonpositive size");
    ux.assign((std::size_t)(nx + 1) * ny, 0.0);
    uy.assign((std::size_t)nx * (ny + 1), 0.0);
  }
  explicit GridField(const GridSpec& s)
      : GridField(s.nx, s.ny, s.Lx, s.Ly, s.x0, s.y0) {}
  GridSpec spec() const { return {nx, ny, Lx, Ly, x0, y0}; }
  double hx() const { return Lx / nx; }
  double hy() const { return Ly / ny; }
  std::size_t xidx(int i, int j) const { return (std::size_t)j * (nx + 1) + i; }
  std::size_t yidx(int i, int j) const { return (std::size_t)j * nx + i; }
  double& ux_at(int i, int j) { return ux[xidx(i, j)]; }
  double ux_at(int i, int j) const { return ux[xidx(i, j)]; }
  double& uy_at(int i, int j) { return uy[yidx(i, j)]; }
  double uy_at(int i, int j) const { return uy[yidx(i, j)]; }
  Vec2 xface_center(int i, int j) const {
    return {x0 + i * hx(), y0 + (j + 0.5) * hy()};
  }
  Vec2 yface_center(int i, int j) const {
    return {x0 + (i + 0.5) * hx(), y0 + j * hy()};
  }
  // Cell-centered components by face averaging.
  double cx(int i, int j) const {
    return 0.5 * (ux[xidx(i, j)] + ux[xidx(i + 1, j)]);
  }
  double cy(int i, int j) const {
    return 0.5 * (uy[yidx(i, j)] + uy[yidx(i, j + 1)]);
  }

  GridField& axpy(double s, const GridField& o) {
    for (std::size_t k = 0; k < ux.size(); ++k) ux[k] += s * o.ux[k];
    for (std::size_t k = 0; k < uy.size(); ++k) uy[k] += s * o.uy[k];
    return *this;
  }
  GridField& scale(double s) {
    for (auto& a : ux) a *= s;
    for (auto& a : uy) a *= s;
    return *this;
  }
};

inline void require_same_layout(const GridField& a, const GridField& b,
                                const char* who) {
  if (a.nx != b.nx || a.ny != b.ny || a.Lx != b.Lx || a.Ly != b.Ly)
    throw std::invalid_argument(std::string(who) + ": layout mismatch");
}

// -------------------------------------------------------- discrete calculus

inline ScalarGrid grid_divergence(const GridField& u) {
  ScalarGrid d(u.nx, u.ny, u.Lx, u.Ly, u.x0, u.y0);
  const double ihx = 1.0 / u.hx(), ihy = 1.0 / u.hy();
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i)
      d.at(i, j) = (u.ux_at(i + 1, j) - u.ux_at(i, j)) * ihx +
                   (u.uy_at(i, j + 1) - u.uy_at(i, j)) * ihy;
  return d;
}

// Face gradient of a cell scalar with homogeneous Dirichlet ghosts
// (ghost = -adjacent, so the wall value is zero). grid_divergence of the
// result is exactly the 5-point Dirichlet Laplacian used by the Poisson
// solver.
inline GridField scalar_gradient(const ScalarGrid& p) {
  GridField g(p.nx, p.ny, p.Lx, p.Ly, p.x0, p.y0);
  const double ihx = 1.0 / p.hx(), ihy = 1.0 / p.hy();
  for (int j = 0; j < p.ny; ++j) {
    g.ux_at(0, j) = 2.0 * p.at(0, j) * ihx;
    for (int i = 1; i < p.nx; ++i)
      g.ux_at(i, j) = (p.at(i, j) - p.at(i - 1, j)) * ihx;
    g.ux_at(p.nx, j) = -2.0 * p.at(p.nx - 1, j) * ihx;
  }
  for (int i = 0; i < p.nx; ++i) {
    g.uy_at(i, 0) = 2.0 * p.at(i, 0) * ihy;
    for (int j = 1; j < p.ny; ++j)
      g.uy_at(i, j) = (p.at(i, j) - p.at(i, j - 1)) * ihy;
    g.uy_at(i, p.ny) = -2.0 * p.at(i, p.ny - 1) * ihy;
  }
  return g;
}

// Midpoint approximation of the integral of |u|^p over the domain
// (cell-centered interpolation); p = infinity gives the max.
inline double field_norms(const GridField& u, double p) {
  double s = 0.0;
  const bool inf = !std::isfinite(p);
  for (int j = 0; j < u.ny; ++j)
    for (int i = 0; i < u.nx; ++i) {
      const double m = std::hypot(u.cx(i, j), u.cy(i, j));
      if (inf)
        s = std::max(s, m);
      else
        s += std::pow(m, p);
    }
  return inf ? s : s * u.hx() * u.hy();
}

inline double field_l1(const GridField& u) { return field_norms(u, 1.0); }

// ------------------------------------------------------------------- misc

struct RectWindow {  // half-open cell-index rectangle
  int i0 = 0, j0 = 0, i1 = 0, j1 = 0;
};

inline RectWindow full_window(const GridField& u) {
  return {0, 0, u.nx, u.ny};
}

}  // namespace branchflow
