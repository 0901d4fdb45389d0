#pragma once
// Direct sparse solves for the two cell-centered Poisson operators used by
// the divergence solvers:
//   - Dirichlet: div(scalar_gradient(.)), ghost cells mirror with sign flip;
//   - grounded Neumann: div restricted to interior faces, cell 0 pinned.
// Factorizations are cached per (nx, ny, hx, hy, kind); solves add one step
// of iterative refinement so discrete residuals stay near machine level.

#include <Eigen/Sparse>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "core.hpp"

namespace branchflow {

enum class PoissonKind { dirichlet, grounded_neumann };

namespace detail {

using SpMat = Eigen::SparseMatrix<double>;
using Trip = Eigen::Triplet<double>;

// Assembles -div(grad .) so the matrix is positive definite.
inline SpMat assemble_poisson(int nx, int ny, double hx, double hy,
                              PoissonKind kind) {
  const double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy);
  const bool dirichlet = kind == PoissonKind::dirichlet;
  std::vector<Trip> t;
  t.reserve((std::size_t)5 * nx * ny);
  auto id = [nx](int i, int j) { return j * nx + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int k = id(i, j);
      double diag = 0.0;
      auto couple = [&](int i2, int j2, double a) {
        if (i2 >= 0 && i2 < nx && j2 >= 0 && j2 < ny) {
          diag += a;
          t.emplace_back(k, id(i2, j2), -a);
        } else if (dirichlet) {
          diag += 2.0 * a;  // ghost = -interior doubles the wall link
        }
      };
      couple(i - 1, j, ax);
      couple(i + 1, j, ax);
      couple(i, j - 1, ay);
      couple(i, j + 1, ay);
      t.emplace_back(k, k, diag);
    }
  SpMat A(nx * ny, nx * ny);
  A.setFromTriplets(t.begin(), t.end());
  if (!dirichlet) {
    // ground cell 0: clear its row/column, unit diagonal
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        if (it.row() == 0 || it.col() == 0)
          it.valueRef() = (it.row() == it.col()) ? 1.0 : 0.0;
    A.prune(0.0);
  }
  return A;
}

struct PoissonFactor {
  SpMat A;
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool grounded = false;
};

struct FactorKey {
  int nx, ny;
  std::uint64_t hx_bits, hy_bits;
  int kind;
  bool operator<(const FactorKey& o) const {
    return std::tie(nx, ny, hx_bits, hy_bits, kind) <
           std::tie(o.nx, o.ny, o.hx_bits, o.hy_bits, o.kind);
  }
};

inline std::uint64_t dbits(double x) {
  std::uint64_t b;
  std::memcpy(&b, &x, sizeof b);
  return b;
}

inline std::shared_ptr<PoissonFactor> poisson_factor(int nx, int ny,
                                                     double hx, double hy,
                                                     PoissonKind kind) {
  static std::map<FactorKey, std::shared_ptr<PoissonFactor>> cache;
  static std::mutex mu;
  const FactorKey key{nx, ny, dbits(hx), dbits(hy), (int)kind};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto f = std::make_shared<PoissonFactor>();
  f->A = assemble_poisson(nx, ny, hx, hy, kind);
  f->grounded = kind == PoissonKind::grounded_neumann;
  f->ldlt.compute(f->A);
  if (f->ldlt.info() != Eigen::Success)
    throw std::runtime_error("poisson: factorization failed");
  cache[key] = f;
  return f;
}

}  // namespace detail

// Solves -div(grad phi) = -rhs, i.e. the discrete Laplace problem
// div(grad phi) = rhs, for the requested operator. For the grounded
// operator the rhs must be compatible (sum zero); its mean is removed.
inline ScalarGrid poisson_solve(const ScalarGrid& rhs, PoissonKind kind) {
  const int n = rhs.nx * rhs.ny;
  auto f = detail::poisson_factor(rhs.nx, rhs.ny, rhs.hx(), rhs.hy(), kind);
  Eigen::VectorXd b(n);
  for (int k = 0; k < n; ++k) b[k] = -rhs.v[k];
  if (f->grounded) {
    const double mean = b.sum() / n;
    b.array() -= mean;
    b[0] = 0.0;
  }
  Eigen::VectorXd x = f->ldlt.solve(b);
  for (int pass = 0; pass < 2; ++pass) {
    Eigen::VectorXd r = b - f->A * x;
    if (f->grounded) r[0] = 0.0;
    x += f->ldlt.solve(r);
  }
  ScalarGrid phi(rhs.nx, rhs.ny, rhs.Lx, rhs.Ly, rhs.x0, rhs.y0);
  for (int k = 0; k < n; ++k) phi.v[k] = x[k];
  return phi;
}

}  // namespace branchflow
