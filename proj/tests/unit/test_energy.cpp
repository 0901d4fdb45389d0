#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "branchflow/energy.hpp"

using namespace branchflow;

TEST_CASE("graph energy evaluates the Gilbert cost", "[energy]") {
  TransportGraph g;
  g.vertices = {{0, 0}, {1, 0}, {3, 0}, {3, 2}};
  g.edges = {{0, 1, 1.0}};
  CHECK(malpha_graph(g, 0.7) == Catch::Approx(1.0).epsilon(1e-14));

  g.edges = {{0, 1, 0.5}, {2, 3, 0.25}};
  CHECK(malpha_graph(g, 0.5) ==
        Catch::Approx(std::sqrt(0.5) + 2.0 * 0.5).epsilon(1e-13));
}

TEST_CASE("collinear overlaps merge with signed multiplicity", "[energy]") {
  TransportGraph g;
  g.vertices = {{0, 0}, {2, 0}, {1, 0}, {3, 0}};
  // same segment twice: masses add before the power
  g.edges = {{0, 1, 0.3}, {0, 1, 0.2}};
  CHECK(malpha_graph(g, 0.6) ==
        Catch::Approx(2.0 * std::pow(0.5, 0.6)).epsilon(1e-12));
  // opposite orientations cancel
  g.edges = {{0, 1, 1.0}, {1, 0, 1.0}};
  CHECK(malpha_graph(g, 0.6) == Catch::Approx(0.0).margin(1e-13));
  // partial overlap [0,2] + [1,3]: pieces of mass 1, 2, 1
  g.edges = {{0, 1, 1.0}, {2, 3, 1.0}};
  const double a = 0.75;
  CHECK(malpha_graph(g, a) ==
        Catch::Approx(2.0 + std::pow(2.0, a)).epsilon(1e-12));
}

TEST_CASE("best Y beats the V for subunit alpha", "[energy]") {
  const double alpha = 0.6;
  const Vec2 s1{-0.5, 1.0}, s2{0.5, 1.0}, sink{0.0, 0.0};
  auto v_energy = [&] {
    TransportGraph g;
    g.vertices = {s1, s2, sink};
    g.edges = {{0, 2, 0.5}, {1, 2, 0.5}};
    return malpha_graph(g, alpha);
  }();
  CHECK(v_energy == Catch::Approx(2.0 * std::pow(0.5, alpha) *
                                  std::sqrt(1.25)).epsilon(1e-12));

  auto y_energy = [&](double h) {
    TransportGraph g;
    g.vertices = {s1, s2, {0.0, h}, sink};
    g.edges = {{0, 2, 0.5}, {1, 2, 0.5}, {2, 3, 1.0}};
    return malpha_graph(g, alpha);
  };
  // golden-section on the branch height
  double lo = 0.0, hi = 1.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = y_energy(x1), f2 = y_energy(x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = y_energy(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = y_energy(x2);
    }
  }
  const double y_best = std::min(f1, f2);
  CHECK(y_best < v_energy);
  CHECK(v_energy == Catch::Approx(1.4754).margin(5e-4));
  CHECK(y_best == Catch::Approx(1.43053).margin(5e-4));
}

TEST_CASE("phase-field energy on trivial fields", "[energy]") {
  ExponentPack ep(0.75, 2);
  GridField u(16, 16, 1.0, 1.0);
  auto e0 = malpha_eps(u, ep, 0.3, 0.0);
  CHECK(e0.lower_order == 0.0);
  CHECK(e0.dirichlet == 0.0);
  CHECK(e0.total == 0.0);

  for (auto& v : u.ux) v = 1.0;
  auto e1 = malpha_eps(u, ep, 1.0, 0.0);
  CHECK(e1.lower_order == Catch::Approx(1.0).epsilon(1e-14));
  CHECK(e1.dirichlet == 0.0);

  CHECK_THROWS_AS(malpha_eps(u, ep, 0.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(malpha_eps(u, ep, 1.0, -1.0), std::domain_error);
}

TEST_CASE("windows partition the lower term and lose only seam links",
          "[energy]") {
  ExponentPack ep(0.8, 2);
  GridField u(20, 12, 1.0, 0.6);
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uu(-1.0, 1.0);
  for (auto& v : u.ux) v = uu(rng);
  for (auto& v : u.uy) v = uu(rng);
  const double eps = 0.2, delta = 1e-3;
  auto whole = malpha_eps(u, ep, eps, delta);

  const int ci = 8, cj = 5;
  RectWindow ws[4] = {{0, 0, ci, cj},
                      {ci, 0, u.nx, cj},
                      {0, cj, ci, u.ny},
                      {ci, cj, u.nx, u.ny}};
  double lo = 0.0, dir = 0.0;
  for (const auto& w : ws) {
    auto e = malpha_eps(u, ep, eps, delta, &w);
    lo += e.lower_order;
    dir += e.dirichlet;
  }
  CHECK(lo == Catch::Approx(whole.lower_order).epsilon(1e-12));
  CHECK(dir <= whole.dirichlet * (1.0 + 1e-12));

  // the gap is exactly the seam links: vertical-difference links on the seam
  // column / row that no quadrant owns
  const double area = u.hx() * u.hy();
  double seam = 0.0;
  {
    const double ay = 1.0 / (u.hy() * u.hy());
    for (int j = 0; j + 1 < u.ny; ++j) {
      const double d = u.ux_at(ci, j + 1) - u.ux_at(ci, j);
      seam += d * d * ay * area;
    }
    for (int i = 0; i <= u.nx; ++i) {
      if (i == ci) continue;  // already counted above
      const double d = u.ux_at(i, cj) - u.ux_at(i, cj - 1);
      seam += d * d * ay * area;
    }
    const double ax = 1.0 / (u.hx() * u.hx());
    for (int i = 0; i + 1 < u.nx; ++i) {
      const double d = u.uy_at(i + 1, cj) - u.uy_at(i, cj);
      seam += d * d * ax * area;
    }
    for (int j = 0; j <= u.ny; ++j) {
      if (j == cj) continue;
      const double d = u.uy_at(ci, j) - u.uy_at(ci - 1, j);
      seam += d * d * ax * area;
    }
  }
  CHECK(whole.dirichlet - dir ==
        Catch::Approx(seam * std::pow(eps, ep.gamma2)).epsilon(1e-10));
}

TEST_CASE("energy is monotone in the smoothing and 2-subadditive",
          "[energy]") {
  ExponentPack ep(0.75, 2);
  GridField u1(12, 12, 1.0, 1.0), u2(12, 12, 1.0, 1.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uu(-1.0, 1.0);
  for (auto& v : u1.ux) v = uu(rng);
  for (auto& v : u1.uy) v = uu(rng);
  for (auto& v : u2.ux) v = uu(rng);
  for (auto& v : u2.uy) v = uu(rng);
  const double eps = 0.5;
  CHECK(malpha_eps(u1, ep, eps, 0.0).lower_order <=
        malpha_eps(u1, ep, eps, 1e-2).lower_order);

  GridField s = u1;
  s.axpy(1.0, u2);
  const double lhs = malpha_eps(s, ep, eps, 0.0).total;
  const double rhs = 2.0 * (malpha_eps(u1, ep, eps, 0.0).total +
                            malpha_eps(u2, ep, eps, 0.0).total);
  CHECK(lhs <= rhs * (1.0 + 1e-12));
}

TEST_CASE("gradient matches central finite differences", "[energy]") {
  ExponentPack ep(0.75, 2);
  GridField u(10, 8, 1.0, 0.8);
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> uu(-1.0, 1.0);
  for (auto& v : u.ux) v = uu(rng);
  for (auto& v : u.uy) v = uu(rng);
  const double eps = 0.4, delta = 0.05;
  auto g = malpha_eps_gradient(u, ep, eps, delta);

  GridField h(10, 8, 1.0, 0.8);
  for (auto& v : h.ux) v = uu(rng);
  for (auto& v : h.uy) v = uu(rng);
  const double t = 1e-6;
  GridField up = u, um = u;
  up.axpy(t, h);
  um.axpy(-t, h);
  const double fd = (malpha_eps(up, ep, eps, delta).total -
                     malpha_eps(um, ep, eps, delta).total) /
                    (2.0 * t);
  const double pred = field_dot(g, h);
  CHECK(std::fabs(pred - fd) <= 1e-5 * std::max(1.0, std::fabs(fd)));

  CHECK_THROWS_AS(malpha_eps_gradient(u, ep, eps, 0.0), std::domain_error);
}

TEST_CASE("constant fields see only the lower-order gradient", "[energy]") {
  ExponentPack ep(0.75, 2);
  GridField u(8, 8, 1.0, 1.0);
  for (auto& v : u.ux) v = 0.7;
  const double eps = 0.9, delta = 0.02;
  auto g = malpha_eps_gradient(u, ep, eps, delta);
  const double m2 = 0.7 * 0.7 + delta * delta;
  const double want =
      std::pow(eps, -ep.gamma1) * ep.beta * std::pow(m2, 0.5 * ep.beta - 1.0) *
      0.7;
  for (int j = 0; j < u.ny; ++j)
    for (int i = 1; i < u.nx; ++i)
      CHECK(g.ux_at(i, j) == Catch::Approx(want).epsilon(1e-12));
  for (int j = 0; j <= u.ny; ++j)
    for (int i = 0; i < u.nx; ++i)
      CHECK(g.uy_at(i, j) == Catch::Approx(0.0).margin(1e-15));
}