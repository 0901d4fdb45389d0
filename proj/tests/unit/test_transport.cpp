#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "branchflow/transport.hpp"

using namespace branchflow;

namespace {
const double kAlpha = 0.75;
const double kBeta = 4.0 / 7.0;  // beta of (alpha, d) = (3/4, 2)

const RadialKernel& shared_kernel() {
  static RadialKernel k = kernel_from_profile(profile_cache(kBeta));
  return k;
}
ExponentPack pack() { return ExponentPack(kAlpha, 2); }

// unit-mass Gaussian bump, normalized on the discrete grid
ScalarGrid unit_bump(int n, double L, Vec2 c, double s) {
  ScalarGrid f(n, n, L, L);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const Vec2 p = f.cell_center(i, j);
      const double dx = p.x - c.x, dy = p.y - c.y;
      f.at(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
    }
  const double fac = 1.0 / f.integral();
  for (double& v : f.v) v *= fac;
  return f;
}

AtomicMeasure diracs(std::vector<Atom> atoms) {
  AtomicMeasure m;
  m.atoms = std::move(atoms);
  return m;
}

// k atoms at uniform positions whose masses sum to exactly `total`
AtomicMeasure random_measure(std::mt19937_64& rng, int k, double total) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  AtomicMeasure m;
  std::vector<double> w(k);
  double s = 0.0;
  for (double& v : w) s += v = 0.1 + U(rng);
  double left = total;
  for (int i = 0; i < k; ++i) {
    const double mass = i + 1 == k ? left : total * w[i] / s;
    left -= mass;
    m.atoms.push_back({{U(rng), U(rng)}, mass});
  }
  return m;
}

double brute_w_permutations(const std::vector<Vec2>& xs,
                            const std::vector<Vec2>& ys, double mass,
                            double p) {
  std::vector<int> perm(ys.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (int)i;
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      c += mass * std::pow(norm(xs[i] - ys[perm[i]]), p);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best, 1.0 / p);
}

bool same_atoms(const AtomicMeasure& a, const AtomicMeasure& b, double tolp,
                double tolm) {
  if (a.atoms.size() != b.atoms.size()) return false;
  std::vector<char> used(b.atoms.size(), 0);
  for (const auto& x : a.atoms) {
    bool hit = false;
    for (std::size_t k = 0; k < b.atoms.size(); ++k) {
      if (used[k]) continue;
      if (norm(x.p - b.atoms[k].p) <= tolp &&
          std::fabs(x.mass - b.atoms[k].mass) <= tolm) {
        used[k] = 1;
        hit = true;
        break;
      }
    }
    if (!hit) return false;
  }
  return true;
}
}  // namespace

TEST_CASE("grid atoms preserve mass and first moment", "[transport]") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ScalarGrid f(64, 64, 1.0, 1.0);
  for (double& v : f.v) v = U(rng) < 0.3 ? U(rng) : 0.0;
  const double area = f.hx() * f.hy();
  double mass_ref = 0.0;
  Vec2 mom_ref{0.0, 0.0};
  for (int j = 0; j < 64; ++j)
    for (int i = 0; i < 64; ++i) {
      mass_ref += f.at(i, j) * area;
      mom_ref = mom_ref + (f.at(i, j) * area) * f.cell_center(i, j);
    }

  for (int cap : {5000, 200, 50, 1}) {
    const auto ag = atoms_from_grid(f, cap);
    REQUIRE((int)ag.atoms.size() <= cap);
    double mass = 0.0;
    Vec2 mom{0.0, 0.0};
    for (const auto& a : ag.atoms) {
      CHECK(a.mass > 0.0);
      CHECK(a.i1 - a.i0 <= ag.block);
      CHECK(a.j1 - a.j0 <= ag.block);
      mass += a.mass;
      mom = mom + a.mass * a.p;
    }
    CHECK(mass == Catch::Approx(mass_ref).epsilon(1e-13));
    CHECK(mom.x == Catch::Approx(mom_ref.x).epsilon(1e-12));
    CHECK(mom.y == Catch::Approx(mom_ref.y).epsilon(1e-12));
  }

  // cap 1 degenerates to the global centroid
  const auto one = atoms_from_grid(f, 1);
  REQUIRE(one.atoms.size() == 1);
  CHECK(one.atoms[0].p.x == Catch::Approx(mom_ref.x / mass_ref).epsilon(1e-12));
  CHECK(one.atoms[0].p.y == Catch::Approx(mom_ref.y / mass_ref).epsilon(1e-12));

  // a fine enough cap keeps one atom per occupied cell, at the cell center
  const auto fine = atoms_from_grid(f, 64 * 64);
  REQUIRE(fine.block == 1);
  for (const auto& a : fine.atoms) {
    CHECK(a.i1 == a.i0 + 1);
    CHECK(norm(a.p - f.cell_center(a.i0, a.j0)) < 1e-15);
  }

  CHECK_THROWS_AS(atoms_from_grid(f, 0), std::domain_error);
}

TEST_CASE("wasserstein handles degenerate configurations", "[transport]") {
  const Vec2 a{0.2, 0.3}, b{0.9, 0.8};
  const double d = norm(a - b);

  for (double p : {1.0, 1.5, 2.0}) {
    // identical measures transport nothing
    const auto mu = diracs({{a, 0.4}, {b, 0.6}});
    CHECK(wasserstein(mu, mu, p).first == 0.0);

    // a single pair costs (mass d^p)^(1/p)
    const auto [w, plan] =
        wasserstein(diracs({{a, 0.7}}), diracs({{b, 0.7}}), p);
    CHECK(w == Catch::Approx(std::pow(0.7, 1.0 / p) * d).epsilon(1e-12));
    REQUIRE(plan.pairs.size() == 1);
    CHECK(plan.pairs[0].mass == Catch::Approx(0.7).epsilon(1e-15));
  }

  // zero-mass atoms are ignored, plan indices refer to the unfiltered inputs
  const auto [w, plan] = wasserstein(diracs({{a, 0.7}, {b, 0.0}}),
                                     diracs({{a, 0.0}, {b, 0.7}}), 1.0);
  CHECK(w == Catch::Approx(0.7 * d).epsilon(1e-12));
  REQUIRE(plan.pairs.size() == 1);
  CHECK(plan.pairs[0].src == 0);
  CHECK(plan.pairs[0].dst == 1);

  // an empty problem is free
  CHECK(wasserstein(AtomicMeasure{}, AtomicMeasure{}, 2.0).first == 0.0);

  CHECK_THROWS_AS(wasserstein(diracs({{a, 1.0}}), diracs({{b, 0.5}}), 1.0),
                  std::domain_error);
  CHECK_THROWS_AS(wasserstein(diracs({{a, 1.0}}), diracs({{b, 1.0}}), 0.0),
                  std::domain_error);
  AtomicMeasure big_src, big_dst;
  for (int i = 0; i < 201; ++i) big_src.atoms.push_back({{i * 1e-3, 0.0}, 1.0});
  for (int i = 0; i < 200; ++i)
    big_dst.atoms.push_back({{i * 1e-3, 1.0}, 201.0 / 200.0});
  CHECK_THROWS_AS(wasserstein(big_src, big_dst, 1.0), std::length_error);
}

TEST_CASE("wasserstein matches brute force optima", "[transport]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  // equal masses: the optimum is an assignment, enumerable by permutations
  for (int seed = 0; seed < 20; ++seed) {
    std::vector<Vec2> xs(3), ys(3);
    for (auto& q : xs) q = {U(rng), U(rng)};
    for (auto& q : ys) q = {U(rng), U(rng)};
    AtomicMeasure mp, mm;
    for (const auto& q : xs) mp.atoms.push_back({q, 1.0 / 3.0});
    for (const auto& q : ys) mm.atoms.push_back({q, 1.0 / 3.0});
    for (double p : {1.0, 2.0}) {
      const auto [w, plan] = wasserstein(mp, mm, p);
      CHECK(w ==
            Catch::Approx(brute_w_permutations(xs, ys, 1.0 / 3.0, p))
                .epsilon(1e-12));
      // marginals of the plan reproduce the inputs
      std::vector<double> out(3, 0.0), in(3, 0.0);
      for (const auto& q : plan.pairs) {
        REQUIRE(q.src >= 0);
        REQUIRE(q.src < 3);
        REQUIRE(q.dst >= 0);
        REQUIRE(q.dst < 3);
        out[q.src] += q.mass;
        in[q.dst] += q.mass;
      }
      for (int i = 0; i < 3; ++i) {
        CHECK(out[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
        CHECK(in[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
      }
    }
  }

  // 2x2 with unequal masses: cost is linear in the single free flow, so the
  // optimum sits at an endpoint of its feasible interval
  for (int seed = 0; seed < 20; ++seed) {
    const Vec2 x1{U(rng), U(rng)}, x2{U(rng), U(rng)};
    const Vec2 y1{U(rng), U(rng)}, y2{U(rng), U(rng)};
    const double a1 = 0.2 + 0.6 * U(rng), b1 = 0.2 + 0.6 * U(rng);
    for (double p : {1.0, 1.7}) {
      auto dp = [&](Vec2 u, Vec2 v) { return std::pow(norm(u - v), p); };
      const double lo = std::max(0.0, a1 + b1 - 1.0), hi = std::min(a1, b1);
      auto cost = [&](double f11) {
        return f11 * dp(x1, y1) + (a1 - f11) * dp(x1, y2) +
               (b1 - f11) * dp(x2, y1) + (1.0 - a1 - b1 + f11) * dp(x2, y2);
      };
      const double brute =
          std::pow(std::min(cost(lo), cost(hi)), 1.0 / p);
      const double w = wasserstein(diracs({{x1, a1}, {x2, 1.0 - a1}}),
                                   diracs({{y1, b1}, {y2, 1.0 - b1}}), p)
                           .first;
      CHECK(w == Catch::Approx(brute).epsilon(1e-12));
    }
  }
}

TEST_CASE("wasserstein is a metric between equal-mass measures",
          "[transport]") {
  std::mt19937_64 rng(3);
  for (double p : {1.0, 4.0 / 3.0, 2.0}) {
    for (int seed = 0; seed < 10; ++seed) {
      const auto m1 = random_measure(rng, 3, 1.0);
      const auto m2 = random_measure(rng, 3, 1.0);
      const auto m3 = random_measure(rng, 3, 1.0);
      const double d12 = wasserstein(m1, m2, p).first;
      const double d21 = wasserstein(m2, m1, p).first;
      const double d23 = wasserstein(m2, m3, p).first;
      const double d13 = wasserstein(m1, m3, p).first;
      CHECK(d12 == Catch::Approx(d21).epsilon(1e-12));
      CHECK(d13 <= (d12 + d23) * (1.0 + 1e-10) + 1e-15);
      CHECK(d12 >= 0.0);
    }
  }
}

TEST_CASE("wasserstein is monotone in p on probability measures",
          "[transport]") {
  std::mt19937_64 rng(13);
  const double ps[] = {1.0, 1.5, 2.0, 3.0};
  for (int seed = 0; seed < 8; ++seed) {
    const auto m1 = random_measure(rng, 4, 1.0);
    const auto m2 = random_measure(rng, 4, 1.0);
    double prev = 0.0;
    for (double p : ps) {
      const double w = wasserstein(m1, m2, p).first;
      CHECK(prev <= w * (1.0 + 1e-12) + 1e-15);
      prev = w;
    }
  }
}

TEST_CASE("steiner oracle handles a source-sink pair", "[transport]") {
  const Vec2 a{0.1, 0.2}, b{0.7, 0.9};
  const auto [e, g] =
      gilbert_steiner_oracle(diracs({{a, 0.8}}), diracs({{b, 0.8}}), kAlpha);
  CHECK(e == Catch::Approx(std::pow(0.8, kAlpha) * norm(a - b)).epsilon(1e-12));
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].mass == Catch::Approx(0.8).epsilon(1e-12));
  CHECK(same_atoms(graph_divergence(g), diracs({{a, 0.8}, {b, -0.8}}), 1e-12,
                   1e-12));

  CHECK_THROWS_AS(
      gilbert_steiner_oracle(
          diracs({{a, 1.0}, {b, 1.0}, {{0.5, 0.5}, 1.0}}),
          diracs({{{0.0, 0.0}, 1.5}, {{1.0, 1.0}, 1.5}}), kAlpha),
      std::length_error);
  CHECK_THROWS_AS(
      gilbert_steiner_oracle(diracs({{a, 1.0}}), diracs({{b, 0.5}}), kAlpha),
      std::domain_error);
  CHECK_THROWS_AS(
      gilbert_steiner_oracle(diracs({{a, 1.0}}), diracs({{b, 1.0}}), 0.0),
      std::domain_error);
  CHECK_THROWS_AS(
      gilbert_steiner_oracle(diracs({{a, 1.0}}), diracs({{b, 1.0}}), 1.2),
      std::domain_error);
  CHECK_THROWS_AS(gilbert_steiner_oracle(diracs({{a, 1.0}}), AtomicMeasure{},
                                         kAlpha),
                  std::domain_error);
}

TEST_CASE("steiner oracle reproduces the branched Y optimum", "[transport]") {
  // two masses 1/2 at (+-1/2, 1) into a sink at the origin; at alpha = 0.6
  // the optimal branch point sits at (0, 1 - t) with half-angle cos = 2^(-2/5)
  const double aY = 0.6;
  const double c = std::pow(2.0, -0.4);
  const double t = 0.5 * c / std::sqrt(1.0 - c * c);
  const double EY = 2.0 * std::pow(0.5, aY) * std::hypot(0.5, t) + (1.0 - t);
  const double EV = 2.0 * std::pow(0.5, aY) * std::hypot(0.5, 1.0);

  const auto srcs = diracs({{{-0.5, 1.0}, 0.5}, {{0.5, 1.0}, 0.5}});
  const auto sink = diracs({{{0.0, 0.0}, 1.0}});
  const auto [e, g] = gilbert_steiner_oracle(srcs, sink, aY);

  CHECK(e == Catch::Approx(EY).epsilon(2e-7));
  CHECK(e < EV);  // branching strictly beats direct shipping
  REQUIRE(g.edges.size() == 3);
  REQUIRE(g.vertices.size() == 4);
  CHECK(norm(g.vertices[3] - Vec2{0.0, 1.0 - t}) < 1e-6);
  double trunk = 0.0;
  for (const auto& ed : g.edges) trunk = std::max(trunk, ed.mass);
  CHECK(trunk == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(same_atoms(graph_divergence(g),
                   diracs({{{-0.5, 1.0}, 0.5},
                           {{0.5, 1.0}, 0.5},
                           {{0.0, 0.0}, -1.0}}),
                   1e-9, 1e-9));

  // at alpha = 1 branching is free and the oracle meets W_1
  const double e1 = gilbert_steiner_oracle(srcs, sink, 1.0).first;
  CHECK(e1 == Catch::Approx(wasserstein(srcs, sink, 1.0).first).epsilon(1e-9));
}

TEST_CASE("steiner oracle keeps parallel flows separate", "[transport]") {
  // two unit-gap vertical shipments of mass 1/2: merging costs more at any
  // alpha > 0 because the detour outweighs the concave saving
  const double aS = 0.6;
  const auto [e, g] = gilbert_steiner_oracle(
      diracs({{{0.0, 0.0}, 0.5}, {{1.0, 0.0}, 0.5}}),
      diracs({{{0.0, 0.5}, 0.5}, {{1.0, 0.5}, 0.5}}), aS);
  CHECK(e == Catch::Approx(2.0 * std::pow(0.5, aS) * 0.5).epsilon(1e-9));
  const double w1 = wasserstein(
      diracs({{{0.0, 0.0}, 0.5}, {{1.0, 0.0}, 0.5}}),
      diracs({{{0.0, 0.5}, 0.5}, {{1.0, 0.5}, 0.5}}), 1.0).first;
  CHECK(e > w1);  // alpha < 1 prices mass sublinearly, but not below W_1 here
}

TEST_CASE("steiner oracle satisfies the triangle inequality", "[transport]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int seed = 0; seed < 8; ++seed) {
    AtomicMeasure mu[3];
    for (int k = 0; k < 3; ++k) {
      const double m = (1.0 + (int)(7.0 * U(rng))) / 8.0;
      mu[k].atoms = {{{U(rng), U(rng)}, m}, {{U(rng), U(rng)}, 1.0 - m}};
    }
    const double d12 = gilbert_steiner_oracle(mu[0], mu[1], kAlpha).first;
    const double d21 = gilbert_steiner_oracle(mu[1], mu[0], kAlpha).first;
    const double d23 = gilbert_steiner_oracle(mu[1], mu[2], kAlpha).first;
    const double d13 = gilbert_steiner_oracle(mu[0], mu[2], kAlpha).first;
    CHECK(d12 == Catch::Approx(d21).margin(1e-9));
    CHECK(d13 <= d12 + d23 + 1e-9);
  }
}

TEST_CASE("band decomposition partitions plan mass", "[transport]") {
  const GridSpec Q{64, 64, 1.0, 1.0, 0.0, 0.0};
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  // dyadic masses keep every partial sum exact, so the checks are bitwise
  TransportPlan plan;
  plan.p = 1.0;
  double total = 0.0;
  for (int i = 0; i < 16; ++i) {
    const Vec2 x{U(rng), U(rng)};
    const double ang = 2.0 * M_PI * U(rng);
    const double r = std::pow(2.0, -3.0 * U(rng));  // spread across bands
    const Vec2 y{std::clamp(x.x + r * std::cos(ang), 0.0, 1.0),
                 std::clamp(x.y + r * std::sin(ang), 0.0, 1.0)};
    const double m = std::pow(2.0, -(double)(2 + i % 6));
    plan.pairs.push_back({x, y, m, i, i});
    plan.cost_p += m * norm(x - y);
    total += m;
  }

  const double w = 0.05;
  const auto bd = band_decompose(plan, w, Q);
  CHECK(bd.total_mass() == total);

  double band_cost = 0.0;
  for (std::size_t j = 0; j < bd.bands.size(); ++j) {
    const auto& band = bd.bands[j];
    const double dj = (std::pow(2.0, (double)j) - 1.0) * w;
    const double dj1 = (std::pow(2.0, (double)j + 1.0) - 1.0) * w;
    CHECK(band.dj == Catch::Approx(dj).margin(1e-15));
    double cell_sum = 0.0;
    for (const auto& cell : band.cells) {
      CHECK(cell.side == Catch::Approx(dj1).epsilon(1e-15));
      double cm = 0.0;
      REQUIRE(cell.fplus.atoms.size() == cell.pair_ids.size());
      REQUIRE(cell.fminus.atoms.size() == cell.pair_ids.size());
      for (int qi : cell.pair_ids) {
        const auto& q = plan.pairs[qi];
        const double dist = norm(q.x - q.y);
        const bool top = j + 1 == bd.bands.size();
        CHECK(dist >= dj);
        if (!top) CHECK(dist < dj1);
        CHECK(std::fabs(q.x.x - cell.center.x) <=
              0.5 * cell.side * (1.0 + 1e-12));
        CHECK(std::fabs(q.x.y - cell.center.y) <=
              0.5 * cell.side * (1.0 + 1e-12));
        cm += q.mass;
      }
      CHECK(cell.theta == cm);
      cell_sum += cell.theta;
    }
    CHECK(band.theta == cell_sum);
    band_cost += band.dj * band.theta;
  }
  // d_j lower-bounds every displacement in band j
  CHECK(band_cost <= plan.cost_p * (1.0 + 1e-12));

  // displacements below w all land in band zero
  TransportPlan tiny;
  tiny.p = 1.0;
  tiny.pairs.push_back({{0.5, 0.5}, {0.5 + 0.4 * w, 0.5}, 0.25, 0, 0});
  const auto bd0 = band_decompose(tiny, w, Q);
  CHECK(bd0.bands[0].theta == 0.25);
  for (std::size_t j = 1; j < bd0.bands.size(); ++j)
    CHECK(bd0.bands[j].theta == 0.0);

  CHECK_THROWS_AS(band_decompose(plan, 0.0, Q), std::domain_error);
  CHECK_THROWS_AS(band_decompose(plan, 2.0, Q), std::domain_error);
}

TEST_CASE("upper bound certifies its divergence", "[transport]") {
  // close bumps keep the band width below the domain scale
  const double dst = 0.12;
  const ScalarGrid fp =
      unit_bump(32, 1.0, {0.5 - dst / 2, 0.5 - dst / 2}, 0.05);
  const ScalarGrid fm =
      unit_bump(32, 1.0, {0.5 + dst / 2, 0.5 + dst / 2}, 0.05);
  const auto ub = dalpha_eps_upper(fp, fm, 0.06, pack(), shared_kernel());

  CHECK(ub.branch == "banded");
  CHECK(ub.energy > 0.0);
  CHECK(std::isfinite(ub.energy));
  CHECK(ub.W1 > 0.1);
  CHECK(ub.W1 < 0.3);

  // output grid: square power-of-two enlargement containing the inputs
  REQUIRE(ub.u.nx == ub.u.ny);
  REQUIRE((ub.u.nx & (ub.u.nx - 1)) == 0);
  REQUIRE(ub.u.nx >= 32);
  CHECK(ub.u.Lx == Catch::Approx(ub.u.nx / 32.0).epsilon(1e-12));

  // the divergence certificate: linf residual against the embedded f+ - f-
  const double scale = std::max(fp.linf(), fm.linf());
  CHECK(ub.div_residual_linf <= 1e-11 * scale);

  // no flux enters or leaves the enlarged box
  for (int j = 0; j < ub.u.ny; ++j) {
    CHECK(ub.u.ux_at(0, j) == 0.0);
    CHECK(ub.u.ux_at(ub.u.nx, j) == 0.0);
  }
  for (int i = 0; i < ub.u.nx; ++i) {
    CHECK(ub.u.uy_at(i, 0) == 0.0);
    CHECK(ub.u.uy_at(i, ub.u.ny) == 0.0);
  }

  // recomputing the divergence against the inputs embedded at the offset
  const int off = (ub.u.nx - 32) / 2;
  const ScalarGrid dv = grid_divergence(ub.u);
  double worst = 0.0;
  for (int j = 0; j < ub.u.ny; ++j)
    for (int i = 0; i < ub.u.nx; ++i) {
      const bool inside = i >= off && i < off + 32 && j >= off && j < off + 32;
      const double want = inside ? fp.at(i - off, j - off) -
                                       fm.at(i - off, j - off)
                                 : 0.0;
      worst = std::max(worst, std::fabs(dv.at(i, j) - want));
    }
  CHECK(worst <= 1e-11 * scale);
}

TEST_CASE("upper bound short-circuits identical inputs", "[transport]") {
  const ScalarGrid f = unit_bump(32, 1.0, {0.4, 0.6}, 0.07);
  const auto ub = dalpha_eps_upper(f, f, 0.05, pack(), shared_kernel());
  CHECK(ub.branch == "identical");
  CHECK(ub.energy == 0.0);
  CHECK(ub.W1 == 0.0);
  CHECK(field_l1(ub.u) == 0.0);
}

TEST_CASE("upper bound validates its inputs", "[transport]") {
  const ScalarGrid f = unit_bump(32, 1.0, {0.3, 0.3}, 0.06);
  const ScalarGrid g = unit_bump(32, 1.0, {0.7, 0.7}, 0.06);
  const auto& k = shared_kernel();

  ScalarGrid rect(32, 16, 1.0, 0.5);
  CHECK_THROWS_AS(dalpha_eps_upper(rect, rect, 0.05, pack(), k),
                  std::domain_error);
  ScalarGrid odd(24, 24, 1.0, 1.0);
  CHECK_THROWS_AS(dalpha_eps_upper(odd, odd, 0.05, pack(), k),
                  std::domain_error);
  ScalarGrid other(32, 32, 2.0, 2.0);
  CHECK_THROWS_AS(dalpha_eps_upper(f, other, 0.05, pack(), k),
                  std::domain_error);

  ScalarGrid neg = f;
  neg.at(3, 3) = -1.0;
  CHECK_THROWS_AS(dalpha_eps_upper(neg, g, 0.05, pack(), k),
                  std::domain_error);

  ScalarGrid heavy = f;
  for (double& v : heavy.v) v *= 2.0;
  CHECK_THROWS_AS(dalpha_eps_upper(heavy, g, 0.05, pack(), k),
                  std::domain_error);

  CHECK_THROWS_AS(dalpha_eps_upper(f, g, 0.05, pack(), k, 0.0),
                  std::domain_error);
  CHECK_THROWS_AS(dalpha_eps_upper(f, g, 0.05, pack(), k, 1.0),
                  std::domain_error);
}

TEST_CASE("upper bound decreases along an eps sweep", "[transport]") {
  const ScalarGrid fp = unit_bump(64, 1.0, {0.3, 0.3}, 0.06);
  const ScalarGrid fm = unit_bump(64, 1.0, {0.7, 0.7}, 0.06);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.10, 0.08, 0.05, 0.03}) {
    const auto ub = dalpha_eps_upper(fp, fm, eps, pack(), shared_kernel());
    INFO("eps=" << eps << " energy=" << ub.energy << " branch=" << ub.branch);
    CHECK(ub.energy < prev);
    CHECK(ub.div_residual_linf <= 1e-9);
    CHECK(ub.W1 == Catch::Approx(0.4 * std::sqrt(2.0)).margin(1e-3));
    prev = ub.energy;
  }
}

TEST_CASE("upper bound is symmetric under swapping the densities",
          "[transport]") {
  const ScalarGrid fp = unit_bump(64, 1.0, {0.3, 0.3}, 0.06);
  const ScalarGrid fm = unit_bump(64, 1.0, {0.7, 0.7}, 0.06);
  const auto fwd = dalpha_eps_upper(fp, fm, 0.05, pack(), shared_kernel());
  const auto rev = dalpha_eps_upper(fm, fp, 0.05, pack(), shared_kernel());
  CHECK(fwd.energy == Catch::Approx(rev.energy).epsilon(1e-9));
  CHECK(fwd.W1 == Catch::Approx(rev.W1).epsilon(1e-12));
  CHECK(fwd.branch == rev.branch);
}

TEST_CASE("upper bound falls back when bands reach the domain scale",
          "[transport]") {
  const ScalarGrid fp = unit_bump(32, 2.0, {0.25, 0.25}, 0.1);
  const ScalarGrid fm = unit_bump(32, 2.0, {1.75, 1.75}, 0.1);
  const auto ub = dalpha_eps_upper(fp, fm, 0.05, pack(), shared_kernel());
  CHECK(ub.branch == "global-local");
  CHECK(ub.energy > 0.0);
  CHECK(std::isfinite(ub.energy));
  CHECK(ub.div_residual_linf <= 1e-9);
  CHECK(ub.W1 == Catch::Approx(1.5 * std::sqrt(2.0)).margin(0.02));
}

TEST_CASE("upper bound tracks the distance functional across separations",
          "[transport]") {
  // E <= C H(W_1^nu + F) with H(x) = x + x^lambda: the fitted prefactor
  // stays order one while separation, W_1, and the branch all vary
  const double nu = 1.0 - 2.0 * (1.0 - kAlpha);
  double prev = 0.0, cmin = 1e300, cmax = 0.0;
  for (double dst : {0.12, 0.2, 0.3, 0.45, 0.6}) {
    const ScalarGrid fp =
        unit_bump(32, 1.0, {0.5 - dst / 2, 0.5 - dst / 2}, 0.05);
    const ScalarGrid fm =
        unit_bump(32, 1.0, {0.5 + dst / 2, 0.5 + dst / 2}, 0.05);
    const auto ub = dalpha_eps_upper(fp, fm, 0.06, pack(), shared_kernel());
    const double x = std::pow(ub.W1, nu) + ub.F;
    const double CH = ub.energy / (x + std::pow(x, 0.25));
    INFO("dst=" << dst << " branch=" << ub.branch << " energy=" << ub.energy
                << " C_H=" << CH);
    CHECK(ub.energy > prev);  // larger separation costs more
    prev = ub.energy;
    cmin = std::min(cmin, CH);
    cmax = std::max(cmax, CH);
    if (dst == 0.12) CHECK(ub.branch == "banded");
  }
  CHECK(cmin > 0.3);
  CHECK(cmax < 2.0);
}

TEST_CASE("bound suite couples the three distances", "[transport]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> P(0.2, 0.8);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  std::vector<BoundInstance> inst;
  inst.push_back({"pair", diracs({{{0.2, 0.3}, 0.25}}),
                  diracs({{{0.8, 0.7}, 0.25}})});
  for (int s = 0; s < 6; ++s) {
    BoundInstance bi;
    bi.name = "rand" + std::to_string(s);
    const double m1 = (1.0 + (int)(7.0 * U(rng))) / 8.0;
    const double m2 = (1.0 + (int)(7.0 * U(rng))) / 8.0;
    bi.mu_plus.atoms = {{{P(rng), P(rng)}, m1}, {{P(rng), P(rng)}, 1.0 - m1}};
    bi.mu_minus.atoms = {{{P(rng), P(rng)}, m2}, {{P(rng), P(rng)}, 1.0 - m2}};
    inst.push_back(bi);
  }

  const GridSpec gs{32, 32, 1.0, 1.0, 0.0, 0.0};
  const auto rep = bound_suite(inst, 0.05, pack(), shared_kernel(), gs);

  REQUIRE(rep.rows.size() == inst.size());
  for (const auto& row : rep.rows) {
    INFO(row.name << " W1=" << row.W1 << " Wp=" << row.Wp
                  << " da=" << row.dalpha << " up=" << row.upper_eps);
    CHECK(row.pass);
    CHECK(row.Wp <= row.dalpha * (1.0 + 1e-9) + 1e-12);
    CHECK(row.upper_eps > 0.0);
    CHECK(std::isfinite(row.upper_eps));
  }
  CHECK(rep.C_fit > 0.3);
  CHECK(rep.C_fit < 2.0);

  // a lone pair is exactly solvable: W_{1/alpha} = d_alpha = m^alpha l
  const double l = std::hypot(0.6, 0.4);
  CHECK(rep.rows[0].Wp ==
        Catch::Approx(std::pow(0.25, kAlpha) * l).epsilon(1e-9));
  CHECK(rep.rows[0].dalpha ==
        Catch::Approx(std::pow(0.25, kAlpha) * l).epsilon(1e-9));

  // reruns are bit-identical
  const std::vector<BoundInstance> sub(inst.begin(), inst.begin() + 3);
  const auto r1 = bound_suite(sub, 0.05, pack(), shared_kernel(), gs);
  const auto r2 = bound_suite(sub, 0.05, pack(), shared_kernel(), gs);
  REQUIRE(r1.rows.size() == r2.rows.size());
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    CHECK(r1.rows[i].W1 == r2.rows[i].W1);
    CHECK(r1.rows[i].Wp == r2.rows[i].Wp);
    CHECK(r1.rows[i].dalpha == r2.rows[i].dalpha);
    CHECK(r1.rows[i].upper_eps == r2.rows[i].upper_eps);
  }
  CHECK(r1.C_fit == r2.C_fit);
}
