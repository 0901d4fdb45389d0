#pragma once
// Optimal transverse profile: minimize int w^beta + int w'^2 over w >= 0
// with int w = 1, for 0 < beta < 1. The minimizer is even, compactly
// supported on [-R, R], positive inside, and solves 2 w'' = beta w^{beta-1}
// - lambda there. C^1 touchdown at the support edge forces the first
// integral constant to vanish:
//
//   w'^2 = w^beta - lambda w,   w(0) = w0 = lambda^{-1/(1-beta)}.
//
// solve_profile finds lambda by bisection on the quadrature mass
// m(lambda) = 2 int_0^{w0} w / sqrt(w^beta - lambda w) dw, then tabulates
// w at uniform x. Near the center the substitution w = w0 - t^2 removes the
// turning-point singularity; near the edge x is accumulated in u = w^{1-beta/2},
// which is asymptotically linear in R - x (w ~ c (R-|x|)^p, p = 2/(2-beta)),
// so nodes stay well spaced in x all the way to touchdown.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "quadrature.hpp"

namespace branchflow {

namespace detail {

// s^beta - s without cancellation for s near 1.
inline double sbeta_minus_s(double s, double beta) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 0.0;
  if (s > 0.7) return std::expm1(beta * std::log1p(s - 1.0)) - (s - 1.0);
  return std::pow(s, beta) - s;
}

// Height v = w0 - t^2 and phi^2 = lam w0 (s^beta - s), s = v / w0, on the
// half ridge t in [0, tmax], tmax = sqrt(w0). Built from the signed endpoint
// distance tc of tanh_sinh_xc: near t = 0 the ratio defect 1 - s = t^2 / w0
// is formed directly, near t = tmax the height comes from the offset, so
// neither subtraction cancels. ex is the rounding excess tmax^2 - w0.
inline void first_integral_at(double t, double tc, double lam, double beta,
                              double w0, double tmax, double ex, double* v_out,
                              double* q_out) {
  double v, sb;
  if (tc < 0.0) {
    const double off = -tc;
    v = off * (2.0 * tmax - off) - ex;
    if (v < 0.0) v = 0.0;
    sb = sbeta_minus_s(v / w0, beta);
  } else {
    const double delta = t * t / w0;
    v = w0 - t * t;
    sb = delta < 1.0 ? std::expm1(beta * std::log1p(-delta)) + delta : 0.0;
  }
  *v_out = v;
  *q_out = lam * w0 * sb;
}

}  // namespace detail

struct Profile1D {
  double beta = 0.0;
  double lambda = 0.0;   // Lagrange multiplier of the mass constraint
  double w0 = 0.0;       // center height, lambda^{-1/(1-beta)}
  double r_supp = 0.0;   // half support radius R
  double mass = 0.0;     // quadrature mass of the tabulated solution
  double int_wbeta = 0.0;
  double int_dw2 = 0.0;
  double c0 = 0.0;       // int w^beta + int w'^2, the profile constant
  std::vector<double> x, w, dw;  // n+1 uniform samples on [-R, R]

  // |w'| = sqrt(w^beta - lambda w) for admissible heights
  double phi(double v) const {
    if (v <= 0.0 || v >= w0) return 0.0;
    const double q = lambda * w0 * detail::sbeta_minus_s(v / w0, beta);
    return q > 0.0 ? std::sqrt(q) : 0.0;
  }

  double edge_exponent() const { return 2.0 / (2.0 - beta); }
  double edge_coef() const {
    const double q = (2.0 - beta) * (2.0 - beta) / 4.0;
    return std::pow(q, 1.0 / (2.0 - beta));
  }

  // Hermite evaluation on the uniform table (exact slopes at nodes).
  double w_of(double xx) const {
    const double ax = std::fabs(xx);
    if (ax >= r_supp) return 0.0;
    const int n = (int)x.size() - 1;
    const double h = 2.0 * r_supp / n;
    int k = (int)((xx + r_supp) / h);
    if (k < 0) k = 0;
    if (k >= n) k = n - 1;
    const double t = (xx - x[k]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    const double v =
        h00 * w[k] + h10 * h * dw[k] + h01 * w[k + 1] + h11 * h * dw[k + 1];
    return v > 0.0 ? v : 0.0;
  }

  double dw_of(double xx) const {
    if (std::fabs(xx) >= r_supp) return 0.0;
    const double s = phi(w_of(xx));
    return xx > 0.0 ? -s : s;
  }
};

namespace detail {

// Mass of the first-integral solution at a trial multiplier, via w = w0-t^2.
inline double profile_mass(double lam, double beta) {
  const double w0 = std::pow(lam, -1.0 / (1.0 - beta));
  const double tmax = std::sqrt(w0);
  const double ex = tmax * tmax - w0;
  auto f = [&](double t, double tc) {
    double v, q;
    first_integral_at(t, tc, lam, beta, w0, tmax, ex, &v, &q);
    return q > 0.0 ? 2.0 * t * v / std::sqrt(q) : 0.0;
  };
  return 2.0 * tanh_sinh_xc(f, 0.0, tmax, 1e-13);
}

}  // namespace detail

inline Profile1D solve_profile(double beta, int n = 4096) {
  if (!(beta > 0.0 && beta < 1.0))
    throw std::domain_error("solve_profile: beta must lie in (0, 1)");
  if (n < 16 || n % 2) throw std::domain_error("solve_profile: n even, >= 16");

  Profile1D p;
  p.beta = beta;

  // Power-law seed: mass(lambda) = mass(1) * lambda^{-(4-beta)/(2(1-beta))}.
  const double m1 = detail::profile_mass(1.0, beta);
  const double q = (4.0 - beta) / (2.0 * (1.0 - beta));
  const double seed = std::pow(m1, 1.0 / q);
  p.lambda = bisect([&](double l) { return detail::profile_mass(l, beta) - 1.0; },
                    0.5 * seed, 2.0 * seed, 1e-15 * seed);
  p.w0 = std::pow(p.lambda, -1.0 / (1.0 - beta));
  p.mass = detail::profile_mass(p.lambda, beta);

  auto phi = [&](double v) {
    const double s = p.lambda * p.w0 * detail::sbeta_minus_s(v / p.w0, beta);
    return s > 0.0 ? std::sqrt(s) : 0.0;
  };

  // Energy split, integrated in t where both integrands stay Holder-bounded.
  {
    const double tmax = std::sqrt(p.w0);
    const double ex = tmax * tmax - p.w0;
    p.int_wbeta = 2.0 * tanh_sinh_xc(
                            [&](double t, double tc) {
                              double v, q;
                              detail::first_integral_at(
                                  t, tc, p.lambda, beta, p.w0, tmax, ex, &v, &q);
                              return q > 0.0 ? 2.0 * t * std::pow(v, beta) /
                                                   std::sqrt(q)
                                             : 0.0;
                            },
                            0.0, tmax, 1e-13);
    p.int_dw2 = 2.0 * tanh_sinh_xc(
                          [&](double t, double tc) {
                            double v, q;
                            detail::first_integral_at(
                                t, tc, p.lambda, beta, p.w0, tmax, ex, &v, &q);
                            return q > 0.0 ? 2.0 * t * std::sqrt(q) : 0.0;
                          },
                          0.0, tmax, 1e-13);
    p.c0 = p.int_wbeta + p.int_dw2;
  }

  // --- cumulative x over the two smooth parametrizations ---
  const int ka = 4096, kb = 4096;
  const double wmid = 0.5 * p.w0;

  // center region, w = w0 - t^2; dx/dt has a removable limit at t = 0
  const double tmid = std::sqrt(p.w0 - wmid);
  auto dxdt = [&](double t) {
    const double v = p.w0 - t * t;
    const double ph = phi(v);
    if (ph <= 0.0) return 2.0 / std::sqrt(p.lambda * (1.0 - beta));
    return 2.0 * t / ph;
  };
  std::vector<double> xa(ka + 1, 0.0);
  for (int k = 1; k <= ka; ++k)
    xa[k] = xa[k - 1] + gauss16(dxdt, tmid * (k - 1) / ka, tmid * k / ka, 1);
  const double x_ab = xa[ka];

  // edge region, u = w^{1 - beta/2}: dx/du is smooth and bounded
  const double g = 2.0 / (2.0 - beta);
  const double umid = std::pow(wmid, 1.0 / g);
  auto dxdu = [&](double u) {
    const double v = std::pow(u, g);
    return g / std::sqrt(1.0 - p.lambda * std::pow(v, 1.0 - beta));
  };
  std::vector<double> tail(kb + 1, 0.0);  // x distance from the edge inward
  for (int k = 1; k <= kb; ++k)
    tail[k] = tail[k - 1] + gauss16(dxdu, umid * (k - 1) / kb, umid * k / kb, 1);
  p.r_supp = x_ab + tail[kb];

  // Solves cum(par) = target on the tabulated cumulative by safeguarded
  // Newton; node values come out quadrature-accurate, where cubic
  // interpolation in x would lose digits near touchdown (w'''' blows up).
  auto invert = [](const std::vector<double>& cum, double target, double pmax,
                   auto&& deriv) {
    const int m = (int)cum.size() - 1;
    int k = (int)(std::upper_bound(cum.begin(), cum.end(), target) -
                  cum.begin()) - 1;
    if (k < 0) k = 0;
    if (k > m - 1) k = m - 1;
    const double p0 = pmax * k / m;
    double lo = p0, hi = pmax * (k + 1) / m;
    double par = 0.5 * (lo + hi);
    for (int it = 0; it < 80; ++it) {
      const double f = cum[k] + gauss16(deriv, p0, par, 1) - target;
      if (f > 0.0) hi = par; else lo = par;
      double next = par - f / deriv(par);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::fabs(next - par) <= 1e-16 * (pmax + 1.0)) return next;
      par = next;
    }
    return par;
  };

  // --- uniform samples on [-R, R] with exact first-integral slopes ---
  p.x.resize(n + 1);
  p.w.resize(n + 1);
  p.dw.resize(n + 1);
  const double h = 2.0 * p.r_supp / n;
  for (int i = n / 2; i <= n; ++i) {
    const double xi = -p.r_supp + i * h;
    double wi;
    if (i == n / 2)
      wi = p.w0;
    else if (i == n)
      wi = 0.0;
    else if (xi <= x_ab) {
      const double t = invert(xa, xi, tmid, dxdt);
      wi = p.w0 - t * t;
    } else {
      const double u = invert(tail, p.r_supp - xi, umid, dxdu);
      wi = std::pow(u, g);
    }
    if (wi < 0.0) wi = 0.0;
    if (wi > p.w0) wi = p.w0;
    p.x[i] = xi;
    p.w[i] = wi;
    p.dw[i] = (i == n / 2) ? 0.0 : -phi(wi);
    // mirror
    p.x[n - i] = -xi;
    p.w[n - i] = wi;
    p.dw[n - i] = -p.dw[i];
  }
  p.x[n / 2] = 0.0;
  return p;
}

// Rescaled ridge profile for mass theta at scale eps. With the ridge radius
// R = eps^gamma theta^{(1-gamma)/(d-1)}, the d = 2 profile carrying mass theta
// per unit ridge length is
//
//   w_{theta,eps}(x) = theta R^{-1} w(x / R),
//
// the one normalization with int w_{theta,eps} = theta; its 1D energy
// eps^{-gamma1} int w^beta + eps^{gamma2} int w'^2 equals theta^alpha c0.
struct RescaledProfile {
  double theta = 0.0, eps = 0.0;
  double ridge_radius = 0.0;          // R
  double support_radius = 0.0;        // R * base r_supp
  const Profile1D* base = nullptr;
  std::vector<double> x, v, dv;       // uniform samples on the support

  double v_of(double xx) const {
    return theta / ridge_radius * base->w_of(xx / ridge_radius);
  }
  double dv_of(double xx) const {
    const double r2 = ridge_radius * ridge_radius;
    return theta / r2 * base->dw_of(xx / ridge_radius);
  }
  double mass() const {  // exact integral of the piecewise-cubic interpolant
    double s = 0.0;
    const double h = x[1] - x[0];
    for (std::size_t k = 0; k + 1 < x.size(); ++k)
      s += 0.5 * h * (v[k] + v[k + 1]) + h * h / 12.0 * (dv[k] - dv[k + 1]);
    return s;
  }
};

inline RescaledProfile rescale_profile(const Profile1D& p, double theta,
                                       double eps, const ExponentPack& ep) {
  if (!(theta > 0.0) || !(eps > 0.0))
    throw std::domain_error("rescale_profile: theta and eps must be > 0");
  RescaledProfile r;
  r.theta = theta;
  r.eps = eps;
  r.ridge_radius = ep.ridge_radius(theta, eps);
  r.support_radius = r.ridge_radius * p.r_supp;
  r.base = &p;
  const std::size_t n = p.x.size();
  r.x.resize(n);
  r.v.resize(n);
  r.dv.resize(n);
  const double R = r.ridge_radius;
  for (std::size_t i = 0; i < n; ++i) {
    r.x[i] = R * p.x[i];
    r.v[i] = theta / R * p.w[i];
    r.dv[i] = theta / (R * R) * p.dw[i];
  }
  return r;
}

// Process-wide cache; profiles are immutable once built.
inline const Profile1D& profile_cache(double beta, int n = 4096) {
  static std::map<std::pair<std::uint64_t, int>, Profile1D> cache;
  std::uint64_t bits;
  std::memcpy(&bits, &beta, sizeof bits);
  const auto key = std::make_pair(bits, n);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, solve_profile(beta, n)).first;
  return it->second;
}

}  // namespace branchflow
