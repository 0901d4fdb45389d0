#pragma once
// Radial kernel rho on the plane whose vertical marginal is the optimal
// profile w: the Abel-type inversion
//
//   rho(r) = (1/pi) int_r^R (-w'(s)) / sqrt(s^2 - r^2) ds,  R = w's support.
//
// The substitution s = r cosh t flattens the inverse-sqrt singularity
// exactly: rho(r) = (1/pi) int_0^{acosh(R/r)} (-w'(r cosh t)) dt. At r = 0
// the integrand -w'(s)/s extends continuously by lambda (1 - beta).
//
// kernel_rescale maps rho to R_s^{-2} rho(x / R_s), keeping unit 2D mass;
// mass weighting by theta happens where kernels are consumed.
//
// kernel_line_integral provides G(sigma, q) = int_{-A}^{min(sigma,A)}
// rho(sqrt(v^2 + q^2)) dv with A = sqrt(R^2 - q^2); differences of G give
// the exact cross-segment convolution used by tube fields, and
// G(infinity, q) is the marginal, which must reproduce w(q).

#include <cmath>
#include <stdexcept>
#include <vector>

#include "profile.hpp"
#include "quadrature.hpp"

namespace branchflow {

struct RadialKernel {
  double r_supp = 0.0;  // support radius of rho
  double rho0 = 0.0;    // center value, also the max
  double mass = 0.0;    // 2 pi int rho r dr from quadrature
  std::vector<double> r, rho, drho;  // uniform samples + monotone slopes

  double eval(double rr) const {
    rr = std::fabs(rr);
    if (rr >= r_supp) return 0.0;
    const int n = (int)r.size() - 1;
    const double h = r_supp / n;
    int k = (int)(rr / h);
    if (k >= n) k = n - 1;
    const double t = (rr - r[k]) / h;
    const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
    const double h10 = t * (1 - t) * (1 - t);
    const double h01 = t * t * (3 - 2 * t);
    const double h11 = t * t * (t - 1);
    const double v =
        h00 * rho[k] + h10 * h * drho[k] + h01 * rho[k + 1] + h11 * h * drho[k + 1];
    return v > 0.0 ? v : 0.0;
  }
};

namespace detail {

// Fritsch-Carlson monotone slopes for uniform samples.
inline std::vector<double> pchip_slopes(const std::vector<double>& y,
                                        double h) {
  const int n = (int)y.size();
  std::vector<double> d(n, 0.0), sec(n - 1);
  for (int k = 0; k + 1 < n; ++k) sec[k] = (y[k + 1] - y[k]) / h;
  d[0] = sec[0];
  d[n - 1] = sec[n - 2];
  for (int k = 1; k + 1 < n; ++k) {
    if (sec[k - 1] * sec[k] <= 0.0)
      d[k] = 0.0;
    else
      d[k] = 2.0 * sec[k - 1] * sec[k] / (sec[k - 1] + sec[k]);
  }
  // clamp endpoints to preserve monotonicity
  for (int k : {0, n - 1}) {
    const double s = (k == 0) ? sec[0] : sec[n - 2];
    if (d[k] * s <= 0.0)
      d[k] = 0.0;
    else if (std::fabs(d[k]) > 3.0 * std::fabs(s))
      d[k] = 3.0 * s;
  }
  return d;
}

}  // namespace detail

inline RadialKernel kernel_from_profile(const Profile1D& p,
                                        int n_radial = 1024) {
  if (n_radial < 64)
    throw std::domain_error("kernel_from_profile: n_radial >= 64");
  RadialKernel k;
  k.r_supp = p.r_supp;
  const double R = p.r_supp;
  k.r.resize(n_radial + 1);
  k.rho.resize(n_radial + 1);

  const double inv_pi = 1.0 / 3.14159265358979323846;
  for (int i = 0; i <= n_radial; ++i) {
    const double r = R * i / n_radial;
    k.r[i] = r;
    if (i == n_radial) {
      k.rho[i] = 0.0;
    } else if (i == 0) {
      // rho(0) = (1/pi) int_0^R phi(w(s))/s ds, integrand -> lambda(1-beta)
      const double limit0 = p.lambda * (1.0 - p.beta);
      k.rho[0] = inv_pi * adaptive_simpson(
                              [&](double s) {
                                if (s < 1e-12 * R) return limit0;
                                return p.phi(p.w_of(s)) / s;
                              },
                              0.0, R, 1e-11);
    } else {
      const double tmax = std::acosh(R / r);
      k.rho[i] = inv_pi * adaptive_simpson(
                              [&](double t) {
                                return p.phi(p.w_of(r * std::cosh(t)));
                              },
                              0.0, tmax, 1e-11);
    }
  }
  k.drho = detail::pchip_slopes(k.rho, R / n_radial);
  k.rho0 = k.rho[0];

  // 2D mass from the sampled kernel itself (tested against 1)
  const double two_pi = 2.0 * 3.14159265358979323846;
  k.mass = two_pi * adaptive_simpson([&](double r) { return k.eval(r) * r; },
                                     0.0, R, 1e-12);
  return k;
}

// rho_s(x) = s^{-2} rho(x/s) with s the ridge radius of (theta, eps):
// support radius scales by s, 2D mass stays 1.
inline RadialKernel kernel_rescale(const RadialKernel& k, double theta,
                                   double eps, const ExponentPack& ep) {
  if (!(theta > 0.0) || !(eps > 0.0))
    throw std::domain_error("kernel_rescale: theta and eps must be > 0");
  const double s = ep.ridge_radius(theta, eps);
  RadialKernel out;
  out.r_supp = s * k.r_supp;
  out.rho0 = k.rho0 / (s * s);
  out.mass = k.mass;
  const std::size_t n = k.r.size();
  out.r.resize(n);
  out.rho.resize(n);
  out.drho.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.r[i] = s * k.r[i];
    out.rho[i] = k.rho[i] / (s * s);
    out.drho[i] = k.drho[i] / (s * s * s);
  }
  return out;
}

// G(sigma, q) = int over the chord {(v, q) : v <= sigma} of rho. Clipped to
// the support; sigma = +inf gives the full marginal.
inline double kernel_line_integral(const RadialKernel& k, double sigma,
                                   double q) {
  const double R = k.r_supp;
  q = std::fabs(q);
  if (q >= R) return 0.0;
  const double A = std::sqrt(R * R - q * q);
  const double hi = std::min(sigma, A);
  if (hi <= -A) return 0.0;
  return adaptive_simpson(
      [&](double v) { return k.eval(std::hypot(v, q)); }, -A, hi,
      1e-12 * (1.0 + k.rho0 * R));
}

inline double kernel_marginal(const RadialKernel& k, double q) {
  return kernel_line_integral(k, k.r_supp + 1.0, q);
}

}  // namespace branchflow
