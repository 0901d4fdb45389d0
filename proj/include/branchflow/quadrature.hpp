#pragma once
// 1D quadrature kit: tanh-sinh for endpoint singularities, adaptive Simpson
// for piecewise-smooth integrands, fixed Gauss-Legendre nodes for cheap
// per-face averages.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>

namespace branchflow {

// Integrates f(x, xc) over (a,b), where xc is the signed distance to the
// nearest endpoint (x - a near a, x - b near b). Integrands singular at an
// endpoint should build their vanishing factors from xc: the abscissa x
// itself quantizes at one ulp of the endpoint, and inverse-power factors
// amplify that into an O(1e-8) floor. Abscissas never touch a or b.
template <typename F2>
double tanh_sinh_xc(F2&& f, double a, double b, double rel_tol = 1e-12,
                    int max_level = 12) {
  if (!(b > a)) return 0.0;
  const double c = 0.5 * (a + b), r = 0.5 * (b - a);
  const double pi2 = 1.5707963267948966;
  double sum = pi2 * f(c, r);  // w(0) = pi/2
  // accumulates the node pair at abscissa parameter t; false once the
  // double-exponential weight underflows
  auto pair_at = [&](double t) {
    const double sh = pi2 * std::sinh(t);
    const double ch = std::cosh(t);
    const double w = pi2 * ch / (std::cosh(sh) * std::cosh(sh));
    if (w < 1e-320) return false;
    // 1 - tanh(sh) without cancellation
    const double off = r * 2.0 / (std::exp(2.0 * sh) + 1.0);
    if (off <= 0.0) return false;
    double fp = f(b - off, -off);
    double fm = f(a + off, off);
    if (!std::isfinite(fp)) fp = 0.0;
    if (!std::isfinite(fm)) fm = 0.0;
    sum += w * (fp + fm);
    return true;
  };
  // level 0: all integer abscissas; level L adds odd multiples of 2^{-L}
  double h = 1.0;
  for (int k = 1; pair_at(static_cast<double>(k)); ++k) {
  }
  double prev = r * sum;
  for (int level = 1; level <= max_level; ++level) {
    h *= 0.5;
    for (int k = 1; pair_at(h * static_cast<double>(k)); k += 2) {
    }
    const double cur = r * h * sum;
    if (level >= 3 &&
        std::fabs(cur - prev) <= rel_tol * (std::fabs(cur) + 1e-300))
      return cur;
    prev = cur;
  }
  return r * h * sum;
}

// Plain-abscissa convenience wrapper around tanh_sinh_xc.
template <typename F>
double tanh_sinh(F&& f, double a, double b, double rel_tol = 1e-12,
                 int max_level = 12) {
  return tanh_sinh_xc([&](double x, double) { return f(x); }, a, b, rel_tol,
                      max_level);
}

namespace detail {
template <typename F>
double simpson_rec(F& f, double a, double fa, double b, double fb, double m,
                   double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return simpson_rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

template <typename F>
double adaptive_simpson(F&& f, double a, double b, double abs_tol = 1e-12,
                        int max_depth = 28) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fb = f(b), fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, fa, b, fb, m, fm, whole, abs_tol,
                             max_depth);
}

// 4-point Gauss-Legendre average of f over [a,b]; exact for quintics.
template <typename F>
double gauss4_mean(F&& f, double a, double b) {
  static const double x[2] = {0.3399810435848563, 0.8611363115940526};
  static const double w[2] = {0.6521451548625461, 0.3478548451374538};
  const double c = 0.5 * (a + b), r = 0.5 * (b - a);
  double s = 0.0;
  for (int k = 0; k < 2; ++k)
    s += w[k] * (f(c + r * x[k]) + f(c - r * x[k]));
  return 0.5 * s;
}

// Composite 16-point Gauss-Legendre over [a,b] split into n panels.
template <typename F>
double gauss16(F&& f, double a, double b, int panels = 1) {
  static const double x[8] = {
      0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
      0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
      0.9445750230732326, 0.9894009349916499};
  static const double w[8] = {
      0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
      0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
      0.0622535239386479, 0.0271524594117541};
  double total = 0.0;
  const double step = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double pa = a + p * step;
    const double c = pa + 0.5 * step, r = 0.5 * step;
    double s = 0.0;
    for (int k = 0; k < 8; ++k)
      s += w[k] * (f(c + r * x[k]) + f(c - r * x[k]));
    total += r * s;
  }
  return total;
}

// Bisection for monotone g; requires a bracketing interval.
template <typename G>
double bisect(G&& g, double lo, double hi, double x_tol = 1e-14,
              int max_iter = 200) {
  double glo = g(lo), ghi = g(hi);
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  if ((glo > 0.0) == (ghi > 0.0))
    throw std::invalid_argument("bisect: endpoints do not bracket a root");
  for (int it = 0; it < max_iter; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (gm == 0.0 || hi - lo < x_tol * (1.0 + std::fabs(mid))) return mid;
    if ((gm > 0.0) == (glo > 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace branchflow
