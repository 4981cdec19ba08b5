#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dcp {

template <class F, class DF>
double solve_increasing_root(F f, DF df, double lo, double hi, double initial, double tol,
                             int max_iterations) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo > 0.0 && fhi > 0.0) return lo;
  if (flo < 0.0 && fhi < 0.0) return hi;

  double x = std::clamp(initial, lo, hi);
  double fx = f(x);
  for (int it = 0; it < max_iterations; ++it) {
    if (std::abs(fx) <= tol) return x;
    if (fx > 0.0)
      hi = x;
    else
      lo = x;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max({std::abs(lo), std::abs(hi), 1.0}))
      return x;  // bracket collapsed to machine precision
    const double slope = df(x);
    double next = slope > 0.0 ? x - fx / slope : lo;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x) next = 0.5 * (lo + hi);
    x = next;
    fx = f(x);
  }
  if (std::abs(fx) <= tol) return x;
  throw std::runtime_error("solve_increasing_root: no convergence after " +
                           std::to_string(max_iterations) + " iterations");
}

}  // namespace dcp
