#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>

namespace ehp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Relative threshold/power tolerance used by every bracketing search.
inline constexpr double kPowerRelTol = 1e-9;

/// Energy tolerance: 1e-9 of max(1 J, total harvested energy).
inline double energy_tolerance(double total_harvest_joules) {
  return 1e-9 * std::max(1.0, total_harvest_joules);
}

/**
 * Smallest x in [lo, hi] where a monotone predicate flips from false to true.
 *
 * The predicate must be false at lo (or the caller accepts lo) and true at hi.
 * Returns the upper end of the final bracket, so pred(result) is true.
 */
template <class Pred>
double bisect_first_true(Pred&& pred, double lo, double hi,
                         double rel_tol = 1e-12, int max_iter = 200) {
  for (int it = 0; it < max_iter; ++it) {
    if (hi - lo <= rel_tol * std::max(std::abs(hi), 1e-300)) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

/// Largest x in [lo, hi] where a predicate that is true at lo stays true.
template <class Pred>
double bisect_last_true(Pred&& pred, double lo, double hi,
                        double rel_tol = 1e-12, int max_iter = 200) {
  for (int it = 0; it < max_iter; ++it) {
    if (hi - lo <= rel_tol * std::max(std::abs(hi), 1e-300)) break;
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (pred(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

struct GoldenResult {
  double x;
  double value;
};

/// Golden-section maximization of a unimodal function on [lo, hi].
template <class F>
GoldenResult golden_section_max(F&& f, double lo, double hi, double tol) {
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    } else {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    }
  }
  GoldenResult best{c, fc};
  if (fd > best.value) best = {d, fd};
  for (double x : {lo, hi}) {
    const double fx = f(x);
    if (fx > best.value) best = {x, fx};
  }
  return best;
}

}  // namespace ehp
