#pragma once

#include <cmath>
#include <concepts>
#include <numbers>
#include <stdexcept>

#include "ehp/numeric.hpp"

namespace ehp {

/**
 * A concave, non-decreasing instantaneous utility r(p).
 *
 * Types may additionally provide inverse_derivative(y) (smallest p with
 * r'(p) <= y) and inverse_derivative_high(y) (largest p with r'(p) >= y);
 * otherwise both are found by bisection on derivative().
 */
template <class R>
concept RateFunction = requires(const R& r, double p) {
  { r.value(p) } -> std::convertible_to<double>;
  { r.derivative(p) } -> std::convertible_to<double>;
  { r.strictly_concave() } -> std::convertible_to<bool>;
};

/// r(p) = scale * log2(1 + gain * p). Covers the AWGN link and the normalized log rate.
struct LogRate {
  double scale = 1.0;
  double gain = 1.0;

  double value(double p) const { return scale * std::log2(1.0 + gain * p); }
  double derivative(double p) const {
    return scale * gain / ((1.0 + gain * p) * std::numbers::ln2);
  }
  double inverse_derivative(double y) const {
    if (y <= 0.0) return kInf;
    const double p = (scale / (y * std::numbers::ln2) - 1.0 / gain);
    return p > 0.0 ? p : 0.0;
  }
  double inverse_derivative_high(double y) const { return inverse_derivative(y); }
  bool strictly_concave() const { return true; }
};

struct AwgnLink {
  double bandwidth_hz = 1e6;
  double n0_w_per_hz = 1e-19;
  double path_gain = 1e-10;

  void validate() const {
    if (!(bandwidth_hz > 0.0 && n0_w_per_hz > 0.0 && path_gain > 0.0))
      throw std::invalid_argument("awgn link: bandwidth, N0 and gain must be positive");
  }
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// r(p) = B log2(1 + p g / (N0 B)).
inline LogRate awgn_rate(const AwgnLink& link) {
  link.validate();
  return LogRate{link.bandwidth_hz, link.path_gain / (link.n0_w_per_hz * link.bandwidth_hz)};
}

inline LogRate normalized_rate() { return LogRate{1.0, 1.0}; }

namespace detail {

template <class R>
double derivative_bracket(const R& rate, double y, double start) {
  double hi = std::max(start, 1e-12);
  while (rate.derivative(hi) >= y) {
    hi *= 2.0;
    if (hi > 1e300) return kInf;
  }
  return hi;
}

}  // namespace detail

/// Smallest p >= 0 with r'(p) <= y.
template <RateFunction R>
double inverse_derivative_low(const R& rate, double y) {
  if constexpr (requires { rate.inverse_derivative(y); }) {
    return rate.inverse_derivative(y);
  } else {
    if (y <= 0.0) return kInf;
    if (rate.derivative(0.0) <= y) return 0.0;
    // r' may reach y only asymptotically; treat "never" as unbounded.
    const double hi = detail::derivative_bracket(rate, y * (1.0 + 1e-15), 1.0);
    if (!std::isfinite(hi)) return kInf;
    return bisect_first_true([&](double p) { return rate.derivative(p) <= y; }, 0.0, hi, 1e-14);
  }
}

/// Largest p >= 0 with r'(p) >= y.
template <RateFunction R>
double inverse_derivative_high(const R& rate, double y) {
  if constexpr (requires { rate.inverse_derivative_high(y); }) {
    return rate.inverse_derivative_high(y);
  } else {
    if (y <= 0.0) return kInf;
    if (rate.derivative(0.0) < y) return 0.0;
    const double hi = detail::derivative_bracket(rate, y, 1.0);
    if (!std::isfinite(hi)) return kInf;
    return bisect_last_true([&](double p) { return rate.derivative(p) >= y; }, 0.0, hi, 1e-14);
  }
}

/// Storing threshold paired with a drawing threshold: r'(p_s) = eta * r'(p_u).
template <RateFunction R>
double companion_threshold(double p_u, double eta, const R& rate) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("companion_threshold: eta must lie in [0, 1]");
  if (!(p_u >= 0.0) || !std::isfinite(p_u))
    throw std::invalid_argument("companion_threshold: p_u must be finite and >= 0");
  if (eta == 0.0) return kInf;
  const double target = eta * rate.derivative(p_u);
  if (target <= 0.0) return kInf;
  return std::max(p_u, inverse_derivative_high(rate, target));
}

/// Two-user degraded Gaussian broadcast channel; user 1 is the stronger receiver.
struct BroadcastSpec {
  double sigma1_sq = 1.0;
  double sigma2_sq = 1.0;
  double weight = 1.0;  // a in a*r1 + r2
  double scale = 0.5;   // prefactor of log2 in both user rates

  void validate() const {
    if (!(sigma1_sq > 0.0 && sigma2_sq >= sigma1_sq))
      throw std::invalid_argument("broadcast: need 0 < sigma1^2 <= sigma2^2");
    if (!(weight >= 0.0) || !std::isfinite(weight))
      throw std::invalid_argument("broadcast: weight must be finite and >= 0");
    if (!(scale > 0.0)) throw std::invalid_argument("broadcast: scale must be positive");
  }
};

struct BroadcastPoint {
  double value = 0.0;
  double alpha = 1.0;
  double r1 = 0.0;
  double r2 = 0.0;
};

inline double bc_user1_rate(double p, double alpha, const BroadcastSpec& spec) {
  return spec.scale * std::log2(1.0 + alpha * p / spec.sigma1_sq);
}

inline double bc_user2_rate(double p, double alpha, const BroadcastSpec& spec) {
  return spec.scale * std::log2(1.0 + (1.0 - alpha) * p / (alpha * p + spec.sigma2_sq));
}

/// Maximizes a*r1 + r2 over the superposition power split alpha in [0, 1].
inline BroadcastPoint bc_weighted_sum_rate(double p, const BroadcastSpec& spec) {
  if (!(p >= 0.0)) throw std::invalid_argument("bc_weighted_sum_rate: p must be >= 0");
  auto objective = [&](double alpha) {
    return spec.weight * bc_user1_rate(p, alpha, spec) + bc_user2_rate(p, alpha, spec);
  };
  auto best = golden_section_max(objective, 0.0, 1.0, 1e-9);
  // Flat objective: report the largest maximizing split.
  const double at_one = objective(1.0);
  if (at_one >= best.value - 1e-14 * std::max(1.0, std::abs(best.value))) best = {1.0, at_one};
  return {best.value, best.x, bc_user1_rate(p, best.x, spec), bc_user2_rate(p, best.x, spec)};
}

/// d r_a^BC / dp by central differences (forward difference at p = 0).
inline double bc_rate_derivative(double p, const BroadcastSpec& spec) {
  if (!(p >= 0.0)) throw std::invalid_argument("bc_rate_derivative: p must be >= 0");
  const double step = 1e-6 * std::max(p, spec.sigma1_sq);
  if (p < step) {
    const double f0 = bc_weighted_sum_rate(p, spec).value;
    const double f1 = bc_weighted_sum_rate(p + step, spec).value;
    const double f2 = bc_weighted_sum_rate(p + 2.0 * step, spec).value;
    return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step);
  }
  return (bc_weighted_sum_rate(p + step, spec).value -
          bc_weighted_sum_rate(p - step, spec).value) /
         (2.0 * step);
}

/// r_a^BC(p) as a RateFunction.
struct BroadcastRate {
  BroadcastSpec spec;

  explicit BroadcastRate(BroadcastSpec s) : spec(s) { spec.validate(); }
  double value(double p) const { return bc_weighted_sum_rate(p, spec).value; }
  double derivative(double p) const { return bc_rate_derivative(p, spec); }
  bool strictly_concave() const { return true; }
};

}  // namespace ehp
