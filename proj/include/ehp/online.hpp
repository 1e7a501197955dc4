#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ehp/core.hpp"
#include "ehp/distribution.hpp"
#include "ehp/rates.hpp"

namespace ehp {

/// Causal policy: (stored energy J, current harvest W) -> transmit power W.
using CausalPolicy = std::function<double(double energy, double harvest)>;

enum class EnergySpacing {
  Uniform,    // E_i = e_max * i / (n - 1)
  Quadratic,  // E_i = e_max * (i / (n - 1))^2, denser near an empty battery
};

struct DpConfig {
  std::size_t energy_points = 201;
  EnergySpacing energy_spacing = EnergySpacing::Quadratic;
  std::size_t harvest_points = 41;   // ignored for discrete distributions (atoms are used)
  std::size_t action_points = 201;
  double action_max = 0.0;           // 0: twice the largest harvest value
  double beta = 0.999;
  double delta = 0.01;
  double tolerance = 1e-9;           // span of the sweep change, relative to r(h_max)*delta
  std::size_t max_iterations = 1000000;
  bool exhaustive_actions = false;   // scan every action instead of the concave search

  void validate() const {
    if (energy_points < 2 || harvest_points < 1 || action_points < 2)
      throw std::invalid_argument("dp config: grids too small");
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("dp config: beta must be in (0,1)");
    if (!(delta > 0.0)) throw std::invalid_argument("dp config: delta must be positive");
    if (!(tolerance > 0.0)) throw std::invalid_argument("dp config: tolerance must be positive");
  }
};

namespace detail {

inline std::pair<std::size_t, double> locate(const std::vector<double>& grid, double x) {
  if (x <= grid.front()) return {0, 0.0};
  if (x >= grid.back()) return {grid.size() - 1, 0.0};
  const auto hi = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), x) -
                                           grid.begin());
  const std::size_t lo = hi - 1;
  return {lo, (x - grid[lo]) / (grid[hi] - grid[lo])};
}

}  // namespace detail

struct DpSolution {
  DpConfig config;
  double eta = 1.0;
  double e_max = 0.0;
  std::vector<double> energy_grid;
  std::vector<double> harvest_grid;
  std::vector<double> harvest_weights;
  std::vector<double> value;   // [i * harvest_grid.size() + j]
  std::vector<double> action;  // same layout, watts
  std::size_t iterations = 0;
  double residual = 0.0;       // sup-norm of the last sweep change

  std::size_t n_energy() const { return energy_grid.size(); }
  std::size_t n_harvest() const { return harvest_grid.size(); }
  double V(std::size_t i, std::size_t j) const { return value[i * n_harvest() + j]; }

  /// Grid cell holding E and the linear weight of its upper node.
  std::pair<std::size_t, double> locate_energy(double E) const {
    return detail::locate(energy_grid, E);
  }
  double phi(std::size_t i, std::size_t j) const { return action[i * n_harvest() + j]; }
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Equal-probability quantile midpoints, or the atoms of a discrete law.
inline void quantize_harvest(const HarvestDistribution& dist, std::size_t n,
                             std::vector<double>& values, std::vector<double>& weights) {
  values.clear();
  weights.clear();
  if (dist.family() == HarvestDistribution::Family::Discrete) {
    values = dist.atoms();
    weights = dist.masses();
    return;
  }
  for (std::size_t j = 0; j < n; ++j) {
    values.push_back(dist.quantile((static_cast<double>(j) + 0.5) / static_cast<double>(n)));
    weights.push_back(1.0 / static_cast<double>(n));
  }
}

/**
 * Discounted value iteration over (stored energy, current harvest).
 *
 * V(E,h) = max_a r(a) delta + beta * E_h' V(E'(a), h'), with
 * E'(a) = clamp(E + delta (eta (h-a)^+ - (a-h)^+), 0, e_max). Actions are the
 * uniform grid below the feasible limit h + E/delta plus the exact points
 * {0, h, h + E/delta}; off-grid E' is linearly interpolated. Stops when the
 * span of the sweep change is below tolerance and applies the midpoint of the
 * span bounds to the final iterate.
 */
template <RateFunction R>
DpSolution value_iterate(const StorageSpec& storage, const HarvestDistribution& dist,
                         const R& rate, const DpConfig& cfg) {
  cfg.validate();
  storage.validate();
  if (!storage.bounded()) throw std::invalid_argument("value_iterate: e_max must be finite");

  DpSolution sol;
  sol.config = cfg;
  sol.eta = storage.eta;
  sol.e_max = storage.e_max;
  const std::size_t nE = cfg.energy_points;
  for (std::size_t i = 0; i < nE; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(nE - 1);
    sol.energy_grid.push_back(storage.e_max *
                              (cfg.energy_spacing == EnergySpacing::Quadratic ? x * x : x));
  }
  sol.energy_grid.back() = storage.e_max;
  quantize_harvest(dist, cfg.harvest_points, sol.harvest_grid, sol.harvest_weights);
  const std::size_t nH = sol.harvest_grid.size();
  const double a_max = cfg.action_max > 0.0 ? cfg.action_max : 2.0 * dist.max_value();
  std::vector<double> grid(cfg.action_points);
  for (std::size_t m = 0; m < grid.size(); ++m)
    grid[m] = a_max * static_cast<double>(m) / static_cast<double>(grid.size() - 1);

  // Per-state candidate actions with their reward and interpolation weights.
  const std::size_t n_states = nE * nH;
  std::vector<std::size_t> offset(n_states + 1, 0);
  std::vector<double> act, reward, frac;
  std::vector<std::uint32_t> lower;
  std::vector<double> cand;
  const double delta = cfg.delta, eta = storage.eta;
  for (std::size_t i = 0; i < nE; ++i) {
    for (std::size_t j = 0; j < nH; ++j) {
      const double E = sol.energy_grid[i], h = sol.harvest_grid[j];
      const double limit = h + E / delta;
      cand.clear();
      for (double a : grid)
        if (a < limit) cand.push_back(a);
      cand.push_back(0.0);
      cand.push_back(h);
      cand.push_back(limit);
      std::sort(cand.begin(), cand.end());
      cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
      for (double a : cand) {
        double next = E + delta * (eta * std::max(h - a, 0.0) - std::max(a - h, 0.0));
        next = std::clamp(next, 0.0, storage.e_max);
        const auto [lo, f] = sol.locate_energy(next);
        act.push_back(a);
        reward.push_back(rate.value(a) * delta);
        lower.push_back(static_cast<std::uint32_t>(lo));
        frac.push_back(f);
      }
      offset[i * nH + j + 1] = act.size();
    }
  }

  std::vector<double> V(n_states, 0.0), Vn(n_states, 0.0), W(nE, 0.0);
  std::vector<std::size_t> best_idx(n_states, 0);
  const double beta = cfg.beta;
  auto q = [&](std::size_t m) {
    const auto lo = lower[m];
    const double f = frac[m];
    const double w = f > 0.0 ? W[lo] + f * (W[lo + 1] - W[lo]) : W[lo];
    return reward[m] + beta * w;
  };
  double reward_scale = rate.value(dist.max_value()) * delta;
  if (!(reward_scale > 0.0)) reward_scale = 1.0;
  const double span_tol = cfg.tolerance * reward_scale;

  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    for (std::size_t i = 0; i < nE; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < nH; ++j) acc += sol.harvest_weights[j] * V[i * nH + j];
      W[i] = acc;
    }
    double dmax = -kInf, dmin = kInf;
    for (std::size_t st = 0; st < n_states; ++st) {
      std::size_t lo = offset[st], hi = offset[st + 1] - 1;
      if (!cfg.exhaustive_actions) {
        // The objective is concave in the action: discrete ternary search.
        while (hi - lo > 2) {
          const std::size_t m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
          const double q1 = q(m1), q2 = q(m2);
          if (q1 < q2)
            lo = m1 + 1;
          else if (q1 > q2)
            hi = m2 - 1;
          else {
            lo = m1;
            hi = m2;
          }
        }
      }
      std::size_t arg = lo;
      double best = q(lo);
      for (std::size_t m = lo + 1; m <= hi; ++m) {
        const double v = q(m);
        if (v > best) {
          best = v;
          arg = m;
        }
      }
      Vn[st] = best;
      best_idx[st] = arg;
      const double d = best - V[st];
      dmax = std::max(dmax, d);
      dmin = std::min(dmin, d);
    }
    V.swap(Vn);
    sol.iterations = it;
    sol.residual = std::max(std::abs(dmax), std::abs(dmin));
    if (dmax - dmin <= span_tol) {
      const double shift = beta / (1.0 - beta) * 0.5 * (dmax + dmin);
      for (double& v : V) v += shift;
      sol.value = V;
      sol.action.resize(n_states);
      for (std::size_t st = 0; st < n_states; ++st) sol.action[st] = act[best_idx[st]];
      return sol;
    }
  }
  throw ConvergenceError("value iteration did not converge (residual span " +
                             std::to_string(sol.residual) + ")",
                         sol.residual);
}

enum class HarvestLookup { Nearest, Interpolate };

/// Policy table lookup: harvest row (nearest by default), linear in energy, then feasibility clamp.
inline double dp_action(const DpSolution& sol, double energy, double harvest,
                        HarvestLookup lookup = HarvestLookup::Nearest) {
  const auto& hg = sol.harvest_grid;
  const auto [i, f] = sol.locate_energy(std::clamp(energy, 0.0, sol.e_max));
  auto row_value = [&](std::size_t j) {
    const double a = sol.phi(i, j);
    return f > 0.0 ? a + f * (sol.phi(i + 1, j) - a) : a;
  };
  double phi;
  auto it = std::lower_bound(hg.begin(), hg.end(), harvest);
  if (it == hg.begin()) {
    phi = row_value(0);
  } else if (it == hg.end()) {
    phi = row_value(hg.size() - 1);
  } else {
    const std::size_t j1 = static_cast<std::size_t>(it - hg.begin()), j0 = j1 - 1;
    if (lookup == HarvestLookup::Interpolate) {
      const double g = (harvest - hg[j0]) / (hg[j1] - hg[j0]);
      phi = row_value(j0) + g * (row_value(j1) - row_value(j0));
    } else {
      phi = (harvest - hg[j0] <= hg[j1] - harvest) ? row_value(j0) : row_value(j1);
    }
  }
  return std::clamp(phi, 0.0, harvest + energy / sol.config.delta);
}

struct FixedThresholds {
  double p_u = 0.0;
  double p_s = kInf;
};

enum class FixedThresholdRule {
  TailBalance,    // P(h > p_s) = P(h < p_u)
  EnergyBalance,  // eta E[(h - p_s)^+] = E[(p_u - h)^+]; not the published rule
};

/// Constant thresholds balancing storing against drawing, coupled by the companion relation.
template <RateFunction R>
FixedThresholds solve_fixed_thresholds(const HarvestDistribution& dist, const R& rate, double eta,
                                       FixedThresholdRule rule = FixedThresholdRule::TailBalance) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument("solve_fixed_thresholds: eta must lie in [0, 1]");
  if (eta == 0.0) return {0.0, kInf};
  auto gap = [&](double p_u) {
    const double p_s = companion_threshold(p_u, eta, rate);
    if (rule == FixedThresholdRule::TailBalance)
      return dist.prob_above(p_s) - dist.prob_below(p_u);
    const double stored = std::isfinite(p_s) ? eta * dist.expected_excess(p_s) : 0.0;
    return stored - dist.expected_deficit(p_u);
  };
  const double hi = std::max(dist.max_value(), 1e-300);
  if (gap(0.0) <= 0.0) return {0.0, companion_threshold(0.0, eta, rate)};
  const double p_u = bisect_first_true([&](double p) { return gap(p) <= 0.0; }, 0.0, hi, 1e-14);
  return {p_u, companion_threshold(p_u, eta, rate)};
}

inline CausalPolicy fixed_threshold_policy(FixedThresholds t) {
  return [t](double, double h) { return std::clamp(h, t.p_u, std::max(t.p_u, t.p_s)); };
}

inline CausalPolicy dp_policy(const DpSolution& sol,
                              HarvestLookup lookup = HarvestLookup::Nearest) {
  return [&sol, lookup](double E, double h) { return dp_action(sol, E, h, lookup); };
}

struct OnlineRun {
  RealizedPolicy policy;
  double utility = 0.0;
};

/// Runs a causal policy slot by slot; the policy sees only (E_k, h_k).
inline RealizedPolicy simulate_online(const HarvestProfile& profile, const StorageSpec& storage,
                                      const CausalPolicy& policy) {
  storage.validate();
  RealizedPolicy out;
  out.e.push_back(storage.e_init);
  double e = storage.e_init;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    const double h = profile[k];
    double a;
    try {
      a = policy(e, h);
    } catch (const std::exception& ex) {
      throw std::runtime_error("policy failed at slot " + std::to_string(k) + ": " + ex.what());
    }
    if (!(a >= 0.0) || !std::isfinite(a))
      throw std::invalid_argument("policy returned an invalid power at slot " +
                                  std::to_string(k));
    const auto step = detail::step_slot(h, std::max(h - a, 0.0), std::max(a - h, 0.0), e,
                                        storage.eta, storage.e_max, profile.delta());
    e = step.e_next;
    out.p.push_back(step.p);
    out.s.push_back(step.s);
    out.u.push_back(step.u);
    out.e.push_back(e);
  }
  return out;
}

template <RateFunction R>
OnlineRun simulate_online(const HarvestProfile& profile, const StorageSpec& storage,
                          const CausalPolicy& policy, const R& rate) {
  OnlineRun run{simulate_online(profile, storage, policy), 0.0};
  run.utility = average_utility(run.policy, rate);
  return run;
}

}  // namespace ehp
