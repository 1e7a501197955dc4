#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ehp/core.hpp"
#include "ehp/distribution.hpp"
#include "ehp/online.hpp"
#include "ehp/rates.hpp"

namespace ehp {

/// Transmit whatever is harvested, never touching the battery.
inline CausalPolicy hasty_policy() {
  return [](double, double h) { return h; };
}

/// Target the mean harvest power every slot; the simulator clamps to availability.
inline CausalPolicy constant_policy(double mean_power) {
  if (!(mean_power >= 0.0) || !std::isfinite(mean_power))
    throw std::invalid_argument("constant_policy: mean power must be finite and >= 0");
  return [mean_power](double, double) { return mean_power; };
}
inline CausalPolicy constant_policy(const HarvestDistribution& dist) {
  return constant_policy(dist.mean());
}
inline CausalPolicy constant_policy(const HarvestProfile& profile) {
  return constant_policy(profile.mean_power());
}

struct OracleOptions {
  std::size_t starts = 5;
  std::uint64_t seed = 0x5eed;
  double gap_tol = 1e-11;          // barrier duality gap, scaled objective units
  bool grid_check = true;          // exhaustive energy-level grid when K <= 3
  double grid_step_fraction = 1e-3;
};

struct OracleResult {
  std::vector<double> s, u;
  RealizedPolicy policy;
  double utility = 0.0;
  std::vector<double> start_utilities;
  double grid_utility = -kInf;     // set when the grid check ran
  bool certified = false;
};

namespace detail {

/// Scaled problem: powers in units of P, energies in units of delta*P.
struct OracleProblem {
  std::size_t K = 0;
  double P = 1.0, eta = 0.0, e0 = 0.0, emax = kInf;
  std::vector<double> h;
  double obj_scale = 1.0;
  double slack_relax = 1e-11;       // energy bounds are relaxed by this much
  std::vector<int> s_index;         // variable index of s_k, -1 when fixed at 0
  std::size_t n = 0;                // number of free variables

  std::size_t u_index(std::size_t k) const { return n - K + k; }

  void layout() {
    s_index.assign(K, -1);
    std::size_t next = 0;
    for (std::size_t k = 0; k < K; ++k)
      if (eta > 0.0 && h[k] > 0.0) s_index[k] = static_cast<int>(next++);
    n = next + K;
  }
  double s_of(const std::vector<double>& x, std::size_t k) const {
    return s_index[k] >= 0 ? x[static_cast<std::size_t>(s_index[k])] : 0.0;
  }
  double u_of(const std::vector<double>& x, std::size_t k) const { return x[u_index(k)]; }

  template <RateFunction R>
  double utility(const std::vector<double>& x, const R& rate) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += rate.value(P * (h[k] - s_of(x, k) + u_of(x, k)));
    return acc / static_cast<double>(K);
  }
};

template <RateFunction R>
double second_derivative(const R& rate, double p, double scale) {
  const double step = 1e-5 * std::max(p, 1e-3 * scale);
  if (p > step) return (rate.derivative(p + step) - rate.derivative(p - step)) / (2.0 * step);
  return (rate.derivative(p + 2.0 * step) - rate.derivative(p + step)) / step;
}

/// Sparse gradient of one linear slack: (index, coefficient) pairs.
using LinearTerm = std::vector<std::pair<std::size_t, double>>;

/// All inequality constraints as slack(x) = offset + a.x > 0.
struct OracleConstraints {
  std::vector<LinearTerm> a;
  std::vector<double> offset;

  explicit OracleConstraints(const OracleProblem& pb) {
    for (std::size_t k = 0; k < pb.K; ++k) {
      if (pb.s_index[k] >= 0) {
        const auto i = static_cast<std::size_t>(pb.s_index[k]);
        add({{i, 1.0}}, 0.0);
        add({{i, -1.0}}, pb.h[k]);
      }
      add({{pb.u_index(k), 1.0}}, 0.0);
    }
    LinearTerm level;
    for (std::size_t k = 0; k < pb.K; ++k) {
      if (pb.s_index[k] >= 0) level.push_back({static_cast<std::size_t>(pb.s_index[k]), pb.eta});
      level.push_back({pb.u_index(k), -1.0});
      add(level, pb.e0 + pb.slack_relax);
      if (std::isfinite(pb.emax)) {
        LinearTerm neg = level;
        for (auto& [i, c] : neg) c = -c;
        add(neg, pb.emax - pb.e0 + pb.slack_relax);
      }
    }
  }
  void add(LinearTerm t, double off) {
    a.push_back(std::move(t));
    offset.push_back(off);
  }
  std::size_t size() const { return a.size(); }
  double slack(std::size_t m, const std::vector<double>& x) const {
    double v = offset[m];
    for (const auto& [i, c] : a[m]) v += c * x[i];
    return v;
  }
};

/// In-place Cholesky solve of H d = b; adds diagonal jitter on breakdown.
inline bool cholesky_solve(std::vector<double> H, std::size_t n, std::vector<double>& b) {
  double diag_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) diag_max = std::max(diag_max, H[i * n + i]);
  std::vector<double> L;
  for (double jitter = 0.0; jitter < 1.0 * diag_max + 1.0;
       jitter = jitter == 0.0 ? 1e-14 * diag_max : jitter * 100.0) {
    L = H;
    bool ok = true;
    for (std::size_t j = 0; j < n && ok; ++j) {
      double d = L[j * n + j] + jitter;
      for (std::size_t k = 0; k < j; ++k) d -= L[j * n + k] * L[j * n + k];
      if (!(d > 0.0)) {
        ok = false;
        break;
      }
      d = std::sqrt(d);
      L[j * n + j] = d;
      for (std::size_t i = j + 1; i < n; ++i) {
        double v = L[i * n + j];
        for (std::size_t k = 0; k < j; ++k) v -= L[i * n + k] * L[j * n + k];
        L[i * n + j] = v / d;
      }
    }
    if (!ok) continue;
    for (std::size_t i = 0; i < n; ++i) {
      double v = b[i];
      for (std::size_t k = 0; k < i; ++k) v -= L[i * n + k] * b[k];
      b[i] = v / L[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double v = b[i];
      for (std::size_t k = i + 1; k < n; ++k) v -= L[k * n + i] * b[k];
      b[i] = v / L[i * n + i];
    }
    return true;
  }
  return false;
}

/**
 * Log-barrier path following: minimizes -t*U(x)*scale - sum log(slack) by
 * damped Newton steps for increasing t until the barrier gap m/t is below tol.
 */
template <RateFunction R>
bool oracle_barrier(const OracleProblem& pb, const R& rate, std::vector<double>& x, double tol) {
  const OracleConstraints cons(pb);
  const std::size_t n = pb.n, m = cons.size(), K = pb.K;
  const double wk = pb.obj_scale / static_cast<double>(K);
  auto phi = [&](const std::vector<double>& y, double t) {
    double v = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double sl = cons.slack(c, y);
      if (!(sl > 0.0)) return kInf;
      v -= std::log(sl);
    }
    return v - t * pb.utility(y, rate) * pb.obj_scale;
  };
  std::vector<double> g(n), H(n * n), d(n), y(n);
  bool converged = true;
  for (double t = 1.0;; t *= 10.0) {
    bool inner_ok = false;
    double f = phi(x, t);
    for (int it = 0; it < 200; ++it) {
      std::fill(g.begin(), g.end(), 0.0);
      std::fill(H.begin(), H.end(), 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const double p = pb.P * (pb.h[k] - pb.s_of(x, k) + pb.u_of(x, k));
        const double d1 = t * wk * rate.derivative(p) * pb.P;
        const double d2 = -t * wk * second_derivative(rate, p, pb.P) * pb.P * pb.P;
        const std::size_t iu = pb.u_index(k);
        g[iu] -= d1;
        H[iu * n + iu] += d2;
        if (pb.s_index[k] >= 0) {
          const auto is = static_cast<std::size_t>(pb.s_index[k]);
          g[is] += d1;
          H[is * n + is] += d2;
          H[is * n + iu] -= d2;
          H[iu * n + is] -= d2;
        }
      }
      for (std::size_t c = 0; c < m; ++c) {
        const double sl = cons.slack(c, x);
        for (const auto& [i, ci] : cons.a[c]) {
          g[i] -= ci / sl;
          for (const auto& [j, cj] : cons.a[c]) H[i * n + j] += ci * cj / (sl * sl);
        }
      }
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      if (!cholesky_solve(H, n, d)) break;
      double decrement = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrement -= g[i] * d[i];
      // decrement / t bounds the suboptimality in scaled utility units.
      if (decrement / t <= tol) {
        inner_ok = true;
        break;
      }
      double step = 1.0, fn = kInf;
      for (int bt = 0; bt < 80; ++bt) {
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + step * d[i];
        fn = phi(y, t);
        if (fn <= f - 0.25 * step * decrement) break;
        step *= 0.5;
      }
      // No progress beyond the resolution of the barrier value: judge and stop.
      if (!(fn < kInf) || f - fn <= 1e-15 * std::abs(f)) {
        inner_ok = decrement / t <= 10.0 * tol;
        if (fn < f) x = y;
        break;
      }
      x = y;
      f = fn;
    }
    converged &= inner_ok;
    if (static_cast<double>(m) / t <= tol) break;
  }
  return converged;
}

/// Forward pass making (s, u) exactly feasible, then spending any leftover energy.
inline void repair(const OracleProblem& pb, std::vector<double>& s, std::vector<double>& u) {
  const std::size_t K = pb.K;
  for (std::size_t k = 0; k < K; ++k) {
    s[k] = std::clamp(s[k], 0.0, pb.h[k]);
    u[k] = std::max(u[k], 0.0);
    const double m = std::min(s[k], u[k]);
    s[k] -= m;
    u[k] -= m;
  }
  double e = pb.e0;
  for (std::size_t k = 0; k < K; ++k) {
    double next = e + pb.eta * s[k] - u[k];
    if (next < 0.0) {
      u[k] = e + pb.eta * s[k];
      next = 0.0;
    } else if (next > pb.emax) {
      s[k] = pb.eta > 0.0 ? std::max(0.0, (pb.emax - e + u[k]) / pb.eta) : 0.0;
      next = std::min(pb.emax, e + pb.eta * s[k] - u[k]);
    }
    e = std::max(next, 0.0);
  }
  if (e > 0.0) {
    const std::size_t k = K - 1;
    if (s[k] > 0.0 && pb.eta > 0.0) {
      const double cut = std::min(s[k], e / pb.eta);
      s[k] -= cut;
      e -= pb.eta * cut;
    }
    u[k] += e;
  }
}

template <RateFunction R>
double grid_oracle(const HarvestProfile& profile, const StorageSpec& storage, const R& rate,
                   double step_fraction) {
  const std::size_t K = profile.size();
  const double delta = profile.delta(), eta = storage.eta;
  const double step = step_fraction * std::max(profile.max_power(), 1e-300) * delta;
  double cap = storage.e_init;
  for (std::size_t k = 0; k < K; ++k) cap += eta * profile[k] * delta;
  cap = std::min(cap, storage.e_max);
  const std::size_t n = static_cast<std::size_t>(std::floor(cap / step)) + 1;
  auto slot_rate = [&](std::size_t k, double from, double to) {
    const double d = (to - from) / delta;  // net battery flow
    if (d > eta * profile[k] * (1.0 + 1e-12)) return -kInf;
    const double p = d >= 0.0 ? (eta > 0.0 ? profile[k] - d / eta : profile[k]) : profile[k] - d;
    return rate.value(std::max(p, 0.0));
  };
  double best = -kInf;
  std::vector<double> level(K + 1, 0.0);
  level[0] = storage.e_init;
  // Levels e_1..e_{K-1} on the grid, e_K = 0.
  std::vector<std::size_t> idx(K > 1 ? K - 1 : 0, 0);
  while (true) {
    for (std::size_t j = 0; j + 1 < K; ++j) level[j + 1] = std::min(cap, step * idx[j]);
    level[K] = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < K && total > -kInf; ++k)
      total += slot_rate(k, level[k], level[k + 1]);
    best = std::max(best, total / static_cast<double>(K));
    std::size_t j = 0;
    while (j < idx.size() && ++idx[j] == n) idx[j++] = 0;
    if (j == idx.size()) break;
  }
  return best;
}

}  // namespace detail

/**
 * Independent numerical optimum of the slotted problem over per-slot (s, u):
 * log-barrier Newton path following on the box and energy constraints,
 * several starts, final feasibility repair.
 */
template <RateFunction R>
OracleResult solve_convex_oracle(const HarvestProfile& profile, const StorageSpec& storage,
                                 const R& rate, const OracleOptions& opt = {}) {
  storage.validate();
  const std::size_t K = profile.size();
  const double delta = profile.delta();
  detail::OracleProblem pb;
  pb.K = K;
  pb.eta = storage.eta;
  pb.P = std::max({profile.max_power(), storage.e_init / profile.horizon(), 1e-12});
  pb.e0 = storage.e_init / (delta * pb.P);
  pb.emax = storage.bounded() ? storage.e_max / (delta * pb.P) : kInf;
  for (std::size_t k = 0; k < K; ++k) pb.h.push_back(profile[k] / pb.P);
  pb.obj_scale = 1.0 / std::max(rate.derivative(0.0) * pb.P, 1e-300);
  pb.layout();

  OracleResult res;
  if (storage.e_init == 0.0 && profile.total_energy() == 0.0) {
    // Nothing to allocate: the only feasible point is s = u = 0.
    res.s.assign(K, 0.0);
    res.u.assign(K, 0.0);
    res.policy = {0, std::vector<double>(K, 0.0), res.s, res.u, std::vector<double>(K + 1, 0.0)};
    res.utility = average_utility(res.policy, rate);
    res.start_utilities.assign(std::max<std::size_t>(opt.starts, 1), res.utility);
    res.certified = true;
    return res;
  }
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  const double u_floor = pb.slack_relax / (4.0 * static_cast<double>(K));
  std::vector<double> best_s, best_u;
  double best = -kInf;
  bool all_converged = true;
  for (std::size_t start = 0; start < std::max<std::size_t>(opt.starts, 1); ++start) {
    // Strictly feasible start: store a random fraction, draw back what was stored.
    std::vector<double> x(pb.n, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double frac = start == 0 ? 0.5 : unit(rng);
      double stored = 0.0;
      if (pb.s_index[k] >= 0) {
        stored = frac * pb.h[k];
        x[static_cast<std::size_t>(pb.s_index[k])] = stored;
      }
      x[pb.u_index(k)] = std::max(pb.eta * stored, u_floor);
    }
    all_converged &= detail::oracle_barrier(pb, rate, x, opt.gap_tol);
    std::vector<double> s(K), u(K);
    for (std::size_t k = 0; k < K; ++k) {
      s[k] = pb.s_of(x, k);
      u[k] = pb.u_of(x, k);
    }
    detail::repair(pb, s, u);
    double util = 0.0;
    for (std::size_t k = 0; k < K; ++k) util += rate.value(pb.P * (pb.h[k] - s[k] + u[k]));
    util /= static_cast<double>(K);
    res.start_utilities.push_back(util);
    if (util > best) {
      best = util;
      best_s = s;
      best_u = u;
    }
  }
  double lo = kInf, hi = -kInf;
  for (double v : res.start_utilities) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  res.certified = all_converged && (hi - lo) <= 1e-6 * std::max(std::abs(hi), 1e-300);

  res.s.resize(K);
  res.u.resize(K);
  res.policy.e.push_back(storage.e_init);
  double e = storage.e_init;
  const double snap = 1e-15 * std::max(1.0, storage.e_init + profile.total_energy());
  for (std::size_t k = 0; k < K; ++k) {
    res.s[k] = best_s[k] * pb.P;
    res.u[k] = best_u[k] * pb.P;
    res.policy.p.push_back(profile[k] - res.s[k] + res.u[k]);
    res.policy.s.push_back(res.s[k]);
    res.policy.u.push_back(res.u[k]);
    e += delta * (storage.eta * res.s[k] - res.u[k]);
    if (std::abs(e) < snap) e = 0.0;
    if (storage.bounded() && std::abs(e - storage.e_max) < snap) e = storage.e_max;
    res.policy.e.push_back(e);
  }
  res.utility = average_utility(res.policy, rate);

  if (opt.grid_check && K <= 3) {
    res.grid_utility = detail::grid_oracle(profile, storage, rate, opt.grid_step_fraction);
    if (res.grid_utility > res.utility * (1.0 + 1e-9) + 1e-300) res.certified = false;
  }
  return res;
}

}  // namespace ehp
