#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ehp/numeric.hpp"

namespace ehp {

/// Slotted harvest power sequence: h[k] watts over [k*delta, (k+1)*delta).
class HarvestProfile {
 public:
  HarvestProfile() = default;
  HarvestProfile(double delta, std::vector<double> h) : delta_(delta), h_(std::move(h)) {
    if (!(delta_ > 0.0) || !std::isfinite(delta_))
      throw std::invalid_argument("harvest profile: delta must be positive");
    if (h_.empty()) throw std::invalid_argument("harvest profile: no slots");
    for (double v : h_)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("harvest profile: harvest powers must be finite and >= 0");
  }

  double delta() const { return delta_; }
  std::size_t size() const { return h_.size(); }
  double horizon() const { return delta_ * static_cast<double>(h_.size()); }
  std::span<const double> h() const { return h_; }
  double operator[](std::size_t k) const { return h_[k]; }
  double max_power() const { return *std::max_element(h_.begin(), h_.end()); }
  double mean_power() const {
    return std::accumulate(h_.begin(), h_.end(), 0.0) / static_cast<double>(h_.size());
  }
  double total_energy() const { return std::accumulate(h_.begin(), h_.end(), 0.0) * delta_; }

 private:
  double delta_ = 1.0;
  std::vector<double> h_;
};

struct StorageSpec {
  double eta = 1.0;
  double e_max = kInf;
  double e_init = 0.0;

  bool bounded() const { return std::isfinite(e_max); }

  void validate() const {
    if (!(eta >= 0.0 && eta <= 1.0))
      throw std::invalid_argument("storage: eta must lie in [0, 1]");
    if (!(e_max > 0.0)) throw std::invalid_argument("storage: e_max must be positive");
    if (!(e_init >= 0.0 && e_init <= e_max))
      throw std::invalid_argument("storage: e_init must lie in [0, e_max]");
  }
};

enum class EventKind { None, Empty, Full };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Empty: return "empty";
    case EventKind::Full: return "full";
    default: return "none";
  }
}

struct BatteryEvent {
  EventKind kind = EventKind::None;
  double time = 0.0;      // seconds; meaningless for None
  std::size_t slot = 0;   // slot containing the crossing
};

/// Per-slot realization. Slot i of the vectors is absolute slot start_slot + i;
/// e has one more entry than p (boundary energies).
struct RealizedPolicy {
  std::size_t start_slot = 0;
  std::vector<double> p, s, u, e;

  std::size_t size() const { return p.size(); }

  void append(const RealizedPolicy& other) {
    if (p.empty()) {
      *this = other;
      return;
    }
    p.insert(p.end(), other.p.begin(), other.p.end());
    s.insert(s.end(), other.s.begin(), other.s.end());
    u.insert(u.end(), other.u.begin(), other.u.end());
    e.insert(e.end(), other.e.begin() + 1, other.e.end());
  }
};

struct ThresholdSegment {
  double t_start = 0.0;
  std::size_t start_slot = 0;
  double p_u = 0.0;
  double p_s = kInf;
  EventKind end_event = EventKind::None;  // event that closed this segment
};

struct ThresholdSchedule {
  std::vector<ThresholdSegment> segments;
};

namespace detail {

struct SlotOutcome {
  double p, s, u, e_next;
  EventKind event = EventKind::None;
  double tau = 0.0;  // crossing offset inside the slot
};

/// One slot of battery dynamics with drain and overflow clamps. The requested
/// flows are constant over the slot, so the stored energy is linear in time and
/// crossings of 0 / e_max are solved exactly.
inline SlotOutcome step_slot(double h, double s, double u, double e, double eta, double e_max,
                             double delta) {
  SlotOutcome out{h - s + u, s, u, 0.0};
  const double rate = eta * s - u;
  double next = e + delta * rate;
  const double scale = std::max(e, delta * (h + u));
  if (std::abs(next) <= 1e-13 * scale) next = 0.0;
  if (std::isfinite(e_max) && std::abs(next - e_max) <= 1e-13 * std::max(scale, e_max)) next = e_max;

  if (rate < 0.0 && next <= 0.0) {
    // Drawing exhausts the battery: deliver exactly what is stored.
    out.u = e / delta;
    out.p = h + out.u;
    out.e_next = 0.0;
    if (e > 0.0) {
      out.event = EventKind::Empty;
      out.tau = std::min(delta, e / (-rate));
    }
    return out;
  }
  if (rate > 0.0 && next >= e_max) {
    // Storing fills the battery: the unstorable surplus goes to the transmitter.
    out.s = (e_max - e) / (eta * delta);
    out.p = h - out.s;
    out.e_next = e_max;
    if (e < e_max) {
      out.event = EventKind::Full;
      out.tau = std::min(delta, (e_max - e) / rate);
    }
    return out;
  }
  out.e_next = next;
  return out;
}

inline void check_threshold_args(double p_u, double p_s) {
  if (!std::isfinite(p_u) || p_u < 0.0)
    throw std::invalid_argument("thresholds: p_u must be finite and >= 0");
  if (std::isnan(p_s) || p_s == -kInf)
    throw std::invalid_argument("thresholds: p_s must be a number or +inf");
  if (p_s < p_u * (1.0 - 1e-12) - 1e-300)
    throw std::invalid_argument("thresholds: p_u must not exceed p_s");
}

}  // namespace detail

/// Lightweight result of running a threshold pair without recording the trajectory.
struct ThresholdProbe {
  BatteryEvent event;
  /// First slot whose request was clipped at the bound the battery already sat
  /// on: Empty for a draw from an empty battery, Full for a charge into a full one.
  std::optional<BatteryEvent> clamp;
  double shortfall = 0.0;     // requested but undelivered draw in the first stopping slot
  double final_energy = 0.0;  // energy at the stop boundary
  std::size_t end_slot = 0;   // one past the last executed slot
};

/**
 * Runs the double-threshold rule from (start_slot, start_energy): per slot the
 * target power is clamp(h, p_u, p_s), excess above p_s is stored and the
 * deficit below p_u is drawn. Stops after the slot holding the first battery
 * event, or at the horizon. With stop_at_clamp it also stops after the first
 * slot that asks to draw from an empty battery or to charge a full one.
 */
inline ThresholdProbe probe_thresholds(const HarvestProfile& profile, const StorageSpec& storage,
                                       double p_u, double p_s, std::size_t start_slot,
                                       double start_energy, RealizedPolicy* record = nullptr,
                                       bool stop_at_event = true, bool stop_at_clamp = false) {
  detail::check_threshold_args(p_u, p_s);
  if (start_energy < 0.0 || start_energy > storage.e_max)
    throw std::invalid_argument("thresholds: start energy outside [0, e_max]");
  const double delta = profile.delta();
  ThresholdProbe probe;
  double e = start_energy;
  if (record) {
    *record = RealizedPolicy{};
    record->start_slot = start_slot;
    record->e.push_back(e);
  }
  bool stopped = false;
  std::size_t k = start_slot;
  for (; k < profile.size(); ++k) {
    const double h = profile[k];
    const double s = h > p_s ? h - p_s : 0.0;
    const double u = h < p_u ? p_u - h : 0.0;
    const auto out = detail::step_slot(h, s, u, e, storage.eta, storage.e_max, delta);
    e = out.e_next;
    if (record) {
      record->p.push_back(out.p);
      record->s.push_back(out.s);
      record->u.push_back(out.u);
      record->e.push_back(e);
    }
    if (out.event != EventKind::None && probe.event.kind == EventKind::None) {
      probe.event = {out.event, delta * static_cast<double>(k) + out.tau, k};
      if (!probe.clamp && out.event == EventKind::Empty) probe.shortfall = delta * (u - out.u);
      stopped = stop_at_event;
    } else if (out.event == EventKind::None && !probe.clamp &&
               ((u > 0.0 && out.u < u) || (s > 0.0 && out.s < s))) {
      probe.clamp = {u > 0.0 ? EventKind::Empty : EventKind::Full,
                     delta * static_cast<double>(k), k};
      if (probe.event.kind == EventKind::None && u > 0.0) probe.shortfall = delta * (u - out.u);
      stopped = stop_at_clamp;
    }
    if (stopped) {
      ++k;
      break;
    }
  }
  probe.final_energy = e;
  probe.end_slot = k;
  return probe;
}

struct ThresholdRun {
  RealizedPolicy policy;
  BatteryEvent event;
};

inline ThresholdRun simulate_thresholds(const HarvestProfile& profile, const StorageSpec& storage,
                                        double p_u, double p_s, std::size_t start_slot = 0,
                                        std::optional<double> start_energy = std::nullopt,
                                        bool stop_at_event = true) {
  ThresholdRun run;
  const auto probe = probe_thresholds(profile, storage, p_u, p_s, start_slot,
                                      start_energy.value_or(storage.e_init), &run.policy,
                                      stop_at_event);
  run.event = probe.event;
  return run;
}

/// Executes per-slot transmit powers under the same drain/overflow clamps.
inline RealizedPolicy simulate_policy(const HarvestProfile& profile, const StorageSpec& storage,
                                      std::span<const double> actions,
                                      BatteryEvent* first_event = nullptr) {
  if (actions.size() != profile.size())
    throw std::invalid_argument("simulate_policy: one action per slot required");
  RealizedPolicy out;
  out.e.push_back(storage.e_init);
  double e = storage.e_init;
  bool seen = false;
  for (std::size_t k = 0; k < profile.size(); ++k) {
    const double a = actions[k];
    if (!(a >= 0.0) || !std::isfinite(a))
      throw std::invalid_argument("simulate_policy: actions must be finite and >= 0 (slot " +
                                  std::to_string(k) + ")");
    const double h = profile[k];
    const auto step = detail::step_slot(h, std::max(h - a, 0.0), std::max(a - h, 0.0), e,
                                        storage.eta, storage.e_max, profile.delta());
    e = step.e_next;
    out.p.push_back(step.p);
    out.s.push_back(step.s);
    out.u.push_back(step.u);
    out.e.push_back(e);
    if (first_event && !seen && step.event != EventKind::None) {
      *first_event = {step.event, profile.delta() * static_cast<double>(k) + step.tau, k};
      seen = true;
    }
  }
  return out;
}

/// Average utility (1/T) * sum r(p_k) * delta over the slots of a policy.
template <class Rate>
double average_utility(const RealizedPolicy& policy, const Rate& rate) {
  if (policy.p.empty()) return 0.0;
  double total = 0.0;
  for (double p : policy.p) total += rate.value(p);
  return total / static_cast<double>(policy.p.size());
}

enum class ViolationKind {
  Causality,
  Overflow,
  StorageExceedsHarvest,
  SimultaneousChargeDischarge,
  PowerBalance,
  NegativeDraw,
  EnergyLedger,
  LengthMismatch,
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::Causality: return "causality";
    case ViolationKind::Overflow: return "overflow";
    case ViolationKind::StorageExceedsHarvest: return "storage-exceeds-harvest";
    case ViolationKind::SimultaneousChargeDischarge: return "simultaneous-charge-discharge";
    case ViolationKind::PowerBalance: return "power-balance";
    case ViolationKind::NegativeDraw: return "negative-draw";
    case ViolationKind::EnergyLedger: return "energy-ledger";
    case ViolationKind::LengthMismatch: return "length-mismatch";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::size_t slot;
  double magnitude;
};

/// Checks every constraint of a full-horizon realization; nullopt means feasible.
inline std::optional<Violation> validate_policy(const RealizedPolicy& policy,
                                                const HarvestProfile& profile,
                                                const StorageSpec& storage) {
  const std::size_t n = profile.size();
  if (policy.p.size() != n || policy.s.size() != n || policy.u.size() != n ||
      policy.e.size() != n + 1 || policy.start_slot != 0)
    return Violation{ViolationKind::LengthMismatch, 0, 0.0};
  const double tol_e = energy_tolerance(profile.total_energy());
  const double delta = profile.delta();
  const double eta = storage.eta;

  if (std::abs(policy.e[0] - storage.e_init) > tol_e)
    return Violation{ViolationKind::EnergyLedger, 0, policy.e[0] - storage.e_init};
  double ledger = storage.e_init;
  for (std::size_t k = 0; k < n; ++k) {
    const double h = profile[k], p = policy.p[k], s = policy.s[k], u = policy.u[k];
    const double tol_p = kPowerRelTol * std::max({1.0, h, s, u});
    if (std::abs(p - (h - s + u)) > tol_p)
      return Violation{ViolationKind::PowerBalance, k, p - (h - s + u)};
    if (s < -tol_p || s > h + tol_p)
      return Violation{ViolationKind::StorageExceedsHarvest, k, s};
    if (u < -tol_p) return Violation{ViolationKind::NegativeDraw, k, u};
    if (std::min(s, u) > tol_p)
      return Violation{ViolationKind::SimultaneousChargeDischarge, k, std::min(s, u)};
    ledger += delta * (eta * s - u);
    if (std::abs(policy.e[k + 1] - (policy.e[k] + delta * (eta * s - u))) > tol_e)
      return Violation{ViolationKind::EnergyLedger, k, policy.e[k + 1] - policy.e[k]};
    if (ledger < -tol_e) return Violation{ViolationKind::Causality, k, ledger};
    if (ledger > storage.e_max + tol_e) return Violation{ViolationKind::Overflow, k, ledger};
  }
  return std::nullopt;
}

}  // namespace ehp
