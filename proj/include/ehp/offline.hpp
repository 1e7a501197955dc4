#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>

#include "ehp/core.hpp"
#include "ehp/rates.hpp"

namespace ehp {

/// A threshold pair together with what happens when it is run from a segment start.
struct ThresholdChoice {
  double p_u = 0.0;
  double p_s = kInf;
  BatteryEvent event;          // first event (None: ran to the horizon)
  double final_energy = 0.0;   // energy at end_slot
  std::size_t end_slot = 0;    // first slot of the next segment
  double shortfall = 0.0;      // undelivered draw in the slot where the battery ran dry
  bool passive = false;        // single slot on an empty battery with p = h
};

struct OfflineSolution {
  ThresholdSchedule schedule;
  RealizedPolicy policy;
  double utility = 0.0;           // average utility over the horizon
  std::size_t tie_breaks = 0;     // segments where both candidates qualified
  std::size_t unresolved = 0;     // segments where neither candidate qualified
};

namespace detail {

/// First stop of a probe, counting a clipped request on a saturated battery as an event.
inline BatteryEvent first_stop(const ThresholdProbe& probe) {
  if (probe.clamp && (probe.event.kind == EventKind::None || probe.clamp->slot < probe.event.slot))
    return *probe.clamp;
  return probe.event;
}

inline ThresholdProbe probe_pair(const HarvestProfile& profile, const StorageSpec& storage,
                                 double p_u, double p_s, std::size_t start_slot,
                                 double start_energy, RealizedPolicy* record = nullptr) {
  return probe_thresholds(profile, storage, p_u, p_s, start_slot, start_energy, record, true,
                          true);
}

template <RateFunction R>
ThresholdChoice run_pair(const HarvestProfile& profile, const StorageSpec& storage, const R& rate,
                         double p_u, std::size_t start_slot, double start_energy) {
  ThresholdChoice c;
  c.p_u = p_u;
  c.p_s = companion_threshold(p_u, storage.eta, rate);
  const auto probe = probe_pair(profile, storage, c.p_u, c.p_s, start_slot, start_energy);
  c.event = first_stop(probe);
  c.shortfall = probe.shortfall;
  c.final_energy = probe.final_energy;
  c.end_slot = probe.end_slot;
  return c;
}

/**
 * True if the pair runs the battery dry before it fills: it empties, it is
 * asked to draw while empty, or it ends the horizon (numerically) empty.
 * Filling, or overflowing while already full, counts as not depleting.
 * Gives up early once the stored energy exceeds what p_u can still draw.
 */
inline bool depletes(const HarvestProfile& profile, const StorageSpec& storage, double p_u,
                     double p_s, std::size_t start_slot, double start_energy, double tol_e) {
  const double delta = profile.delta();
  const std::size_t K = profile.size();
  double e = start_energy;
  for (std::size_t k = start_slot; k < K; ++k) {
    const double h = profile[k];
    const double s = h > p_s ? h - p_s : 0.0;
    const double u = h < p_u ? p_u - h : 0.0;
    const auto out = step_slot(h, s, u, e, storage.eta, storage.e_max, delta);
    if (out.event == EventKind::Empty) return true;
    if (out.event == EventKind::Full) return false;
    if (u > 0.0 && out.u < u) return true;
    if (s > 0.0 && out.s < s) return false;
    e = out.e_next;
    if (e > p_u * delta * static_cast<double>(K - k - 1) + tol_e) return false;
  }
  return e <= tol_e;
}

/// Initial upper bracket for the drawing threshold: the p_u whose storing
/// threshold equals the largest harvest, or a drain rate that empties the start energy.
template <RateFunction R>
double initial_upper_threshold(const HarvestProfile& profile, const StorageSpec& storage,
                               const R& rate, std::size_t start_slot, double start_energy) {
  double h_max = 0.0;
  for (std::size_t k = start_slot; k < profile.size(); ++k) h_max = std::max(h_max, profile[k]);
  double hi = 0.0;
  if (storage.eta > 0.0 && h_max > 0.0) {
    hi = inverse_derivative_low(rate, storage.eta * rate.derivative(h_max));
    if (!std::isfinite(hi)) hi = 0.0;
  }
  const double remaining = profile.delta() * static_cast<double>(profile.size() - start_slot);
  hi = std::max({hi, h_max, start_energy / remaining});
  return hi > 0.0 ? hi : 1.0;
}

}  // namespace detail

/**
 * Smallest drawing threshold (storing threshold coupled through the companion
 * relation) whose run from the segment start empties the battery before any
 * Full event or by the horizon. On an empty battery whose first slot cannot
 * be lifted without starving, the result is a passive single slot.
 */
template <RateFunction R>
ThresholdChoice find_smallest_depleting_threshold(const HarvestProfile& profile,
                                                  const StorageSpec& storage, const R& rate,
                                                  std::size_t start_slot, double start_energy) {
  storage.validate();
  if (start_slot >= profile.size()) throw std::invalid_argument("start slot beyond horizon");
  if (start_energy < 0.0 || start_energy > storage.e_max)
    throw std::invalid_argument("start energy outside [0, e_max]");
  const double tol_e = energy_tolerance(profile.total_energy());
  auto pred = [&](double p_u) {
    return detail::depletes(profile, storage, p_u, companion_threshold(p_u, storage.eta, rate),
                            start_slot, start_energy, tol_e);
  };
  if (start_energy == 0.0) {
    const double h0 = profile[start_slot];
    if (!pred(h0)) {
      ThresholdChoice c;
      c.p_u = h0;
      c.p_s = companion_threshold(h0, storage.eta, rate);
      c.end_slot = start_slot + 1;
      c.passive = true;
      return c;
    }
    const double p_u = pred(0.0) ? 0.0 : bisect_first_true(pred, 0.0, h0, 1e-13);
    return detail::run_pair(profile, storage, rate, p_u, start_slot, start_energy);
  }
  double p_u = 0.0;
  if (!pred(0.0)) {
    double hi = detail::initial_upper_threshold(profile, storage, rate, start_slot, start_energy);
    int doublings = 0;
    while (!pred(hi)) {
      hi *= 2.0;
      if (++doublings > 400) throw std::logic_error("no depleting threshold found");
    }
    p_u = bisect_first_true(pred, 0.0, hi, 1e-13);
  }
  return detail::run_pair(profile, storage, rate, p_u, start_slot, start_energy);
}

struct Candidates {
  ThresholdChoice empty;                // smallest p_u whose run empties the battery
  std::optional<ThresholdChoice> full;  // largest p_u whose first event is Full
};

template <RateFunction R>
Candidates find_candidates(const HarvestProfile& profile, const StorageSpec& storage,
                           const R& rate, std::size_t start_slot, double start_energy) {
  Candidates out{find_smallest_depleting_threshold(profile, storage, rate, start_slot,
                                                   start_energy),
                 std::nullopt};
  if (!storage.bounded() || out.empty.passive) return out;
  auto fills = [&](double p_u) {
    return detail::run_pair(profile, storage, rate, p_u, start_slot, start_energy).event.kind ==
           EventKind::Full;
  };
  if (!fills(0.0)) return out;
  const double hi = out.empty.p_u;
  if (hi <= 0.0 || fills(hi)) return out;
  const double p_u = bisect_last_true(fills, 0.0, hi, 1e-13);
  out.full = detail::run_pair(profile, storage, rate, p_u, start_slot, start_energy);
  return out;
}

namespace detail {

/// Accumulates segments; runs of passive slots are folded into the next
/// segment when its drawing threshold covers their harvest.
template <RateFunction R>
class ScheduleBuilder {
 public:
  ScheduleBuilder(OfflineSolution& sol, const HarvestProfile& profile, const StorageSpec& storage,
                  const R& rate)
      : sol_(sol), profile_(profile), storage_(storage), rate_(rate) {}

  void add(const ThresholdChoice& c, std::size_t slot, double energy) {
    RealizedPolicy fragment;
    if (c.passive) {
      fragment = {slot, {profile_[slot]}, {0.0}, {0.0}, {energy, energy}};
    } else {
      probe_pair(profile_, storage_, c.p_u, c.p_s, slot, energy, &fragment);
    }
    sol_.policy.append(fragment);
    if (c.passive) {
      if (!pending_) pending_ = slot;
      pending_max_ = std::max(pending_max_, profile_[slot]);
      return;
    }
    ThresholdSegment seg{profile_.delta() * static_cast<double>(slot), slot, c.p_u, c.p_s,
                         c.event.kind};
    if (pending_) {
      if (c.p_u >= pending_max_) {
        seg.start_slot = *pending_;
        seg.t_start = profile_.delta() * static_cast<double>(*pending_);
      } else {
        flush();
      }
      pending_.reset();
      pending_max_ = 0.0;
    }
    sol_.schedule.segments.push_back(seg);
  }

  void finish() {
    if (pending_) flush();
    pending_.reset();
  }

 private:
  void flush() {
    sol_.schedule.segments.push_back({profile_.delta() * static_cast<double>(*pending_),
                                      *pending_, pending_max_,
                                      companion_threshold(pending_max_, storage_.eta, rate_),
                                      EventKind::Empty});
  }

  OfflineSolution& sol_;
  const HarvestProfile& profile_;
  const StorageSpec& storage_;
  const R& rate_;
  std::optional<std::size_t> pending_;
  double pending_max_ = 0.0;
};

}  // namespace detail

/// Offline optimum with an unbounded battery: repeated smallest-depleting searches.
template <RateFunction R>
OfflineSolution solve_infinite(const HarvestProfile& profile, const StorageSpec& storage,
                               const R& rate) {
  storage.validate();
  if (storage.bounded()) throw std::invalid_argument("solve_infinite: battery must be unbounded");
  OfflineSolution sol;
  detail::ScheduleBuilder<R> builder(sol, profile, storage, rate);
  std::size_t slot = 0;
  double energy = storage.e_init;
  while (slot < profile.size()) {
    const auto c = find_smallest_depleting_threshold(profile, storage, rate, slot, energy);
    builder.add(c, slot, energy);
    slot = c.end_slot;
    energy = c.final_energy;
  }
  builder.finish();
  sol.utility = average_utility(sol.policy, rate);
  return sol;
}

/**
 * Offline optimum with a finite battery. Each segment picks between the
 * smallest emptying and the largest filling threshold by running each past
 * its event with unchanged thresholds: the emptying candidate qualifies if
 * the battery does not run dry again before the horizon, the filling one if
 * it does.
 */
template <RateFunction R>
OfflineSolution solve_finite(const HarvestProfile& profile, const StorageSpec& storage,
                             const R& rate) {
  storage.validate();
  const std::size_t last = profile.size() - 1;
  const double tol_e = energy_tolerance(profile.total_energy());
  OfflineSolution sol;
  detail::ScheduleBuilder<R> builder(sol, profile, storage, rate);
  auto extend = [&](const ThresholdChoice& c) {
    return detail::probe_pair(profile, storage, c.p_u, c.p_s, c.end_slot, c.final_energy);
  };
  std::size_t slot = 0;
  double energy = storage.e_init;
  while (slot < profile.size()) {
    const auto cand = find_candidates(profile, storage, rate, slot, energy);
    const auto& c0 = cand.empty;
    // A genuine emptying run reaches zero without cutting the last draw short.
    const bool touches = c0.event.kind == EventKind::None || c0.shortfall <= tol_e;
    const bool terminal =
        c0.passive || (touches && (c0.event.kind == EventKind::None || c0.event.slot >= last));
    const ThresholdChoice* chosen = &c0;
    if (!terminal && cand.full) {
      bool empty_ok = touches;
      if (empty_ok && c0.end_slot <= last) {
        const auto ext0 = extend(c0);
        empty_ok = detail::first_stop(ext0).kind != EventKind::Empty ||
                   ext0.shortfall <= tol_e;
      }
      const auto& cf = *cand.full;
      bool full_ok = false;
      if (cf.event.slot < last) {
        const auto ext1 = extend(cf);
        const auto stop = detail::first_stop(ext1);
        full_ok = stop.kind == EventKind::Empty ||
                  (stop.kind == EventKind::None && ext1.final_energy <= tol_e);
      }
      if (empty_ok && full_ok)
        ++sol.tie_breaks;
      else if (!empty_ok && full_ok)
        chosen = &cf;
      else if (!empty_ok)
        ++sol.unresolved;
    }
    builder.add(*chosen, slot, energy);
    slot = chosen->end_slot;
    energy = chosen->final_energy;
  }
  builder.finish();
  sol.utility = average_utility(sol.policy, rate);
  return sol;
}

/// Dispatches on battery capacity.
template <RateFunction R>
OfflineSolution solve_offline(const HarvestProfile& profile, const StorageSpec& storage,
                              const R& rate) {
  return storage.bounded() ? solve_finite(profile, storage, rate)
                           : solve_infinite(profile, storage, rate);
}

}  // namespace ehp
