#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ehp/baselines.hpp"
#include "ehp/offline.hpp"
#include "test_support.hpp"

using namespace ehp;

namespace {

const LogRate kRate = normalized_rate();

// Brute force over the stored amount in the first slot of h = [2, 0].
double two_slot_grid_optimum(double eta) {
  double best = -1.0;
  for (int i = 0; i <= 200000; ++i) {
    const double s = i * 1e-5;
    best = std::max(best, 0.5 * (kRate.value(2.0 - s) + kRate.value(eta * s)));
  }
  return best;
}

void expect_companion(const OfflineSolution& sol, double eta, const auto& rate) {
  for (const auto& seg : sol.schedule.segments) {
    if (!std::isfinite(seg.p_s)) continue;
    EXPECT_LE(std::abs(rate.derivative(seg.p_s) - eta * rate.derivative(seg.p_u)),
              1e-6 * rate.derivative(seg.p_u));
  }
}

}  // namespace

TEST(FindSmallestDepleting, TwoSlotCanonical) {
  HarvestProfile prof(1.0, {2.0, 0.0});
  StorageSpec st{0.5, kInf, 0.0};
  auto c = find_smallest_depleting_threshold(prof, st, kRate, 0, 0.0);
  EXPECT_NEAR(c.p_u, 0.25, 1e-8);
  EXPECT_NEAR(c.p_s, 1.5, 1e-8);
  EXPECT_EQ(c.end_slot, 2u);
  EXPECT_LE(c.final_energy, energy_tolerance(prof.total_energy()));
}

TEST(FindSmallestDepleting, ConstantHarvestStaysPassive) {
  HarvestProfile prof(0.5, std::vector<double>(12, 0.8));
  StorageSpec st{0.6, kInf, 0.0};
  auto c = find_smallest_depleting_threshold(prof, st, kRate, 0, 0.0);
  EXPECT_LE(c.p_u, 0.8 + 1e-12);
  EXPECT_GE(c.p_s, 0.8 - 1e-8);
  EXPECT_LE(c.final_energy, energy_tolerance(prof.total_energy()));
  auto sol = solve_infinite(prof, st, kRate);
  for (double p : sol.policy.p) EXPECT_NEAR(p, 0.8, 1e-8);
}

TEST(FindSmallestDepleting, PureDischarge) {
  HarvestProfile prof(0.5, std::vector<double>(8, 0.0));
  for (double eta : {0.2, 0.9}) {
    StorageSpec st{eta, kInf, 1.2};
    auto c = find_smallest_depleting_threshold(prof, st, kRate, 0, 1.2);
    EXPECT_NEAR(c.p_u, 1.2 / 4.0, 1e-8);
    auto sol = solve_infinite(prof, st, kRate);
    ASSERT_EQ(sol.schedule.segments.size(), 1u);
    for (double p : sol.policy.p) EXPECT_NEAR(p, 0.3, 1e-8);
    EXPECT_NEAR(sol.policy.e.back(), 0.0, 1e-8);
  }
}

TEST(SolveInfinite, TwoSlotUtility) {
  HarvestProfile prof(1.0, {2.0, 0.0});
  StorageSpec st{0.5, kInf, 0.0};
  auto sol = solve_infinite(prof, st, kRate);
  ASSERT_EQ(sol.schedule.segments.size(), 1u);
  EXPECT_NEAR(sol.schedule.segments[0].p_u, 0.25, 1e-6);
  EXPECT_NEAR(sol.schedule.segments[0].p_s, 1.5, 1e-6);
  const double oracle = two_slot_grid_optimum(0.5);
  EXPECT_NEAR(oracle, 0.821928, 1e-6);
  EXPECT_NEAR(sol.utility, oracle, 1e-6);
  EXPECT_FALSE(validate_policy(sol.policy, prof, st));
}

TEST(SolveInfinite, LosslessIsConstantWaterLevel) {
  HarvestProfile prof(1.0, {0.2, 3.0, 0.1, 0.0, 1.0, 2.5, 0.3, 0.0});
  StorageSpec st{1.0, kInf, 0.0};
  auto sol = solve_infinite(prof, st, kRate);
  double prev = -1.0;
  for (const auto& seg : sol.schedule.segments) {
    EXPECT_NEAR(seg.p_u, seg.p_s, 1e-9);
    EXPECT_GE(seg.p_u, prev - 1e-12);
    prev = seg.p_u;
  }
  // Power is constant within each segment once the battery has been charged.
  for (std::size_t k = 1; k < prof.size(); ++k)
    EXPECT_GE(sol.policy.p[k], sol.policy.p[k - 1] - 1e-9);
}

TEST(SolveInfinite, TwoPeakSolarShape) {
  // Morning peak, night, larger evening peak: depletes between peaks and at T.
  std::vector<double> h;
  for (int k = 0; k < 48; ++k) {
    const double t = k / 48.0;
    double v = 0.0;
    if (t < 0.3) v = 1.0 * std::sin(M_PI * t / 0.3);
    if (t > 0.55 && t < 0.85) v = 2.5 * std::sin(M_PI * (t - 0.55) / 0.3);
    h.push_back(std::max(v, 0.0));
  }
  HarvestProfile prof(1.0, h);
  StorageSpec st{0.7, kInf, 0.0};
  auto sol = solve_infinite(prof, st, kRate);
  ASSERT_GE(sol.schedule.segments.size(), 2u);
  double prev = -1.0;
  for (const auto& seg : sol.schedule.segments) {
    EXPECT_GE(seg.p_u, prev - 1e-12);
    prev = seg.p_u;
  }
  EXPECT_EQ(sol.schedule.segments.front().end_event, EventKind::Empty);
  EXPECT_LT(sol.schedule.segments[1].start_slot, prof.size());
  EXPECT_NEAR(sol.policy.e.back(), 0.0, energy_tolerance(prof.total_energy()));
  expect_companion(sol, st.eta, kRate);
  EXPECT_FALSE(validate_policy(sol.policy, prof, st));
}

TEST(SolveInfinite, RejectsFiniteBattery) {
  HarvestProfile prof(1.0, {1.0});
  EXPECT_THROW(solve_infinite(prof, StorageSpec{0.5, 1.0, 0.0}, kRate), std::invalid_argument);
}

TEST(SolveOffline, EtaZeroIsHasty) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    auto inst = ehp::testing::random_instance(rng, 2, 30, t % 2 == 0);
    inst.storage.eta = 0.0;
    inst.storage.e_init = 0.0;
    auto sol = solve_offline(inst.profile, inst.storage, kRate);
    for (std::size_t k = 0; k < inst.profile.size(); ++k)
      EXPECT_NEAR(sol.policy.p[k], inst.profile[k], 1e-9);
  }
}

TEST(FindCandidates, UnboundedHasNoFullCandidate) {
  HarvestProfile prof(1.0, {2.0, 0.0, 1.5, 0.1});
  StorageSpec st{0.8, 1e12, 0.0};
  auto c = find_candidates(prof, st, kRate, 0, 0.0);
  EXPECT_FALSE(c.full.has_value());
}

TEST(FindCandidates, StartingFullOnConstantHarvest) {
  HarvestProfile prof(1.0, std::vector<double>(10, 1.0));
  StorageSpec st{0.5, 2.0, 2.0};
  auto c = find_candidates(prof, st, kRate, 0, 2.0);
  // Only a threshold above the harvest can drain; lower storing thresholds just overflow.
  EXPECT_GT(c.empty.p_u, 1.0);
  EXPECT_NEAR(c.empty.p_u, 1.0 + 2.0 / 10.0, 1e-9);
  EXPECT_FALSE(c.full.has_value());
  auto overflow = simulate_thresholds(prof, st, 0.2, 0.5, 0, 2.0, false);
  EXPECT_EQ(overflow.event.kind, EventKind::None);
  for (double e : overflow.policy.e) EXPECT_EQ(e, 2.0);
}

TEST(FindCandidates, BracketOracleThreshold) {
  std::mt19937_64 rng(31);
  int checked = 0;
  for (int t = 0; t < 60 && checked < 10; ++t) {
    auto inst = ehp::testing::random_instance(rng, 6, 6, true, 0.3);
    const auto& prof = inst.profile;
    auto cand = find_candidates(prof, inst.storage, kRate, 0, inst.storage.e_init);
    if (cand.empty.passive) continue;
    auto sol = solve_finite(prof, inst.storage, kRate);
    auto oracle = solve_convex_oracle(prof, inst.storage, kRate);
    const std::size_t first_end = sol.schedule.segments.size() > 1
                                      ? sol.schedule.segments[1].start_slot
                                      : prof.size();
    // The oracle's drawing power in the first segment is the first-segment threshold.
    for (std::size_t k = 0; k < first_end; ++k) {
      if (oracle.u[k] > 1e-4 && oracle.policy.e[k + 1] > 1e-4) {
        const double lo = cand.full ? cand.full->p_u : cand.empty.p_u;
        EXPECT_GE(oracle.policy.p[k], lo - 1e-3);
        EXPECT_LE(oracle.policy.p[k], cand.empty.p_u + 1e-3);
        ++checked;
        break;
      }
    }
  }
  EXPECT_GT(checked, 3);
}

TEST(SolveFinite, LargeCapacityMatchesInfinite) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 25; ++t) {
    auto inst = ehp::testing::random_instance(rng, 2, 25, false);
    auto inf = solve_infinite(inst.profile, inst.storage, kRate);
    StorageSpec big = inst.storage;
    big.e_max = 2.0 * (inst.profile.total_energy() + inst.storage.e_init) + 1.0;
    auto fin = solve_finite(inst.profile, big, kRate);
    ASSERT_EQ(inf.schedule.segments.size(), fin.schedule.segments.size());
    for (std::size_t i = 0; i < inf.schedule.segments.size(); ++i)
      EXPECT_NEAR(inf.schedule.segments[i].p_u, fin.schedule.segments[i].p_u,
                  1e-9 * std::max(1.0, inf.schedule.segments[i].p_u));
    EXPECT_NEAR(inf.utility, fin.utility, 1e-12);
  }
}

TEST(SolveFinite, LosslessLevelsMoveAtEvents) {
  HarvestProfile prof(1.0, {3.0, 3.0, 0.0, 0.0, 0.2, 2.0, 0.0, 4.0, 0.0, 0.1});
  StorageSpec st{1.0, 1.5, 0.0};
  auto sol = solve_finite(prof, st, kRate);
  const auto& segs = sol.schedule.segments;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    EXPECT_NEAR(segs[i].p_u, segs[i].p_s, 1e-9);
    if (i == 0) continue;
    const double d = segs[i].p_u - segs[i - 1].p_u;
    if (d > 1e-9) EXPECT_EQ(segs[i - 1].end_event, EventKind::Empty);
    if (d < -1e-9) EXPECT_EQ(segs[i - 1].end_event, EventKind::Full);
  }
  EXPECT_FALSE(validate_policy(sol.policy, prof, st));
  auto oracle = solve_convex_oracle(prof, st, kRate);
  EXPECT_NEAR(sol.utility, oracle.utility, 1e-4 * oracle.utility);
}

TEST(SolveFinite, MatchesConvexOracle) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    auto inst = ehp::testing::random_instance(rng, 2, 8, true);
    auto sol = solve_finite(inst.profile, inst.storage, kRate);
    auto oracle = solve_convex_oracle(inst.profile, inst.storage, kRate);
    EXPECT_NEAR(sol.utility, oracle.utility, 1e-4 * std::max(oracle.utility, 1e-9))
        << "instance " << t;
    EXPECT_FALSE(validate_policy(sol.policy, inst.profile, inst.storage));
    EXPECT_NEAR(sol.policy.e.back(), 0.0, energy_tolerance(inst.profile.total_energy()));
    expect_companion(sol, inst.storage.eta, kRate);
  }
}

TEST(SolveFinite, BroadcastRateSchedules) {
  std::mt19937_64 rng(12);
  const BroadcastRate bc(BroadcastSpec{0.5, 1.0, 0.8, 0.5});
  for (int t = 0; t < 5; ++t) {
    auto inst = ehp::testing::random_instance(rng, 3, 8, t % 2 == 0);
    auto sol = solve_offline(inst.profile, inst.storage, bc);
    expect_companion(sol, inst.storage.eta, bc);
    auto oracle = solve_convex_oracle(inst.profile, inst.storage, bc);
    EXPECT_NEAR(sol.utility, oracle.utility, 1e-4 * std::max(oracle.utility, 1e-9));
  }
}

TEST(FindSmallestDepleting, PassiveSlotOnEmptyBattery) {
  HarvestProfile prof(1.0, {0.0, 0.5, 2.0, 0.0});
  StorageSpec st{0.8, kInf, 0.0};
  auto c = find_smallest_depleting_threshold(prof, st, kRate, 0, 0.0);
  EXPECT_TRUE(c.passive);
  EXPECT_EQ(c.end_slot, 1u);
  auto sol = solve_infinite(prof, st, kRate);
  EXPECT_EQ(sol.policy.p[0], 0.0);
  // The idle first slot is folded into the segment that follows it.
  ASSERT_FALSE(sol.schedule.segments.empty());
  EXPECT_EQ(sol.schedule.segments.front().start_slot, 0u);
  auto oracle = solve_convex_oracle(prof, st, kRate);
  EXPECT_NEAR(sol.utility, oracle.utility, 1e-6 * oracle.utility);
}

TEST(SolveFinite, StartingFullDoesNotWasteOverflow) {
  HarvestProfile prof(1.0, {0.9, 1.6, 1.3, 0.1, 0.5});
  StorageSpec st{0.8, 0.2, 0.2};
  auto sol = solve_finite(prof, st, kRate);
  auto oracle = solve_convex_oracle(prof, st, kRate);
  EXPECT_NEAR(sol.utility, oracle.utility, 1e-6 * oracle.utility);
  EXPECT_FALSE(validate_policy(sol.policy, prof, st));
}
