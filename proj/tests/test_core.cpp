#include <gtest/gtest.h>

#include <random>

#include "ehp/core.hpp"
#include "ehp/rates.hpp"

using namespace ehp;

namespace {

HarvestProfile two_slot() { return HarvestProfile(1.0, {2.0, 0.0}); }
StorageSpec lossy(double eta) { return StorageSpec{eta, kInf, 0.0}; }

}  // namespace

TEST(HarvestProfile, RejectsBadInput) {
  EXPECT_THROW(HarvestProfile(0.0, {1.0}), std::invalid_argument);
  EXPECT_THROW(HarvestProfile(1.0, {}), std::invalid_argument);
  EXPECT_THROW(HarvestProfile(1.0, {1.0, -0.5}), std::invalid_argument);
  HarvestProfile p(0.5, {1.0, 3.0});
  EXPECT_DOUBLE_EQ(p.horizon(), 1.0);
  EXPECT_DOUBLE_EQ(p.total_energy(), 2.0);
}

TEST(SimulateThresholds, PassiveFixedPoint) {
  HarvestProfile prof(0.1, std::vector<double>(20, 0.7));
  auto run = simulate_thresholds(prof, lossy(0.6), 0.5, 0.9);
  EXPECT_EQ(run.event.kind, EventKind::None);
  for (double p : run.policy.p) EXPECT_DOUBLE_EQ(p, 0.7);
  for (double e : run.policy.e) EXPECT_DOUBLE_EQ(e, 0.0);
}

TEST(SimulateThresholds, TwoSlotLedger) {
  // Slot 1 stores 0.5 W at eta 0.5 (0.25 J kept), slot 2 draws 0.25 W.
  auto run = simulate_thresholds(two_slot(), lossy(0.5), 0.25, 1.5);
  ASSERT_EQ(run.policy.size(), 2u);
  EXPECT_DOUBLE_EQ(run.policy.s[0], 0.5);
  EXPECT_DOUBLE_EQ(run.policy.p[0], 1.5);
  EXPECT_DOUBLE_EQ(run.policy.e[1], 0.25);
  EXPECT_DOUBLE_EQ(run.policy.u[1], 0.25);
  EXPECT_DOUBLE_EQ(run.policy.p[1], 0.25);
  EXPECT_EQ(run.event.kind, EventKind::Empty);
  EXPECT_NEAR(run.event.time, 2.0, 1e-12);
}

TEST(SimulateThresholds, HastyDegeneration) {
  HarvestProfile prof(1.0, {0.3, 2.0, 0.0, 1.1});
  auto run = simulate_thresholds(prof, lossy(0.4), 0.0, kInf);
  EXPECT_EQ(run.event.kind, EventKind::None);
  for (std::size_t k = 0; k < prof.size(); ++k) EXPECT_DOUBLE_EQ(run.policy.p[k], prof[k]);
}

TEST(SimulateThresholds, DrainClampSplitsSlot) {
  HarvestProfile prof(1.0, {0.0, 0.0});
  StorageSpec st{1.0, kInf, 0.3};
  auto run = simulate_thresholds(prof, st, 0.4, 0.4);
  EXPECT_EQ(run.event.kind, EventKind::Empty);
  EXPECT_NEAR(run.event.time, 0.75, 1e-12);
  EXPECT_EQ(run.event.slot, 0u);
  EXPECT_NEAR(run.policy.p[0], 0.3, 1e-12);
  EXPECT_EQ(run.policy.size(), 1u);  // stops at the event
}

TEST(SimulateThresholds, OverflowClampFeedsTransmitter) {
  HarvestProfile prof(1.0, {3.0, 3.0});
  StorageSpec st{0.5, 0.5, 0.0};
  auto run = simulate_thresholds(prof, st, 0.5, 1.0, 0, std::nullopt, false);
  EXPECT_EQ(run.event.kind, EventKind::Full);
  EXPECT_NEAR(run.event.time, 0.5, 1e-12);
  EXPECT_NEAR(run.policy.s[0], 1.0, 1e-12);
  EXPECT_NEAR(run.policy.p[0], 2.0, 1e-12);
  EXPECT_NEAR(run.policy.p[1], 3.0, 1e-12);  // battery already full
  EXPECT_FALSE(validate_policy(run.policy, prof, st).has_value());
}

TEST(SimulateThresholds, RejectsInvalidThresholds) {
  EXPECT_THROW(simulate_thresholds(two_slot(), lossy(0.5), kInf, kInf), std::invalid_argument);
  EXPECT_THROW(simulate_thresholds(two_slot(), lossy(0.5), 1.0, 0.5), std::invalid_argument);
  EXPECT_THROW(simulate_thresholds(two_slot(), lossy(0.5), std::nan(""), 1.0),
               std::invalid_argument);
  EXPECT_NO_THROW(simulate_thresholds(two_slot(), lossy(0.5), 0.1, kInf));
}

TEST(SimulatePolicy, ZeroHarvestZeroActions) {
  HarvestProfile prof(1.0, {0.0, 0.0, 0.0});
  StorageSpec st{0.5, kInf, 0.2};
  std::vector<double> a(3, 0.0);
  auto pol = simulate_policy(prof, st, a);
  for (double v : pol.p) EXPECT_EQ(v, 0.0);
  for (double v : pol.e) EXPECT_EQ(v, 0.2);
}

TEST(SimulatePolicy, MatchesThresholdLedger) {
  std::vector<double> a{1.5, 0.25};
  auto pol = simulate_policy(two_slot(), lossy(0.5), a);
  auto run = simulate_thresholds(two_slot(), lossy(0.5), 0.25, 1.5);
  EXPECT_EQ(pol.p, run.policy.p);
  EXPECT_EQ(pol.s, run.policy.s);
  EXPECT_EQ(pol.u, run.policy.u);
  EXPECT_EQ(pol.e, run.policy.e);
}

TEST(SimulatePolicy, CausalityClamp) {
  HarvestProfile prof(1.0, {1.0});
  std::vector<double> a{5.0};
  auto pol = simulate_policy(prof, lossy(0.5), a);
  EXPECT_DOUBLE_EQ(pol.p[0], 1.0);
  EXPECT_DOUBLE_EQ(pol.u[0], 0.0);
}

TEST(SimulatePolicy, NegativeActionRejected) {
  std::vector<double> a{1.0, -0.1};
  EXPECT_THROW(simulate_policy(two_slot(), lossy(0.5), a), std::invalid_argument);
}

TEST(ValidatePolicy, DetectsViolations) {
  auto ok = simulate_thresholds(two_slot(), lossy(0.5), 0.25, 1.5).policy;
  EXPECT_FALSE(validate_policy(ok, two_slot(), lossy(0.5)).has_value());

  RealizedPolicy draw{0, {2.5, 0.0}, {0.0, 0.0}, {0.5, 0.0}, {0.0, -0.5, -0.5}};
  auto v = validate_policy(draw, two_slot(), lossy(0.5));
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::Causality);
  EXPECT_EQ(v->slot, 0u);

  RealizedPolicy both{0, {2.0, 0.0}, {0.5, 0.0}, {0.5, 0.0}, {0.0, -0.25, -0.25}};
  v = validate_policy(both, two_slot(), lossy(0.5));
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::SimultaneousChargeDischarge);

  RealizedPolicy over{0, {-1.0, 0.0}, {3.0, 0.0}, {0.0, 0.0}, {0.0, 1.5, 1.5}};
  v = validate_policy(over, two_slot(), lossy(0.5));
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::StorageExceedsHarvest);

  RealizedPolicy bal{0, {1.0, 0.0}, {0.5, 0.0}, {0.0, 0.0}, {0.0, 0.25, 0.25}};
  v = validate_policy(bal, two_slot(), lossy(0.5));
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::PowerBalance);

  StorageSpec small{0.5, 0.1, 0.0};
  v = validate_policy(ok, two_slot(), small);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::Overflow);
}

// Randomized instances: clamped simulation is always feasible and obeys the ledger.
TEST(SimulateProperties, AlwaysFeasible) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t K = 1 + rng() % 40;
    std::vector<double> h(K);
    for (auto& v : h) v = U(rng) < 0.2 ? 0.0 : 2.0 * U(rng);
    HarvestProfile prof(0.1 + U(rng), h);
    const double emax = U(rng) < 0.3 ? kInf : 0.05 + U(rng);
    StorageSpec st{U(rng), emax, std::isfinite(emax) ? U(rng) * emax : U(rng)};
    const double p_u = 1.5 * U(rng);
    const double p_s = U(rng) < 0.1 ? kInf : p_u + U(rng);
    auto run = simulate_thresholds(prof, st, p_u, p_s, 0, std::nullopt, false);
    EXPECT_FALSE(validate_policy(run.policy, prof, st).has_value()) << "trial " << trial;
    std::vector<double> acts(K);
    for (auto& a : acts) a = 2.5 * U(rng);
    auto pol = simulate_policy(prof, st, acts);
    EXPECT_FALSE(validate_policy(pol, prof, st).has_value()) << "trial " << trial;
    for (std::size_t k = 0; k < K; ++k)
      EXPECT_NEAR(pol.e[k + 1] - pol.e[k], prof.delta() * (st.eta * pol.s[k] - pol.u[k]),
                  energy_tolerance(prof.total_energy()));
  }
}

// First Empty time is non-increasing in p_u (storing threshold coupled).
TEST(SimulateProperties, MonotoneDrain) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto rate = normalized_rate();
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 5 + rng() % 30;
    std::vector<double> h(K);
    for (auto& v : h) v = 2.0 * U(rng);
    HarvestProfile prof(1.0, h);
    StorageSpec st{0.2 + 0.8 * U(rng), kInf, U(rng)};
    double prev_empty = kInf;
    for (double p_u = 0.0; p_u <= 2.5; p_u += 0.05) {
      const double p_s = companion_threshold(p_u, st.eta, rate);
      auto run = simulate_thresholds(prof, st, p_u, p_s);
      const double t = run.event.kind == EventKind::Empty ? run.event.time : kInf;
      EXPECT_LE(t, prev_empty + 1e-12);
      prev_empty = t;
    }
  }
}

TEST(SimulateProperties, HastyUtilityIndependentOfStorage) {
  HarvestProfile prof(0.5, {0.1, 1.7, 0.0, 0.9, 3.0});
  const auto rate = normalized_rate();
  double ref = -1.0;
  for (double eta : {0.0, 0.3, 1.0})
    for (double emax : {0.2, 5.0, kInf}) {
      auto run = simulate_thresholds(prof, StorageSpec{eta, emax, 0.0}, 0.0, kInf);
      const double u = average_utility(run.policy, rate);
      if (ref < 0) ref = u;
      EXPECT_DOUBLE_EQ(u, ref);
    }
}
