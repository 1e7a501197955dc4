#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ehp/baselines.hpp"
#include "ehp/offline.hpp"
#include "test_support.hpp"

using namespace ehp;

namespace {

const LogRate kRate = normalized_rate();

}  // namespace

TEST(Baselines, HastyAndConstantActions) {
  const auto hasty = hasty_policy();
  EXPECT_DOUBLE_EQ(hasty(3.0, 0.7), 0.7);
  const auto flat = constant_policy(HarvestProfile(1.0, {1.0, 3.0}));
  EXPECT_DOUBLE_EQ(flat(0.0, 0.0), 2.0);
  EXPECT_DOUBLE_EQ(constant_policy(HarvestDistribution::uniform(0.0, 0.04))(0.0, 0.0), 0.02);
  EXPECT_THROW(constant_policy(-1.0), std::invalid_argument);
}

TEST(Baselines, ConstantPolicyIsClampedBySimulator) {
  HarvestProfile prof(1.0, {0.0, 2.0, 0.0, 2.0});
  const auto run = simulate_online(prof, StorageSpec{0.5, kInf, 0.0}, constant_policy(prof));
  EXPECT_DOUBLE_EQ(run.p[0], 0.0);
  EXPECT_DOUBLE_EQ(run.p[1], 1.0);
  EXPECT_DOUBLE_EQ(run.p[2], 0.5);
  EXPECT_FALSE(validate_policy(run, prof, StorageSpec{0.5, kInf, 0.0}).has_value());
}

TEST(ConvexOracle, SingleSlotSpendsEverything) {
  HarvestProfile prof(2.0, {1.5});
  const StorageSpec st{0.4, kInf, 1.0};
  const auto res = solve_convex_oracle(prof, st, kRate);
  EXPECT_TRUE(res.certified);
  EXPECT_NEAR(res.policy.p[0], 2.0, 1e-8);
  EXPECT_NEAR(res.utility, std::log2(3.0), 1e-8);
}

TEST(ConvexOracle, TwoSlotSplit) {
  // Brute force over the stored amount: the optimum stores 0.5 and draws 0.25.
  double best = -1.0;
  for (int i = 0; i <= 200000; ++i) {
    const double s = i * 1e-5;
    best = std::max(best, 0.5 * (kRate.value(2.0 - s) + kRate.value(0.5 * s)));
  }
  const auto res = solve_convex_oracle(HarvestProfile(1.0, {2.0, 0.0}), StorageSpec{0.5, kInf, 0.0},
                                       kRate);
  EXPECT_TRUE(res.certified);
  EXPECT_NEAR(res.s[0], 0.5, 1e-6);
  EXPECT_NEAR(res.s[1], 0.0, 1e-9);
  EXPECT_NEAR(res.u[0], 0.0, 1e-9);
  EXPECT_NEAR(res.u[1], 0.25, 1e-6);
  EXPECT_NEAR(res.utility, best, 1e-9);
  EXPECT_NEAR(res.utility, 0.821928, 1e-6);
  EXPECT_GE(res.utility, res.grid_utility - 1e-12);
}

TEST(ConvexOracle, AllZeroInstance) {
  const auto res = solve_convex_oracle(HarvestProfile(1.0, {0.0, 0.0, 0.0}), StorageSpec{0.5, 1.0, 0.0},
                                       kRate);
  EXPECT_TRUE(res.certified);
  EXPECT_DOUBLE_EQ(res.utility, 0.0);
}

TEST(ConvexOracle, StartsAgreeAndStayFeasible) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 60; ++t) {
    const auto inst = ehp::testing::random_instance(rng, 1, 10, t % 2 == 0);
    const auto res = solve_convex_oracle(inst.profile, inst.storage, kRate);
    EXPECT_TRUE(res.certified) << "trial " << t;
    ASSERT_EQ(res.start_utilities.size(), 5u);
    for (double v : res.start_utilities) EXPECT_NEAR(v, res.utility, 1e-6 * (1.0 + res.utility));
    const auto bad = validate_policy(res.policy, inst.profile, inst.storage);
    EXPECT_FALSE(bad.has_value()) << "trial " << t << ": " << to_string(bad->kind);
  }
}

TEST(ConvexOracle, LosslessMatchesWaterLevel) {
  // Lossless and unbounded: the optimum is the running-minimum water level of
  // cumulative harvest, which the offline solver produces.
  HarvestProfile prof(0.5, {3.0, 0.0, 1.0, 0.5, 2.0, 0.0});
  const StorageSpec st{1.0, kInf, 0.0};
  const auto res = solve_convex_oracle(prof, st, kRate);
  const auto off = solve_offline(prof, st, kRate);
  EXPECT_TRUE(res.certified);
  EXPECT_NEAR(res.utility, off.utility, 1e-7 * off.utility);
  for (std::size_t k = 0; k < prof.size(); ++k) EXPECT_NEAR(res.policy.p[k], off.policy.p[k], 1e-4);
}

TEST(ConvexOracle, BoundsEveryCausalBaseline) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 40; ++t) {
    const auto inst = ehp::testing::random_instance(rng, 2, 8, t % 2 == 1);
    const auto res = solve_convex_oracle(inst.profile, inst.storage, kRate);
    const double hasty =
        simulate_online(inst.profile, inst.storage, hasty_policy(), kRate).utility;
    const double flat =
        simulate_online(inst.profile, inst.storage, constant_policy(inst.profile), kRate).utility;
    EXPECT_GE(res.utility, hasty - 1e-9);
    EXPECT_GE(res.utility, flat - 1e-9);
  }
}

TEST(ConvexOracle, GridCheckOnTinyFiniteBattery) {
  HarvestProfile prof(1.0, {2.0, 0.0, 1.0});
  const StorageSpec st{0.8, 0.3, 0.1};
  const auto res = solve_convex_oracle(prof, st, kRate);
  EXPECT_TRUE(res.certified);
  EXPECT_GE(res.utility, res.grid_utility - 1e-12);
  EXPECT_LE(res.utility - res.grid_utility, 1e-3 * res.utility);
  EXPECT_NEAR(res.utility, solve_offline(prof, st, kRate).utility, 1e-6 * res.utility);
}
