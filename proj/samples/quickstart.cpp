// Solves a small instance offline, then compares the online policies on a
// longer uniform-harvest run.

#include <cstdio>
#include <random>

#include "ehp/baselines.hpp"
#include "ehp/offline.hpp"
#include "ehp/online.hpp"

int main() {
  using namespace ehp;

  // Offline optimum on two one-second slots with a half-efficient battery.
  const HarvestProfile two_slot(1.0, {2.0, 0.0});
  const StorageSpec lossy{0.5, kInf, 0.0};
  const auto sol = solve_offline(two_slot, lossy, normalized_rate());
  std::printf("two-slot optimum: %.6f bit/s\n", sol.utility);
  for (const auto& seg : sol.schedule.segments)
    std::printf("  segment at t=%.1f s: p_u=%.4f W, p_s=%.4f W\n", seg.t_start, seg.p_u, seg.p_s);

  // Online policies on uniform [0, 20] mW harvest, 100 slots per second.
  const auto rate = awgn_rate(AwgnLink{});
  const auto dist = HarvestDistribution::uniform(0.0, 0.02);
  const StorageSpec battery{0.6, 0.02, 0.0};
  std::mt19937_64 rng(7);
  std::vector<double> h(20000);
  for (auto& v : h) v = dist.sample(rng);
  const HarvestProfile profile(0.01, h);

  DpConfig cfg;
  cfg.energy_points = 81;
  cfg.harvest_points = 21;
  cfg.action_points = 101;
  const auto table = value_iterate(battery, dist, rate, cfg);
  const auto fixed = solve_fixed_thresholds(dist, rate, battery.eta);

  std::printf("average rates over %.0f s (kbit/s):\n", profile.horizon());
  std::printf("  offline  %.2f\n", solve_offline(profile, battery, rate).utility / 1e3);
  std::printf("  dp       %.2f\n",
              simulate_online(profile, battery, dp_policy(table), rate).utility / 1e3);
  std::printf("  fixed    %.2f  (p_u=%.2f mW, p_s=%.2f mW)\n",
              simulate_online(profile, battery, fixed_threshold_policy(fixed), rate).utility / 1e3,
              fixed.p_u * 1e3, fixed.p_s * 1e3);
  std::printf("  hasty    %.2f\n", simulate_online(profile, battery, hasty_policy(), rate).utility / 1e3);
  std::printf("  constant %.2f\n",
              simulate_online(profile, battery, constant_policy(dist), rate).utility / 1e3);
  return 0;
}
