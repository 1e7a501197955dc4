#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ehp/baselines.hpp"
#include "ehp/core.hpp"
#include "ehp/distribution.hpp"
#include "ehp/io.hpp"
#include "ehp/offline.hpp"
#include "ehp/online.hpp"
#include "ehp/rates.hpp"

namespace ehp {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class ChannelKind { Awgn, Broadcast };

struct ChannelConfig {
  ChannelKind kind = ChannelKind::Awgn;
  double bandwidth_hz = 1e6;
  double n0_w_per_hz = 1e-19;
  double path_loss_db = -100.0;                  // single user
  double path_loss_db_user1 = -100.0;            // broadcast, stronger receiver
  double path_loss_db_user2 = -103.0;            // broadcast, weaker receiver
  double broadcast_log_factor = 0.5;             // per-user rate = factor * B * log2(...)
  double weight_a = 1.0;                         // broadcast weight for single solves

  AwgnLink awgn() const { return {bandwidth_hz, n0_w_per_hz, db_to_linear(path_loss_db)}; }

  /// Noise powers normalized by each receiver's path gain.
  BroadcastSpec broadcast(double a) const {
    const double noise = n0_w_per_hz * bandwidth_hz;
    BroadcastSpec spec{noise / db_to_linear(path_loss_db_user1),
                       noise / db_to_linear(path_loss_db_user2), a,
                       broadcast_log_factor * bandwidth_hz};
    spec.validate();
    return spec;
  }
};

struct SolarLobe {
  double start_s = 0.0;
  double width_s = 1.0;
  double peak_w = 0.0;
};

enum class HarvestKind { Uniform, Solar, File };

struct HarvestSource {
  HarvestKind kind = HarvestKind::Uniform;
  double lo_w = 0.0;
  double hi_w = 0.04;
  std::vector<SolarLobe> lobes;   // solar: sum of clipped half-sine lobes
  double jitter = 0.0;            // solar: multiplicative uniform noise in [1-j, 1+j]
  std::filesystem::path file;
};

struct ExperimentConfig {
  ChannelConfig channel;
  StorageSpec storage{0.5, 0.1, 0.0};
  HarvestSource harvest;
  double horizon_s = 600.0;
  double delta_s = 0.01;
  std::vector<std::string> policies{"offline", "dp", "fixed", "hasty", "constant"};
  std::vector<double> eta_list{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> a_list;     // empty: default log-spaced list
  std::size_t seeds = 5;
  std::uint64_t master_seed = 1;
  std::string output;
  DpConfig dp;
  FixedThresholdRule fixed_rule = FixedThresholdRule::TailBalance;
  std::string solve_policy = "offline";
  std::optional<std::filesystem::path> dp_table;

  std::size_t slots() const {
    return static_cast<std::size_t>(std::llround(horizon_s / delta_s));
  }
};

inline const std::vector<std::string>& known_policies() {
  static const std::vector<std::string> names{"offline", "dp", "fixed", "hasty", "constant",
                                              "oracle"};
  return names;
}

/// 25 points log-spaced over [1/16, 16].
inline std::vector<double> default_weight_list(std::size_t n = 25) {
  std::vector<double> a;
  for (std::size_t i = 0; i < n; ++i)
    a.push_back(std::pow(2.0, -4.0 + 8.0 * static_cast<double>(i) / static_cast<double>(n - 1)));
  return a;
}

namespace detail {

template <class T>
T field(const json& obj, const char* key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

inline double energy_mj(const json& obj, const char* key, const std::string& path,
                        double fallback_j) {
  if (!obj.contains(key)) return fallback_j;
  if (obj.at(key).is_null()) return kInf;
  if (!obj.at(key).is_number()) throw ConfigError(path + "." + key + ": expected a number or null");
  return obj.at(key).get<double>() * 1e-3;
}

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok |= it.key() == k;
    if (!ok) throw ConfigError(path + "." + it.key() + ": unknown field");
  }
}

}  // namespace detail

/**
 * Parses the JSON experiment config. Units are part of the field names and dB
 * values are converted here. Relative harvest file paths resolve against
 * base_dir.
 */
inline ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::field;
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  detail::check_keys(j, "config",
                     {"channel", "storage", "harvest", "horizon_s", "delta_seconds", "policies",
                      "eta_list", "a_list", "seeds", "seed", "output", "dp", "fixed_rule",
                      "policy", "dp_table", "description"});
  ExperimentConfig c;

  if (j.contains("channel")) {
    const auto& ch = j.at("channel");
    detail::check_keys(ch, "channel",
                       {"type", "bandwidth_hz", "n0_w_per_hz", "path_loss_db", "broadcast_log_factor",
                        "weight_a"});
    const auto type = field<std::string>(ch, "type", "channel", "awgn");
    c.channel.bandwidth_hz = field<double>(ch, "bandwidth_hz", "channel", c.channel.bandwidth_hz);
    c.channel.n0_w_per_hz = field<double>(ch, "n0_w_per_hz", "channel", c.channel.n0_w_per_hz);
    if (!(c.channel.bandwidth_hz > 0.0)) throw ConfigError("channel.bandwidth_hz: must be positive");
    if (!(c.channel.n0_w_per_hz > 0.0)) throw ConfigError("channel.n0_w_per_hz: must be positive");
    if (type == "awgn") {
      c.channel.kind = ChannelKind::Awgn;
      c.channel.path_loss_db = field<double>(ch, "path_loss_db", "channel", c.channel.path_loss_db);
    } else if (type == "broadcast") {
      c.channel.kind = ChannelKind::Broadcast;
      if (ch.contains("path_loss_db")) {
        const auto losses = field<std::vector<double>>(ch, "path_loss_db", "channel", {});
        if (losses.size() != 2)
          throw ConfigError("channel.path_loss_db: broadcast needs [user1_db, user2_db]");
        c.channel.path_loss_db_user1 = losses[0];
        c.channel.path_loss_db_user2 = losses[1];
      }
      if (c.channel.path_loss_db_user1 < c.channel.path_loss_db_user2)
        throw ConfigError("channel.path_loss_db: user 1 must be the stronger receiver");
      c.channel.broadcast_log_factor =
          field<double>(ch, "broadcast_log_factor", "channel", c.channel.broadcast_log_factor);
      c.channel.weight_a = field<double>(ch, "weight_a", "channel", c.channel.weight_a);
      if (!(c.channel.broadcast_log_factor > 0.0))
        throw ConfigError("channel.broadcast_log_factor: must be positive");
      if (!(c.channel.weight_a >= 0.0)) throw ConfigError("channel.weight_a: must be >= 0");
    } else {
      throw ConfigError("channel.type: expected 'awgn' or 'broadcast', got '" + type + "'");
    }
  }

  if (j.contains("storage")) {
    const auto& st = j.at("storage");
    detail::check_keys(st, "storage", {"eta", "e_max_mj", "e_init_mj"});
    c.storage.eta = field<double>(st, "eta", "storage", c.storage.eta);
    c.storage.e_max = detail::energy_mj(st, "e_max_mj", "storage", c.storage.e_max);
    c.storage.e_init = detail::energy_mj(st, "e_init_mj", "storage", c.storage.e_init);
    try {
      c.storage.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("storage: ") + e.what());
    }
  }

  c.delta_s = field<double>(j, "delta_seconds", "config", c.delta_s);
  c.horizon_s = field<double>(j, "horizon_s", "config", c.horizon_s);
  if (!(c.delta_s > 0.0)) throw ConfigError("config.delta_seconds: must be positive");
  if (!(c.horizon_s >= c.delta_s)) throw ConfigError("config.horizon_s: shorter than one slot");

  if (j.contains("harvest")) {
    const auto& hv = j.at("harvest");
    detail::check_keys(hv, "harvest", {"source", "lo_mw", "hi_mw", "lobes", "jitter", "path"});
    const auto source = field<std::string>(hv, "source", "harvest", "uniform");
    if (source == "uniform") {
      c.harvest.kind = HarvestKind::Uniform;
      c.harvest.lo_w = field<double>(hv, "lo_mw", "harvest", 0.0) * 1e-3;
      c.harvest.hi_w = field<double>(hv, "hi_mw", "harvest", 40.0) * 1e-3;
      if (!(c.harvest.lo_w >= 0.0 && c.harvest.hi_w >= c.harvest.lo_w))
        throw ConfigError("harvest: need 0 <= lo_mw <= hi_mw");
    } else if (source == "solar") {
      c.harvest.kind = HarvestKind::Solar;
      c.harvest.jitter = field<double>(hv, "jitter", "harvest", 0.0);
      if (!(c.harvest.jitter >= 0.0 && c.harvest.jitter <= 1.0))
        throw ConfigError("harvest.jitter: must lie in [0, 1]");
      if (hv.contains("lobes")) {
        std::size_t i = 0;
        for (const auto& lobe : hv.at("lobes")) {
          const std::string path = "harvest.lobes[" + std::to_string(i++) + "]";
          detail::check_keys(lobe, path, {"start_s", "width_s", "peak_mw"});
          SolarLobe l{field<double>(lobe, "start_s", path, 0.0),
                      field<double>(lobe, "width_s", path, 0.0),
                      field<double>(lobe, "peak_mw", path, 0.0) * 1e-3};
          if (!(l.width_s > 0.0 && l.peak_w >= 0.0))
            throw ConfigError(path + ": need width_s > 0 and peak_mw >= 0");
          c.harvest.lobes.push_back(l);
        }
      } else {
        // Two unequal daylight lobes over the horizon.
        c.harvest.lobes = {{0.05 * c.horizon_s, 0.4 * c.horizon_s, 0.03},
                           {0.5 * c.horizon_s, 0.45 * c.horizon_s, 0.02}};
      }
    } else if (source == "file") {
      c.harvest.kind = HarvestKind::File;
      const auto p = field<std::string>(hv, "path", "harvest", "");
      if (p.empty()) throw ConfigError("harvest.path: required for source 'file'");
      c.harvest.file = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p)
                                                              : base_dir / p;
      if (!std::filesystem::exists(c.harvest.file))
        throw ConfigError("harvest.path: file '" + c.harvest.file.string() + "' not found");
    } else {
      throw ConfigError("harvest.source: expected 'uniform', 'solar' or 'file', got '" + source +
                        "'");
    }
  }

  if (j.contains("policies")) {
    c.policies = field<std::vector<std::string>>(j, "policies", "config", {});
    if (c.policies.empty()) throw ConfigError("config.policies: must not be empty");
    for (const auto& p : c.policies)
      if (std::find(known_policies().begin(), known_policies().end(), p) ==
          known_policies().end())
        throw ConfigError("config.policies: unknown policy '" + p + "'");
  }
  if (j.contains("eta_list")) {
    c.eta_list = field<std::vector<double>>(j, "eta_list", "config", {});
    if (c.eta_list.empty()) throw ConfigError("config.eta_list: must not be empty");
    for (double eta : c.eta_list)
      if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("config.eta_list: values must lie in [0, 1]");
  }
  if (j.contains("a_list")) {
    c.a_list = field<std::vector<double>>(j, "a_list", "config", {});
    if (c.a_list.empty()) throw ConfigError("config.a_list: must not be empty");
    for (double a : c.a_list)
      if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("config.a_list: values must be positive");
  }
  c.seeds = field<std::size_t>(j, "seeds", "config", c.seeds);
  if (c.seeds == 0) throw ConfigError("config.seeds: must be >= 1");
  c.master_seed = field<std::uint64_t>(j, "seed", "config", c.master_seed);
  c.output = field<std::string>(j, "output", "config", c.output);
  if (j.contains("dp")) {
    DpConfig base;
    base.delta = c.delta_s;
    c.dp = dp_config_from_json(j.at("dp"), base);
  } else {
    c.dp.delta = c.delta_s;
  }
  if (std::abs(c.dp.delta - c.delta_s) > 1e-12 * c.delta_s)
    throw ConfigError("dp.delta_seconds: must equal the profile slot length");
  const auto rule = field<std::string>(j, "fixed_rule", "config", "tail_balance");
  if (rule == "tail_balance")
    c.fixed_rule = FixedThresholdRule::TailBalance;
  else if (rule == "energy_balance")
    c.fixed_rule = FixedThresholdRule::EnergyBalance;
  else
    throw ConfigError("config.fixed_rule: expected 'tail_balance' or 'energy_balance'");
  c.solve_policy = field<std::string>(j, "policy", "config", c.solve_policy);
  if (std::find(known_policies().begin(), known_policies().end(), c.solve_policy) ==
      known_policies().end())
    throw ConfigError("config.policy: unknown policy '" + c.solve_policy + "'");
  if (j.contains("dp_table")) {
    std::filesystem::path p = field<std::string>(j, "dp_table", "config", "");
    c.dp_table = p.is_absolute() ? p : base_dir / p;
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Seeds and harvest generation
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of cell `index` under a master seed; independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x51ed2701ULL));
}

namespace detail {

// Portable uniform draw in [0, 1) from the top 53 bits.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline HarvestProfile generate_harvest(const HarvestSource& source, std::size_t K, double delta,
                                       std::uint64_t seed) {
  if (K == 0) throw ConfigError("generate_harvest: need at least one slot");
  std::mt19937_64 rng(seed);
  std::vector<double> h(K);
  switch (source.kind) {
    case HarvestKind::Uniform:
      for (auto& v : h) v = source.lo_w + (source.hi_w - source.lo_w) * detail::unit_draw(rng);
      break;
    case HarvestKind::Solar:
      for (std::size_t k = 0; k < K; ++k) {
        const double t = (static_cast<double>(k) + 0.5) * delta;
        double v = 0.0;
        for (const auto& l : source.lobes) {
          const double x = (t - l.start_s) / l.width_s;
          if (x > 0.0 && x < 1.0) v += l.peak_w * std::sin(std::numbers::pi * x);
        }
        if (source.jitter > 0.0) v *= 1.0 + source.jitter * (2.0 * detail::unit_draw(rng) - 1.0);
        h[k] = v;
      }
      break;
    case HarvestKind::File: {
      auto p = load_profile(source.file, delta);
      if (std::abs(p.delta() - delta) > 1e-12 * delta)
        throw ConfigError("harvest file slot length differs from delta_seconds");
      return p;
    }
  }
  return HarvestProfile(delta, std::move(h));
}

/// The law the online policies are trained against: the generator's own
/// distribution for i.i.d. sources, the profile's empirical law otherwise.
inline HarvestDistribution training_distribution(const HarvestSource& source,
                                                 const HarvestProfile& sample) {
  if (source.kind == HarvestKind::Uniform) {
    if (source.hi_w > source.lo_w) return HarvestDistribution::uniform(source.lo_w, source.hi_w);
    return HarvestDistribution::discrete({source.lo_w}, {1.0});
  }
  return HarvestDistribution::empirical(std::vector<double>(sample.h().begin(), sample.h().end()));
}

/// Slot count of an experiment: from the file for file sources, else horizon / delta.
inline std::size_t experiment_slots(const ExperimentConfig& cfg) {
  if (cfg.harvest.kind == HarvestKind::File)
    return generate_harvest(cfg.harvest, 1, cfg.delta_s, 0).size();
  return cfg.slots();
}

// ---------------------------------------------------------------------------
// Parallel cell runner
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to `jobs` threads; results land by index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Average per-user rates of a broadcast realization from the per-slot optimal split.
inline std::pair<double, double> broadcast_user_rates(const RealizedPolicy& policy,
                                                      const BroadcastSpec& spec) {
  double r1 = 0.0, r2 = 0.0;
  for (double p : policy.p) {
    const auto pt = bc_weighted_sum_rate(p, spec);
    r1 += pt.r1;
    r2 += pt.r2;
  }
  const double n = static_cast<double>(std::max<std::size_t>(policy.p.size(), 1));
  return {r1 / n, r2 / n};
}

inline std::string violation_status(const RealizedPolicy& policy, const HarvestProfile& profile,
                                    const StorageSpec& storage) {
  const auto v = validate_policy(policy, profile, storage);
  if (!v) return "ok";
  return std::string("infeasible:") + to_string(v->kind) + "@" + std::to_string(v->slot);
}

/// Realization of one named policy on a profile.
template <RateFunction R>
RealizedPolicy run_policy(const std::string& name, const HarvestProfile& profile,
                          const StorageSpec& storage, const R& rate,
                          const HarvestDistribution& dist, const DpSolution* dp,
                          FixedThresholdRule rule) {
  if (name == "offline") return solve_offline(profile, storage, rate).policy;
  if (name == "oracle") return solve_convex_oracle(profile, storage, rate).policy;
  if (name == "hasty") return simulate_online(profile, storage, hasty_policy());
  if (name == "constant") return simulate_online(profile, storage, constant_policy(dist));
  if (name == "fixed")
    return simulate_online(profile, storage,
                           fixed_threshold_policy(solve_fixed_thresholds(dist, rate, storage.eta, rule)));
  if (name == "dp") {
    if (!dp) throw std::logic_error("dp policy requested without a trained table");
    return simulate_online(profile, storage, dp_policy(*dp));
  }
  throw ConfigError("unknown policy '" + name + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct RunOptions {
  std::size_t jobs = 1;
};

/**
 * Efficiency sweep: every (eta, seed) cell runs each configured policy on the
 * seed's profile. Profiles depend only on the seed index, so the baselines
 * that ignore the battery are comparable across eta. DP tables are trained
 * once per eta against the training distribution.
 */
inline std::vector<ResultRow> sweep_eta(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  if (cfg.channel.kind != ChannelKind::Awgn)
    throw ConfigError("sweep-eta: channel.type must be 'awgn'");
  const auto rate = awgn_rate(cfg.channel.awgn());
  const std::size_t K = experiment_slots(cfg);
  const auto& policies = cfg.policies;
  const bool want_dp = std::find(policies.begin(), policies.end(), "dp") != policies.end();

  std::vector<HarvestProfile> profiles;
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    seeds.push_back(derive_seed(cfg.master_seed, s));
    profiles.push_back(generate_harvest(cfg.harvest, K, cfg.delta_s, seeds.back()));
  }
  const auto dist = training_distribution(cfg.harvest, profiles.front());

  const std::size_t nE = cfg.eta_list.size();
  std::vector<std::optional<DpSolution>> tables(nE);
  std::vector<std::string> table_error(nE);
  std::vector<double> table_time(nE, 0.0);
  if (want_dp) {
    parallel_for(nE, opt.jobs, [&](std::size_t i) {
      const auto t0 = std::chrono::steady_clock::now();
      StorageSpec st = cfg.storage;
      st.eta = cfg.eta_list[i];
      try {
        tables[i] = value_iterate(st, dist, rate, cfg.dp);
      } catch (const std::exception& e) {
        table_error[i] = std::string("error:") + e.what();
      }
      table_time[i] = detail::seconds_since(t0);
    });
  }

  const std::size_t nP = policies.size(), n_cells = nE * cfg.seeds * nP;
  std::vector<ResultRow> rows(n_cells);
  parallel_for(n_cells, opt.jobs, [&](std::size_t cell) {
    const std::size_t i = cell / (cfg.seeds * nP), s = (cell / nP) % cfg.seeds, p = cell % nP;
    ResultRow& row = rows[cell];
    row.policy = policies[p];
    row.eta = cfg.eta_list[i];
    row.seed = seeds[s];
    StorageSpec st = cfg.storage;
    st.eta = row.eta;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (row.policy == "dp" && !tables[i]) {
        row.status = table_error[i];
      } else {
        const auto real = detail::run_policy(row.policy, profiles[s], st, rate, dist,
                                             tables[i] ? &*tables[i] : nullptr, cfg.fixed_rule);
        row.avg_rate_bps = average_utility(real, rate);
        row.status = detail::violation_status(real, profiles[s], st);
      }
    } catch (const std::exception& e) {
      row.status = std::string("error:") + e.what();
    }
    row.runtime_s = detail::seconds_since(t0) + (row.policy == "dp" ? table_time[i] : 0.0);
  });
  return rows;
}

/**
 * Broadcast region: for each weight a the configured policies run with the
 * weighted sum-rate utility and report per-user average rates from the
 * per-slot optimal split. Two corner rows carry each user's single-user
 * offline rate.
 */
inline std::vector<ResultRow> trace_region(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  if (cfg.channel.kind != ChannelKind::Broadcast)
    throw ConfigError("trace-region: channel.type must be 'broadcast'");
  const auto a_list = cfg.a_list.empty() ? default_weight_list() : cfg.a_list;
  const std::size_t K = experiment_slots(cfg);
  const auto& policies = cfg.policies;
  const double eta = cfg.storage.eta;

  std::vector<HarvestProfile> profiles;
  std::vector<std::uint64_t> seeds;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    seeds.push_back(derive_seed(cfg.master_seed, s));
    profiles.push_back(generate_harvest(cfg.harvest, K, cfg.delta_s, seeds.back()));
  }
  const auto dist = training_distribution(cfg.harvest, profiles.front());

  const std::size_t nA = a_list.size(), nP = policies.size();
  std::vector<std::optional<DpSolution>> tables(nA);
  std::vector<std::string> table_error(nA);
  if (std::find(policies.begin(), policies.end(), "dp") != policies.end()) {
    parallel_for(nA, opt.jobs, [&](std::size_t i) {
      try {
        tables[i] = value_iterate(cfg.storage, dist, BroadcastRate(cfg.channel.broadcast(a_list[i])),
                                  cfg.dp);
      } catch (const std::exception& e) {
        table_error[i] = std::string("error:") + e.what();
      }
    });
  }
  const std::size_t n_region = nA * cfg.seeds * nP, n_cells = n_region + 2 * cfg.seeds;
  std::vector<ResultRow> rows(n_cells);
  parallel_for(n_cells, opt.jobs, [&](std::size_t cell) {
    ResultRow& row = rows[cell];
    row.eta = eta;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (cell < n_region) {
        const std::size_t ia = cell / (cfg.seeds * nP), s = (cell / nP) % cfg.seeds,
                          p = cell % nP;
        row.policy = policies[p];
        row.seed = seeds[s];
        row.a = a_list[ia];
        const auto spec = cfg.channel.broadcast(row.a);
        const BroadcastRate rate(spec);
        if (row.policy == "dp" && !tables[ia]) throw std::runtime_error(table_error[ia]);
        const auto real = detail::run_policy(row.policy, profiles[s], cfg.storage, rate, dist,
                                             tables[ia] ? &*tables[ia] : nullptr, cfg.fixed_rule);
        const auto [r1, r2] = detail::broadcast_user_rates(real, spec);
        row.r1_bps = r1;
        row.r2_bps = r2;
        row.avg_rate_bps = r1 + r2;
        row.status = detail::violation_status(real, profiles[s], cfg.storage);
      } else {
        const std::size_t c = cell - n_region, s = c / 2, user = c % 2;
        row.policy = user == 0 ? "corner_user1" : "corner_user2";
        row.seed = seeds[s];
        const auto spec = cfg.channel.broadcast(1.0);
        const LogRate single{spec.scale, 1.0 / (user == 0 ? spec.sigma1_sq : spec.sigma2_sq)};
        const auto sol = solve_offline(profiles[s], cfg.storage, single);
        (user == 0 ? row.r1_bps : row.r2_bps) = sol.utility;
        (user == 0 ? row.r2_bps : row.r1_bps) = 0.0;
        row.avg_rate_bps = sol.utility;
        row.status = detail::violation_status(sol.policy, profiles[s], cfg.storage);
      }
    } catch (const std::exception& e) {
      row.status = std::string("error:") + e.what();
    }
    row.runtime_s = detail::seconds_since(t0);
  });
  return rows;
}

/// Trains the DP table for the configured storage against the training distribution.
inline DpSolution train_dp(const ExperimentConfig& cfg) {
  const auto profile =
      generate_harvest(cfg.harvest, experiment_slots(cfg), cfg.delta_s, derive_seed(cfg.master_seed, 0));
  const auto dist = training_distribution(cfg.harvest, profile);
  if (cfg.channel.kind == ChannelKind::Broadcast)
    return value_iterate(cfg.storage, dist, BroadcastRate(cfg.channel.broadcast(cfg.channel.weight_a)),
                         cfg.dp);
  return value_iterate(cfg.storage, dist, awgn_rate(cfg.channel.awgn()), cfg.dp);
}

namespace detail {

template <RateFunction R>
json solve_one_with(const ExperimentConfig& cfg, const HarvestProfile& profile, const R& rate) {
  const auto dist = training_distribution(cfg.harvest, profile);
  const auto& name = cfg.solve_policy;
  json out{{"policy", name},
           {"eta", cfg.storage.eta},
           {"e_max_j", finite_or_null(cfg.storage.e_max)},
           {"e_init_j", cfg.storage.e_init},
           {"delta_seconds", profile.delta()},
           {"harvest_w", std::vector<double>(profile.h().begin(), profile.h().end())}};
  RealizedPolicy real;
  if (name == "offline") {
    const auto sol = solve_offline(profile, cfg.storage, rate);
    out["segments"] = to_json(sol.schedule);
    out["tie_breaks"] = sol.tie_breaks;
    out["unresolved"] = sol.unresolved;
    real = sol.policy;
  } else if (name == "oracle") {
    if (profile.size() > 2000) throw ConfigError("policy 'oracle' is limited to 2000 slots");
    const auto res = solve_convex_oracle(profile, cfg.storage, rate);
    out["certified"] = res.certified;
    out["start_utilities"] = res.start_utilities;
    real = res.policy;
  } else if (name == "fixed") {
    const auto t = solve_fixed_thresholds(dist, rate, cfg.storage.eta, cfg.fixed_rule);
    out["thresholds"] = to_json(t);
    real = simulate_online(profile, cfg.storage, fixed_threshold_policy(t));
  } else if (name == "dp") {
    DpSolution table;
    if (cfg.dp_table) {
      std::ifstream in(*cfg.dp_table);
      if (!in) throw ConfigError("dp_table: cannot open '" + cfg.dp_table->string() + "'");
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError("dp_table: " + std::string(e.what()));
      }
      table = dp_solution_from_json(j);
      if (std::abs(table.eta - cfg.storage.eta) > 1e-12 || std::abs(table.e_max - cfg.storage.e_max) > 1e-12 * cfg.storage.e_max)
        throw ConfigError("dp_table: trained for a different storage spec");
    } else {
      table = value_iterate(cfg.storage, dist, rate, cfg.dp);
    }
    out["dp_iterations"] = table.iterations;
    real = simulate_online(profile, cfg.storage, dp_policy(table));
  } else {
    real = detail::run_policy(name, profile, cfg.storage, rate, dist, nullptr, cfg.fixed_rule);
  }
  out["utility"] = average_utility(real, rate);
  out["policy_trace"] = to_json(real);
  const auto v = validate_policy(real, profile, cfg.storage);
  out["violation"] = v ? json{{"kind", to_string(v->kind)}, {"slot", v->slot}, {"magnitude", v->magnitude}}
                       : json(nullptr);
  return out;
}

}  // namespace detail

/// One policy on one profile: segments (offline), per-slot trace, trajectory and utility.
inline json solve_one(const ExperimentConfig& cfg, const HarvestProfile& profile) {
  if (cfg.channel.kind == ChannelKind::Broadcast) {
    const auto spec = cfg.channel.broadcast(cfg.channel.weight_a);
    auto out = detail::solve_one_with(cfg, profile, BroadcastRate(spec));
    const auto trace = policy_from_json(out["policy_trace"]);
    const auto [r1, r2] = detail::broadcast_user_rates(trace, spec);
    out["weight_a"] = cfg.channel.weight_a;
    out["r1_bps"] = r1;
    out["r2_bps"] = r2;
    return out;
  }
  return detail::solve_one_with(cfg, profile, awgn_rate(cfg.channel.awgn()));
}

}  // namespace ehp
