// ehctl: command-line front end for the energy-harvesting power-control library.
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "ehp/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::size_t jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool tabular) {
  cmd->add_option("--config", args.config, "JSON experiment config")->required()->check(
      CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)");
  cmd->add_option("--out", args.out, "output path (default: config 'output' or stdout)");
  if (tabular) {
    cmd->add_option("--format", args.format, "result format")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--jobs", args.jobs, "worker threads (0: hardware concurrency)");
  }
}

ehp::ExperimentConfig load(const CommonArgs& args) {
  auto cfg = ehp::load_config(args.config);
  if (args.seed) cfg.master_seed = *args.seed;
  if (!args.out.empty()) cfg.output = args.out;
  return cfg;
}

std::size_t worker_count(std::size_t jobs) {
  if (jobs > 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Writes to the configured path, or stdout when none is set.
void emit(const std::string& path, const std::function<void(std::ostream&)>& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw ehp::ConfigError("cannot write output '" + path + "'");
  write(out);
}

void emit_rows(const ehp::ExperimentConfig& cfg, const CommonArgs& args,
               const std::vector<ehp::ResultRow>& rows) {
  emit(cfg.output, [&](std::ostream& out) {
    if (args.format == "json")
      out << ehp::to_json(rows).dump(2) << '\n';
    else
      ehp::write_results_csv(out, rows);
  });
}

int rows_exit_code(const std::vector<ehp::ResultRow>& rows) {
  for (const auto& r : rows)
    if (r.status != "ok") {
      std::cerr << "ehctl: cell " << r.policy << " eta=" << r.eta << " seed=" << r.seed << ": "
                << r.status << '\n';
      return kExitSolver;
    }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power control for energy-harvesting transmitters with lossy storage"};
  app.require_subcommand(1);

  CommonArgs solve_args, sweep_args, region_args, train_args, validate_args;
  auto* solve = app.add_subcommand("solve", "run one policy on one profile and dump the solution");
  add_common(solve, solve_args, false);
  std::string profile_path, policy_override;
  solve->add_option("--profile", profile_path, "harvest profile (CSV or JSON) instead of the generator")
      ->check(CLI::ExistingFile);
  solve->add_option("--policy", policy_override, "policy to run (overrides the config)")
      ->check(CLI::IsMember(ehp::known_policies()));

  auto* sweep = app.add_subcommand("sweep-eta", "average rates of every policy across efficiencies");
  add_common(sweep, sweep_args, true);

  auto* region = app.add_subcommand("trace-region", "two-user broadcast rate regions");
  add_common(region, region_args, true);

  auto* train = app.add_subcommand("dp-train", "train and store the dynamic-programming policy table");
  add_common(train, train_args, false);

  auto* validate = app.add_subcommand("validate", "check a config and optionally a policy trace");
  add_common(validate, validate_args, false);
  std::string trace_path;
  validate->add_option("--trace", trace_path, "solution JSON from 'solve' to re-check")
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (solve->parsed()) {
      auto cfg = load(solve_args);
      if (!policy_override.empty()) cfg.solve_policy = policy_override;
      const auto profile =
          profile_path.empty()
              ? ehp::generate_harvest(cfg.harvest, ehp::experiment_slots(cfg), cfg.delta_s,
                                      ehp::derive_seed(cfg.master_seed, 0))
              : ehp::load_profile(profile_path, cfg.delta_s);
      const auto result = ehp::solve_one(cfg, profile);
      emit(cfg.output, [&](std::ostream& out) { out << result.dump(2) << '\n'; });
      return result["violation"].is_null() ? kExitOk : kExitSolver;
    }
    if (sweep->parsed()) {
      const auto cfg = load(sweep_args);
      const auto rows = ehp::sweep_eta(cfg, {worker_count(sweep_args.jobs)});
      emit_rows(cfg, sweep_args, rows);
      return rows_exit_code(rows);
    }
    if (region->parsed()) {
      const auto cfg = load(region_args);
      const auto rows = ehp::trace_region(cfg, {worker_count(region_args.jobs)});
      emit_rows(cfg, region_args, rows);
      return rows_exit_code(rows);
    }
    if (train->parsed()) {
      const auto cfg = load(train_args);
      if (!cfg.storage.bounded()) throw ehp::ConfigError("storage.e_max_mj: dp-train needs a finite battery");
      const auto table = ehp::train_dp(cfg);
      emit(cfg.output, [&](std::ostream& out) { out << ehp::to_json(table).dump() << '\n'; });
      std::cerr << "ehctl: value iteration converged in " << table.iterations << " sweeps\n";
      return kExitOk;
    }
    if (validate->parsed()) {
      const auto cfg = load(validate_args);
      const auto K = ehp::experiment_slots(cfg);
      ehp::json summary{{"slots", K},
                        {"delta_seconds", cfg.delta_s},
                        {"eta", cfg.storage.eta},
                        {"e_max_j", ehp::detail::finite_or_null(cfg.storage.e_max)},
                        {"policies", cfg.policies},
                        {"seed", cfg.master_seed}};
      int code = kExitOk;
      if (!trace_path.empty()) {
        std::ifstream in(trace_path);
        ehp::json j;
        try {
          in >> j;
        } catch (const ehp::json::exception& e) {
          throw ehp::ConfigError(trace_path + ": " + e.what());
        }
        if (!j.contains("policy_trace") || !j.contains("harvest_w") || !j.contains("delta_seconds"))
          throw ehp::ConfigError(trace_path + ": not a 'solve' output");
        const ehp::HarvestProfile profile(j.at("delta_seconds").get<double>(),
                                          j.at("harvest_w").get<std::vector<double>>());
        const auto policy = ehp::policy_from_json(j.at("policy_trace"));
        const auto v = ehp::validate_policy(policy, profile, cfg.storage);
        summary["trace_feasible"] = !v.has_value();
        if (v) {
          summary["violation"] = {{"kind", ehp::to_string(v->kind)}, {"slot", v->slot}};
          code = kExitSolver;
        }
      }
      emit(cfg.output, [&](std::ostream& out) { out << summary.dump(2) << '\n'; });
      return code;
    }
  } catch (const ehp::ConfigError& e) {
    std::cerr << "ehctl: config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "ehctl: invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "ehctl: solver failure: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitOk;
}
