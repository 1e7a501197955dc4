#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehp/baselines.hpp"
#include "ehp/core.hpp"
#include "ehp/offline.hpp"
#include "ehp/online.hpp"

namespace ehp {

using json = nlohmann::json;

/// Malformed or inconsistent user input; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// JSON has no infinity: unbounded values travel as null.
inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline double number_or_inf(const json& j) { return j.is_null() ? kInf : j.get<double>(); }

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Harvest profiles
// ---------------------------------------------------------------------------

/// CSV with header "slot_index,h_watts"; rows must list slots 0..K-1 in order.
inline HarvestProfile read_profile_csv(std::istream& in, double delta_seconds,
                                       const std::string& origin = "profile") {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(origin + ": empty file");
  if (detail::trim(line) != "slot_index,h_watts")
    throw ConfigError(origin + ": expected header 'slot_index,h_watts'");
  std::vector<double> h;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected two columns");
    std::size_t idx;
    double value;
    try {
      idx = std::stoul(line.substr(0, comma));
      value = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": not a number");
    }
    if (idx != h.size())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": slot_index out of sequence");
    h.push_back(value);
  }
  if (h.empty()) throw ConfigError(origin + ": no harvest samples");
  try {
    return HarvestProfile(delta_seconds, std::move(h));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

/// JSON object {"delta_seconds": d, "h": [watts...]}.
inline HarvestProfile profile_from_json(const json& j, const std::string& origin = "profile") {
  if (!j.is_object() || !j.contains("delta_seconds") || !j.contains("h"))
    throw ConfigError(origin + ": expected {\"delta_seconds\", \"h\"}");
  try {
    auto h = j.at("h").get<std::vector<double>>();
    if (h.empty()) throw ConfigError(origin + ".h: no harvest samples");
    return HarvestProfile(j.at("delta_seconds").get<double>(), std::move(h));
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline json to_json(const HarvestProfile& p) {
  return {{"delta_seconds", p.delta()}, {"h", std::vector<double>(p.h().begin(), p.h().end())}};
}

/// Loads a profile by extension: .json carries its own slot length, CSV uses delta_seconds.
inline HarvestProfile load_profile(const std::filesystem::path& path, double delta_seconds) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open harvest file '" + path.string() + "'");
  if (path.extension() == ".json") {
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return profile_from_json(j, path.string());
  }
  return read_profile_csv(in, delta_seconds, path.string());
}

inline void write_profile_csv(std::ostream& out, const HarvestProfile& p) {
  out << "slot_index,h_watts\n" << std::setprecision(17);
  for (std::size_t k = 0; k < p.size(); ++k) out << k << ',' << p[k] << '\n';
}

// ---------------------------------------------------------------------------
// Solutions
// ---------------------------------------------------------------------------

inline json to_json(const ThresholdSegment& s) {
  return {{"t_start", s.t_start},
          {"start_slot", s.start_slot},
          {"p_u", s.p_u},
          {"p_s", detail::finite_or_null(s.p_s)},
          {"end_event", to_string(s.end_event)}};
}

inline json to_json(const ThresholdSchedule& schedule) {
  json arr = json::array();
  for (const auto& s : schedule.segments) arr.push_back(to_json(s));
  return arr;
}

inline EventKind event_from_string(const std::string& s) {
  if (s == "empty") return EventKind::Empty;
  if (s == "full") return EventKind::Full;
  if (s == "none") return EventKind::None;
  throw ConfigError("unknown battery event '" + s + "'");
}

inline ThresholdSchedule schedule_from_json(const json& j) {
  ThresholdSchedule out;
  for (const auto& s : j) {
    out.segments.push_back({s.at("t_start").get<double>(), s.at("start_slot").get<std::size_t>(),
                            s.at("p_u").get<double>(), detail::number_or_inf(s.at("p_s")),
                            event_from_string(s.at("end_event").get<std::string>())});
  }
  return out;
}

inline json to_json(const RealizedPolicy& p) {
  return {{"start_slot", p.start_slot}, {"p", p.p}, {"s", p.s}, {"u", p.u}, {"e", p.e}};
}

inline RealizedPolicy policy_from_json(const json& j) {
  RealizedPolicy p;
  p.start_slot = j.at("start_slot").get<std::size_t>();
  p.p = j.at("p").get<std::vector<double>>();
  p.s = j.at("s").get<std::vector<double>>();
  p.u = j.at("u").get<std::vector<double>>();
  p.e = j.at("e").get<std::vector<double>>();
  return p;
}

inline json to_json(const OfflineSolution& sol) {
  return {{"utility", sol.utility},
          {"segments", to_json(sol.schedule)},
          {"policy", to_json(sol.policy)},
          {"tie_breaks", sol.tie_breaks},
          {"unresolved", sol.unresolved}};
}

inline json to_json(const FixedThresholds& t) {
  return {{"p_u", t.p_u}, {"p_s", detail::finite_or_null(t.p_s)}};
}

inline const char* to_string(EnergySpacing s) {
  return s == EnergySpacing::Quadratic ? "quadratic" : "uniform";
}

inline EnergySpacing spacing_from_string(const std::string& s) {
  if (s == "uniform") return EnergySpacing::Uniform;
  if (s == "quadratic") return EnergySpacing::Quadratic;
  throw ConfigError("energy_spacing must be 'uniform' or 'quadratic', got '" + s + "'");
}

inline json to_json(const DpConfig& c) {
  return {{"energy_points", c.energy_points},
          {"energy_spacing", to_string(c.energy_spacing)},
          {"harvest_points", c.harvest_points},
          {"action_points", c.action_points},
          {"action_max_w", c.action_max},
          {"beta", c.beta},
          {"delta_seconds", c.delta},
          {"tolerance", c.tolerance},
          {"max_iterations", c.max_iterations},
          {"exhaustive_actions", c.exhaustive_actions}};
}

inline DpConfig dp_config_from_json(const json& j, DpConfig c = {}) {
  try {
    if (j.contains("energy_points")) c.energy_points = j.at("energy_points").get<std::size_t>();
    if (j.contains("energy_spacing"))
      c.energy_spacing = spacing_from_string(j.at("energy_spacing").get<std::string>());
    if (j.contains("harvest_points")) c.harvest_points = j.at("harvest_points").get<std::size_t>();
    if (j.contains("action_points")) c.action_points = j.at("action_points").get<std::size_t>();
    if (j.contains("action_max_w")) c.action_max = j.at("action_max_w").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("delta_seconds")) c.delta = j.at("delta_seconds").get<double>();
    if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
    if (j.contains("max_iterations")) c.max_iterations = j.at("max_iterations").get<std::size_t>();
    if (j.contains("exhaustive_actions"))
      c.exhaustive_actions = j.at("exhaustive_actions").get<bool>();
    c.validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dp: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

/// Grids, value table (bits) and action table (watts), row-major over (E, h).
inline json to_json(const DpSolution& sol) {
  return {{"config", to_json(sol.config)},
          {"eta", sol.eta},
          {"e_max_j", sol.e_max},
          {"energy_grid_j", sol.energy_grid},
          {"harvest_grid_w", sol.harvest_grid},
          {"harvest_weights", sol.harvest_weights},
          {"value_bits", sol.value},
          {"action_w", sol.action},
          {"iterations", sol.iterations},
          {"residual", sol.residual}};
}

inline DpSolution dp_solution_from_json(const json& j) {
  DpSolution sol;
  try {
    sol.config = dp_config_from_json(j.at("config"));
    sol.eta = j.at("eta").get<double>();
    sol.e_max = j.at("e_max_j").get<double>();
    sol.energy_grid = j.at("energy_grid_j").get<std::vector<double>>();
    sol.harvest_grid = j.at("harvest_grid_w").get<std::vector<double>>();
    sol.harvest_weights = j.at("harvest_weights").get<std::vector<double>>();
    sol.value = j.at("value_bits").get<std::vector<double>>();
    sol.action = j.at("action_w").get<std::vector<double>>();
    sol.iterations = j.at("iterations").get<std::size_t>();
    sol.residual = j.at("residual").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dp table: ") + e.what());
  }
  const std::size_t n = sol.energy_grid.size() * sol.harvest_grid.size();
  if (sol.energy_grid.size() < 2 || sol.harvest_grid.empty() || sol.value.size() != n ||
      sol.action.size() != n || sol.harvest_weights.size() != sol.harvest_grid.size())
    throw ConfigError("dp table: grid and table sizes disagree");
  return sol;
}

inline json to_json(const OracleResult& r) {
  return {{"utility", r.utility},
          {"certified", r.certified},
          {"start_utilities", r.start_utilities},
          {"grid_utility", detail::finite_or_null(r.grid_utility)},
          {"policy", to_json(r.policy)}};
}

// ---------------------------------------------------------------------------
// Result tables
// ---------------------------------------------------------------------------

/// One cell of an experiment. Broadcast rows fill a, r1 and r2; single-user rows leave them empty.
struct ResultRow {
  std::string policy;
  double eta = 0.0;
  std::uint64_t seed = 0;
  double a = NAN;
  double avg_rate_bps = NAN;
  double r1_bps = NAN;
  double r2_bps = NAN;
  std::string status = "ok";
  double runtime_s = 0.0;
};

inline constexpr const char* kResultColumns =
    "policy,eta,seed,a,avg_rate_bps,r1_bps,r2_bps,status,runtime_s";

namespace detail {

inline void csv_number(std::ostream& out, double x) {
  if (std::isfinite(x)) out << x;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace detail

/// Fixed column order; runtime is the only non-deterministic column.
inline void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows,
                              bool include_runtime = true) {
  out << kResultColumns << '\n';
  const auto old = out.precision(12);
  for (const auto& r : rows) {
    out << detail::csv_field(r.policy) << ',' << r.eta << ',' << r.seed << ',';
    detail::csv_number(out, r.a);
    out << ',';
    detail::csv_number(out, r.avg_rate_bps);
    out << ',';
    detail::csv_number(out, r.r1_bps);
    out << ',';
    detail::csv_number(out, r.r2_bps);
    out << ',' << detail::csv_field(r.status) << ',';
    if (include_runtime) out << std::setprecision(6) << r.runtime_s << std::setprecision(12);
    out << '\n';
  }
  out.precision(old);
}

inline json to_json(const ResultRow& r) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  return {{"policy", r.policy},       {"eta", r.eta},         {"seed", r.seed},
          {"a", num(r.a)},            {"avg_rate_bps", num(r.avg_rate_bps)},
          {"r1_bps", num(r.r1_bps)},  {"r2_bps", num(r.r2_bps)},
          {"status", r.status},       {"runtime_s", r.runtime_s}};
}

inline json to_json(const std::vector<ResultRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) arr.push_back(to_json(r));
  return arr;
}

}  // namespace ehp
