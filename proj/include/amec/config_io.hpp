#ifndef AMEC_CONFIG_IO_HPP
#define AMEC_CONFIG_IO_HPP

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "amec/baselines.hpp"
#include "amec/error.hpp"
#include "amec/gbd.hpp"
#include "amec/scenario.hpp"

namespace amec {

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(where + it.key(), "unknown key");
}

inline double get_number(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(key, "expected a number");
  return v.get<double>();
}

inline Range get_range(const json& j, const std::string& key) {
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(key, "expected [lo, hi]");
  return {v[0].get<double>(), v[1].get<double>()};
}

// NaN and infinities are written as null so the document stays valid JSON.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace detail

inline nlohmann::json config_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["K"] = c.num_devices;
  j["T_s"] = c.deadline_s;
  j["F_max_Hz"] = c.f_max_hz;
  j["P0_W"] = c.params.server_power_w;
  j["eta"] = c.params.harvest_eff;
  j["kappa"] = c.params.server_energy_coef;
  j["lambda"] = c.params.tx_energy_coef;
  j["A_bits_range"] = {c.data_bits.lo, c.data_bits.hi};
  j["I_cpb_range"] = {c.intensity.lo, c.intensity.hi};
  j["distance_m_range"] = {c.distance_m.lo, c.distance_m.hi};
  j["rician_gamma"] = c.params.rician_gamma;
  j["antenna_gain"] = c.params.antenna_gain;
  j["carrier_Hz"] = c.params.carrier_hz;
  j["path_loss_exp"] = c.params.path_loss_exp;
  j["seed"] = c.seed;
  j["tolerances"] = {{"bisection", c.tolerances.bisection},
                     {"gbd_gap", c.tolerances.gbd_gap},
                     {"gbd_max_iter", c.tolerances.gbd_max_iter},
                     {"freq_max_iter", c.tolerances.freq_max_iter}};
  if (c.tasks) {
    auto& arr = j["tasks"] = nlohmann::json::array();
    for (const auto& t : *c.tasks)
      arr.push_back({{"A_bits", t.data_bits}, {"I_cpb", t.intensity}, {"distance_m", t.distance_m}, {"h", t.channel_gain}});
  }
  return j;
}

/// Missing keys keep their defaults except K, which is required.
inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  using detail::get_number;
  if (!j.is_object()) throw ConfigError("", "configuration must be a JSON object");
  detail::reject_unknown(j,
                         {"K", "T_s", "F_max_Hz", "P0_W", "eta", "kappa", "lambda", "A_bits_range", "I_cpb_range",
                          "distance_m_range", "rician_gamma", "antenna_gain", "carrier_Hz", "path_loss_exp", "seed",
                          "tolerances", "tasks"},
                         "");
  if (!j.contains("K")) throw ConfigError("K", "required key is missing");
  ScenarioConfig c;
  const auto& k = j.at("K");
  if (!k.is_number_integer()) throw ConfigError("K", "expected an integer");
  c.num_devices = k.get<int>();
  if (j.contains("T_s")) c.deadline_s = get_number(j, "T_s");
  if (j.contains("F_max_Hz")) c.f_max_hz = get_number(j, "F_max_Hz");
  if (j.contains("P0_W")) c.params.server_power_w = get_number(j, "P0_W");
  if (j.contains("eta")) c.params.harvest_eff = get_number(j, "eta");
  if (j.contains("kappa")) c.params.server_energy_coef = get_number(j, "kappa");
  if (j.contains("lambda")) c.params.tx_energy_coef = get_number(j, "lambda");
  if (j.contains("A_bits_range")) c.data_bits = detail::get_range(j, "A_bits_range");
  if (j.contains("I_cpb_range")) c.intensity = detail::get_range(j, "I_cpb_range");
  if (j.contains("distance_m_range")) c.distance_m = detail::get_range(j, "distance_m_range");
  if (j.contains("rician_gamma")) c.params.rician_gamma = get_number(j, "rician_gamma");
  if (j.contains("antenna_gain")) c.params.antenna_gain = get_number(j, "antenna_gain");
  if (j.contains("carrier_Hz")) c.params.carrier_hz = get_number(j, "carrier_Hz");
  if (j.contains("path_loss_exp")) c.params.path_loss_exp = get_number(j, "path_loss_exp");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed", "expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    if (!t.is_object()) throw ConfigError("tolerances", "expected an object");
    detail::reject_unknown(t, {"bisection", "gbd_gap", "gbd_max_iter", "freq_max_iter"}, "tolerances.");
    if (t.contains("bisection")) c.tolerances.bisection = get_number(t, "bisection");
    if (t.contains("gbd_gap")) c.tolerances.gbd_gap = get_number(t, "gbd_gap");
    if (t.contains("gbd_max_iter")) c.tolerances.gbd_max_iter = static_cast<int>(get_number(t, "gbd_max_iter"));
    if (t.contains("freq_max_iter")) c.tolerances.freq_max_iter = static_cast<int>(get_number(t, "freq_max_iter"));
  }
  if (j.contains("tasks")) {
    const auto& arr = j.at("tasks");
    if (!arr.is_array()) throw ConfigError("tasks", "expected an array");
    std::vector<DeviceTask> tasks;
    for (const auto& e : arr) {
      if (!e.is_object()) throw ConfigError("tasks", "expected objects");
      detail::reject_unknown(e, {"A_bits", "I_cpb", "distance_m", "h"}, "tasks.");
      DeviceTask t;
      t.data_bits = get_number(e, "A_bits");
      t.intensity = get_number(e, "I_cpb");
      t.distance_m = get_number(e, "distance_m");
      t.channel_gain = get_number(e, "h");
      tasks.push_back(t);
    }
    c.tasks = std::move(tasks);
  }
  c.validate();
  return c;
}

inline ScenarioConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("parse error: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", e.what());
  }
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline void save_config(const std::string& path, const ScenarioConfig& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("", "cannot write " + path);
  out << config_to_json(c).dump(2) << '\n';
}

/// A config that regenerates `sc` exactly, tasks included.
inline ScenarioConfig config_for(const Scenario& sc) {
  ScenarioConfig c;
  c.num_devices = sc.num_devices();
  c.deadline_s = sc.deadline_s;
  c.f_max_hz = sc.f_max_hz;
  c.params = sc.params;
  c.seed = sc.seed;
  c.tasks = sc.tasks;
  return c;
}

inline nlohmann::json plan_to_json(const SlotMatrix& f) {
  nlohmann::json rows = nlohmann::json::array();
  const int k = f.num_devices();
  for (int n = 1; n <= k; ++n) {
    nlohmann::json row = nlohmann::json::array();
    for (int m = n + 1; m <= k + 1; ++m) row.push_back(f(n, m));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json report_to_json(const SchemeResult& r, const SolveReport* gbd = nullptr) {
  using detail::number;
  nlohmann::json j;
  j["scheme"] = to_string(r.scheme);
  j["status"] = to_string(r.status);
  j["energy_J"] = number(r.energy);
  j["iterations"] = r.iterations;
  j["ub_J"] = number(r.ub);
  j["lb_J"] = number(r.lb);
  j["schedule"] = r.schedule.order();
  j["dt_s"] = r.dt.dt;
  if (r.plan.num_devices() > 0) j["f_Hz"] = plan_to_json(r.plan);
  if (!r.message.empty()) j["message"] = r.message;
  if (gbd) {
    auto& tr = j["trace"] = nlohmann::json::array();
    for (const auto& row : gbd->trace)
      tr.push_back({{"iteration", row.iteration},
                    {"ub_J", number(row.ub)},
                    {"lb_J", number(row.lb)},
                    {"cut", row.cut == CutKind::Optimality ? "optimality" : "feasibility"},
                    {"schedule", row.schedule.order()}});
  }
  return j;
}

inline void save_report(const std::string& path, const nlohmann::json& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("", "cannot write " + path);
  out << report.dump(2) << '\n';
}

}  // namespace amec

#endif  // AMEC_CONFIG_IO_HPP
