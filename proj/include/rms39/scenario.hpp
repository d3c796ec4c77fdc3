#pragma once

// Scenario description and its JSON schema.
//
//   {
//     "name": "config2_case1",
//     "configuration": "config1" | "config2" | "config2_bess",
//     "network": "../data/ieee39_network.txt",     paths relative to the file
//     "machines": "../data/ieee39_machines.txt",
//     "battery": "../data/battery_stack.txt",     config2_bess only
//     "slack": "G2",
//     "dispatch_mw": {"G2": 579, "WP1": 1335, ...},
//     "wind": [{"id": "WP1", "bus": 39, "rating_mva": 1500, "replaces": "G1",
//               "shunt_mvar": 86, "time_constant": 0.05, "current_limit": 1.1}],
//     "bess": {"bus": 17, "rating_mva": 225, "initial_soc": 0.5,
//              "following": {...}, "forming": {...}},
//     "controller": "following" | "forming",
//     "events": [{"time": 5, "kind": "trip_generator", "target": "G6"},
//                {"time": 9, "kind": "set_reference", "target": "BESS", "value": 0.1}],
//     "step": 0.001, "duration": 105, "seed": 1,
//     "integrator": "trapezoidal" | "rk4", "decimation": 10,
//     "load_model": {"kpv": 1, "kpf": 1, "kqv": 2, "kqf": -1, "collapse_voltage": 0.3},
//     "load_scale": {"p": 1.0, "q": 1.0},
//     "profiles": {"load": "constant" | "synthetic" | "<directory>",
//                  "wind": "constant" | "synthetic" | "<directory>",
//                  "load_amplitude": 0.01, "wind_sigma": 0.005}
//   }

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rms39/common.hpp"
#include "rms39/converter.hpp"
#include "rms39/loads.hpp"

namespace rms39 {

enum class Configuration { Config1, Config2, Config2Bess };
enum class ControllerKind { Following, Forming };
enum class Integrator { Trapezoidal, RK4 };

inline const char* to_string(Configuration c) {
  switch (c) {
    case Configuration::Config1: return "config1";
    case Configuration::Config2: return "config2";
    case Configuration::Config2Bess: return "config2_bess";
  }
  return "?";
}

inline const char* to_string(ControllerKind c) { return c == ControllerKind::Following ? "following" : "forming"; }
inline const char* to_string(Integrator i) { return i == Integrator::Trapezoidal ? "trapezoidal" : "rk4"; }

inline Configuration parse_configuration(const std::string& s) {
  if (s == "config1") return Configuration::Config1;
  if (s == "config2") return Configuration::Config2;
  if (s == "config2_bess") return Configuration::Config2Bess;
  throw ScenarioError("configuration", "expected config1, config2 or config2_bess, got '" + s + "'");
}

inline ControllerKind parse_controller(const std::string& s) {
  if (s == "following") return ControllerKind::Following;
  if (s == "forming") return ControllerKind::Forming;
  throw ScenarioError("controller", "expected following or forming, got '" + s + "'");
}

inline Integrator parse_integrator(const std::string& s) {
  if (s == "trapezoidal") return Integrator::Trapezoidal;
  if (s == "rk4") return Integrator::RK4;
  throw ScenarioError("integrator", "expected trapezoidal or rk4, got '" + s + "'");
}

struct Event {
  enum class Kind { TripGenerator, TripLoad, SetReference };
  double time = 0.0;
  Kind kind = Kind::TripGenerator;
  std::string target;  ///< machine/wind id, load bus id, or BESS
  double value = 0.0;  ///< set_reference only
};

inline const char* to_string(Event::Kind k) {
  switch (k) {
    case Event::Kind::TripGenerator: return "trip_generator";
    case Event::Kind::TripLoad: return "trip_load";
    case Event::Kind::SetReference: return "set_reference";
  }
  return "?";
}

struct WindSpec {
  std::string id;
  int bus = 0;
  double rating_mva = 0.0;
  std::string replaces;
  double shunt_mvar = 0.0;
  double time_constant = 0.05;
  double current_limit = 1.1;
};

struct BessSpec {
  int bus = 17;
  double rating_mva = 225.0;
  double initial_soc = 0.5;
  FollowingParams following;
  FormingParams forming;
};

struct ProfileSpec {
  std::string load = "constant";
  std::string wind = "constant";
  double load_amplitude = 0.01;
  double wind_sigma = 0.005;
};

struct Scenario {
  std::string name;
  Configuration configuration = Configuration::Config1;
  std::string network_file;
  std::string machines_file;
  std::string battery_file;
  std::string slack = "G2";
  std::map<std::string, double> dispatch_mw;
  std::vector<WindSpec> wind;
  std::optional<BessSpec> bess;
  ControllerKind controller = ControllerKind::Following;
  std::vector<Event> events;
  double step = 0.001;
  double duration = 105.0;
  std::uint64_t seed = 1;
  Integrator integrator = Integrator::Trapezoidal;
  int decimation = 10;
  LoadParams load_model;
  double load_scale_p = 1.0;
  double load_scale_q = 1.0;
  ProfileSpec profiles;

  /// First trip time, or NaN when there is none.
  double trip_time() const {
    for (const auto& e : events)
      if (e.kind == Event::Kind::TripGenerator) return e.time;
    return std::nan("");
  }

  void validate() const {
    if (!(step > 0.0)) throw ScenarioError("step", "must be positive");
    const double per_sample = 1e-3 / step;
    if (std::abs(per_sample - std::round(per_sample)) > 1e-9 || per_sample < 1.0 - 1e-9)
      throw ScenarioError("step", "must divide the 1 ms sampling period");
    if (!(duration > 0.0)) throw ScenarioError("duration", "must be positive");
    if (decimation < 1) throw ScenarioError("decimation", "must be at least 1");
    if (network_file.empty()) throw ScenarioError("network", "missing");
    if (machines_file.empty()) throw ScenarioError("machines", "missing");
    if (!(load_model.v0 > 0.0)) throw ScenarioError("load_model.v0", "must be positive");
    if (!(load_scale_p > 0.0) || !(load_scale_q > 0.0)) throw ScenarioError("load_scale", "must be positive");
    for (const auto& e : events)
      if (!(e.time >= 0.0 && e.time <= duration)) throw ScenarioError("events", "event time outside the run");

    std::set<std::string> replaced;
    for (const auto& w : wind) {
      if (!(w.rating_mva > 0.0)) throw ScenarioError("wind." + w.id + ".rating_mva", "must be positive");
      replaced.insert(w.replaces);
    }
    const std::set<std::string> reduced{"G1", "G5", "G8", "G9"};
    switch (configuration) {
      case Configuration::Config1:
        if (!wind.empty()) throw ScenarioError("wind", "config1 has no wind plants");
        if (bess) throw ScenarioError("bess", "config1 has no battery");
        break;
      case Configuration::Config2:
      case Configuration::Config2Bess:
        if (wind.size() != 4 || replaced != reduced)
          throw ScenarioError("wind", "config2 replaces exactly G1, G5, G8 and G9 with four wind plants");
        if (configuration == Configuration::Config2 && bess) throw ScenarioError("bess", "config2 has no battery");
        if (configuration == Configuration::Config2Bess) {
          if (!bess) throw ScenarioError("bess", "config2_bess needs a battery block");
          if (battery_file.empty()) throw ScenarioError("battery", "missing");
          if (!(bess->initial_soc >= 0.0 && bess->initial_soc <= 1.0))
            throw ScenarioError("bess.initial_soc", "must lie in [0, 1]");
        }
        break;
    }
  }
};

namespace detail {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& prefix = "") {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(prefix + key, e.what());
  }
}

inline std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (std::filesystem::path(base) / path).lexically_normal().string();
}

inline bool is_keyword_profile(const std::string& s) { return s == "constant" || s == "synthetic"; }

}  // namespace detail

inline void read_following(const nlohmann::json& j, FollowingParams& p) {
  using detail::read_opt;
  const std::string pre = "bess.following.";
  read_opt(j, "kpf", p.kpf, pre);
  read_opt(j, "f_deadband", p.f_deadband, pre);
  read_opt(j, "kqv", p.kqv, pre);
  read_opt(j, "v_deadband", p.v_deadband, pre);
  read_opt(j, "p_ref", p.p_ref, pre);
  read_opt(j, "q_ref", p.q_ref, pre);
  read_opt(j, "current_limit", p.current_limit, pre);
  read_opt(j, "current_time", p.current_time, pre);
  read_opt(j, "pll_kp", p.pll.kp, pre);
  read_opt(j, "pll_ki", p.pll.ki, pre);
  read_opt(j, "pll_frequency_filter", p.pll.frequency_filter, pre);
}

inline void read_forming(const nlohmann::json& j, FormingParams& p) {
  using detail::read_opt;
  const std::string pre = "bess.forming.";
  read_opt(j, "mp", p.mp, pre);
  read_opt(j, "w_lp", p.w_lp, pre);
  read_opt(j, "t1", p.t1, pre);
  read_opt(j, "t2", p.t2, pre);
  read_opt(j, "kv", p.kv, pre);
  read_opt(j, "p_ref", p.p_ref, pre);
  read_opt(j, "rc", p.rc, pre);
  read_opt(j, "xc", p.xc, pre);
  read_opt(j, "current_limit", p.current_limit, pre);
}

/// Parses a scenario; relative file paths are resolved against `base_dir`.
inline Scenario parse_scenario(const nlohmann::json& j, const std::string& base_dir = "") {
  using detail::read_opt;
  if (!j.is_object()) throw ScenarioError("scenario", "top level must be an object");
  static const std::set<std::string> known{"name",     "configuration", "network",     "machines",   "battery",
                                           "slack",    "dispatch_mw",   "wind",        "bess",       "controller",
                                           "events",   "step",          "duration",    "seed",       "integrator",
                                           "decimation", "load_model",  "load_scale",  "profiles"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ScenarioError(key, "unknown scenario field");

  Scenario s;
  read_opt(j, "name", s.name);
  if (!j.contains("configuration")) throw ScenarioError("configuration", "missing");
  s.configuration = parse_configuration(j.at("configuration").get<std::string>());
  read_opt(j, "network", s.network_file);
  read_opt(j, "machines", s.machines_file);
  read_opt(j, "battery", s.battery_file);
  s.network_file = detail::resolve_path(base_dir, s.network_file);
  s.machines_file = detail::resolve_path(base_dir, s.machines_file);
  s.battery_file = detail::resolve_path(base_dir, s.battery_file);
  read_opt(j, "slack", s.slack);
  read_opt(j, "dispatch_mw", s.dispatch_mw);

  if (j.contains("wind")) {
    if (!j.at("wind").is_array()) throw ScenarioError("wind", "must be an array");
    for (const auto& w : j.at("wind")) {
      WindSpec ws;
      read_opt(w, "id", ws.id, "wind.");
      const std::string pre = "wind." + ws.id + ".";
      read_opt(w, "bus", ws.bus, pre);
      read_opt(w, "rating_mva", ws.rating_mva, pre);
      read_opt(w, "replaces", ws.replaces, pre);
      read_opt(w, "shunt_mvar", ws.shunt_mvar, pre);
      read_opt(w, "time_constant", ws.time_constant, pre);
      read_opt(w, "current_limit", ws.current_limit, pre);
      if (ws.id.empty()) throw ScenarioError("wind.id", "missing");
      s.wind.push_back(ws);
    }
  }

  if (j.contains("bess")) {
    const auto& b = j.at("bess");
    BessSpec bs;
    read_opt(b, "bus", bs.bus, "bess.");
    read_opt(b, "rating_mva", bs.rating_mva, "bess.");
    read_opt(b, "initial_soc", bs.initial_soc, "bess.");
    if (b.contains("following")) read_following(b.at("following"), bs.following);
    if (b.contains("forming")) read_forming(b.at("forming"), bs.forming);
    s.bess = bs;
  }

  if (j.contains("controller")) s.controller = parse_controller(j.at("controller").get<std::string>());

  if (j.contains("events")) {
    if (!j.at("events").is_array()) throw ScenarioError("events", "must be an array");
    for (const auto& e : j.at("events")) {
      Event ev;
      read_opt(e, "time", ev.time, "events.");
      std::string kind;
      read_opt(e, "kind", kind, "events.");
      if (kind == "trip_generator") ev.kind = Event::Kind::TripGenerator;
      else if (kind == "trip_load") ev.kind = Event::Kind::TripLoad;
      else if (kind == "set_reference") ev.kind = Event::Kind::SetReference;
      else throw ScenarioError("events.kind", "unknown event kind '" + kind + "'");
      if (e.contains("target")) {
        const auto& t = e.at("target");
        ev.target = t.is_string() ? t.get<std::string>() : t.dump();
      }
      if (ev.target.empty()) throw ScenarioError("events.target", "missing");
      read_opt(e, "value", ev.value, "events.");
      s.events.push_back(ev);
    }
  }

  read_opt(j, "step", s.step);
  read_opt(j, "duration", s.duration);
  read_opt(j, "seed", s.seed);
  if (j.contains("integrator")) s.integrator = parse_integrator(j.at("integrator").get<std::string>());
  read_opt(j, "decimation", s.decimation);
  if (j.contains("load_model")) {
    const auto& m = j.at("load_model");
    read_opt(m, "kpv", s.load_model.kpv, "load_model.");
    read_opt(m, "kpf", s.load_model.kpf, "load_model.");
    read_opt(m, "kqv", s.load_model.kqv, "load_model.");
    read_opt(m, "kqf", s.load_model.kqf, "load_model.");
    read_opt(m, "collapse_voltage", s.load_model.collapse_voltage, "load_model.");
  }
  if (j.contains("load_scale")) {
    read_opt(j.at("load_scale"), "p", s.load_scale_p, "load_scale.");
    read_opt(j.at("load_scale"), "q", s.load_scale_q, "load_scale.");
  }
  if (j.contains("profiles")) {
    const auto& p = j.at("profiles");
    read_opt(p, "load", s.profiles.load, "profiles.");
    read_opt(p, "wind", s.profiles.wind, "profiles.");
    read_opt(p, "load_amplitude", s.profiles.load_amplitude, "profiles.");
    read_opt(p, "wind_sigma", s.profiles.wind_sigma, "profiles.");
    if (!detail::is_keyword_profile(s.profiles.load))
      s.profiles.load = detail::resolve_path(base_dir, s.profiles.load);
    if (!detail::is_keyword_profile(s.profiles.wind))
      s.profiles.wind = detail::resolve_path(base_dir, s.profiles.wind);
  }
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, "cannot open scenario file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(path, e.what());
  }
  return parse_scenario(j, std::filesystem::path(path).parent_path().string());
}

}  // namespace rms39
