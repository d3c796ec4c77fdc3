#pragma once

// Readers for the whitespace-separated dataset files: network tables,
// machine data with named governor/exciter sets, and the battery table.
//
// Layout shared by all files: '#' starts a comment, "[section]" or
// "[section name]" opens a block, and every other nonblank line is one row.

#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rms39/common.hpp"
#include "rms39/machines.hpp"
#include "rms39/network.hpp"
#include "rms39/storage.hpp"

namespace rms39 {

struct TableRow {
  std::string section;  ///< full header text, e.g. "governor hydro"
  int line = 0;
  std::vector<std::string> fields;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ScenarioError(where, "expected a number, got '" + s + "'");
  return v;
}

inline int to_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw ScenarioError(where, "expected an integer, got '" + s + "'");
  return static_cast<int>(v);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, "cannot open file");
  return in;
}

}  // namespace detail

inline std::vector<TableRow> read_table_rows(std::istream& in, const std::string& source = "input") {
  std::vector<TableRow> rows;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ScenarioError(source + ":" + std::to_string(line), "unterminated section header");
      std::istringstream hs(text.substr(1, text.size() - 2));
      std::string word, joined;
      while (hs >> word) joined += (joined.empty() ? "" : " ") + word;
      section = joined;
      continue;
    }
    if (section.empty()) throw ScenarioError(source + ":" + std::to_string(line), "row outside any section");
    TableRow r{section, line, {}};
    std::istringstream ls(text);
    std::string f;
    while (ls >> f) r.fields.push_back(f);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Network

inline BusKind parse_bus_kind(const std::string& s, const std::string& where) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv") return BusKind::PV;
  if (s == "pq") return BusKind::PQ;
  throw ScenarioError(where, "unknown bus kind '" + s + "'");
}

/// Sections: [buses] id kind vset base_kv; [branches] from to r x b tap;
/// [loads] bus p_mw q_mvar; [shunts] bus g_mw b_mvar.
inline Network parse_network(std::istream& in, const std::string& source = "network") {
  Network net;
  for (const auto& row : read_table_rows(in, source)) {
    const std::string where = source + ":" + std::to_string(row.line);
    const auto& f = row.fields;
    auto need = [&](std::size_t n) {
      if (f.size() != n)
        throw ScenarioError(where, "[" + row.section + "] rows need " + std::to_string(n) + " columns");
    };
    if (row.section == "buses") {
      need(4);
      net.buses.push_back({detail::to_int(f[0], where), parse_bus_kind(f[1], where), detail::to_double(f[2], where),
                           detail::to_double(f[3], where)});
    } else if (row.section == "branches") {
      need(6);
      Branch b;
      b.from = detail::to_int(f[0], where);
      b.to = detail::to_int(f[1], where);
      b.series_impedance = {detail::to_double(f[2], where), detail::to_double(f[3], where)};
      b.shunt_susceptance = detail::to_double(f[4], where);
      b.tap_ratio = detail::to_double(f[5], where);
      net.branches.push_back(b);
    } else if (row.section == "loads") {
      need(3);
      net.loads.push_back({detail::to_int(f[0], where), detail::to_double(f[1], where), detail::to_double(f[2], where)});
    } else if (row.section == "shunts") {
      need(3);
      net.shunts.push_back({detail::to_int(f[0], where), detail::to_double(f[1], where), detail::to_double(f[2], where)});
    } else {
      throw ScenarioError(where, "unknown section [" + row.section + "]");
    }
  }
  (void)detail::bus_index_map(net.buses);
  return net;
}

inline Network load_network(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_network(in, path);
}

// ---------------------------------------------------------------------------
// Machines

struct MachineRecord {
  MachineParams params;
  std::string governor;  ///< name of a [governor ...] set
  std::string exciter;   ///< name of an [exciter ...] set
};

struct GovernorSet {
  std::string kind;  ///< hydro or steam
  HydroGovernorParams hydro;
  SteamGovernorParams steam;
};

struct MachineDataset {
  std::vector<MachineRecord> machines;
  std::map<std::string, GovernorSet> governors;
  std::map<std::string, ExciterParams> exciters;
  std::string secondary_machine;
  double secondary_time_constant = 120.0;

  const MachineRecord& find(const std::string& id) const {
    for (const auto& m : machines)
      if (m.params.id == id) return m;
    throw StructuralError("unknown machine " + id);
  }
};

namespace detail {

template <class Params>
void assign_named(Params& p, const std::map<std::string, double Params::*>& fields, const std::string& key,
                  double value, const std::string& where) {
  auto it = fields.find(key);
  if (it == fields.end()) throw ScenarioError(where, "unknown parameter '" + key + "'");
  p.*(it->second) = value;
}

}  // namespace detail

/// [machines] id bus h rating_mva xd xq xd1 xq1 xd2 xq2 td01 tq01 td02 tq02 ra d governor exciter
/// followed by "[governor <name>]" sets whose name is hydro or steam (or
/// whose first row is "kind hydro|steam"), "[exciter <name>]" sets and an
/// optional [secondary] block.
inline MachineDataset parse_machines(std::istream& in, const std::string& source = "machines") {
  using HP = HydroGovernorParams;
  using SP = SteamGovernorParams;
  using EP = ExciterParams;
  static const std::map<std::string, double HP::*> hydro_fields{
      {"droop", &HP::droop}, {"servo_time", &HP::servo_time}, {"gate_min", &HP::gate_min}, {"gate_max", &HP::gate_max}};
  static const std::map<std::string, double SP::*> steam_fields{
      {"droop", &SP::droop},           {"relay_time", &SP::relay_time},     {"servo_time", &SP::servo_time},
      {"chest_time", &SP::chest_time}, {"reheat_time", &SP::reheat_time},   {"crossover_time", &SP::crossover_time},
      {"f_hp", &SP::f_hp},             {"f_ip", &SP::f_ip},                 {"f_lp", &SP::f_lp},
      {"valve_min", &SP::valve_min},   {"valve_max", &SP::valve_max}};
  static const std::map<std::string, double EP::*> exciter_fields{
      {"tr", &EP::tr},         {"ka", &EP::ka},         {"ta", &EP::ta},           {"ke", &EP::ke},
      {"te", &EP::te},         {"kf", &EP::kf},         {"tf", &EP::tf},           {"vr_max", &EP::vr_max},
      {"vr_min", &EP::vr_min}, {"efd_max", &EP::efd_max}, {"efd_min", &EP::efd_min}, {"e1", &EP::e1},
      {"se1", &EP::se1},       {"e2", &EP::e2},         {"se2", &EP::se2}};

  MachineDataset ds;
  for (const auto& row : read_table_rows(in, source)) {
    const std::string where = source + ":" + std::to_string(row.line);
    const auto& f = row.fields;
    const auto space = row.section.find(' ');
    const std::string head = row.section.substr(0, space);
    const std::string name = space == std::string::npos ? std::string{} : row.section.substr(space + 1);
    if (head == "machines") {
      if (f.size() != 18) throw ScenarioError(where, "[machines] rows need 18 columns");
      MachineRecord r;
      auto& p = r.params;
      p.id = f[0];
      p.bus = detail::to_int(f[1], where);
      double* numeric[] = {&p.h,  &p.rating_mva, &p.xd,   &p.xq,   &p.xd1,  &p.xq1, &p.xd2,
                           &p.xq2, &p.td01,      &p.tq01, &p.td02, &p.tq02, &p.ra,  &p.d};
      for (std::size_t k = 0; k < 14; ++k) *numeric[k] = detail::to_double(f[k + 2], where);
      r.governor = f[16];
      r.exciter = f[17];
      for (const auto& m : ds.machines)
        if (m.params.id == p.id) throw ScenarioError(where, "duplicate machine id " + p.id);
      ds.machines.push_back(std::move(r));
    } else if (head == "governor") {
      if (name.empty()) throw ScenarioError(where, "governor set needs a name");
      if (f.size() != 2) throw ScenarioError(where, "governor rows are 'key value'");
      auto& set = ds.governors[name];
      if (set.kind.empty() && (name == "hydro" || name == "steam")) set.kind = name;
      if (f[0] == "kind") {
        if (f[1] != "hydro" && f[1] != "steam") throw ScenarioError(where, "governor kind must be hydro or steam");
        set.kind = f[1];
        continue;
      }
      const double v = detail::to_double(f[1], where);
      if (set.kind == "hydro")
        detail::assign_named(set.hydro, hydro_fields, f[0], v, where);
      else if (set.kind == "steam")
        detail::assign_named(set.steam, steam_fields, f[0], v, where);
      else
        throw ScenarioError(where, "governor set '" + name + "' has no kind");
    } else if (head == "exciter") {
      if (name.empty()) throw ScenarioError(where, "exciter set needs a name");
      if (f.size() != 2) throw ScenarioError(where, "exciter rows are 'key value'");
      detail::assign_named(ds.exciters[name], exciter_fields, f[0], detail::to_double(f[1], where), where);
    } else if (head == "secondary") {
      if (f.size() != 2) throw ScenarioError(where, "secondary rows are 'key value'");
      if (f[0] == "machine")
        ds.secondary_machine = f[1];
      else if (f[0] == "time_constant")
        ds.secondary_time_constant = detail::to_double(f[1], where);
      else
        throw ScenarioError(where, "unknown secondary parameter '" + f[0] + "'");
    } else {
      throw ScenarioError(where, "unknown section [" + row.section + "]");
    }
  }
  for (const auto& m : ds.machines) {
    if (!ds.governors.count(m.governor))
      throw ScenarioError(source, "machine " + m.params.id + " references unknown governor set " + m.governor);
    if (!ds.exciters.count(m.exciter))
      throw ScenarioError(source, "machine " + m.params.id + " references unknown exciter set " + m.exciter);
    m.params.validate();
  }
  return ds;
}

inline MachineDataset load_machines(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_machines(in, path);
}

// ---------------------------------------------------------------------------
// Battery

struct BatteryDataset {
  BatteryTable table;
  StackConfig stack;
};

/// [battery] soc_lo soc_hi e rs r1 c1 r2 c2 r3 c3 (percent brackets, five rows);
/// [stack] key value.
inline BatteryDataset parse_battery(std::istream& in, const std::string& source = "battery") {
  BatteryDataset ds;
  int rows = 0;
  for (const auto& row : read_table_rows(in, source)) {
    const std::string where = source + ":" + std::to_string(row.line);
    const auto& f = row.fields;
    if (row.section == "battery") {
      if (f.size() != 10) throw ScenarioError(where, "[battery] rows need 10 columns");
      if (rows >= 5) throw ScenarioError(where, "battery table has more than five brackets");
      const double lo = detail::to_double(f[0], where);
      const double hi = detail::to_double(f[1], where);
      if (lo != 20.0 * rows || hi != 20.0 * (rows + 1))
        throw ScenarioError(where, "battery brackets must be 0-20, 20-40, 40-60, 60-80, 80-100 in order");
      auto& r = ds.table.rows[static_cast<std::size_t>(rows++)];
      r.e = detail::to_double(f[2], where);
      r.rs = detail::to_double(f[3], where);
      for (std::size_t k = 0; k < 3; ++k) {
        r.r[k] = detail::to_double(f[4 + 2 * k], where);
        r.c[k] = detail::to_double(f[5 + 2 * k], where);
      }
    } else if (row.section == "stack") {
      if (f.size() != 2) throw ScenarioError(where, "stack rows are 'key value'");
      const double v = detail::to_double(f[1], where);
      if (f[0] == "series") ds.stack.series = static_cast<int>(v);
      else if (f[0] == "parallel") ds.stack.parallel = static_cast<int>(v);
      else if (f[0] == "capacity_ah") ds.stack.capacity_ah = v;
      else if (f[0] == "sample_time") ds.stack.sample_time = v;
      else if (f[0] == "rating_mva") ds.stack.rating_mva = v;
      else if (f[0] == "efficiency") ds.stack.efficiency = v;
      else throw ScenarioError(where, "unknown stack parameter '" + f[0] + "'");
    } else {
      throw ScenarioError(where, "unknown section [" + row.section + "]");
    }
  }
  if (rows != 5) throw ScenarioError(source, "battery table needs exactly five brackets");
  ds.table.validate();
  return ds;
}

inline BatteryDataset load_battery(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_battery(in, path);
}

}  // namespace rms39
