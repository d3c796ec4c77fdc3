#pragma once

// Simulation trace container and its CSV form.
//
//   # rms39 trace v1 trip_time=5 step=0.001 configuration=config2 controller=following
//   t_s,f_coi_pu,f_G2,...,v_1,...,v_39,p_conv_pu,q_conv_pu,v_pcc_pu,v_dc_V,i_dc_A,soc,balance_pu
//
// Frequencies and voltages are pu; converter P and Q are pu of converter
// rating (zero without a converter); balance_pu is the largest nodal power
// mismatch of the network solution, pu on 100 MVA.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rms39/common.hpp"

namespace rms39 {

struct Trace {
  std::map<std::string, std::string> header;  ///< key=value pairs of the first line
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t k = 0; k < columns.size(); ++k)
      if (columns[k] == name) return k;
    throw ScenarioError(name, "trace has no such column");
  }

  bool has_column(const std::string& name) const {
    for (const auto& c : columns)
      if (c == name) return true;
    return false;
  }

  std::vector<double> series(const std::string& name) const {
    const auto k = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }

  std::vector<double> times() const { return series("t_s"); }

  /// Trip time from the header, NaN when absent.
  double trip_time() const {
    auto it = header.find("trip_time");
    if (it == header.end() || it->second == "none") return std::nan("");
    return std::strtod(it->second.c_str(), nullptr);
  }

  /// Every `factor`-th row, first row kept.
  Trace decimated(std::size_t factor) const {
    Trace out{header, columns, {}};
    for (std::size_t k = 0; k < rows.size(); k += factor) out.rows.push_back(rows[k]);
    return out;
  }
};

inline void write_trace(std::ostream& out, const Trace& tr) {
  out << "# rms39 trace v1";
  for (const auto& [k, v] : tr.header) out << ' ' << k << '=' << v;
  out << '\n';
  for (std::size_t k = 0; k < tr.columns.size(); ++k) out << (k ? "," : "") << tr.columns[k];
  out << '\n';
  char buf[32];
  for (const auto& r : tr.rows) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.10g", r[k]);
      if (k) out << ',';
      out << buf;
    }
    out << '\n';
  }
}

inline void write_trace(const std::string& path, const Trace& tr) {
  std::ofstream out(path);
  if (!out) throw ScenarioError(path, "cannot write trace");
  write_trace(out, tr);
}

inline Trace read_trace(std::istream& in, const std::string& source = "trace") {
  Trace tr;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# rms39 trace v1", 0) != 0)
    throw ScenarioError(source, "missing '# rms39 trace v1' header");
  std::istringstream hs(line.substr(16));
  std::string kv;
  while (hs >> kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ScenarioError(source, "malformed header entry '" + kv + "'");
    tr.header[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  if (!std::getline(in, line)) throw ScenarioError(source, "missing column header");
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) tr.columns.push_back(c);
  }
  if (tr.columns.empty() || tr.columns.front() != "t_s") throw ScenarioError(source, "first column must be t_s");
  int n = 2;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(tr.columns.size());
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ScenarioError(source + ":" + std::to_string(n), "non-numeric cell");
      row.push_back(v);
    }
    if (row.size() != tr.columns.size())
      throw ScenarioError(source + ":" + std::to_string(n), "row has " + std::to_string(row.size()) +
                                                               " cells, header has " +
                                                               std::to_string(tr.columns.size()));
    tr.rows.push_back(std::move(row));
  }
  return tr;
}

inline Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, "cannot open trace");
  return read_trace(in, path);
}

}  // namespace rms39
