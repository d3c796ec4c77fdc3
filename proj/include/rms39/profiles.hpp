#pragma once

// Seeded synthetic demand and wind profiles, and their CSV files.
//
// Load file  load_<bus>.csv:  t_ms,P0_MW,Q0_MVar   (20 ms rows)
// Wind file  wind_<id>.csv:   t_s,p_pu             (1 s rows)

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rms39/common.hpp"
#include "rms39/loads.hpp"
#include "rms39/wind.hpp"

namespace rms39 {

/// Rated demand modulated by a band-limited random walk: increments are
/// low-pass filtered (1 s) and the multiplier stays within 1 +/- amplitude.
/// The first sample is the rated value.
inline LoadProfile synthetic_load_profile(double p0_mw, double q0_mvar, double duration, std::uint64_t seed,
                                          double amplitude = 0.01) {
  if (!(duration >= 0.0)) throw DomainError("profile duration must be nonnegative");
  LoadProfile prof;
  const auto n = static_cast<std::size_t>(std::ceil(duration / prof.step)) + 1;
  prof.p_mw.resize(n);
  prof.q_mvar.resize(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.5 * amplitude);
  const double a = std::exp(-prof.step / 1.0);
  double drift = 0.0, m = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      drift = a * drift + (1.0 - a) * noise(rng);
      m = clamp(m + drift, 1.0 - amplitude, 1.0 + amplitude);
    }
    prof.p_mw[k] = std::max(0.0, p0_mw * m);
    prof.q_mvar[k] = q0_mvar * m;
  }
  return prof;
}

/// Minute-resolution random level around `level`, resampled to 1 s. The
/// series starts exactly at `level`.
inline WindProfile synthetic_wind_profile(double level, double duration, std::uint64_t seed, double sigma = 0.005) {
  const auto minutes = static_cast<std::size_t>(std::ceil(duration / 60.0)) + 2;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> walk(0.0, 4.0 * sigma);
  std::vector<double> series(minutes);
  series[0] = clamp(level, 0.0, 1.0);
  for (std::size_t k = 1; k < minutes; ++k) series[k] = clamp(series[k - 1] + walk(rng), 0.0, 1.0);
  WindProfile w;
  w.values = resample_profile(series, sigma, seed ^ 0x9e3779b97f4a7c15ULL);
  w.values[0] = series[0];
  return w;
}

inline void write_load_profile(const std::string& path, const LoadProfile& prof) {
  std::ofstream out(path);
  if (!out) throw ScenarioError(path, "cannot write profile");
  out << "t_ms,P0_MW,Q0_MVar\n";
  out.precision(10);
  for (std::size_t k = 0; k < prof.p_mw.size(); ++k)
    out << static_cast<long long>(std::llround(k * prof.step * 1000.0)) << ',' << prof.p_mw[k] << ','
        << prof.q_mvar[k] << '\n';
}

inline void write_wind_profile(const std::string& path, const WindProfile& prof) {
  std::ofstream out(path);
  if (!out) throw ScenarioError(path, "cannot write profile");
  out << "t_s,p_pu\n";
  out.precision(10);
  for (std::size_t k = 0; k < prof.values.size(); ++k) out << k * prof.step << ',' << prof.values[k] << '\n';
}

namespace detail {

inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, "cannot open profile");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  int n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      row.push_back(std::strtod(cell.c_str(), &end));
      if (end == cell.c_str()) throw ScenarioError(path + ":" + std::to_string(n), "non-numeric cell");
    }
    if (row.size() != columns)
      throw ScenarioError(path + ":" + std::to_string(n), "expected " + std::to_string(columns) + " columns");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline LoadProfile read_load_profile(const std::string& path) {
  LoadProfile prof;
  const auto rows = detail::read_numeric_csv(path, 3);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (std::abs(rows[k][0] - 20.0 * static_cast<double>(k)) > 1e-6)
      throw ScenarioError(path, "timestamps must start at 0 and advance by 20 ms");
    prof.p_mw.push_back(rows[k][1]);
    prof.q_mvar.push_back(rows[k][2]);
  }
  prof.validate();
  return prof;
}

inline WindProfile read_wind_profile(const std::string& path) {
  WindProfile prof;
  const auto rows = detail::read_numeric_csv(path, 2);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (std::abs(rows[k][0] - static_cast<double>(k)) > 1e-9)
      throw ScenarioError(path, "timestamps must start at 0 and advance by 1 s");
    if (rows[k][1] < 0.0 || rows[k][1] > 1.0) throw ScenarioError(path, "wind values must lie in [0, 1]");
    prof.values.push_back(rows[k][1]);
  }
  return prof;
}

inline std::string load_profile_name(int bus) { return "load_" + std::to_string(bus) + ".csv"; }
inline std::string wind_profile_name(const std::string& id) { return "wind_" + id + ".csv"; }

}  // namespace rms39
