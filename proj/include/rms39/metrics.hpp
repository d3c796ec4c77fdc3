#pragma once

// Post-contingency frequency metrics, converter summaries, inertia totals
// and metric comparison.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "rms39/common.hpp"
#include "rms39/dataset.hpp"
#include "rms39/scenario.hpp"
#include "rms39/trace_io.hpp"

namespace rms39 {

struct MetricOptions {
  double band = 0.0005;         ///< pu, settling band around the final value
  double rocof_window = 0.5;    ///< s, least-squares window
  double settle_window = 1.0;   ///< s, averaging window for the final value
};

struct FrequencyMetrics {
  double trip_time = 0.0;
  double initial = 1.0;
  double nadir = 1.0;
  double nadir_time = 0.0;   ///< s after the trip
  double max_rocof = 0.0;    ///< pu/s, magnitude
  double rocof_time = 0.0;   ///< s after the trip, window start
  double settled_value = 1.0;
  double duration = 0.0;     ///< s after the trip until the permanent stay in the band
  double band_entry = 0.0;   ///< s after the trip of the first in-band sample at or after the nadir
  bool settled = true;       ///< false when the final window itself leaves the band
  double band = 0.0005;
  double rocof_window = 0.5;
};

/// Least-squares slope of y over x for samples [b, e).
inline double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y, std::size_t b,
                                  std::size_t e) {
  const double n = static_cast<double>(e - b);
  if (n < 2.0) return 0.0;
  double sx = 0, sy = 0;
  for (std::size_t k = b; k < e; ++k) {
    sx += x[k];
    sy += y[k];
  }
  const double mx = sx / n, my = sy / n;
  double sxy = 0, sxx = 0;
  for (std::size_t k = b; k < e; ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

inline FrequencyMetrics compute_metrics(const std::vector<double>& t, const std::vector<double>& f, double trip_time,
                                        const MetricOptions& opts = {}) {
  if (t.size() != f.size() || t.empty()) throw DomainError("metrics need matching, nonempty time and value series");
  FrequencyMetrics m;
  m.band = opts.band;
  m.rocof_window = opts.rocof_window;
  if (!std::isfinite(trip_time)) trip_time = t.front();
  m.trip_time = trip_time;

  std::size_t start = 0;
  while (start < t.size() && t[start] < trip_time - 1e-9) ++start;
  if (start == t.size()) throw DomainError("trace ends before the trip time");
  m.initial = start > 0 ? f[start - 1] : f[start];

  std::size_t knadir = start;
  for (std::size_t k = start; k < t.size(); ++k)
    if (f[k] < f[knadir]) knadir = k;
  m.nadir = std::min(f[knadir], m.initial);
  m.nadir_time = f[knadir] < m.initial ? t[knadir] - trip_time : 0.0;

  // ROCOF: windows that start at or after the trip.
  std::size_t e = start;
  for (std::size_t b = start; b < t.size(); ++b) {
    while (e < t.size() && t[e] <= t[b] + opts.rocof_window + 1e-9) ++e;
    if (t[e - 1] - t[b] < opts.rocof_window - 1e-9) break;
    const double s = least_squares_slope(t, f, b, e);
    if (std::abs(s) > m.max_rocof) {
      m.max_rocof = std::abs(s);
      m.rocof_time = t[b] - trip_time;
    }
  }

  const double t_end = t.back();
  double sum = 0.0;
  std::size_t n = 0, first_final = t.size();
  for (std::size_t k = t.size(); k-- > start;) {
    if (t[k] < t_end - opts.settle_window - 1e-9) break;
    sum += f[k];
    ++n;
    first_final = k;
  }
  m.settled_value = sum / static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t k = first_final; k < t.size(); ++k)
    if (std::abs(f[k] - m.settled_value) > opts.band) m.settled = false;

  std::size_t last_out = t.size();
  m.band_entry = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = start; k < t.size(); ++k) {
    const bool out = std::abs(f[k] - m.settled_value) > opts.band;
    if (out) last_out = k;
    else if (k >= knadir && std::isnan(m.band_entry)) m.band_entry = t[k] - trip_time;
  }
  if (last_out == t.size()) m.band_entry = 0.0;
  if (!m.settled) {
    m.duration = std::numeric_limits<double>::quiet_NaN();
  } else if (last_out == t.size()) {
    m.duration = 0.0;
  } else {
    m.duration = t[std::min(last_out + 1, t.size() - 1)] - trip_time;
  }
  return m;
}

inline FrequencyMetrics compute_metrics(const Trace& tr, double trip_time, const MetricOptions& opts = {},
                                        const std::string& column = "f_coi_pu") {
  return compute_metrics(tr.times(), tr.series(column), trip_time, opts);
}

/// Converter-side extremes after the trip (zero without a converter).
struct ConverterSummary {
  double peak_p = 0.0;          ///< pu of converter rating, signed value at max |P|
  double peak_q = 0.0;          ///< signed value at max |Q|
  double peak_v_deviation = 0.0;  ///< signed PCC voltage change at its largest magnitude
  double min_soc = 0.0;
  double final_p = 0.0;
};

inline ConverterSummary summarize_converter(const Trace& tr, double trip_time) {
  ConverterSummary s;
  if (!tr.has_column("p_conv_pu")) return s;
  const auto t = tr.times();
  const auto p = tr.series("p_conv_pu");
  const auto q = tr.series("q_conv_pu");
  const auto v = tr.series("v_pcc_pu");
  const auto soc = tr.series("soc");
  if (!std::isfinite(trip_time)) trip_time = t.front();
  std::size_t start = 0;
  while (start < t.size() && t[start] < trip_time - 1e-9) ++start;
  if (start >= t.size()) return s;
  const double v0 = start > 0 ? v[start - 1] : v[start];
  s.min_soc = soc[start];
  for (std::size_t k = start; k < t.size(); ++k) {
    if (std::abs(p[k]) > std::abs(s.peak_p)) s.peak_p = p[k];
    if (std::abs(q[k]) > std::abs(s.peak_q)) s.peak_q = q[k];
    if (std::abs(v[k] - v0) > std::abs(s.peak_v_deviation)) s.peak_v_deviation = v[k] - v0;
    s.min_soc = std::min(s.min_soc, soc[k]);
  }
  s.final_p = p.back();
  return s;
}

/// Sum of the machine inertia constants (100 MVA base) present in a
/// configuration; wind plants and the battery contribute nothing.
inline double aggregate_inertia(const MachineDataset& mds, const Scenario& sc) {
  std::set<std::string> replaced;
  for (const auto& w : sc.wind) replaced.insert(w.replaces);
  double h = 0.0;
  for (const auto& m : mds.machines)
    if (!replaced.count(m.params.id)) h += m.params.h;
  return h;
}

inline double aggregate_inertia(const std::vector<MachineParams>& machines) {
  double h = 0.0;
  for (const auto& m : machines) h += m.h;
  return h;
}

// ---------------------------------------------------------------------------
// Report form

inline nlohmann::json to_json(const FrequencyMetrics& m) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"trip_time_s", num(m.trip_time)},
          {"initial_pu", num(m.initial)},
          {"nadir_pu", num(m.nadir)},
          {"nadir_time_s", num(m.nadir_time)},
          {"max_rocof_pu_per_s", num(m.max_rocof)},
          {"rocof_time_s", num(m.rocof_time)},
          {"rocof_window_s", num(m.rocof_window)},
          {"settled_pu", num(m.settled_value)},
          {"band_pu", num(m.band)},
          {"settled", m.settled},
          {"duration_s", num(m.duration)},
          {"band_entry_s", num(m.band_entry)}};
}

inline nlohmann::json to_json(const ConverterSummary& s) {
  return {{"peak_p_conv_pu", s.peak_p},
          {"peak_q_conv_pu", s.peak_q},
          {"peak_v_pcc_dev_pu", s.peak_v_deviation},
          {"min_soc", s.min_soc},
          {"final_p_conv_pu", s.final_p}};
}

/// Key-wise a - b over the numeric entries both reports share, so swapping
/// the arguments negates every delta.
inline nlohmann::json compare_metrics(const nlohmann::json& a, const nlohmann::json& b) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [key, va] : a.items()) {
    if (!b.contains(key)) continue;
    const auto& vb = b.at(key);
    if (va.is_object() && vb.is_object()) {
      out[key] = compare_metrics(va, vb);
    } else if (va.is_number() && vb.is_number()) {
      out[key] = va.get<double>() - vb.get<double>();
    }
  }
  return out;
}

}  // namespace rms39
