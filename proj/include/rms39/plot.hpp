#pragma once

// Static SVG line plots of trace columns, one stacked panel per column, with
// one line per trace.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rms39/common.hpp"
#include "rms39/trace_io.hpp"

namespace rms39 {

struct PlotOptions {
  double width = 900.0;
  double panel_height = 220.0;
  double t_min = -INFINITY;
  double t_max = INFINITY;
  std::string title;
};

namespace detail {

inline std::string fmt(double v, const char* spec = "%.6g") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// Roughly five round tick values spanning [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  if (!(span > 0.0)) return {lo};
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) ticks.push_back(v);
  return ticks;
}

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return colors[k % 6];
}

}  // namespace detail

inline std::string render_svg(const std::vector<const Trace*>& traces, const std::vector<std::string>& labels,
                              const std::vector<std::string>& columns, const PlotOptions& opt = {}) {
  const double left = 80, right = 20, top = opt.title.empty() ? 20 : 45, gap = 40;
  const double pw = opt.width - left - right;
  const double ph = opt.panel_height - gap;
  const double height = top + opt.panel_height * static_cast<double>(columns.size()) + 30;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    s << "<text x=\"" << opt.width / 2 << "\" y=\"25\" text-anchor=\"middle\" font-size=\"15\">" << opt.title
      << "</text>\n";

  for (std::size_t c = 0; c < columns.size(); ++c) {
    const double y0 = top + opt.panel_height * static_cast<double>(c);
    double tmin = INFINITY, tmax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
    for (const Trace* tr : traces) {
      if (!tr->has_column(columns[c])) continue;
      const auto tc = tr->column("t_s");
      const auto vc = tr->column(columns[c]);
      for (const auto& r : tr->rows) {
        if (r[tc] < opt.t_min || r[tc] > opt.t_max || !std::isfinite(r[vc])) continue;
        tmin = std::min(tmin, r[tc]);
        tmax = std::max(tmax, r[tc]);
        vmin = std::min(vmin, r[vc]);
        vmax = std::max(vmax, r[vc]);
      }
    }
    if (!std::isfinite(tmin)) continue;
    if (vmax - vmin < 1e-9) {
      vmin -= 0.5e-3;
      vmax += 0.5e-3;
    }
    const double pad = 0.05 * (vmax - vmin);
    vmin -= pad;
    vmax += pad;
    if (tmax <= tmin) tmax = tmin + 1.0;
    auto X = [&](double t) { return left + (t - tmin) / (tmax - tmin) * pw; };
    auto Y = [&](double v) { return y0 + ph - (v - vmin) / (vmax - vmin) * ph; };

    s << "<rect x=\"" << left << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double v : detail::nice_ticks(vmin, vmax)) {
      s << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << Y(v) << "\" y2=\"" << Y(v)
        << "\" stroke=\"#ddd\"/>\n";
      s << "<text x=\"" << left - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << detail::fmt(v)
        << "</text>\n";
    }
    for (double t : detail::nice_ticks(tmin, tmax))
      s << "<text x=\"" << X(t) << "\" y=\"" << y0 + ph + 15 << "\" text-anchor=\"middle\">" << detail::fmt(t)
        << "</text>\n";
    s << "<text x=\"" << left + 6 << "\" y=\"" << y0 + 15 << "\">" << columns[c] << "</text>\n";

    for (std::size_t k = 0; k < traces.size(); ++k) {
      const Trace* tr = traces[k];
      if (!tr->has_column(columns[c])) continue;
      const auto tc = tr->column("t_s");
      const auto vc = tr->column(columns[c]);
      s << "<polyline fill=\"none\" stroke-width=\"1.4\" stroke=\"" << detail::palette(k) << "\" points=\"";
      // Keep at most ~4 points per horizontal pixel.
      const std::size_t stride = std::max<std::size_t>(1, tr->rows.size() / static_cast<std::size_t>(4 * pw));
      for (std::size_t r = 0; r < tr->rows.size(); r += stride) {
        const auto& row = tr->rows[r];
        if (row[tc] < tmin || row[tc] > tmax || !std::isfinite(row[vc])) continue;
        s << detail::fmt(X(row[tc]), "%.2f") << ',' << detail::fmt(Y(row[vc]), "%.2f") << ' ';
      }
      s << "\"/>\n";
    }
  }
  const double ly = height - 12;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const double lx = left + 160.0 * static_cast<double>(k);
    s << "<line x1=\"" << lx << "\" x2=\"" << lx + 24 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
      << "\" stroke-width=\"2\" stroke=\"" << detail::palette(k) << "\"/>\n";
    s << "<text x=\"" << lx + 30 << "\" y=\"" << ly << "\">" << labels[k] << "</text>\n";
  }
  s << "<text x=\"" << left + pw << "\" y=\"" << ly << "\" text-anchor=\"end\">t [s]</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream out(path);
  if (!out) throw ScenarioError(path, "cannot write plot");
  out << svg;
}

}  // namespace rms39
