#pragma once

// Aggregated wind plant seen from the grid as a current-controlled power
// injection: first-order tracking of available power, unity power factor,
// converter current limit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rms39/common.hpp"

namespace rms39 {

struct WindPlantParams {
  std::string id;
  int bus = 0;
  double turbine_mva = 5.0;     ///< single detailed turbine
  double turbine_count = 1.0;   ///< aggregation factor
  double time_constant = 0.05;  ///< s
  double current_limit = 1.1;   ///< pu of rating
  double min_voltage = 0.1;     ///< below this the current limit governs

  double rating_mva() const { return turbine_mva * turbine_count; }
  double rating_pu() const { return rating_mva() / kBaseMva; }
};

struct WindPlant {
  WindPlantParams params;
  double power = 0.0;  ///< filtered output, pu of rating
  bool curtailed = false;
  bool in_service = true;
};

/// Builds plant parameters for a given rating from a reference turbine size.
inline WindPlantParams aggregate_wind_plant(std::string id, int bus, double rating_mva, double turbine_mva = 5.0) {
  if (!(rating_mva > 0.0) || !(turbine_mva > 0.0)) throw DomainError("wind plant ratings must be positive");
  WindPlantParams p;
  p.id = std::move(id);
  p.bus = bus;
  p.turbine_mva = turbine_mva;
  p.turbine_count = rating_mva / turbine_mva;
  return p;
}

inline double wind_power_derivative(const WindPlant& w, double available) {
  return (clamp(available, 0.0, 1.0) - w.power) / w.params.time_constant;
}

/// Grid current (pu on 100 MVA) for the present output: I = conj(P / V),
/// limited in magnitude. Zero reactive power by construction.
inline Complex wind_current(const WindPlant& w, Complex v, bool* limited = nullptr) {
  if (!w.in_service) return {};
  const double rp = w.params.rating_pu();
  const double imax = w.params.current_limit * rp;
  const double vm = std::abs(v);
  if (limited) *limited = false;
  if (vm <= 0.0) return {};
  const double p = std::max(w.power, 0.0) * rp;
  double i = p / vm;
  if (i > imax || vm < w.params.min_voltage) {
    i = std::min(i, imax);
    if (limited) *limited = true;
  }
  return std::polar(i, std::arg(v));
}

/// Advances the tracking lag by `dt` with the profile value held, then returns
/// the injected current at the supplied PCC voltage.
inline std::pair<WindPlant, Complex> wind_injection_step(WindPlant plant, double profile_value, Complex v_pcc,
                                                         double dt) {
  if (!(dt > 0.0)) throw DomainError("wind_injection_step needs dt > 0");
  const double target = clamp(profile_value, 0.0, 1.0);
  plant.power = target + (plant.power - target) * std::exp(-dt / plant.params.time_constant);
  bool limited = false;
  const Complex i = wind_current(plant, v_pcc, &limited);
  plant.curtailed = limited;
  return {plant, i};
}

/// Available power at 1 s resolution, pu of rating; linear between samples.
struct WindProfile {
  double step = 1.0;
  std::vector<double> values;

  bool empty() const { return values.empty(); }

  double at(double t) const {
    if (values.empty()) return 0.0;
    const double x = std::max(0.0, t / step);
    const auto k = static_cast<std::size_t>(std::floor(x));
    if (k + 1 >= values.size()) return values.back();
    const double a = x - static_cast<double>(k);
    return values[k] + a * (values[k + 1] - values[k]);
  }
};

/// Minute series to second series: linear interpolation plus seeded
/// zero-mean Gaussian perturbation, clamped to [0, 1].
inline std::vector<double> resample_profile(const std::vector<double>& minute_series, double sigma = 0.005,
                                            std::uint64_t seed = 1) {
  if (minute_series.empty()) throw DomainError("resample_profile needs a nonempty series");
  for (double v : minute_series)
    if (v < 0.0 || v > 1.0) throw DomainError("wind profile values must lie in [0, 1]");
  const std::size_t n = (minute_series.size() - 1) * 60 + 1;
  std::vector<double> out(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t m = k / 60;
    const double a = static_cast<double>(k % 60) / 60.0;
    double v = minute_series[m];
    if (m + 1 < minute_series.size()) v += a * (minute_series[m + 1] - minute_series[m]);
    if (sigma > 0.0) v += noise(rng);
    out[k] = clamp(v, 0.0, 1.0);
  }
  return out;
}

}  // namespace rms39
