#pragma once

// Three-time-constant battery equivalent circuit with SOC-bracketed
// parameters and coulomb counting. Positive current charges the battery.

#include <array>
#include <cmath>
#include <utility>

#include "rms39/common.hpp"

namespace rms39 {

/// One SOC bracket of the stack parameter table. Volts, ohms, farads.
struct BatteryRow {
  double e = 0.0;
  double rs = 0.0;
  std::array<double, 3> r{};
  std::array<double, 3> c{};

  double time_constant(std::size_t k) const { return r[k] * c[k]; }
};

/// Five rows for SOC brackets [0,20) [20,40) [40,60) [60,80) [80,100].
struct BatteryTable {
  std::array<BatteryRow, 5> rows{};

  void validate() const {
    for (const auto& row : rows) {
      if (!(row.rs > 0.0)) throw DomainError("battery series resistance must be positive");
      for (std::size_t k = 0; k < 3; ++k)
        if (!(row.r[k] > 0.0) || !(row.c[k] > 0.0)) throw DomainError("battery RC values must be positive");
    }
  }
};

/// Stack parameters for the HV-connected battery (two stacks in series).
inline BatteryTable default_battery_table() {
  BatteryTable t;
  t.rows[0] = {1184.4, 0.052, {0.190, 0.08, 5.0e-3}, {4465.0, 454.5, 272.1}};
  t.rows[1] = {1250.0, 0.042, {0.150, 0.018, 9.8e-5}, {4904.5, 1069.5, 394.5}};
  t.rows[2] = {1305.8, 0.030, {0.180, 0.018, 4.8e-4}, {6998.0, 1241.0, 1479.8}};
  t.rows[3] = {1360.4, 0.028, {0.158, 0.018, 13.6e-4}, {6000.0, 1245.0, 2250.0}};
  t.rows[4] = {1466.4, 0.026, {0.398, 0.020, 12.0e-4}, {5617.0, 1252.5, 3088.7}};
  return t;
}

inline std::size_t battery_bracket(double soc) {
  if (!(soc >= 0.0 && soc <= 1.0)) throw DomainError("SOC outside [0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(soc * 5.0 + 1e-12));
  return k > 4 ? 4 : k;
}

inline const BatteryRow& battery_params_lookup(const BatteryTable& table, double soc) {
  return table.rows[battery_bracket(soc)];
}

/// Series connection of identical stacks: voltages and resistances scale
/// with `series`, capacitances divide by it, so every RkCk is unchanged.
inline BatteryRow stack_parameter_scaling(const BatteryRow& cell, double series = 2.0) {
  BatteryRow out = cell;
  out.e = cell.e * series;
  out.rs = cell.rs * series;
  for (std::size_t k = 0; k < 3; ++k) {
    out.r[k] = cell.r[k] * series;
    out.c[k] = cell.c[k] / series;
  }
  return out;
}

inline BatteryTable stack_parameter_scaling(const BatteryTable& cell, double series = 2.0) {
  BatteryTable out;
  for (std::size_t i = 0; i < cell.rows.size(); ++i) out.rows[i] = stack_parameter_scaling(cell.rows[i], series);
  return out;
}

struct StackConfig {
  int series = 2;
  int parallel = 156;
  double capacity_ah = 117000.0;
  double sample_time = 0.001;  ///< s
  double rating_mva = 225.0;
  double efficiency = 0.975;   ///< one-way, converter plus DC link
};

struct BatteryState {
  std::array<double, 3> vc{};  ///< RC branch voltages, V
  double soc = 0.5;
  double v_terminal = 0.0;     ///< V, at the last evaluated current
};

/// y = vC1 + vC2 + vC3 + Rs (i / n_par) + E
inline double terminal_voltage(const BatteryState& s, const BatteryRow& row, double current, int parallel = 156) {
  return s.vc[0] + s.vc[1] + s.vc[2] + row.rs * current / parallel + row.e;
}

/// Exact zero-order-hold discretization of dvCk/dt = -vCk/(RkCk) + (i/n)/Ck.
/// Returns the new state and the terminal voltage at the start of the step.
inline std::pair<BatteryState, double> battery_step(BatteryState s, double current, double dt, const BatteryRow& row,
                                                    int parallel = 156) {
  if (!(dt > 0.0)) throw DomainError("battery_step needs dt > 0");
  const double y = terminal_voltage(s, row, current, parallel);
  const double u = current / parallel;
  for (std::size_t k = 0; k < 3; ++k) {
    const double a = std::exp(-dt / row.time_constant(k));
    s.vc[k] = a * s.vc[k] + (1.0 - a) * row.r[k] * u;
  }
  s.v_terminal = y;
  return {s, y};
}

inline std::pair<BatteryState, double> battery_step(BatteryState s, double current, double dt,
                                                    const BatteryTable& table, int parallel = 156) {
  return battery_step(s, current, dt, battery_params_lookup(table, s.soc), parallel);
}

struct SocUpdate {
  double soc = 0.0;
  bool clamped = false;
};

/// SOC' = SOC + (Ts / 3600) i / Cnom, Cnom in Ah.
inline SocUpdate soc_update(double soc, double current, double ts, double capacity_ah) {
  if (!(ts > 0.0)) throw DomainError("soc_update needs Ts > 0");
  const double next = soc + ts / 3600.0 * current / capacity_ah;
  if (next < 0.0) return {0.0, true};
  if (next > 1.0) return {1.0, true};
  return {next, false};
}

/// Current that delivers `power_w` into the battery terminals (positive
/// charges): solves P = y(i) i by Newton, falling back to bisection.
inline double dc_current_for_power(double power_w, const BatteryState& s, const BatteryRow& row,
                                   int parallel = 156) {
  const double v0 = s.vc[0] + s.vc[1] + s.vc[2] + row.e;
  const double r = row.rs / parallel;
  auto f = [&](double i) { return (v0 + r * i) * i - power_w; };
  auto df = [&](double i) { return v0 + 2.0 * r * i; };
  if (power_w == 0.0) return 0.0;
  // The physical root lies on the branch where the voltage stays near E.
  double i = power_w / v0;
  for (int it = 0; it < 50; ++it) {
    const double d = df(i);
    if (!(d > 0.0)) break;
    const double step = f(i) / d;
    i -= step;
    if (std::abs(step) <= 1e-12 * std::max(1.0, std::abs(i))) return i;
  }
  // Bracket on the increasing branch i > -v0 / (2 r).
  double lo = -v0 / (2.0 * r);
  double hi = std::abs(power_w) / v0 * 4.0 + 1.0;
  if (f(lo) > 0.0) throw DomainError("requested discharge power exceeds the battery maximum");
  while (f(hi) < 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// DC power drawn from the battery for an AC-side output `p_ac_w` (positive
/// means the converter delivers to the grid).
inline double battery_power_for_ac(double p_ac_w, double efficiency) {
  return p_ac_w >= 0.0 ? -p_ac_w / efficiency : -p_ac_w * efficiency;
}

}  // namespace rms39
