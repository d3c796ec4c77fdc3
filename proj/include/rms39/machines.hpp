#pragma once

// Synchronous machine electromechanical model with turbine-governors, DC1A
// excitation and secondary frequency control.
//
// All machine quantities are per-unit on the 100 MVA system base, so the
// swing equation and stator currents plug into the network directly. The
// rating is only used for governor droop, gate/valve limits and for referring
// H to the machine base when tuning hydro governors.

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <variant>

#include "rms39/common.hpp"

namespace rms39 {

struct MachineParams {
  std::string id;
  int bus = 0;
  double h = 0.0;           ///< inertia constant on 100 MVA base, s
  double rating_mva = 100.0;
  double d = 0.0;           ///< damping, pu power per pu speed
  double xd = 0.0, xq = 0.0;
  double xd1 = 0.0, xq1 = 0.0;  ///< transient
  double xd2 = 0.0, xq2 = 0.0;  ///< subtransient
  double td01 = 0.0, tq01 = 0.0, td02 = 0.0, tq02 = 0.0;
  double ra = 0.0;

  /// Inertia referred to the machine's own rating.
  double h_machine_base() const { return h * kBaseMva / rating_mva; }
  /// Multiplier from pu-of-rating to pu-of-system-base.
  double rating_pu() const { return rating_mva / kBaseMva; }

  void validate() const {
    auto fail = [&](const std::string& what) { throw DomainError("machine " + id + ": " + what); };
    if (!(h > 0.0)) fail("inertia must be positive");
    if (!(rating_mva > 0.0)) fail("rating must be positive");
    if (!(xd >= xd1 && xd1 >= xd2 && xd2 > 0.0)) fail("requires Xd >= Xd' >= Xd'' > 0");
    if (!(xq >= xq1 && xq1 >= xq2 && xq2 > 0.0)) fail("requires Xq >= Xq' >= Xq'' > 0");
    if (!(td01 > 0.0 && tq01 > 0.0 && td02 > 0.0 && tq02 > 0.0)) fail("time constants must be positive");
    if (ra < 0.0) fail("negative stator resistance");
  }
};

/// Rotor angle, speed deviation and the four emf states of the two-axis
/// model with subtransient circuits.
struct MachineState {
  double delta = 0.0;      ///< rad, relative to the synchronous frame
  double speed_dev = 0.0;  ///< pu
  double eq1 = 0.0;        ///< E'q
  double ed1 = 0.0;        ///< E'd
  double eq2 = 0.0;        ///< E''q
  double ed2 = 0.0;        ///< E''d

  template <class F>
  void for_each(F&& f) {
    f(delta); f(speed_dev); f(eq1); f(ed1); f(eq2); f(ed2);
  }
};

struct DqPair {
  double d = 0.0;
  double q = 0.0;
};

/// Network phasor to the rotor frame: (vd + j vq) = V e^{-j(delta - pi/2)}.
inline DqPair to_rotor_frame(Complex v, double delta) {
  const Complex r = v * std::polar(1.0, -(delta - 0.5 * kPi));
  return {r.real(), r.imag()};
}

inline Complex to_network_frame(DqPair x, double delta) {
  return Complex(x.d, x.q) * std::polar(1.0, delta - 0.5 * kPi);
}

/// Stator currents (generator convention) from the subtransient emfs.
inline DqPair stator_currents(const MachineState& s, const MachineParams& p, DqPair v) {
  const double a = s.ed2 - v.d;
  const double b = s.eq2 - v.q;
  const double det = p.ra * p.ra + p.xd2 * p.xq2;
  return {(p.ra * a + p.xq2 * b) / det, (p.ra * b - p.xd2 * a) / det};
}

/// Air-gap power, pu on system base.
inline double electrical_power(const MachineState& s, const MachineParams& p, DqPair i) {
  return s.ed2 * i.d + s.eq2 * i.q + (p.xq2 - p.xd2) * i.d * i.q;
}

inline Complex machine_current(const MachineState& s, const MachineParams& p, Complex v_net) {
  return to_network_frame(stator_currents(s, p, to_rotor_frame(v_net, s.delta)), s.delta);
}

/// Norton admittance used to fold the machine into the network matrix.
inline Complex norton_admittance(const MachineParams& p) { return 1.0 / Complex(p.ra, p.xd2); }

inline MachineState machine_derivatives(const MachineState& s, const MachineParams& p, DqPair v, double efd,
                                        double pm, double omega0 = kOmega0) {
  const DqPair i = stator_currents(s, p, v);
  const double pe = electrical_power(s, p, i);
  MachineState d;
  d.delta = omega0 * s.speed_dev;
  d.speed_dev = (pm - pe - p.d * s.speed_dev) / (2.0 * p.h);
  d.eq1 = (efd - s.eq1 - (p.xd - p.xd1) * i.d) / p.td01;
  d.ed1 = (-s.ed1 + (p.xq - p.xq1) * i.q) / p.tq01;
  d.eq2 = (s.eq1 - s.eq2 - (p.xd1 - p.xd2) * i.d) / p.td02;
  d.ed2 = (s.ed1 - s.ed2 + (p.xq1 - p.xq2) * i.q) / p.tq02;
  return d;
}

struct MachineOperatingPoint {
  MachineState state;
  double efd = 0.0;
  double pm = 0.0;  ///< system base
};

/// Back-solves the steady state from terminal voltage and delivered power (pu).
inline MachineOperatingPoint machine_equilibrium(const MachineParams& p, Complex v, Complex s) {
  const Complex i = std::conj(s / v);
  const Complex eq_axis = v + Complex(p.ra, p.xq) * i;
  MachineOperatingPoint op;
  auto& st = op.state;
  st.delta = std::arg(eq_axis);
  st.speed_dev = 0.0;
  const DqPair vdq = to_rotor_frame(v, st.delta);
  const DqPair idq = to_rotor_frame(i, st.delta);
  st.eq2 = vdq.q + p.ra * idq.q + p.xd2 * idq.d;
  st.ed2 = vdq.d + p.ra * idq.d - p.xq2 * idq.q;
  st.eq1 = st.eq2 + (p.xd1 - p.xd2) * idq.d;
  st.ed1 = (p.xq - p.xq1) * idq.q;
  op.efd = st.eq1 + (p.xd - p.xd1) * idq.d;
  op.pm = electrical_power(st, p, idq);
  return op;
}

// ---------------------------------------------------------------------------
// Hydro turbine-governor

struct HydroTuning {
  double tm = 0.0;  ///< mechanical starting time, s
  double tw = 0.0;  ///< water starting time, s
  double kp = 0.0;
  double ki = 0.0;
};

/// Tuning from the machine-base inertia: TM = 2H, TM:Tw = 3:1,
/// 1/KP = 0.625 Tw / H, KP/KI = 3.33 Tw.
inline HydroTuning hydro_governor_tuning(double h) {
  if (!(h > 0.0)) throw DomainError("hydro governor tuning needs H > 0");
  HydroTuning t;
  t.tm = 2.0 * h;
  t.tw = t.tm / 3.0;
  t.kp = h / (0.625 * t.tw);
  t.ki = t.kp / (3.33 * t.tw);
  return t;
}

struct HydroGovernorParams {
  double droop = 0.05;
  double servo_time = 0.2;
  double gate_min = 0.0;
  double gate_max = 1.0;
  HydroTuning tuning;
};

struct HydroGovernorState {
  double integrator = 0.0;  ///< PI integral part, pu gate
  double gate = 0.0;        ///< pu of rating
  double water = 0.0;       ///< lagged flow state of the water column

  template <class F>
  void for_each(F&& f) {
    f(integrator); f(gate); f(water);
  }
};

struct HydroGovernor {
  HydroGovernorParams params;
  HydroGovernorState state;
  double gate_ref = 0.0;  ///< load reference, pu gate
};

// ---------------------------------------------------------------------------
// Tandem-compound single-reheat steam turbine with proportional governor

struct SteamGovernorParams {
  double droop = 0.05;
  double relay_time = 0.1;      ///< speed delay
  double servo_time = 0.3;
  double chest_time = 0.3;
  double reheat_time = 7.0;
  double crossover_time = 0.5;
  double f_hp = 0.3, f_ip = 0.4, f_lp = 0.3;
  double valve_min = 0.0;
  double valve_max = 1.0;
};

struct SteamGovernorState {
  double relay = 0.0;
  double valve = 0.0;
  double chest = 0.0;
  double reheat = 0.0;
  double crossover = 0.0;

  template <class F>
  void for_each(F&& f) {
    f(relay); f(valve); f(chest); f(reheat); f(crossover);
  }
};

struct SteamGovernor {
  SteamGovernorParams params;
  SteamGovernorState state;
  double power_ref = 0.0;  ///< pu of rating
};

using Governor = std::variant<HydroGovernor, SteamGovernor>;

namespace detail {

/// Non-windup limit: a state sitting on a bound does not move further out.
inline double limited_rate(double x, double dx, double lo, double hi) {
  if ((x >= hi && dx > 0.0) || (x <= lo && dx < 0.0)) return 0.0;
  return dx;
}

}  // namespace detail

inline double droop_of(const Governor& g) {
  return std::visit([](const auto& x) { return x.params.droop; }, g);
}

/// Mechanical power, pu of rating.
inline double mechanical_power(const HydroGovernor& g) {
  // Water column (1 - Tw s)/(1 + Tw s / 2) written as -2 g + 3 w.
  return clamp(3.0 * g.state.water - 2.0 * g.state.gate, 0.0, g.params.gate_max);
}

inline double mechanical_power(const SteamGovernor& g) {
  const auto& p = g.params;
  const auto& s = g.state;
  return p.f_hp * s.chest + p.f_ip * s.reheat + p.f_lp * s.crossover;
}

inline double mechanical_power(const Governor& g) {
  return std::visit([](const auto& x) { return mechanical_power(x); }, g);
}

/// `offset` is the secondary-control frequency offset in pu; it shifts the
/// speed reference, so it enters through the droop gain.
inline HydroGovernorState governor_derivatives(const HydroGovernor& g, double speed_dev, double offset) {
  const auto& p = g.params;
  const auto& s = g.state;
  const double error = offset - speed_dev + p.droop * (g.gate_ref - s.gate);
  const double command = p.tuning.kp * error + s.integrator;
  HydroGovernorState d;
  d.integrator = detail::limited_rate(s.integrator, p.tuning.ki * error, p.gate_min, p.gate_max);
  d.gate = detail::limited_rate(s.gate, (clamp(command, p.gate_min, p.gate_max) - s.gate) / p.servo_time,
                                p.gate_min, p.gate_max);
  d.water = (s.gate - s.water) / (0.5 * p.tuning.tw);
  return d;
}

inline SteamGovernorState governor_derivatives(const SteamGovernor& g, double speed_dev, double offset) {
  const auto& p = g.params;
  const auto& s = g.state;
  SteamGovernorState d;
  d.relay = (g.power_ref + (offset - speed_dev) / p.droop - s.relay) / p.relay_time;
  d.valve = detail::limited_rate(s.valve, (clamp(s.relay, p.valve_min, p.valve_max) - s.valve) / p.servo_time,
                                 p.valve_min, p.valve_max);
  d.chest = (s.valve - s.chest) / p.chest_time;
  d.reheat = (s.chest - s.reheat) / p.reheat_time;
  d.crossover = (s.reheat - s.crossover) / p.crossover_time;
  return d;
}

inline void enforce_limits(HydroGovernor& g) {
  g.state.gate = clamp(g.state.gate, g.params.gate_min, g.params.gate_max);
  g.state.integrator = clamp(g.state.integrator, g.params.gate_min, g.params.gate_max);
}

inline void enforce_limits(SteamGovernor& g) {
  g.state.valve = clamp(g.state.valve, g.params.valve_min, g.params.valve_max);
}

inline void initialize_governor(HydroGovernor& g, double pm_rating) {
  if (pm_rating < g.params.gate_min || pm_rating > g.params.gate_max)
    throw DomainError("hydro dispatch outside gate limits");
  g.state = {pm_rating, pm_rating, pm_rating};
  g.gate_ref = pm_rating;
}

inline void initialize_governor(SteamGovernor& g, double pm_rating) {
  if (pm_rating < g.params.valve_min || pm_rating > g.params.valve_max)
    throw DomainError("steam dispatch outside valve limits");
  g.state = {pm_rating, pm_rating, pm_rating, pm_rating, pm_rating};
  g.power_ref = pm_rating;
}

inline void initialize_governor(Governor& g, double pm_rating) {
  std::visit([&](auto& x) { initialize_governor(x, pm_rating); }, g);
}

namespace detail {

template <class State>
State axpy(const State& x, double a, const State& dx) {
  State out = x;
  State d = dx;
  std::array<double*, 8> po{};
  std::array<double*, 8> pd{};
  std::size_t n = 0, m = 0;
  out.for_each([&](double& v) { po[n++] = &v; });
  d.for_each([&](double& v) { pd[m++] = &v; });
  for (std::size_t k = 0; k < n; ++k) *po[k] += a * *pd[k];
  return out;
}

/// Classical RK4 over one step for a device whose derivative depends only
/// on its own state and held inputs.
template <class Device, class Deriv>
void rk4_device(Device& dev, double dt, Deriv&& deriv) {
  const auto x0 = dev.state;
  const auto k1 = deriv(dev);
  dev.state = axpy(x0, 0.5 * dt, k1);
  const auto k2 = deriv(dev);
  dev.state = axpy(x0, 0.5 * dt, k2);
  const auto k3 = deriv(dev);
  dev.state = axpy(x0, dt, k3);
  const auto k4 = deriv(dev);
  auto x = axpy(x0, dt / 6.0, k1);
  x = axpy(x, dt / 3.0, k2);
  x = axpy(x, dt / 3.0, k3);
  dev.state = axpy(x, dt / 6.0, k4);
}

}  // namespace detail

/// Advances a governor by `dt` with speed deviation and secondary signal held.
/// Returns the updated governor and its mechanical power in pu of rating.
inline std::pair<Governor, double> governor_step(Governor gov, double speed_dev, double secondary_signal, double dt) {
  if (!(dt > 0.0)) throw DomainError("governor_step needs dt > 0");
  std::visit(
      [&](auto& g) {
        detail::rk4_device(g, dt, [&](const auto& x) { return governor_derivatives(x, speed_dev, secondary_signal); });
        enforce_limits(g);
      },
      gov);
  const double pm = mechanical_power(gov);
  return {std::move(gov), pm};
}

// ---------------------------------------------------------------------------
// IEEE DC1A exciter

struct ExciterParams {
  double tr = 0.01;
  double ka = 46.0, ta = 0.06;
  double ke = 1.0, te = 0.46;
  double kf = 0.1, tf = 1.0;
  double vr_max = 7.0, vr_min = -7.0;
  double efd_max = 6.0, efd_min = -3.0;
  double e1 = 3.1, se1 = 0.33, e2 = 2.3, se2 = 0.1;
};

struct ExciterState {
  double vc = 0.0;  ///< transducer output
  double vr = 0.0;  ///< regulator output
  double efd = 0.0;
  double xf = 0.0;  ///< rate-feedback filter state

  template <class F>
  void for_each(F&& f) {
    f(vc); f(vr); f(efd); f(xf);
  }
};

struct ExciterDC1A {
  ExciterParams params;
  ExciterState state;
};

/// Exponential saturation SE(Efd) = A exp(B Efd) through the two data points.
inline double exciter_saturation(const ExciterParams& p, double efd) {
  if (p.se1 <= 0.0 || p.se2 <= 0.0 || p.e1 == p.e2) return 0.0;
  const double b = std::log(p.se1 / p.se2) / (p.e1 - p.e2);
  const double a = p.se2 / std::exp(b * p.e2);
  return a * std::exp(b * std::abs(efd));
}

inline ExciterState exciter_derivatives(const ExciterDC1A& exc, double vterm, double vref) {
  const auto& p = exc.params;
  const auto& s = exc.state;
  ExciterState d;
  const double vc = p.tr > 0.0 ? s.vc : vterm;
  d.vc = p.tr > 0.0 ? (vterm - s.vc) / p.tr : 0.0;
  const double vf = p.kf / p.tf * s.efd - s.xf;
  d.vr = detail::limited_rate(s.vr, (p.ka * (vref - vc - vf) - s.vr) / p.ta, p.vr_min, p.vr_max);
  const double vr = clamp(s.vr, p.vr_min, p.vr_max);
  d.efd = detail::limited_rate(s.efd, (vr - (p.ke + exciter_saturation(p, s.efd)) * s.efd) / p.te, p.efd_min,
                               p.efd_max);
  d.xf = (p.kf / p.tf * s.efd - s.xf) / p.tf;
  return d;
}

inline void enforce_limits(ExciterDC1A& e) {
  e.state.vr = clamp(e.state.vr, e.params.vr_min, e.params.vr_max);
  e.state.efd = clamp(e.state.efd, e.params.efd_min, e.params.efd_max);
}

/// Steady state for a required field voltage. Returns the voltage reference.
inline double initialize_exciter(ExciterDC1A& e, double efd, double vterm) {
  const auto& p = e.params;
  if (efd > p.efd_max || efd < p.efd_min) throw DomainError("required field voltage outside exciter limits");
  const double vr = (p.ke + exciter_saturation(p, efd)) * efd;
  if (vr > p.vr_max || vr < p.vr_min) throw DomainError("required regulator output outside limits");
  e.state = {vterm, vr, efd, p.kf / p.tf * efd};
  return vterm + vr / p.ka;
}

inline std::pair<ExciterDC1A, double> exciter_step(ExciterDC1A exc, double vterm, double vref, double dt) {
  if (!(dt > 0.0)) throw DomainError("exciter_step needs dt > 0");
  detail::rk4_device(exc, dt, [&](const ExciterDC1A& x) { return exciter_derivatives(x, vterm, vref); });
  enforce_limits(exc);
  return {exc, exc.state.efd};
}

// ---------------------------------------------------------------------------
// Secondary frequency control

struct SecondaryController {
  double time_constant = 120.0;
  double integrator = 0.0;  ///< integral of frequency deviation, pu*s
  bool participating = false;

  /// Restorative speed-reference offset, pu frequency.
  double offset() const { return participating ? -integrator / time_constant : 0.0; }
};

inline std::pair<SecondaryController, double> secondary_control_step(SecondaryController ctrl, double freq_dev,
                                                                      double dt) {
  if (ctrl.participating) ctrl.integrator += freq_dev * dt;
  return {ctrl, ctrl.offset()};
}

}  // namespace rms39
