#pragma once

// Averaged voltage-source converter controls: grid-following with PLL and
// frequency/voltage droop support, and PLL-free grid-forming with a
// power-angle droop. Converter quantities are pu of converter rating unless
// named otherwise.

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "rms39/common.hpp"

namespace rms39 {

// ---------------------------------------------------------------------------
// Phase-locked loop

struct PllParams {
  double kp = 60.0;
  double ki = 1400.0;
  double frequency_filter = 0.01;  ///< s, output frequency low-pass
  bool cycle_mean = true;          ///< one-cycle moving mean on vq
};

struct PllState {
  double angle = 0.0;       ///< rad, in the synchronous frame
  double integrator = 0.0;  ///< rad/s
  double frequency = 1.0;   ///< filtered estimate, pu
  std::vector<double> window;  ///< recent vq samples
  std::size_t head = 0;
  double q_mean = 0.0;
};

struct PllOutput {
  double frequency = 1.0;  ///< pu
  double angle = 0.0;      ///< rad
};

/// Locks the PLL onto a phasor so the first step starts at its fixed point.
inline PllState pll_lock(Complex v) {
  PllState s;
  s.angle = std::arg(v);
  return s;
}

inline std::pair<PllState, PllOutput> pll_step(PllState s, Complex v, double dt, const PllParams& p = {}) {
  if (!(dt > 0.0)) throw DomainError("pll_step needs dt > 0");
  const double vm = std::abs(v);
  const double vq = vm > 0.0 ? std::sin(std::arg(v) - s.angle) : 0.0;
  if (p.cycle_mean) {
    const auto n = static_cast<std::size_t>(
        std::max(1.0, std::round(1.0 / (std::max(s.frequency, 0.5) * kNominalHz * dt))));
    if (s.window.size() != n) {
      s.window.assign(n, s.window.empty() ? vq : s.q_mean);
      s.head = 0;
    }
    s.window[s.head] = vq;
    s.head = (s.head + 1) % n;
    double sum = 0.0;
    for (double x : s.window) sum += x;
    s.q_mean = sum / static_cast<double>(n);
  } else {
    s.q_mean = vq;
  }
  s.integrator += p.ki * s.q_mean * dt;
  const double dw = p.kp * s.q_mean + s.integrator;
  s.angle = wrap_angle(s.angle + dw * dt);
  const double raw = 1.0 + dw / kOmega0;
  s.frequency = raw + (s.frequency - raw) * std::exp(-dt / p.frequency_filter);
  const PllOutput out{s.frequency, s.angle};
  return {std::move(s), out};
}

// ---------------------------------------------------------------------------
// Grid-following control in grid-supporting mode

struct FollowingParams {
  double kpf = 20.0;
  double f_deadband = 0.001;
  double kqv = 10.0;
  double v_deadband = 0.005;
  double p_ref = 0.0;
  double q_ref = 0.0;
  double v_ref = 1.0;
  double current_limit = 1.0;
  double current_time = 0.005;  ///< s, averaged inner current loop
  double min_voltage = 0.1;
  PllParams pll;
};

struct FollowingCtrl {
  FollowingParams params;
  PllState pll;
  double id = 0.0;  ///< current along the PLL d axis, pu of rating
  double iq = 0.0;
  bool limited = false;
  bool low_voltage = false;
};

struct PowerPair {
  double p = 0.0;
  double q = 0.0;
};

inline double offset_deadband(double x, double band) {
  const double m = std::abs(x) - band;
  return m > 0.0 ? std::copysign(m, x) : 0.0;
}

/// Deadband-offset droop. Commands are clamped to the converter rating.
inline PowerPair following_droop(double df, double dv, const FollowingParams& p) {
  return {clamp(-p.kpf * offset_deadband(df, p.f_deadband), -1.0, 1.0),
          clamp(-p.kqv * offset_deadband(dv, p.v_deadband), -1.0, 1.0)};
}

struct CurrentRef {
  double d = 0.0;
  double q = 0.0;
  bool limited = false;
};

/// dq current references for a P/Q command at voltage magnitude `v`, limited
/// to `imax` with active current first. Q = -v iq in this frame.
inline CurrentRef following_current_reference(double p, double q, double v, double imax) {
  CurrentRef r{p / v, -q / v, false};
  if (std::abs(r.d) > imax) {
    r.d = std::copysign(imax, r.d);
    r.limited = true;
  }
  const double qmax = std::sqrt(std::max(imax * imax - r.d * r.d, 0.0));
  if (std::abs(r.q) > qmax) {
    r.q = std::copysign(qmax, r.q);
    r.limited = true;
  }
  return r;
}

/// Advances the current loop toward the droop-adjusted references and
/// returns the injected current phasor, pu of converter rating.
inline std::pair<FollowingCtrl, Complex> following_step(FollowingCtrl c, const PllOutput& pll, Complex v_pcc,
                                                        double dt) {
  if (!(dt > 0.0)) throw DomainError("following_step needs dt > 0");
  const auto& p = c.params;
  double vm = std::abs(v_pcc);
  c.low_voltage = vm < p.min_voltage;
  vm = std::max(vm, p.min_voltage);
  const PowerPair droop = following_droop(pll.frequency - 1.0, std::abs(v_pcc) - p.v_ref, p);
  const CurrentRef ref = following_current_reference(p.p_ref + droop.p, p.q_ref + droop.q, vm, p.current_limit);
  c.limited = ref.limited || c.low_voltage;
  const double a = std::exp(-dt / p.current_time);
  c.id = ref.d + (c.id - ref.d) * a;
  c.iq = ref.q + (c.iq - ref.q) * a;
  return {c, Complex(c.id, c.iq) * std::polar(1.0, pll.angle)};
}

// ---------------------------------------------------------------------------
// Grid-forming control

struct FormingParams {
  double mp = 0.05;
  double w_lp = 31.4;   ///< rad/s
  double t1 = 0.0333;   ///< lead, s
  double t2 = 0.0111;   ///< lag, s
  double kv = 5.0;      ///< 1/s, magnitude integrator gain
  double p_ref = 0.0;
  double v_set = 1.0;
  double rc = 0.005;    ///< coupling transformer, pu of rating
  double xc = 0.15;
  double current_limit = 1.2;
};

struct FormingState {
  double leadlag = 0.0;  ///< lag state of the lead-lag
  double p_filtered = 0.0;
  double theta = 0.0;    ///< rad, in the synchronous frame
  double vm = 1.0;

  template <class F>
  void for_each(F&& f) {
    f(leadlag); f(p_filtered); f(theta); f(vm);
  }
};

struct FormingCtrl {
  FormingParams params;
  FormingState state;
  bool limited = false;
};

/// Output of (1 + s T1) / (1 + s T2) for input `u` and lag state `x`.
inline double leadlag_output(double u, double x, double t1, double t2) {
  return t1 / t2 * u + (1.0 - t1 / t2) * x;
}

inline double forming_speed_deviation(const FormingCtrl& c) {
  return c.params.mp * (c.params.p_ref - c.state.p_filtered);
}

inline FormingState forming_derivatives(const FormingCtrl& c, double measured_p, double measured_v,
                                        double omega0 = kOmega0) {
  const auto& p = c.params;
  const auto& s = c.state;
  FormingState d;
  d.leadlag = (measured_p - s.leadlag) / p.t2;
  d.p_filtered = p.w_lp * (leadlag_output(measured_p, s.leadlag, p.t1, p.t2) - s.p_filtered);
  d.theta = omega0 * forming_speed_deviation(c);
  d.vm = p.kv * (p.v_set - measured_v);
  return d;
}

/// Steady state for a measured power and PCC voltage phasor.
inline FormingCtrl forming_lock(FormingParams params, double p, Complex v_pcc, Complex e_internal) {
  FormingCtrl c;
  c.params = params;
  c.params.p_ref = p;
  c.params.v_set = std::abs(v_pcc);
  c.state = {p, p, std::arg(e_internal), std::abs(e_internal)};
  return c;
}

inline std::pair<FormingCtrl, Complex> forming_step(FormingCtrl c, double measured_p, double measured_v, double dt) {
  if (!(dt > 0.0)) throw DomainError("forming_step needs dt > 0");
  const FormingState x0 = c.state;
  auto eval = [&](const FormingState& x) {
    FormingCtrl t = c;
    t.state = x;
    return forming_derivatives(t, measured_p, measured_v);
  };
  auto add = [](FormingState x, double a, const FormingState& d) {
    x.leadlag += a * d.leadlag;
    x.p_filtered += a * d.p_filtered;
    x.theta += a * d.theta;
    x.vm += a * d.vm;
    return x;
  };
  const auto k1 = eval(x0);
  const auto k2 = eval(add(x0, 0.5 * dt, k1));
  const auto k3 = eval(add(x0, 0.5 * dt, k2));
  const auto k4 = eval(add(x0, dt, k3));
  auto x = add(x0, dt / 6.0, k1);
  x = add(x, dt / 3.0, k2);
  x = add(x, dt / 3.0, k3);
  x = add(x, dt / 6.0, k4);
  x.theta = wrap_angle(x.theta);
  c.state = x;
  return {c, std::polar(x.vm, x.theta)};
}

/// Reactive power across the coupling impedance for PCC magnitude `vg`,
/// converter magnitude `vm` and angle difference `delta`:
///   Q = Vg / (Rc^2 + Xc^2) [Rc Vm sin(delta) + Xc (Vg - Vm cos(delta))]
inline double forming_reactive_power(double vg, double vm, double delta, double rc, double xc) {
  const double z2 = rc * rc + xc * xc;
  if (!(z2 > 0.0)) throw DomainError("coupling impedance must be nonzero");
  return vg / z2 * (rc * vm * std::sin(delta) + xc * (vg - vm * std::cos(delta)));
}

/// Converter current into the grid (pu of rating) with a hard magnitude limit.
inline Complex forming_current(const FormingCtrl& c, Complex v_pcc, bool* limited = nullptr) {
  const Complex z(c.params.rc, c.params.xc);
  Complex i = (std::polar(c.state.vm, c.state.theta) - v_pcc) / z;
  const double m = std::abs(i);
  const bool lim = m > c.params.current_limit;
  if (lim) i *= c.params.current_limit / m;
  if (limited) *limited = lim;
  return i;
}

}  // namespace rms39
