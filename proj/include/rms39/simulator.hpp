#pragma once

// Scenario assembly, equilibrium initialization and fixed-step simulation.
//
// Continuous states (machines, governors, exciters, secondary control, wind
// tracking lags, grid-forming control) are integrated together with an
// algebraic network solve at every stage. Loads, the grid-following
// converter and the battery are sampled on a fixed 1 ms clock and hold their
// outputs in between. Per step: events, discrete sample, trace, integration.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "rms39/common.hpp"
#include "rms39/converter.hpp"
#include "rms39/dataset.hpp"
#include "rms39/loads.hpp"
#include "rms39/machines.hpp"
#include "rms39/network.hpp"
#include "rms39/profiles.hpp"
#include "rms39/scenario.hpp"
#include "rms39/storage.hpp"
#include "rms39/trace_io.hpp"
#include "rms39/wind.hpp"

namespace rms39 {

inline constexpr double kSamplePeriod = 1e-3;

struct MachineUnit {
  MachineParams params;
  MachineState state;
  Governor governor;
  ExciterDC1A exciter;
  double vref = 0.0;
  std::size_t bus = 0;
  bool in_service = true;
};

struct LoadUnit {
  int bus_id = 0;
  std::size_t bus = 0;
  double p0 = 0.0, q0 = 0.0;  ///< pu, base demand at the initial operating point
  LoadParams params;
  LoadProfile profile;        ///< optional, scales the base demand
  FrequencyMeasurement freq;
  VoltageMeasurement volt;
  double last_angle = 0.0;
  double freq_filtered = 1.0;
  Complex demand;             ///< present consumption, pu
  Complex held;               ///< admittance drawing `demand` at the measured voltage
  Complex y;                  ///< Norton admittance
  bool in_service = true;
};

struct WindUnit {
  WindPlant plant;
  std::string replaces;
  std::size_t bus = 0;
  WindProfile profile;
  double level0 = 0.0;     ///< initial available power, pu of rating
  double available = 0.0;
  std::optional<double> override_level;
  Complex y;
};

struct BessUnit {
  ControllerKind kind = ControllerKind::Following;
  int bus_id = 17;
  std::size_t bus = 0;
  double rating_pu = 2.25;
  FollowingCtrl following;
  FormingCtrl forming;
  Complex gfl_current;  ///< pu of converter rating
  BatteryTable table;
  StackConfig stack;
  BatteryState battery;
  double i_dc = 0.0;
  double v_dc = 0.0;
  bool soc_clamped = false;
  bool in_service = true;
  Complex y;            ///< Norton admittance on 100 MVA (forming only)
};

struct EventRecord {
  double time = 0.0;
  std::string description;
  double lost_mw = 0.0;
  bool applied = false;
};

struct SimulationOptions {
  double network_tolerance = 1e-10;
  int network_max_iterations = 100;
  double init_derivative_tolerance = 1e-8;
  double load_angle_filter = 0.01;  ///< s, on the raw angle-derivative frequency
};

class System {
public:
  System(const Scenario& sc, Network net, MachineDataset mds, std::optional<BatteryDataset> battery,
         SimulationOptions opts = {})
      : scenario_(sc), opts_(opts) {
    initialize(std::move(net), std::move(mds), std::move(battery));
  }

  // Holds pointers into its own members.
  System(const System&) = delete;
  System& operator=(const System&) = delete;

  explicit System(const Scenario& sc, SimulationOptions opts = {})
      : System(sc, load_network(sc.network_file), load_machines(sc.machines_file),
               sc.configuration == Configuration::Config2Bess
                   ? std::optional<BatteryDataset>(load_battery(sc.battery_file))
                   : std::nullopt,
               opts) {}

  // -- inspection ----------------------------------------------------------

  const Scenario& scenario() const { return scenario_; }
  double time() const { return static_cast<double>(step_count_) * dt_; }
  std::int64_t step_count() const { return step_count_; }
  double step_size() const { return dt_; }
  const Network& network() const { return net_; }
  const PowerFlowSolution& power_flow() const { return pf_; }
  const Eigen::VectorXcd& voltages() const { return v_; }
  const std::vector<MachineUnit>& machines() const { return machines_; }
  const std::vector<LoadUnit>& loads() const { return loads_; }
  const std::vector<WindUnit>& wind() const { return wind_; }
  const std::optional<BessUnit>& bess() const { return bess_; }
  const SecondaryController& secondary() const { return secondary_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<EventRecord>& event_log() const { return event_log_; }
  double max_balance_residual() const { return max_balance_; }

  const MachineUnit& machine(const std::string& id) const {
    for (const auto& m : machines_)
      if (m.params.id == id) return m;
    throw StructuralError("no machine " + id + " in this configuration");
  }

  /// Sum of in-service machine inertia constants on the 100 MVA base.
  double total_inertia() const {
    double h = 0.0;
    for (const auto& m : machines_)
      if (m.in_service) h += m.params.h;
    return h;
  }

  /// Centre-of-inertia frequency, pu.
  double coi_frequency() const {
    double num = 0.0, den = 0.0;
    for (const auto& m : machines_) {
      if (!m.in_service) continue;
      num += m.params.h * m.state.speed_dev;
      den += m.params.h;
    }
    return den > 0.0 ? 1.0 + num / den : 1.0;
  }

  Complex machine_output(const MachineUnit& m) const {
    if (!m.in_service) return {};
    const Complex v = v_[static_cast<Eigen::Index>(m.bus)];
    return v * std::conj(machine_current(m.state, m.params, v));
  }

  Complex wind_output(const WindUnit& w) const {
    const Complex v = v_[static_cast<Eigen::Index>(w.bus)];
    return v * std::conj(wind_current(w.plant, v));
  }

  /// Converter current into the grid, pu of converter rating.
  Complex converter_current() const {
    if (!bess_ || !bess_->in_service) return {};
    if (bess_->kind == ControllerKind::Following) return bess_->gfl_current;
    return forming_current(bess_->forming, v_[static_cast<Eigen::Index>(bess_->bus)]);
  }

  /// Converter output S = V conj(I), pu of converter rating.
  Complex converter_power() const {
    if (!bess_) return {};
    return v_[static_cast<Eigen::Index>(bess_->bus)] * std::conj(converter_current());
  }

  /// Largest nodal mismatch between network power and device injections, pu.
  double balance_residual() const {
    const Eigen::VectorXcd s_net = v_.cwiseProduct((ybus_.y * v_).conjugate());
    Eigen::VectorXcd s_dev = Eigen::VectorXcd::Zero(v_.size());
    device_injections(s_dev);
    return (s_net - s_dev).cwiseAbs().maxCoeff();
  }

  /// Total generation minus load minus network losses, pu.
  double total_balance() const {
    Eigen::VectorXcd s_dev = Eigen::VectorXcd::Zero(v_.size());
    device_injections(s_dev);
    const double losses = v_.cwiseProduct((ybus_.y * v_).conjugate()).real().sum();
    return s_dev.real().sum() - losses;
  }

  /// Total generation in MW and MVar: machines, wind plants and the reactive
  /// output of the wind-bus shunt capacitors.
  Complex realized_generation() const {
    Complex s;
    for (const auto& m : machines_) s += machine_output(m);
    for (const auto& w : wind_) s += wind_output(w);
    for (const auto& ws : scenario_.wind)
      s += Complex(0.0, ws.shunt_mvar / kBaseMva * std::norm(v_[static_cast<Eigen::Index>(net_.index_of(ws.bus))]));
    return s * kBaseMva;
  }

  /// Largest |dx/dt| over all continuous states at the present point, and the
  /// device that owns it.
  std::pair<double, std::string> max_derivative() {
    std::vector<double> d;
    derivatives(d);
    double worst = 0.0;
    std::string who;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (std::abs(d[k]) > worst || !std::isfinite(d[k])) {
        worst = std::isfinite(d[k]) ? std::abs(d[k]) : INFINITY;
        who = owners_[k];
      }
    }
    return {worst, who};
  }

  // -- events ----------------------------------------------------------------

  /// Applies one event now. Returns false (with a warning) when the target is
  /// already out of service.
  bool apply_event(const Event& e) {
    EventRecord rec{time(), std::string(to_string(e.kind)) + " " + e.target, 0.0, false};
    bool applied = false;
    switch (e.kind) {
      case Event::Kind::TripGenerator: applied = trip_generator(e.target, rec); break;
      case Event::Kind::TripLoad: applied = trip_load(e.target, rec); break;
      case Event::Kind::SetReference: applied = set_reference(e.target, e.value); break;
    }
    rec.applied = applied;
    event_log_.push_back(rec);
    if (applied && e.kind != Event::Kind::SetReference) {
      rebuild_matrix();
      rebuild_state_index();
    }
    if (applied) solve_network();
    return applied;
  }

  // -- stepping ----------------------------------------------------------------

  /// Events due at the present time, then the discrete sample when on the 1 ms grid.
  void prepare_step() {
    const double t = time();
    while (next_event_ < events_.size() && events_[next_event_].time <= t + 0.5 * dt_ - 1e-12) {
      apply_event(events_[next_event_]);
      ++next_event_;
    }
    if (step_count_ % sample_every_ == 0) {
      sample_discrete(t);
      solve_network();
    }
    max_balance_ = std::max(max_balance_, balance_residual());
  }

  /// Integrates the continuous states across one step.
  void advance() {
    if (scenario_.integrator == Integrator::Trapezoidal)
      advance_heun();
    else
      advance_rk4();
    for (auto& m : machines_) std::visit([](auto& g) { enforce_limits(g); }, m.governor);
    if (bess_ && bess_->kind == ControllerKind::Forming)
      bess_->forming.state.theta = wrap_angle(bess_->forming.state.theta);
    ++step_count_;
  }

  void step() {
    prepare_step();
    advance();
  }

  std::vector<std::string> trace_columns() const {
    std::vector<std::string> c{"t_s", "f_coi_pu"};
    for (const auto& m : machines_) c.push_back("f_" + m.params.id);
    for (const auto& b : net_.buses) c.push_back("v_" + std::to_string(b.id));
    for (const char* s : {"p_conv_pu", "q_conv_pu", "v_pcc_pu", "v_dc_V", "i_dc_A", "soc", "balance_pu"})
      c.emplace_back(s);
    return c;
  }

  std::vector<double> trace_row() const {
    std::vector<double> r;
    r.reserve(machines_.size() + net_.buses.size() + 9);
    r.push_back(time());
    r.push_back(coi_frequency());
    for (const auto& m : machines_) r.push_back(1.0 + m.state.speed_dev);
    for (Eigen::Index i = 0; i < v_.size(); ++i) r.push_back(std::abs(v_[i]));
    const Complex s = converter_power();
    r.push_back(s.real());
    r.push_back(s.imag());
    r.push_back(bess_ ? std::abs(v_[static_cast<Eigen::Index>(bess_->bus)]) : 0.0);
    r.push_back(bess_ ? bess_->v_dc : 0.0);
    r.push_back(bess_ ? bess_->i_dc : 0.0);
    r.push_back(bess_ ? bess_->battery.soc : 0.0);
    r.push_back(balance_residual());
    return r;
  }

  Trace make_trace_header() const {
    Trace tr;
    const double trip = scenario_.trip_time();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", trip);
    tr.header["trip_time"] = std::isfinite(trip) ? buf : "none";
    std::snprintf(buf, sizeof buf, "%.10g", dt_);
    tr.header["step"] = buf;
    tr.header["configuration"] = to_string(scenario_.configuration);
    tr.header["controller"] = bess_ ? to_string(bess_->kind) : "none";
    tr.columns = trace_columns();
    return tr;
  }

  /// Runs to the scenario duration, recording every `decimation` steps.
  Trace run() {
    Trace tr = make_trace_header();
    const auto n_steps = static_cast<std::int64_t>(std::llround(scenario_.duration / dt_));
    while (true) {
      prepare_step();
      if (step_count_ % scenario_.decimation == 0) tr.rows.push_back(trace_row());
      if (step_count_ >= n_steps) break;
      advance();
    }
    return tr;
  }

private:
  // -- assembly ------------------------------------------------------------------

  void initialize(Network net, MachineDataset mds, std::optional<BatteryDataset> battery) {
    scenario_.validate();
    dt_ = scenario_.step;
    sample_every_ = std::max<std::int64_t>(1, std::llround(kSamplePeriod / dt_));
    net_ = std::move(net);
    for (auto& l : net_.loads) {
      l.p_mw *= scenario_.load_scale_p;
      l.q_mvar *= scenario_.load_scale_q;
    }

    std::set<std::string> replaced;
    for (const auto& w : scenario_.wind) replaced.insert(w.replaces);
    for (const auto& r : mds.machines) {
      if (replaced.count(r.params.id)) continue;
      MachineUnit m;
      m.params = r.params;
      m.bus = net_.index_of(r.params.bus);
      const auto& gs = mds.governors.at(r.governor);
      if (gs.kind == "hydro") {
        HydroGovernor g;
        g.params = gs.hydro;
        g.params.tuning = hydro_governor_tuning(m.params.h_machine_base());
        m.governor = g;
      } else {
        SteamGovernor g;
        g.params = gs.steam;
        m.governor = g;
      }
      m.exciter.params = mds.exciters.at(r.exciter);
      machines_.push_back(std::move(m));
    }

    // Bus roles for this configuration.
    for (auto& b : net_.buses) b.kind = BusKind::PQ;
    bool slack_found = false;
    for (const auto& m : machines_) {
      auto& b = net_.buses[m.bus];
      b.kind = m.params.id == scenario_.slack ? BusKind::Slack : BusKind::PV;
      slack_found = slack_found || m.params.id == scenario_.slack;
    }
    if (!slack_found) throw ScenarioError("slack", "machine " + scenario_.slack + " is not in service");
    for (const auto& w : scenario_.wind)
      if (w.shunt_mvar != 0.0) net_.shunts.push_back({w.bus, 0.0, w.shunt_mvar});
    ybus_ = build_admittance(net_);

    // Power flow targets from the dispatch.
    std::vector<std::pair<int, double>> gen;
    auto dispatch = [&](const std::string& id) {
      auto it = scenario_.dispatch_mw.find(id);
      if (it == scenario_.dispatch_mw.end()) throw ScenarioError("dispatch_mw." + id, "missing");
      return it->second;
    };
    for (const auto& m : machines_)
      if (m.params.id != scenario_.slack) gen.emplace_back(m.params.bus, dispatch(m.params.id));
    for (const auto& w : scenario_.wind) gen.emplace_back(w.bus, dispatch(w.id));
    pf_ = solve_power_flow(net_, gen, PowerFlowOptions{1e-11, 50});
    v_ = pf_.voltage;

    std::vector<Complex> bus_load(net_.size());
    for (const auto& l : net_.loads) bus_load[net_.index_of(l.bus)] += Complex(l.p_mw, l.q_mvar) / kBaseMva;

    for (auto& m : machines_) {
      const Complex v = v_[static_cast<Eigen::Index>(m.bus)];
      const Complex s = pf_.injection[m.bus] + bus_load[m.bus];
      const auto op = machine_equilibrium(m.params, v, s);
      m.state = op.state;
      try {
        m.vref = initialize_exciter(m.exciter, op.efd, std::abs(v));
        initialize_governor(m.governor, op.pm / m.params.rating_pu());
      } catch (const DomainError& e) {
        throw InitializationError(m.params.id, e.what());
      }
    }

    for (const auto& ws : scenario_.wind) {
      WindUnit w;
      w.plant.params = aggregate_wind_plant(ws.id, ws.bus, ws.rating_mva);
      w.plant.params.time_constant = ws.time_constant;
      w.plant.params.current_limit = ws.current_limit;
      w.replaces = ws.replaces;
      w.bus = net_.index_of(ws.bus);
      const Complex s = pf_.injection[w.bus] + bus_load[w.bus];
      w.level0 = s.real() / w.plant.params.rating_pu();
      if (w.level0 < 0.0 || w.level0 > 1.0) throw InitializationError(ws.id, "dispatch outside the plant rating");
      w.plant.power = w.level0;
      w.available = w.level0;
      const Complex v = v_[static_cast<Eigen::Index>(w.bus)];
      w.y = -std::conj(s) / std::norm(v);
      wind_.push_back(std::move(w));
    }

    for (const auto& l : net_.loads) {
      LoadUnit u;
      u.bus_id = l.bus;
      u.bus = net_.index_of(l.bus);
      u.p0 = l.p_mw / kBaseMva;
      u.q0 = l.q_mvar / kBaseMva;
      const Complex v = v_[static_cast<Eigen::Index>(u.bus)];
      u.params = scenario_.load_model;
      u.params.v0 = std::abs(v);
      u.params.f0 = 1.0;
      u.freq.reset(1.0);
      u.volt.reset(std::abs(v));
      u.last_angle = std::arg(v);
      u.demand = {u.p0, u.q0};
      u.y = std::conj(u.demand) / std::norm(v);
      u.held = u.y;
      loads_.push_back(std::move(u));
    }

    if (scenario_.bess) {
      if (!battery) throw ScenarioError("battery", "battery dataset required");
      const auto& bs = *scenario_.bess;
      BessUnit b;
      b.kind = scenario_.controller;
      b.bus_id = bs.bus;
      b.bus = net_.index_of(bs.bus);
      b.table = battery->table;
      b.stack = battery->stack;
      b.stack.rating_mva = bs.rating_mva;
      b.rating_pu = bs.rating_mva / kBaseMva;
      b.battery.soc = bs.initial_soc;
      const BatteryRow& row = battery_params_lookup(b.table, b.battery.soc);
      b.battery.v_terminal = row.e;
      b.v_dc = row.e;
      const Complex v = v_[static_cast<Eigen::Index>(b.bus)];
      b.following.params = bs.following;
      b.following.params.v_ref = std::abs(v);
      b.following.pll = pll_lock(v);
      b.forming = forming_lock(bs.forming, 0.0, v, v);
      b.forming.params.p_ref = bs.forming.p_ref;
      if (b.kind == ControllerKind::Forming) b.y = b.rating_pu / Complex(bs.forming.rc, bs.forming.xc);
      if (bs.forming.p_ref != 0.0 || bs.following.p_ref != 0.0 || bs.following.q_ref != 0.0)
        throw ScenarioError("bess", "initial converter references must be zero for an equilibrium start");
      bess_ = b;
    }

    secondary_.time_constant = mds.secondary_time_constant;
    secondary_index_ = machines_.size();
    for (std::size_t k = 0; k < machines_.size(); ++k)
      if (machines_[k].params.id == mds.secondary_machine) secondary_index_ = k;
    secondary_.participating = secondary_index_ < machines_.size();

    setup_profiles();
    events_ = scenario_.events;
    std::stable_sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.time < b.time; });
    for (const auto& e : events_) check_event_target(e);

    rebuild_matrix();
    rebuild_state_index();
    solve_network();
    const double drift = (v_ - pf_.voltage).cwiseAbs().maxCoeff();
    if (drift > 1e-8)
      throw InitializationError("network", "device injections do not reproduce the power flow (" +
                                               std::to_string(drift) + " pu)");
    const auto [worst, who] = max_derivative();
    if (!(worst < opts_.init_derivative_tolerance))
      throw InitializationError(who, "residual derivative " + std::to_string(worst) + " after initialization");
  }

  void setup_profiles() {
    const auto& ps = scenario_.profiles;
    std::uint64_t k = 0;
    for (auto& l : loads_) {
      ++k;
      if (ps.load == "synthetic") {
        l.profile = synthetic_load_profile(l.p0 * kBaseMva, l.q0 * kBaseMva, scenario_.duration + 1.0,
                                           scenario_.seed * 1000003ULL + k, ps.load_amplitude);
      } else if (ps.load != "constant") {
        l.profile = read_load_profile((std::filesystem::path(ps.load) / load_profile_name(l.bus_id)).string());
        if (l.profile.p_mw.front() <= 0.0) throw ScenarioError(ps.load, "load profile must start positive");
      }
    }
    for (auto& w : wind_) {
      ++k;
      if (ps.wind == "synthetic") {
        w.profile = synthetic_wind_profile(w.level0, scenario_.duration + 2.0, scenario_.seed * 7919ULL + k,
                                           ps.wind_sigma);
      } else if (ps.wind != "constant") {
        w.profile =
            read_wind_profile((std::filesystem::path(ps.wind) / wind_profile_name(w.plant.params.id)).string());
      }
    }
  }

  void check_event_target(const Event& e) const {
    switch (e.kind) {
      case Event::Kind::TripGenerator:
      case Event::Kind::SetReference: {
        if (e.target == "BESS" && bess_) return;
        for (const auto& m : machines_)
          if (m.params.id == e.target) return;
        for (const auto& w : wind_)
          if (w.plant.params.id == e.target) return;
        throw ScenarioError("events.target", "no device '" + e.target + "' in this configuration");
      }
      case Event::Kind::TripLoad:
        for (const auto& l : loads_)
          if (std::to_string(l.bus_id) == e.target) return;
        throw ScenarioError("events.target", "no load at bus '" + e.target + "'");
    }
  }

  void rebuild_matrix() {
    Eigen::MatrixXcd y = ybus_.y;
    for (const auto& m : machines_)
      if (m.in_service) y(static_cast<Eigen::Index>(m.bus), static_cast<Eigen::Index>(m.bus)) += norton_admittance(m.params);
    for (const auto& l : loads_)
      if (l.in_service) y(static_cast<Eigen::Index>(l.bus), static_cast<Eigen::Index>(l.bus)) += l.y;
    for (const auto& w : wind_)
      if (w.plant.in_service) y(static_cast<Eigen::Index>(w.bus), static_cast<Eigen::Index>(w.bus)) += w.y;
    if (bess_ && bess_->in_service)
      y(static_cast<Eigen::Index>(bess_->bus), static_cast<Eigen::Index>(bess_->bus)) += bess_->y;
    solver_ = NetworkSolver(std::move(y));
  }

  template <class F>
  void visit_states(F&& f) {
    for (auto& m : machines_) {
      if (!m.in_service) continue;
      m.state.for_each([&](double& v) { f(v, m.params.id); });
      std::visit([&](auto& g) { g.state.for_each([&](double& v) { f(v, m.params.id + " governor"); }); },
                 m.governor);
      m.exciter.state.for_each([&](double& v) { f(v, m.params.id + " exciter"); });
    }
    if (secondary_active()) f(secondary_.integrator, std::string("secondary control"));
    for (auto& w : wind_)
      if (w.plant.in_service) f(w.plant.power, w.plant.params.id);
    if (bess_ && bess_->in_service && bess_->kind == ControllerKind::Forming)
      bess_->forming.state.for_each([&](double& v) { f(v, std::string("BESS forming control")); });
  }

  void rebuild_state_index() {
    ptrs_.clear();
    owners_.clear();
    visit_states([&](double& v, const std::string& who) {
      ptrs_.push_back(&v);
      owners_.push_back(who);
    });
  }

  bool secondary_active() const {
    return secondary_.participating && machines_[secondary_index_].in_service;
  }

  // -- network -------------------------------------------------------------------

  // The network sees each load as the admittance that draws its demand at
  // the measured (windowed) voltage, refreshed every 1 ms sample. Deviations
  // of the instantaneous voltage from the measurement act as an impedance.
  static Complex held_admittance(Complex demand, double v_measured, double collapse) {
    const double v = std::max(v_measured, collapse);
    return std::conj(demand) / (v * v);
  }

  /// Adds every device's injected power at its bus (generator convention).
  void device_injections(Eigen::VectorXcd& s) const {
    for (const auto& m : machines_)
      if (m.in_service) s[static_cast<Eigen::Index>(m.bus)] += machine_output(m);
    for (const auto& l : loads_) {
      if (!l.in_service) continue;
      const Complex v = v_[static_cast<Eigen::Index>(l.bus)];
      s[static_cast<Eigen::Index>(l.bus)] -= std::conj(l.held) * std::norm(v);
    }
    for (const auto& w : wind_)
      if (w.plant.in_service) s[static_cast<Eigen::Index>(w.bus)] += wind_output(w);
    if (bess_ && bess_->in_service)
      s[static_cast<Eigen::Index>(bess_->bus)] +=
          v_[static_cast<Eigen::Index>(bess_->bus)] * std::conj(converter_current() * bess_->rating_pu);
  }

  void solve_network() {
    Eigen::VectorXcd j(v_.size());
    auto source = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
      j.setZero();
      for (const auto& m : machines_) {
        if (!m.in_service) continue;
        const auto i = static_cast<Eigen::Index>(m.bus);
        j[i] += machine_current(m.state, m.params, v[i]) + norton_admittance(m.params) * v[i];
      }
      for (const auto& l : loads_) {
        if (!l.in_service) continue;
        const auto i = static_cast<Eigen::Index>(l.bus);
        j[i] += (l.y - l.held) * v[i];
      }
      for (const auto& w : wind_) {
        if (!w.plant.in_service) continue;
        const auto i = static_cast<Eigen::Index>(w.bus);
        j[i] += wind_current(w.plant, v[i]) + w.y * v[i];
      }
      if (bess_ && bess_->in_service) {
        const auto i = static_cast<Eigen::Index>(bess_->bus);
        if (bess_->kind == ControllerKind::Following)
          j[i] += bess_->gfl_current * bess_->rating_pu;
        else
          j[i] += forming_current(bess_->forming, v[i]) * bess_->rating_pu + bess_->y * v[i];
      }
      return j;
    };
    try {
      solver_.solve_robust(source, v_, opts_.network_tolerance, opts_.network_max_iterations);
    } catch (const Error& e) {
      throw SimulationAbort(time(), e.what());
    }
  }

  // -- discrete 1 ms components ------------------------------------------------------

  void sample_discrete(double t) {
    const double ts = kSamplePeriod;
    const double a = std::exp(-ts / opts_.load_angle_filter);
    for (auto& l : loads_) {
      if (!l.in_service) continue;
      const Complex v = v_[static_cast<Eigen::Index>(l.bus)];
      const double ang = std::arg(v);
      const double raw = 1.0 + wrap_angle(ang - l.last_angle) / (kOmega0 * ts);
      l.last_angle = ang;
      l.freq_filtered = raw + (l.freq_filtered - raw) * a;
      const double f = l.freq.push(l.freq_filtered);
      const double vm = l.volt.push(std::abs(v));
      double p0 = l.p0, q0 = l.q0;
      if (!l.profile.empty()) {
        const PQ base = l.profile.at(0.0);
        const PQ now = l.profile.at(t);
        p0 *= now.p / base.p;
        q0 *= base.q != 0.0 ? now.q / base.q : 1.0;
      }
      const PQ pq = load_power(p0, q0, vm, f, l.params);
      l.demand = {pq.p, pq.q};
      l.held = held_admittance(l.demand, vm, l.params.collapse_voltage);
    }
    for (auto& w : wind_) {
      if (w.override_level)
        w.available = *w.override_level;
      else if (!w.profile.empty())
        w.available = clamp(w.level0 + w.profile.at(t) - w.profile.at(0.0), 0.0, 1.0);
    }
    if (bess_ && bess_->in_service) sample_bess();
  }

  void sample_bess() {
    auto& b = *bess_;
    const double ts = kSamplePeriod;
    const Complex v = v_[static_cast<Eigen::Index>(b.bus)];
    if (b.kind == ControllerKind::Following) {
      auto [pll, out] = pll_step(std::move(b.following.pll), v, ts, b.following.params.pll);
      b.following.pll = std::move(pll);
      auto [ctrl, i] = following_step(std::move(b.following), out, v, ts);
      b.following = std::move(ctrl);
      b.gfl_current = i;
    }
    const double p_ac_w = (v * std::conj(converter_current())).real() * b.rating_pu * kBaseMva * 1e6;
    const double p_batt = battery_power_for_ac(p_ac_w, b.stack.efficiency);
    const BatteryRow& row = battery_params_lookup(b.table, b.battery.soc);
    b.i_dc = dc_current_for_power(p_batt, b.battery, row, b.stack.parallel);
    auto [state, y] = battery_step(b.battery, b.i_dc, ts, row, b.stack.parallel);
    b.battery = state;
    b.v_dc = y;
    const auto soc = soc_update(b.battery.soc, b.i_dc, ts, b.stack.capacity_ah);
    b.battery.soc = soc.soc;
    if (soc.clamped && !b.soc_clamped) warnings_.push_back("battery SOC reached a limit at t=" + std::to_string(time()));
    b.soc_clamped = soc.clamped;
  }

  // -- continuous dynamics ---------------------------------------------------------

  void derivatives(std::vector<double>& d) const {
    d.clear();
    d.reserve(ptrs_.size());
    auto push = [&](double& v) { d.push_back(v); };
    const bool sec = secondary_active();
    for (std::size_t k = 0; k < machines_.size(); ++k) {
      const auto& m = machines_[k];
      if (!m.in_service) continue;
      const Complex v = v_[static_cast<Eigen::Index>(m.bus)];
      const double pm = mechanical_power(m.governor) * m.params.rating_pu();
      auto dm = machine_derivatives(m.state, m.params, to_rotor_frame(v, m.state.delta), m.exciter.state.efd, pm);
      dm.for_each(push);
      const double offset = sec && k == secondary_index_ ? secondary_.offset() : 0.0;
      std::visit(
          [&](const auto& g) {
            auto dg = governor_derivatives(g, m.state.speed_dev, offset);
            dg.for_each(push);
          },
          m.governor);
      auto de = exciter_derivatives(m.exciter, std::abs(v), m.vref);
      de.for_each(push);
    }
    if (sec) d.push_back(machines_[secondary_index_].state.speed_dev);
    for (const auto& w : wind_)
      if (w.plant.in_service) d.push_back(wind_power_derivative(w.plant, w.available));
    if (bess_ && bess_->in_service && bess_->kind == ControllerKind::Forming) {
      const Complex v = v_[static_cast<Eigen::Index>(bess_->bus)];
      const double p = (v * std::conj(forming_current(bess_->forming, v))).real();
      auto df = forming_derivatives(bess_->forming, p, std::abs(v));
      df.for_each(push);
    }
  }

  void load_state(const std::vector<double>& x) {
    for (std::size_t k = 0; k < ptrs_.size(); ++k) *ptrs_[k] = x[k];
  }

  void stage_limits() {
    for (auto& m : machines_) {
      if (!m.in_service) continue;
      std::visit([](auto& g) { enforce_limits(g); }, m.governor);
      enforce_limits(m.exciter);
    }
  }

  void advance_heun() {
    const std::size_t n = ptrs_.size();
    x0_.resize(n);
    for (std::size_t k = 0; k < n; ++k) x0_[k] = *ptrs_[k];
    derivatives(k1_);
    xs_.resize(n);
    for (std::size_t k = 0; k < n; ++k) xs_[k] = x0_[k] + dt_ * k1_[k];
    load_state(xs_);
    stage_limits();
    solve_network();
    derivatives(k2_);
    for (std::size_t k = 0; k < n; ++k) xs_[k] = x0_[k] + 0.5 * dt_ * (k1_[k] + k2_[k]);
    load_state(xs_);
    stage_limits();
    solve_network();
  }

  void advance_rk4() {
    const std::size_t n = ptrs_.size();
    x0_.resize(n);
    for (std::size_t k = 0; k < n; ++k) x0_[k] = *ptrs_[k];
    xs_.resize(n);
    derivatives(k1_);
    for (std::size_t k = 0; k < n; ++k) xs_[k] = x0_[k] + 0.5 * dt_ * k1_[k];
    load_state(xs_);
    stage_limits();
    solve_network();
    derivatives(k2_);
    for (std::size_t k = 0; k < n; ++k) xs_[k] = x0_[k] + 0.5 * dt_ * k2_[k];
    load_state(xs_);
    stage_limits();
    solve_network();
    derivatives(k3_);
    for (std::size_t k = 0; k < n; ++k) xs_[k] = x0_[k] + dt_ * k3_[k];
    load_state(xs_);
    stage_limits();
    solve_network();
    derivatives(k4_);
    for (std::size_t k = 0; k < n; ++k)
      xs_[k] = x0_[k] + dt_ / 6.0 * (k1_[k] + 2.0 * k2_[k] + 2.0 * k3_[k] + k4_[k]);
    load_state(xs_);
    stage_limits();
    solve_network();
  }

  // -- event handlers ----------------------------------------------------------------

  bool trip_generator(const std::string& id, EventRecord& rec) {
    if (id == "BESS" && bess_) {
      if (!bess_->in_service) return warn_double_trip(id);
      rec.lost_mw = converter_power().real() * bess_->rating_pu * kBaseMva;
      bess_->in_service = false;
      return true;
    }
    for (auto& m : machines_) {
      if (m.params.id != id) continue;
      if (!m.in_service) return warn_double_trip(id);
      rec.lost_mw = machine_output(m).real() * kBaseMva;
      m.in_service = false;
      return true;
    }
    for (auto& w : wind_) {
      if (w.plant.params.id != id) continue;
      if (!w.plant.in_service) return warn_double_trip(id);
      rec.lost_mw = wind_output(w).real() * kBaseMva;
      w.plant.in_service = false;
      return true;
    }
    throw ScenarioError("events.target", "no device '" + id + "'");
  }

  bool trip_load(const std::string& bus, EventRecord& rec) {
    bool any = false, found = false;
    for (auto& l : loads_) {
      if (std::to_string(l.bus_id) != bus) continue;
      found = true;
      if (!l.in_service) continue;
      rec.lost_mw -= l.demand.real() * kBaseMva;
      l.in_service = false;
      any = true;
    }
    if (!found) throw ScenarioError("events.target", "no load at bus " + bus);
    if (!any) return warn_double_trip("load " + bus);
    return true;
  }

  bool set_reference(const std::string& id, double value) {
    if (id == "BESS" && bess_) {
      bess_->following.params.p_ref = value;
      bess_->forming.params.p_ref = value;
      return true;
    }
    for (auto& m : machines_) {
      if (m.params.id != id) continue;
      const double ref = value / m.params.rating_mva;
      std::visit(
          [&](auto& g) {
            if constexpr (std::is_same_v<std::decay_t<decltype(g)>, HydroGovernor>)
              g.gate_ref = ref;
            else
              g.power_ref = ref;
          },
          m.governor);
      return true;
    }
    for (auto& w : wind_) {
      if (w.plant.params.id != id) continue;
      w.override_level = clamp(value, 0.0, 1.0);
      return true;
    }
    throw ScenarioError("events.target", "no device '" + id + "'");
  }

  bool warn_double_trip(const std::string& id) {
    warnings_.push_back(id + " is already out of service at t=" + std::to_string(time()) + "; trip ignored");
    return false;
  }

  Scenario scenario_;
  SimulationOptions opts_;
  double dt_ = 1e-3;
  std::int64_t sample_every_ = 1;
  std::int64_t step_count_ = 0;

  Network net_;
  AdmittanceMatrix ybus_;
  PowerFlowSolution pf_;
  NetworkSolver solver_;
  Eigen::VectorXcd v_;

  std::vector<MachineUnit> machines_;
  std::vector<LoadUnit> loads_;
  std::vector<WindUnit> wind_;
  std::optional<BessUnit> bess_;
  SecondaryController secondary_;
  std::size_t secondary_index_ = 0;

  std::vector<Event> events_;
  std::size_t next_event_ = 0;
  std::vector<EventRecord> event_log_;
  std::vector<std::string> warnings_;
  double max_balance_ = 0.0;

  std::vector<double*> ptrs_;
  std::vector<std::string> owners_;
  std::vector<double> x0_, xs_, k1_, k2_, k3_, k4_;
};

/// Builds, initializes and runs a scenario.
inline Trace run(const Scenario& sc) {
  System sys(sc);
  return sys.run();
}

}  // namespace rms39
