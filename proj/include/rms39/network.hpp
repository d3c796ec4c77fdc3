#pragma once

// Network representation, admittance assembly, Newton-Raphson power flow and
// the per-step algebraic network solve of the phasor simulator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rms39/common.hpp"

namespace rms39 {

enum class BusKind { Slack, PV, PQ };

inline const char* to_string(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    case BusKind::PQ: return "pq";
  }
  return "?";
}

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double voltage_setpoint = 1.0;  ///< pu, used for pv and slack buses
  double base_kv = 345.0;
};

struct Branch {
  int from = 0;
  int to = 0;
  Complex series_impedance{0.0, 0.0};  ///< pu on 100 MVA
  double shunt_susceptance = 0.0;      ///< total line charging, pu
  double tap_ratio = 0.0;              ///< off-nominal ratio at the from side, 0 means none
};

struct LoadRecord {
  int bus = 0;
  double p_mw = 0.0;
  double q_mvar = 0.0;
};

struct ShuntRecord {
  int bus = 0;
  double g_mw = 0.0;
  double b_mvar = 0.0;  ///< positive is capacitive
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<LoadRecord> loads;
  std::vector<ShuntRecord> shunts;

  std::size_t size() const { return buses.size(); }

  std::size_t index_of(int bus_id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
      if (buses[i].id == bus_id) return i;
    throw StructuralError("unknown bus id " + std::to_string(bus_id));
  }
};

/// Nodal admittance matrix on the common 100 MVA base, ordered like the bus list.
struct AdmittanceMatrix {
  Eigen::MatrixXcd y;
  std::vector<int> bus_ids;

  std::size_t size() const { return bus_ids.size(); }
  Complex operator()(std::size_t i, std::size_t j) const { return y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
};

namespace detail {

inline std::unordered_map<int, std::size_t> bus_index_map(std::span<const Bus> buses) {
  std::unordered_map<int, std::size_t> map;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!map.emplace(buses[i].id, i).second)
      throw StructuralError("duplicate bus id " + std::to_string(buses[i].id));
  }
  return map;
}

inline std::size_t lookup(const std::unordered_map<int, std::size_t>& map, int id, const char* role) {
  auto it = map.find(id);
  if (it == map.end())
    throw StructuralError(std::string(role) + " references unknown bus " + std::to_string(id));
  return it->second;
}

}  // namespace detail

inline AdmittanceMatrix build_admittance(std::span<const Bus> buses, std::span<const Branch> branches,
                                         std::span<const ShuntRecord> shunts = {}) {
  const auto index = detail::bus_index_map(buses);
  const auto n = static_cast<Eigen::Index>(buses.size());
  AdmittanceMatrix out;
  out.y = Eigen::MatrixXcd::Zero(n, n);
  out.bus_ids.reserve(buses.size());
  for (const auto& b : buses) out.bus_ids.push_back(b.id);

  for (const auto& br : branches) {
    const auto f = static_cast<Eigen::Index>(detail::lookup(index, br.from, "branch"));
    const auto t = static_cast<Eigen::Index>(detail::lookup(index, br.to, "branch"));
    if (f == t) throw StructuralError("branch " + std::to_string(br.from) + " connects a bus to itself");
    if (std::abs(br.series_impedance) == 0.0)
      throw StructuralError("branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " has zero series impedance");
    const Complex ys = 1.0 / br.series_impedance;
    const Complex half_charging{0.0, 0.5 * br.shunt_susceptance};
    const double tap = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
    out.y(f, f) += (ys + half_charging) / (tap * tap);
    out.y(t, t) += ys + half_charging;
    out.y(f, t) -= ys / tap;
    out.y(t, f) -= ys / tap;
  }
  for (const auto& sh : shunts) {
    const auto i = static_cast<Eigen::Index>(detail::lookup(index, sh.bus, "shunt"));
    out.y(i, i) += Complex(sh.g_mw, sh.b_mvar) / kBaseMva;
  }
  return out;
}

inline AdmittanceMatrix build_admittance(const Network& net) {
  return build_admittance(net.buses, net.branches, net.shunts);
}

// ---------------------------------------------------------------------------
// Power flow

/// Specified net injections per bus (generation minus load), pu on 100 MVA.
/// `p` is used at pv/pq buses, `q` at pq buses, `v` at pv/slack buses.
struct InjectionTargets {
  std::vector<double> p;
  std::vector<double> q;
  std::vector<double> v;
};

struct PowerFlowOptions {
  double tolerance = 1e-8;
  int max_iterations = 50;
};

struct PowerFlowSolution {
  Eigen::VectorXcd voltage;        ///< per bus, pu
  std::vector<Complex> injection;  ///< realized net injection S = V conj(YV), pu
  int iterations = 0;
  double mismatch = 0.0;

  double total_injection_mw(std::span<const std::size_t> buses) const {
    double s = 0.0;
    for (auto i : buses) s += injection[i].real() * kBaseMva;
    return s;
  }
};

/// Polar Newton-Raphson formulation. Unknowns are the angles of all non-slack
/// buses followed by the magnitudes of the pq buses.
class PowerFlowProblem {
public:
  PowerFlowProblem(Eigen::MatrixXcd y, std::vector<BusKind> kinds, InjectionTargets targets)
      : y_(std::move(y)), kinds_(std::move(kinds)), targets_(std::move(targets)) {
    const auto n = kinds_.size();
    if (static_cast<std::size_t>(y_.rows()) != n || targets_.p.size() != n || targets_.q.size() != n ||
        targets_.v.size() != n)
      throw StructuralError("power flow inputs have inconsistent sizes");
    int slack_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (kinds_[i] == BusKind::Slack) {
        ++slack_count;
        slack_ = i;
      } else {
        angle_buses_.push_back(i);
      }
      if (kinds_[i] == BusKind::PQ) magnitude_buses_.push_back(i);
    }
    if (slack_count != 1)
      throw StructuralError("power flow needs exactly one slack bus, found " + std::to_string(slack_count));
  }

  std::size_t unknowns() const { return angle_buses_.size() + magnitude_buses_.size(); }
  std::size_t slack() const { return slack_; }

  Eigen::VectorXcd flat_start() const {
    Eigen::VectorXcd v(static_cast<Eigen::Index>(kinds_.size()));
    for (std::size_t i = 0; i < kinds_.size(); ++i)
      v[static_cast<Eigen::Index>(i)] = kinds_[i] == BusKind::PQ ? 1.0 : targets_.v[i];
    return v;
  }

  Eigen::VectorXcd injections(const Eigen::VectorXcd& v) const {
    return v.cwiseProduct((y_ * v).conjugate());
  }

  Eigen::VectorXd mismatch(const Eigen::VectorXcd& v) const {
    const Eigen::VectorXcd s = injections(v);
    Eigen::VectorXd f(static_cast<Eigen::Index>(unknowns()));
    Eigen::Index k = 0;
    for (auto i : angle_buses_) f[k++] = s[static_cast<Eigen::Index>(i)].real() - targets_.p[i];
    for (auto i : magnitude_buses_) f[k++] = s[static_cast<Eigen::Index>(i)].imag() - targets_.q[i];
    return f;
  }

  /// Analytic Jacobian of `mismatch` with respect to [angles, magnitudes].
  Eigen::MatrixXd jacobian(const Eigen::VectorXcd& v) const {
    const auto n = v.size();
    const Eigen::VectorXcd current = y_ * v;
    const Eigen::VectorXcd unit = v.cwiseQuotient(v.cwiseAbs().cast<Complex>());
    // dS/dtheta = j diag(V) conj(diag(I) - Y diag(V))
    // dS/d|V|   = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    Eigen::MatrixXcd ds_dtheta(n, n), ds_dmag(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const Complex yv = y_(i, j) * v[j];
        Complex a = -yv;
        if (i == j) a += current[i];
        ds_dtheta(i, j) = Complex(0.0, 1.0) * v[i] * std::conj(a);
        Complex b = v[i] * std::conj(y_(i, j) * unit[j]);
        if (i == j) b += std::conj(current[i]) * unit[i];
        ds_dmag(i, j) = b;
      }
    }
    const auto m = static_cast<Eigen::Index>(unknowns());
    Eigen::MatrixXd jac(m, m);
    const auto na = static_cast<Eigen::Index>(angle_buses_.size());
    auto col_of = [&](Eigen::Index c, bool& is_angle) {
      is_angle = c < na;
      return static_cast<Eigen::Index>(is_angle ? angle_buses_[static_cast<std::size_t>(c)]
                                                : magnitude_buses_[static_cast<std::size_t>(c - na)]);
    };
    for (Eigen::Index r = 0; r < m; ++r) {
      const bool p_row = r < na;
      const auto i = static_cast<Eigen::Index>(p_row ? angle_buses_[static_cast<std::size_t>(r)]
                                                     : magnitude_buses_[static_cast<std::size_t>(r - na)]);
      for (Eigen::Index c = 0; c < m; ++c) {
        bool angle_col = false;
        const auto j = col_of(c, angle_col);
        const Complex d = angle_col ? ds_dtheta(i, j) : ds_dmag(i, j);
        jac(r, c) = p_row ? d.real() : d.imag();
      }
    }
    return jac;
  }

  /// Applies a step in the unknown space to a voltage vector.
  Eigen::VectorXcd apply(const Eigen::VectorXcd& v, const Eigen::VectorXd& dx) const {
    Eigen::VectorXcd out = v;
    Eigen::Index k = 0;
    for (auto i : angle_buses_) {
      const auto ii = static_cast<Eigen::Index>(i);
      out[ii] = std::polar(std::abs(v[ii]), std::arg(v[ii]) + dx[k++]);
    }
    for (auto i : magnitude_buses_) {
      const auto ii = static_cast<Eigen::Index>(i);
      out[ii] = std::polar(std::abs(out[ii]) + dx[k++], std::arg(out[ii]));
    }
    return out;
  }

private:
  Eigen::MatrixXcd y_;
  std::vector<BusKind> kinds_;
  InjectionTargets targets_;
  std::size_t slack_ = 0;
  std::vector<std::size_t> angle_buses_;
  std::vector<std::size_t> magnitude_buses_;
};

inline PowerFlowSolution solve_power_flow(const PowerFlowProblem& problem, PowerFlowOptions opts = {}) {
  Eigen::VectorXcd v = problem.flat_start();
  double mis = 0.0;
  int it = 0;
  for (;; ++it) {
    const Eigen::VectorXd f = problem.mismatch(v);
    mis = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
    if (!std::isfinite(mis)) throw NonconvergenceError("power flow diverged", mis, it);
    if (mis < opts.tolerance) break;
    if (it >= opts.max_iterations) throw NonconvergenceError("power flow did not converge", mis, it);
    const Eigen::VectorXd dx = problem.jacobian(v).partialPivLu().solve(-f);
    v = problem.apply(v, dx);
  }
  PowerFlowSolution sol;
  sol.voltage = v;
  const Eigen::VectorXcd s = problem.injections(v);
  sol.injection.assign(s.data(), s.data() + s.size());
  sol.iterations = it;
  sol.mismatch = mis;
  return sol;
}

inline PowerFlowSolution solve_power_flow(const AdmittanceMatrix& y, std::span<const BusKind> kinds,
                                          const InjectionTargets& targets, PowerFlowOptions opts = {}) {
  return solve_power_flow(PowerFlowProblem(y.y, {kinds.begin(), kinds.end()}, targets), opts);
}

/// Targets taken from the network's own bus kinds and load records; `generation`
/// lists (bus id, MW) pairs for the pv buses. The slack bus balances the rest.
inline PowerFlowSolution solve_power_flow(const Network& net, std::span<const std::pair<int, double>> generation,
                                          PowerFlowOptions opts = {}) {
  const auto n = net.size();
  InjectionTargets t{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  std::vector<BusKind> kinds(n);
  for (std::size_t i = 0; i < n; ++i) {
    kinds[i] = net.buses[i].kind;
    t.v[i] = net.buses[i].voltage_setpoint;
  }
  for (const auto& l : net.loads) {
    const auto i = net.index_of(l.bus);
    t.p[i] -= l.p_mw / kBaseMva;
    t.q[i] -= l.q_mvar / kBaseMva;
  }
  for (const auto& [bus, mw] : generation) t.p[net.index_of(bus)] += mw / kBaseMva;
  return solve_power_flow(build_admittance(net), kinds, t, opts);
}

// ---------------------------------------------------------------------------
// Algebraic network solve

/// LU-factorized nodal matrix with device Norton admittances folded in.
class NetworkSolver {
public:
  NetworkSolver() = default;
  explicit NetworkSolver(Eigen::MatrixXcd y) : y_(std::move(y)) { factorize(); }

  const Eigen::MatrixXcd& matrix() const { return y_; }
  Eigen::Index size() const { return y_.rows(); }

  void add_to_diagonal(Eigen::Index i, Complex y) {
    y_(i, i) += y;
    factored_ = false;
  }

  void factorize() {
    lu_.compute(y_);
    // The rcond estimate can miss an exactly zero pivot, so check those too.
    const double rc = lu_.rcond();
    const auto pivots = lu_.matrixLU().diagonal().cwiseAbs();
    const double spread = pivots.size() ? pivots.minCoeff() / pivots.maxCoeff() : 1.0;
    if (!(rc > 1e-14) || !std::isfinite(rc) || !(spread > 1e-14))
      throw SingularNetworkError("network admittance matrix is singular (a bus has no path to a source)");
    factored_ = true;
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& currents) const {
    if (!factored_) throw Error("network solver used before factorization");
    return lu_.solve(currents);
  }

  /// Fixed-point solve of Y V = J(V) where `source(V)` returns the Norton
  /// current vector for the given voltages. Returns the iteration count.
  template <class Source>
  int solve_iterative(Source&& source, Eigen::VectorXcd& v, double tolerance = 1e-10, int max_iterations = 100) const {
    double delta = 0.0;
    for (int it = 1; it <= max_iterations; ++it) {
      Eigen::VectorXcd next = solve(source(v));
      delta = (next - v).cwiseAbs().maxCoeff();
      v = std::move(next);
      if (!std::isfinite(delta)) break;
      if (delta < tolerance) return it;
    }
    throw NonconvergenceError("network solve", delta, max_iterations);
  }

  /// Newton iteration on Y v - source(v) = 0 in rectangular coordinates.
  /// Requires every source entry to depend on its own bus voltage only, so
  /// the source Jacobian is bus-diagonal and two perturbed evaluations give
  /// all of it.
  template <class Source>
  int solve_newton(Source&& source, Eigen::VectorXcd& v, double tolerance = 1e-10, int max_iterations = 100) const {
    const Eigen::Index n = v.size();
    const double h = 1e-7;
    double delta = 0.0;
    Eigen::MatrixXd jac(2 * n, 2 * n);
    for (int it = 1; it <= max_iterations; ++it) {
      const Eigen::VectorXcd s0 = source(v);
      const Eigen::VectorXcd f = y_ * v - s0;
      const Eigen::VectorXcd dx = (source(Eigen::VectorXcd(v.array() + h)) - s0) / h;
      const Eigen::VectorXcd dy = (source(Eigen::VectorXcd(v.array() + Complex(0.0, h))) - s0) / h;
      Eigen::MatrixXcd fx = y_, fy = Complex(0.0, 1.0) * y_;
      fx.diagonal() -= dx;
      fy.diagonal() -= dy;
      jac << fx.real(), fy.real(), fx.imag(), fy.imag();
      Eigen::VectorXd rhs(2 * n);
      rhs << -f.real(), -f.imag();
      const Eigen::VectorXd step = jac.partialPivLu().solve(rhs);
      Eigen::VectorXcd dv(n);
      for (Eigen::Index i = 0; i < n; ++i) dv[i] = Complex(step[i], step[n + i]);
      // Backtrack until the residual decreases.
      const double f0 = f.norm();
      double lambda = 1.0;
      for (int k = 0; k < 20; ++k, lambda *= 0.5) {
        const Eigen::VectorXcd trial = v + lambda * dv;
        if ((y_ * trial - source(trial)).norm() < f0) break;
      }
      dv *= lambda;
      v += dv;
      delta = dv.cwiseAbs().maxCoeff();
      if (!std::isfinite(delta)) break;
      if (delta < tolerance) return it;
    }
    throw NonconvergenceError("network solve (newton)", delta, max_iterations);
  }

  /// Fixed-point iteration, falling back to Newton from the same starting
  /// point when it does not converge.
  template <class Source>
  int solve_robust(Source&& source, Eigen::VectorXcd& v, double tolerance = 1e-10, int max_iterations = 100) const {
    const Eigen::VectorXcd start = v;
    try {
      return solve_iterative(source, v, tolerance, max_iterations);
    } catch (const NonconvergenceError&) {
      v = start;
    }
    return solve_newton(source, v, tolerance, max_iterations);
  }

private:
  Eigen::MatrixXcd y_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
  bool factored_ = false;
};

/// Direct solve V = Y^-1 I for fixed current injections.
inline Eigen::VectorXcd solve_network_algebraic(const AdmittanceMatrix& y, const Eigen::VectorXcd& injections) {
  return NetworkSolver(y.y).solve(injections);
}

/// Solve with constant-power injections `power` (pu, generator convention)
/// on top of fixed currents, by Norton iteration around the given guess with
/// Newton as the fallback.
inline Eigen::VectorXcd solve_network_algebraic(const AdmittanceMatrix& y, const Eigen::VectorXcd& currents,
                                                const Eigen::VectorXcd& power, Eigen::VectorXcd guess,
                                                double tolerance = 1e-10) {
  // Linearize every constant-power injection as an admittance around the guess
  // so the fixed point only carries the nonlinear remainder.
  Eigen::MatrixXcd ya = y.y;
  Eigen::VectorXcd ylin(power.size());
  for (Eigen::Index i = 0; i < power.size(); ++i) {
    const double m2 = std::norm(guess[i]);
    ylin[i] = m2 > 0.0 ? -std::conj(power[i]) / m2 : Complex{};
    ya(i, i) += ylin[i];
  }
  NetworkSolver solver(std::move(ya));
  auto source = [&](const Eigen::VectorXcd& v) {
    Eigen::VectorXcd j = currents;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (power[i] != Complex{}) j[i] += std::conj(power[i] / v[i]) + ylin[i] * v[i];
    return j;
  };
  solver.solve_robust(source, guess, tolerance);
  return guess;
}

}  // namespace rms39
