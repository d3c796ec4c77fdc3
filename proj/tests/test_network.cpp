#include "catch_amalgamated.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "rms39/dataset.hpp"
#include "rms39/network.hpp"

using namespace rms39;
using Catch::Approx;

namespace {

const std::string kData = std::string(RMS39_SOURCE_DIR) + "/data/";

Network two_bus(double p_load, double q_load) {
  Network net;
  net.buses = {{1, BusKind::Slack, 1.0, 345}, {2, BusKind::PQ, 1.0, 345}};
  net.branches = {{1, 2, {0.0, 0.1}, 0.0, 0.0}};
  net.loads = {{2, p_load * kBaseMva, q_load * kBaseMva}};
  return net;
}

// Row sum of a pi-model branch seen from one end, accumulated by hand.
Complex branch_row_sum(const Branch& br, bool from_side) {
  const Complex ys = 1.0 / br.series_impedance;
  const Complex half{0.0, 0.5 * br.shunt_susceptance};
  const double t = br.tap_ratio == 0.0 ? 1.0 : br.tap_ratio;
  return from_side ? (ys + half) / (t * t) - ys / t : ys + half - ys / t;
}

}  // namespace

TEST_CASE("two-bus admittance") {
  std::vector<Bus> buses{{1, BusKind::Slack, 1.0, 345}, {2, BusKind::PQ, 1.0, 345}};
  std::vector<Branch> branches{{1, 2, {0.0, 0.1}, 0.0, 0.0}};
  const auto y = build_admittance(buses, branches);
  CHECK(y(0, 0) == Complex(0.0, -10.0));
  CHECK(y(1, 1) == Complex(0.0, -10.0));
  CHECK(y(0, 1) == Complex(0.0, 10.0));
  CHECK(y(1, 0) == Complex(0.0, 10.0));
}

TEST_CASE("empty branch list gives a zero matrix") {
  std::vector<Bus> buses{{1, BusKind::Slack, 1.0, 345}, {2, BusKind::PQ, 1.0, 345}, {3, BusKind::PQ, 1.0, 345}};
  const auto y = build_admittance(buses, std::vector<Branch>{});
  CHECK(y.y.cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.size() == 3);
}

TEST_CASE("admittance assembly rejects bad topology") {
  std::vector<Bus> buses{{1, BusKind::Slack, 1.0, 345}, {2, BusKind::PQ, 1.0, 345}};
  CHECK_THROWS_AS(build_admittance(buses, std::vector<Branch>{{1, 7, {0.0, 0.1}, 0.0, 0.0}}), StructuralError);
  CHECK_THROWS_AS(build_admittance(buses, std::vector<Branch>{{1, 1, {0.0, 0.1}, 0.0, 0.0}}), StructuralError);
  CHECK_THROWS_AS(build_admittance(buses, std::vector<Branch>{{1, 2, {0.0, 0.0}, 0.0, 0.0}}), StructuralError);
  std::vector<Bus> dup{{1, BusKind::Slack, 1.0, 345}, {1, BusKind::PQ, 1.0, 345}};
  CHECK_THROWS_AS(build_admittance(dup, std::vector<Branch>{}), StructuralError);
}

TEST_CASE("39-bus dataset parses exactly") {
  const Network net = load_network(kData + "ieee39_network.txt");
  REQUIRE(net.buses.size() == 39);
  REQUIRE(net.branches.size() == 46);
  REQUIRE(net.loads.size() == 21);
  const Branch& b = net.branches.front();
  CHECK(b.from == 1);
  CHECK(b.to == 2);
  CHECK(b.series_impedance == Complex(0.0035, 0.0411));
  CHECK(b.shunt_susceptance == 0.6987);
  CHECK(net.branches[4].tap_ratio == 1.025);
  int slack = 0;
  for (const auto& bus : net.buses) slack += bus.kind == BusKind::Slack;
  CHECK(slack == 1);
  double p = 0.0;
  for (const auto& l : net.loads) p += l.p_mw;
  CHECK(p == Approx(6254.23).margin(1e-9));
}

TEST_CASE("39-bus row sums equal the incident shunt terms") {
  const Network net = load_network(kData + "ieee39_network.txt");
  const auto y = build_admittance(net);
  REQUIRE(y.size() == 39);
  for (std::size_t i = 0; i < net.size(); ++i) {
    Complex expected;
    const int id = net.buses[i].id;
    for (const auto& br : net.branches) {
      if (br.from == id) expected += branch_row_sum(br, true);
      if (br.to == id) expected += branch_row_sum(br, false);
    }
    for (const auto& sh : net.shunts)
      if (sh.bus == id) expected += Complex(sh.g_mw, sh.b_mvar) / kBaseMva;
    const Complex row = y.y.row(static_cast<Eigen::Index>(i)).sum();
    CHECK(std::abs(row - expected) < 1e-9);
  }
  CHECK((y.y - y.y.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero injections give a flat profile") {
  Network net = two_bus(0.0, 0.0);
  net.loads.clear();
  const auto sol = solve_power_flow(net, std::vector<std::pair<int, double>>{});
  CHECK(std::abs(sol.voltage[0] - Complex(1.0, 0.0)) < 1e-12);
  CHECK(std::abs(sol.voltage[1] - Complex(1.0, 0.0)) < 1e-12);
}

TEST_CASE("two-bus power flow matches the closed form") {
  // Q2 = 0 gives |V2| = cos(theta); P2 = 10 |V2| sin(theta) = -1.
  const double theta = -0.5 * std::asin(0.2);
  const double vm = std::cos(theta);
  const auto sol = solve_power_flow(two_bus(1.0, 0.0), std::vector<std::pair<int, double>>{});
  CHECK(std::abs(sol.voltage[1]) == Approx(vm).margin(1e-10));
  CHECK(std::arg(sol.voltage[1]) == Approx(theta).margin(1e-10));
  CHECK(std::arg(sol.voltage[0]) == 0.0);
  CHECK(sol.mismatch < 1e-8);
  CHECK(sol.injection[0].real() == Approx(1.0).margin(1e-9));
}

TEST_CASE("infeasible power flow reports the last mismatch") {
  try {
    solve_power_flow(two_bus(20.0, 0.0), std::vector<std::pair<int, double>>{}, PowerFlowOptions{1e-8, 15});
    FAIL("expected nonconvergence");
  } catch (const NonconvergenceError& e) {
    CHECK(e.last_mismatch() > 1e-8);
    CHECK(e.iterations() == 15);
  }
}

TEST_CASE("power flow needs exactly one slack") {
  Network net = two_bus(1.0, 0.0);
  net.buses[1].kind = BusKind::Slack;
  CHECK_THROWS_AS(solve_power_flow(net, std::vector<std::pair<int, double>>{}), StructuralError);
}

TEST_CASE("power-flow Jacobian matches central differences") {
  const Network net = load_network(kData + "ieee39_network.txt");
  const auto n = net.size();
  InjectionTargets t{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  std::vector<BusKind> kinds(n);
  for (std::size_t i = 0; i < n; ++i) {
    kinds[i] = net.buses[i].kind;
    t.v[i] = net.buses[i].voltage_setpoint;
  }
  const PowerFlowProblem prob(build_admittance(net).y, kinds, t);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(-0.3, 0.3), mag(0.95, 1.05);
  Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = std::polar(mag(rng), ang(rng));
  v[static_cast<Eigen::Index>(prob.slack())] = 1.0;

  const Eigen::MatrixXd jac = prob.jacobian(v);
  const auto m = static_cast<Eigen::Index>(prob.unknowns());
  const double h = 1e-6;
  Eigen::MatrixXd fd(m, m);
  for (Eigen::Index c = 0; c < m; ++c) {
    Eigen::VectorXd dx = Eigen::VectorXd::Zero(m);
    dx[c] = h;
    fd.col(c) = (prob.mismatch(prob.apply(v, dx)) - prob.mismatch(prob.apply(v, -dx))) / (2.0 * h);
  }
  const double rel = (jac - fd).cwiseAbs().maxCoeff() / jac.cwiseAbs().maxCoeff();
  CHECK(rel < 1e-6);
}

TEST_CASE("39-bus power flow converges below tolerance") {
  const Network net = load_network(kData + "ieee39_network.txt");
  std::vector<std::pair<int, double>> gen{{30, 250}, {32, 650}, {33, 632}, {34, 508}, {35, 650},
                                          {36, 560}, {37, 540}, {38, 830}, {39, 1000}};
  const auto sol = solve_power_flow(net, gen);
  CHECK(sol.mismatch < 1e-8);
  CHECK(sol.iterations < 10);
  std::size_t slack = net.index_of(31);
  CHECK(std::arg(sol.voltage[static_cast<Eigen::Index>(slack)]) == 0.0);
  // Net injection is the network loss: positive, under 1% of the load.
  double total = 0.0;
  for (const auto& s : sol.injection) total += s.real();
  CHECK(total > 0.0);
  CHECK(total < 0.6254);
}

TEST_CASE("algebraic solve with no injections gives zero voltages") {
  const Network net = load_network(kData + "ieee39_network.txt");
  auto y = build_admittance(net);
  for (Eigen::Index i = 0; i < y.y.rows(); ++i) y.y(i, i) += Complex(0.0, -5.0);
  const auto v = solve_network_algebraic(y, Eigen::VectorXcd::Zero(39));
  CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single Norton source on two buses is a voltage divider") {
  const Complex zs(0.01, 0.2), zl(0.02, 0.1), zload(1.0, 0.5), e(1.05, 0.1);
  std::vector<Bus> buses{{1, BusKind::PQ, 1.0, 345}, {2, BusKind::PQ, 1.0, 345}};
  auto y = build_admittance(buses, std::vector<Branch>{{1, 2, zl, 0.0, 0.0}});
  y.y(0, 0) += 1.0 / zs;
  y.y(1, 1) += 1.0 / zload;
  Eigen::VectorXcd i(2);
  i << e / zs, 0.0;
  const auto v = solve_network_algebraic(y, i);
  CHECK(std::abs(v[1] - e * zload / (zs + zl + zload)) < 1e-12);
  CHECK(std::abs(v[0] - e * (zl + zload) / (zs + zl + zload)) < 1e-12);
}

TEST_CASE("radial chain matches the hand-computed divider chain") {
  const Complex z1(0.01, 0.05), z2(0.02, 0.08), z3(0.015, 0.04), zend(0.8, 0.3), e(1.0, 0.0);
  std::vector<Bus> buses{{1, BusKind::PQ, 1, 345}, {2, BusKind::PQ, 1, 345}, {3, BusKind::PQ, 1, 345}};
  auto y = build_admittance(buses, std::vector<Branch>{{1, 2, z2, 0.0, 0.0}, {2, 3, z3, 0.0, 0.0}});
  y.y(0, 0) += 1.0 / z1;
  y.y(2, 2) += 1.0 / zend;
  Eigen::VectorXcd i(3);
  i << e / z1, 0.0, 0.0;
  const auto v = solve_network_algebraic(y, i);
  const Complex current = e / (z1 + z2 + z3 + zend);
  CHECK(std::abs(v[0] - (e - current * z1)) < 1e-10);
  CHECK(std::abs(v[1] - (e - current * (z1 + z2))) < 1e-10);
  CHECK(std::abs(v[2] - current * zend) < 1e-10);
}

TEST_CASE("islanded bus is reported as singular") {
  std::vector<Bus> buses{{1, BusKind::PQ, 1, 345}, {2, BusKind::PQ, 1, 345}, {3, BusKind::PQ, 1, 345}};
  auto y = build_admittance(buses, std::vector<Branch>{{1, 2, {0.0, 0.1}, 0.0, 0.0}});
  y.y(0, 0) += Complex(0.0, -5.0);
  CHECK_THROWS_AS(NetworkSolver(y.y), SingularNetworkError);
}

TEST_CASE("constant-power network solve reproduces the power flow") {
  // Oracle: a converged 39-bus power flow. The slack becomes a Norton source
  // sized from the flow solution; every other bus holds its realized
  // injection as a constant-power device.
  const Network net = load_network(kData + "ieee39_network.txt");
  std::vector<std::pair<int, double>> gen{{30, 250}, {32, 650}, {33, 632}, {34, 508}, {35, 650},
                                          {36, 560}, {37, 540}, {38, 830}, {39, 1000}};
  const auto pf = solve_power_flow(net, gen, PowerFlowOptions{1e-12, 50});
  auto y = build_admittance(net);
  const auto slack = static_cast<Eigen::Index>(net.index_of(31));
  const Complex zs(0.0, 0.05);
  y.y(slack, slack) += 1.0 / zs;
  const Complex i_slack = std::conj(pf.injection[static_cast<std::size_t>(slack)] / pf.voltage[slack]);
  const Complex e = pf.voltage[slack] + zs * i_slack;
  Eigen::VectorXcd currents = Eigen::VectorXcd::Zero(39);
  currents[slack] = e / zs;
  Eigen::VectorXcd power(39);
  for (Eigen::Index i = 0; i < 39; ++i) power[i] = i == slack ? Complex{} : pf.injection[static_cast<std::size_t>(i)];
  // Start 2% and a few hundredths of a radian away, as after a time step.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXcd guess = pf.voltage;
  for (Eigen::Index i = 0; i < 39; ++i) guess[i] *= std::polar(1.0 + 0.02 * u(rng), 0.03 * u(rng));
  const auto v = solve_network_algebraic(y, currents, power, guess, 1e-12);
  CHECK((v - pf.voltage).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("Newton fallback agrees with the fixed point") {
  const Network net = load_network(kData + "ieee39_network.txt");
  auto y = build_admittance(net);
  for (Eigen::Index i = 0; i < 39; ++i) y.y(i, i) += Complex(0.0, -2.0);
  const NetworkSolver solver(y.y);
  Eigen::VectorXcd base(39);
  for (Eigen::Index i = 0; i < 39; ++i) base[i] = Complex(0.0, -2.0) * std::polar(1.0, 0.01 * static_cast<double>(i));
  // Constant-power loads on top of fixed sources.
  auto source = [&](const Eigen::VectorXcd& v) {
    Eigen::VectorXcd j = base;
    for (Eigen::Index i = 0; i < v.size(); ++i) j[i] -= std::conj(Complex(0.5, 0.1) / v[i]);
    return j;
  };
  Eigen::VectorXcd a = Eigen::VectorXcd::Ones(39), b = a, c = a;
  solver.solve_iterative(source, a, 1e-12);
  solver.solve_newton(source, b, 1e-12);
  solver.solve_robust(source, c, 1e-12);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a - c).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((y.y * b - source(b)).cwiseAbs().maxCoeff() < 1e-9);
}
