#include "catch_amalgamated.hpp"

#include <cmath>
#include <sstream>

#include "rms39/dataset.hpp"
#include "rms39/metrics.hpp"
#include "rms39/plot.hpp"
#include "rms39/scenario.hpp"
#include "rms39/trace_io.hpp"

using namespace rms39;
using Catch::Approx;

namespace {

const std::string kRoot = std::string(RMS39_SOURCE_DIR);

Trace synthetic_trace(double dt, double t_end, double trip, double (*f)(double)) {
  Trace tr;
  tr.header["trip_time"] = std::to_string(trip);
  tr.columns = {"t_s", "f_coi_pu"};
  const auto n = static_cast<std::size_t>(std::llround(t_end / dt));
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = k * dt;
    tr.rows.push_back({t, t < trip ? 1.0 : f(t - trip)});
  }
  return tr;
}

double exp_dip(double t) { return 1.0 - 0.05 * (1.0 - std::exp(-t / 2.0)); }

// Damped dip resembling a post-trip response.
double swing_dip(double t) {
  return 1.0 - 0.012 * (1.0 - std::exp(-t / 8.0)) - 0.02 * std::exp(-t / 3.0) * std::sin(0.9 * t);
}

double exp_recovery(double t) { return 1.0 - 0.01 * std::exp(-t / 5.0); }

double ringing(double t) { return 1.0 - 0.01 * std::sin(2.0 * t); }

}  // namespace

TEST_CASE("constant trace") {
  const auto tr = synthetic_trace(0.01, 30.0, 5.0, [](double) { return 1.0; });
  const auto m = compute_metrics(tr, tr.trip_time());
  CHECK(m.nadir == 1.0);
  CHECK(m.max_rocof == 0.0);
  CHECK(m.duration == 0.0);
  CHECK(m.band_entry == 0.0);
  CHECK(m.settled);
}

TEST_CASE("exponential dip: nadir and ROCOF") {
  const auto tr = synthetic_trace(0.001, 65.0, 5.0, exp_dip);
  auto m = compute_metrics(tr, 5.0);
  CHECK(m.nadir == Approx(0.95).margin(1e-9));
  CHECK(m.rocof_time == Approx(0.0).margin(1e-12));

  // Oracle: continuous least-squares slope over [0, W],
  // 12 / W^3 * integral (t - W/2) f(t) dt, by composite Simpson.
  const double w = 0.5;
  const int n = 20000;
  double acc = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double t = w * k / n;
    const double c = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    acc += c * (t - w / 2) * exp_dip(t);
  }
  const double slope = 12.0 / (w * w * w) * acc * (w / n) / 3.0;
  CHECK(m.max_rocof == Approx(-slope).epsilon(1e-4));

  // Narrow windows recover the analytic derivative 0.025 pu/s at the trip.
  MetricOptions narrow;
  narrow.rocof_window = 0.01;
  m = compute_metrics(tr, 5.0, narrow);
  CHECK(m.max_rocof == Approx(0.025).epsilon(0.005));
}

TEST_CASE("least-squares slope of a line is exact") {
  std::vector<double> x, y;
  for (int k = 0; k < 50; ++k) {
    x.push_back(0.1 * k);
    y.push_back(3.0 - 0.7 * 0.1 * k);
  }
  CHECK(least_squares_slope(x, y, 0, 50) == Approx(-0.7).epsilon(1e-12));
  CHECK(least_squares_slope(x, y, 3, 4) == 0.0);
}

TEST_CASE("transient duration on an exponential recovery") {
  const auto tr = synthetic_trace(0.001, 105.0, 5.0, exp_recovery);
  const auto m = compute_metrics(tr, 5.0);
  // The deviation drops below 0.0005 at t = 5 ln 20.
  CHECK(m.settled);
  CHECK(m.duration == Approx(5.0 * std::log(20.0)).margin(0.003));
  CHECK(m.band_entry == Approx(m.duration).margin(0.003));
}

TEST_CASE("a ringing trace is reported as unsettled") {
  const auto tr = synthetic_trace(0.01, 60.0, 5.0, ringing);
  const auto m = compute_metrics(tr, 5.0);
  CHECK_FALSE(m.settled);
  CHECK(std::isnan(m.duration));
  CHECK(to_json(m)["duration_s"].is_null());
}

TEST_CASE("wider band shortens the duration") {
  const auto tr = synthetic_trace(0.001, 105.0, 5.0, exp_recovery);
  MetricOptions wide;
  wide.band = 0.001;
  CHECK(compute_metrics(tr, 5.0, wide).duration == Approx(5.0 * std::log(10.0)).margin(0.003));
}

TEST_CASE("metrics are stable under decimation to 20 ms") {
  const auto fine = synthetic_trace(0.001, 105.0, 5.0, swing_dip);
  const auto coarse = fine.decimated(20);
  CHECK(coarse.rows.size() == (fine.rows.size() + 19) / 20);
  const auto a = compute_metrics(fine, 5.0);
  const auto b = compute_metrics(coarse, 5.0);
  CHECK(std::abs(a.nadir - b.nadir) < 2e-4);
  CHECK(std::abs(a.max_rocof - b.max_rocof) / a.max_rocof < 0.05);
}

TEST_CASE("report keys and comparison antisymmetry") {
  const auto a = compute_metrics(synthetic_trace(0.001, 65.0, 5.0, exp_dip), 5.0);
  const auto b = compute_metrics(synthetic_trace(0.001, 65.0, 5.0, swing_dip), 5.0);
  const auto ja = to_json(a), jb = to_json(b);
  for (const char* key : {"trip_time_s", "initial_pu", "nadir_pu", "nadir_time_s", "max_rocof_pu_per_s",
                          "rocof_time_s", "rocof_window_s", "settled_pu", "band_pu", "settled", "duration_s",
                          "band_entry_s"})
    CHECK(ja.contains(key));
  const auto ab = compare_metrics(ja, jb), ba = compare_metrics(jb, ja);
  CHECK(ab["nadir_pu"].get<double>() == Approx(a.nadir - b.nadir));
  for (const auto& [key, v] : ab.items()) CHECK(v.get<double>() == -ba.at(key).get<double>());
  CHECK_FALSE(ab.contains("settled"));
}

TEST_CASE("trace CSV round trip") {
  auto tr = synthetic_trace(0.01, 2.0, 0.5, swing_dip);
  tr.header["configuration"] = "config1";
  std::stringstream ss;
  write_trace(ss, tr);
  const auto back = read_trace(ss);
  CHECK(back.columns == tr.columns);
  CHECK(back.trip_time() == 0.5);
  CHECK(back.header.at("configuration") == "config1");
  REQUIRE(back.rows.size() == tr.rows.size());
  for (std::size_t k = 0; k < tr.rows.size(); ++k) CHECK(back.rows[k][1] == Approx(tr.rows[k][1]).margin(1e-10));
  CHECK_THROWS_AS(tr.series("nope"), ScenarioError);

  std::stringstream bad("t_s,f\n0,1\n");
  CHECK_THROWS_AS(read_trace(bad), ScenarioError);
  std::stringstream ragged("# rms39 trace v1\nt_s,f\n0,1,2\n");
  CHECK_THROWS_AS(read_trace(ragged), ScenarioError);
}

TEST_CASE("aggregate inertia") {
  const auto mds = load_machines(kRoot + "/data/ieee39_machines.txt");
  const auto c1 = load_scenario(kRoot + "/scenarios/config1_case1.json");
  const auto c2 = load_scenario(kRoot + "/scenarios/config2_case1.json");
  const auto c2b = load_scenario(kRoot + "/scenarios/config2_bess_case1_following.json");
  CHECK(aggregate_inertia(mds, c1) == Approx(782.7).margin(1e-9));
  CHECK(std::abs(aggregate_inertia(mds, c1) - 784.7) / 784.7 < 0.003);
  CHECK(aggregate_inertia(mds, c2) == Approx(197.9).margin(1e-9));
  CHECK(aggregate_inertia(mds, c2b) == aggregate_inertia(mds, c2));
  CHECK(aggregate_inertia(std::vector<MachineParams>{}) == 0.0);
}

TEST_CASE("converter summary picks signed extremes") {
  Trace tr;
  tr.header["trip_time"] = "1";
  tr.columns = {"t_s", "p_conv_pu", "q_conv_pu", "v_pcc_pu", "soc"};
  tr.rows = {{0.0, 0.0, 0.0, 1.00, 0.5},
             {1.0, 0.1, 0.2, 0.98, 0.5},
             {2.0, 0.6, 0.5, 0.95, 0.49},
             {3.0, 0.4, -0.1, 0.99, 0.48}};
  const auto s = summarize_converter(tr, 1.0);
  CHECK(s.peak_p == 0.6);
  CHECK(s.peak_q == 0.5);
  CHECK(s.peak_v_deviation == Approx(-0.05));
  CHECK(s.min_soc == 0.48);
  CHECK(s.final_p == 0.4);
  Trace bare;
  bare.columns = {"t_s", "f_coi_pu"};
  bare.rows = {{0.0, 1.0}};
  CHECK(summarize_converter(bare, 0.0).peak_q == 0.0);
}

TEST_CASE("SVG overlay draws one polyline per trace and panel") {
  const auto a = synthetic_trace(0.01, 10.0, 1.0, exp_dip);
  const auto b = synthetic_trace(0.01, 10.0, 1.0, swing_dip);
  PlotOptions opt;
  opt.title = "overlay";
  const auto svg = render_svg({&a, &b}, {"a", "b"}, {"f_coi_pu"}, opt);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  std::size_t lines = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  CHECK(lines == 2);
  CHECK(svg.find(">overlay<") != std::string::npos);
}
