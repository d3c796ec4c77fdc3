#include "catch_amalgamated.hpp"

#include <cmath>
#include <filesystem>
#include <random>

#include "rms39/loads.hpp"
#include "rms39/profiles.hpp"

using namespace rms39;
using Catch::Approx;

TEST_CASE("load power examples") {
  LoadParams k;
  auto pq = load_power(5.0, 2.0, 1.0, 1.0, k);
  CHECK(pq.p == 5.0);
  CHECK(pq.q == 2.0);

  k.kpv = 2.0;
  pq = load_power(1.0, 0.0, 0.95, 1.0, k);
  CHECK(pq.p == Approx(0.9025).epsilon(1e-14));

  k = LoadParams{};
  k.kpf = 2.0;
  pq = load_power(1.0, 0.0, 1.0, 0.99, k);
  CHECK(pq.p == Approx(0.98).epsilon(1e-14));

  k = LoadParams{};
  pq = load_power(1.0, 1.0, 0.9, 1.01, k);
  CHECK(pq.q == Approx(0.81 * 0.99).epsilon(1e-14));
}

TEST_CASE("zero coefficients give constant power exactly") {
  const LoadParams k{0.0, 0.0, 0.0, 0.0};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> v(0.3, 1.3), f(0.95, 1.05);
  for (int i = 0; i < 1000; ++i) {
    const auto pq = load_power(3.21, -0.7, v(rng), f(rng), k);
    REQUIRE(pq.p == 3.21);
    REQUIRE(pq.q == -0.7);
  }
}

TEST_CASE("load power is monotone in V and f") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> coef(0.05, 3.0), v(0.35, 1.3), f(0.9, 1.1), p0(0.1, 10.0);
  for (int i = 0; i < 2000; ++i) {
    LoadParams k;
    k.kpv = coef(rng);
    k.kpf = coef(rng);
    const double p = p0(rng), va = v(rng), vb = v(rng), fa = f(rng), fb = f(rng);
    const double vlo = std::min(va, vb), vhi = std::max(va, vb);
    const double flo = std::min(fa, fb), fhi = std::max(fa, fb);
    REQUIRE(load_power(p, 0, vlo, fa, k).p <= load_power(p, 0, vhi, fa, k).p);
    REQUIRE(load_power(p, 0, va, flo, k).p <= load_power(p, 0, va, fhi, k).p);
  }
}

TEST_CASE("collapse guard switches to constant impedance") {
  const LoadParams k;
  const auto edge = load_power(1.0, 0.5, 0.3, 1.0, k);
  const auto low = load_power(1.0, 0.5, 0.15, 1.0, k);
  CHECK(low.p == Approx(edge.p * 0.25).epsilon(1e-14));
  CHECK(low.q == Approx(edge.q * 0.25).epsilon(1e-14));
  const auto zero = load_power(1.0, 0.5, 0.0, 1.0, k);
  CHECK(zero.p == 0.0);
  CHECK(zero.q == 0.0);
  // Continuous at the threshold.
  CHECK(load_power(1.0, 0.5, 0.3 - 1e-12, 1.0, k).p == Approx(edge.p).epsilon(1e-9));
}

TEST_CASE("measurement geometry") {
  FrequencyMeasurement f;
  CHECK(f.window() == 240);
  CHECK(f.overlap() == 220);
  CHECK(f.report_interval() == 20);
  VoltageMeasurement v;
  CHECK(v.window() == 240);
  CHECK(v.report_interval() == 20);
  CHECK_THROWS_AS(WindowedMeasurement(WindowedMeasurement::Mode::Mean, 10, 20, 1.0), DomainError);
}

TEST_CASE("constant input passes through unchanged") {
  FrequencyMeasurement f(1.0);
  VoltageMeasurement v(1.0);
  double fr = 0.0, vr = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::tie(f, fr) = frequency_measurement_step(f, 1.0);
    std::tie(v, vr) = rms_measurement_step(v, 1.0);
    REQUIRE(fr == 1.0);
    REQUIRE(vr == 1.0);
  }
}

TEST_CASE("frequency step ramps through the window") {
  // After n samples of the new value (n a multiple of 20, n <= 240) the
  // reported mean is 1 - 0.01 n / 240.
  FrequencyMeasurement f(1.0);
  double fr = 0.0;
  for (int n = 1; n <= 400; ++n) {
    std::tie(f, fr) = frequency_measurement_step(f, 0.99);
    const int held = n - n % 20;
    const double expected = 1.0 - 0.01 * std::min(held, 240) / 240.0;
    REQUIRE(fr == Approx(expected).margin(1e-14));
  }
  CHECK(fr == Approx(0.99).margin(1e-14));
}

TEST_CASE("step reaches the new value after exactly 240 ms") {
  VoltageMeasurement v(1.0);
  double vr = 0.0;
  for (int n = 1; n <= 240; ++n) {
    std::tie(v, vr) = rms_measurement_step(v, 0.9);
    if (n < 240) REQUIRE(vr > 0.9 + 1e-12);
  }
  CHECK(vr == Approx(0.9).margin(1e-14));
}

TEST_CASE("reported values change only on 20 ms boundaries") {
  FrequencyMeasurement f(1.0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(1.0, 0.01);
  double prev = f.reported(), fr = 0.0;
  for (int n = 1; n <= 1000; ++n) {
    std::tie(f, fr) = frequency_measurement_step(f, noise(rng));
    if (n % 20 != 0) REQUIRE(fr == prev);
    prev = fr;
  }
}

TEST_CASE("voltage sag follows the windowed RMS of the piecewise signal") {
  // 1.0 pu, then 0.94 pu for 100 ms starting at sample 200, then 1.0 pu.
  auto signal = [](int n) { return (n >= 200 && n < 300) ? 0.94 : 1.0; };
  VoltageMeasurement v(1.0);
  double vr = 0.0;
  for (int n = 0; n < 800; ++n) {
    std::tie(v, vr) = rms_measurement_step(v, signal(n));
    if ((n + 1) % 20 != 0) continue;
    const int lo = n + 1 - 240, hi = n + 1;  // samples in the window
    const int sag = std::max(0, std::min(hi, 300) - std::max(lo, 200));
    const double expected = std::sqrt((sag * 0.94 * 0.94 + (240 - sag) * 1.0) / 240.0);
    REQUIRE(vr == Approx(expected).margin(1e-14));
  }
  // Hand value with the whole sag inside the window: sqrt((100*0.8836 + 140)/240).
  VoltageMeasurement w(1.0);
  for (int n = 0; n < 300; ++n) std::tie(w, vr) = rms_measurement_step(w, signal(n));
  CHECK(vr == Approx(0.975448614).margin(1e-9));
}

TEST_CASE("measurements are time-shift equivariant by whole report intervals") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(1.0, 0.02);
  std::vector<double> x(600);
  for (auto& s : x) s = noise(rng);
  VoltageMeasurement a(1.0), b(1.0);
  std::vector<double> ya, yb;
  double r = 0.0;
  for (int n = 0; n < 600; ++n) {
    std::tie(a, r) = rms_measurement_step(a, x[n]);
    ya.push_back(r);
  }
  for (int n = 0; n < 640; ++n) {
    std::tie(b, r) = rms_measurement_step(b, n < 40 ? 1.0 : x[n - 40]);
    yb.push_back(r);
  }
  for (int n = 0; n < 600; ++n) REQUIRE(yb[n + 40] == Approx(ya[n]).margin(1e-14));
}

TEST_CASE("load profile hold and validation") {
  LoadProfile p;
  p.p_mw = {10.0, 20.0, 30.0};
  p.q_mvar = {1.0, 2.0, 3.0};
  CHECK(p.at(0.0).p == 10.0);
  CHECK(p.at(0.019).p == 10.0);
  CHECK(p.at(0.02).p == 20.0);
  CHECK(p.at(10.0).q == 3.0);
  p.p_mw[1] = -1.0;
  CHECK_THROWS_AS(p.validate(), StructuralError);
  p.q_mvar.pop_back();
  CHECK_THROWS_AS(p.validate(), StructuralError);
}

TEST_CASE("synthetic load profiles stay in band and are seeded") {
  const auto a = synthetic_load_profile(500.0, 100.0, 60.0, 7);
  const auto b = synthetic_load_profile(500.0, 100.0, 60.0, 7);
  const auto c = synthetic_load_profile(500.0, 100.0, 60.0, 8);
  CHECK(a.p_mw.size() == 3001);
  CHECK(a.p_mw.front() == 500.0);
  CHECK(a.p_mw == b.p_mw);
  CHECK(a.p_mw != c.p_mw);
  for (std::size_t k = 0; k < a.p_mw.size(); ++k) {
    REQUIRE(a.p_mw[k] >= 495.0 - 1e-9);
    REQUIRE(a.p_mw[k] <= 505.0 + 1e-9);
    REQUIRE(a.q_mvar[k] / a.p_mw[k] == Approx(0.2).epsilon(1e-12));
  }
}

TEST_CASE("load profile file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "rms39_test_loads";
  std::filesystem::create_directories(dir);
  const auto path = (dir / load_profile_name(16)).string();
  CHECK(load_profile_name(16) == "load_16.csv");
  const auto a = synthetic_load_profile(329.0, 32.3, 2.0, 3);
  write_load_profile(path, a);
  const auto b = read_load_profile(path);
  REQUIRE(b.p_mw.size() == a.p_mw.size());
  for (std::size_t k = 0; k < a.p_mw.size(); ++k) {
    CHECK(b.p_mw[k] == Approx(a.p_mw[k]).epsilon(1e-9));
    CHECK(b.q_mvar[k] == Approx(a.q_mvar[k]).epsilon(1e-9));
  }
  {
    std::ofstream bad(path);
    bad << "t_ms,P0_MW,Q0_MVar\n0,1,1\n30,1,1\n";
  }
  CHECK_THROWS_AS(read_load_profile(path), ScenarioError);
  CHECK_THROWS_AS(read_load_profile((dir / "missing.csv").string()), ScenarioError);
  std::filesystem::remove_all(dir);
}
