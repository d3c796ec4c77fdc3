#include "catch_amalgamated.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "rms39/profiles.hpp"
#include "rms39/wind.hpp"

using namespace rms39;
using Catch::Approx;

namespace {

WindPlant plant(double rating = 500.0, double start = 0.0) {
  WindPlant w;
  w.params = aggregate_wind_plant("WP", 30, rating);
  w.power = start;
  return w;
}

}  // namespace

TEST_CASE("aggregation scales a single turbine") {
  const auto p = aggregate_wind_plant("WP1", 30, 1500.0);
  CHECK(p.turbine_count == 300.0);
  CHECK(p.rating_mva() == Approx(1500.0));
  CHECK(p.rating_pu() == Approx(15.0));
  CHECK_THROWS_AS(aggregate_wind_plant("X", 1, 0.0), DomainError);
}

TEST_CASE("held profile converges to the setpoint with zero reactive power") {
  auto w = plant(500.0, 0.3);
  Complex i;
  for (int k = 0; k < 2000; ++k) std::tie(w, i) = wind_injection_step(w, 0.8, {1.0, 0.0}, 1e-3);
  const Complex s = Complex(1.0, 0.0) * std::conj(i);
  CHECK(s.real() == Approx(0.8 * 5.0).epsilon(1e-12));
  CHECK(std::abs(s.imag()) < 1e-15);
}

TEST_CASE("current equals S over V") {
  auto w = plant(100.0, 0.9);
  const Complex v = std::polar(0.9, 0.4);
  const Complex i = wind_current(w, v);
  CHECK(std::abs(i) == Approx(1.0).epsilon(1e-14));
  CHECK(std::abs((v * std::conj(i)).imag()) < 1e-14);
}

TEST_CASE("tracking lag is first order") {
  auto w = plant(100.0, 0.5);
  Complex i;
  const double tau = w.params.time_constant;
  for (int k = 1; k <= 200; ++k) {
    std::tie(w, i) = wind_injection_step(w, 0.6, {1.0, 0.0}, 1e-3);
    REQUIRE(w.power == Approx(0.6 - 0.1 * std::exp(-1e-3 * k / tau)).margin(1e-13));
  }
}

TEST_CASE("apparent power never exceeds the current limit") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> vm(0.01, 1.2), ang(-3.0, 3.0), lvl(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    auto w = plant(300.0, lvl(rng));
    const Complex v = std::polar(vm(rng), ang(rng));
    bool limited = false;
    const Complex i = wind_current(w, v, &limited);
    const double s = std::abs(v * std::conj(i));
    REQUIRE(s <= 3.0 * 1.1 * std::abs(v) + 1e-12);
    REQUIRE(std::abs((v * std::conj(i)).imag()) < 1e-12);
    if (std::abs(v) < 0.1 && w.power > 0.0) {
      REQUIRE(std::abs(i) <= 3.0 * 1.1 + 1e-12);
    }
  }
}

TEST_CASE("deep sag flags curtailment") {
  auto w = plant(100.0, 0.9);
  Complex i;
  std::tie(w, i) = wind_injection_step(w, 0.9, {0.05, 0.0}, 1e-3);
  CHECK(w.curtailed);
  CHECK(std::abs(i) == Approx(1.1).epsilon(1e-12));
  std::tie(w, i) = wind_injection_step(w, 0.9, {1.0, 0.0}, 1e-3);
  CHECK_FALSE(w.curtailed);
}

TEST_CASE("out-of-service plants inject nothing") {
  auto w = plant(100.0, 0.9);
  w.in_service = false;
  CHECK(wind_current(w, {1.0, 0.0}) == Complex(0.0, 0.0));
}

TEST_CASE("resampling examples") {
  const auto flat = resample_profile({0.7, 0.7, 0.7}, 0.0);
  CHECK(flat.size() == 121);
  for (double v : flat) REQUIRE(v == 0.7);
  const auto ramp = resample_profile({0.4, 0.6}, 0.0);
  CHECK(ramp[30] == Approx(0.5).margin(1e-15));
  CHECK(ramp.back() == 0.6);
  CHECK_THROWS_AS(resample_profile({}), DomainError);
  CHECK_THROWS_AS(resample_profile({1.2}), DomainError);
}

TEST_CASE("resampling noise is seeded with the configured variance") {
  const std::vector<double> minutes(200, 0.5);
  const double sigma = 0.01;
  const auto a = resample_profile(minutes, sigma, 42);
  const auto b = resample_profile(minutes, sigma, 42);
  const auto c = resample_profile(minutes, sigma, 43);
  CHECK(a == b);
  CHECK(a != c);
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  var /= static_cast<double>(a.size() - 1);
  CHECK(var == Approx(sigma * sigma).epsilon(0.2));
  for (double x : a) REQUIRE((x >= 0.0 && x <= 1.0));
}

TEST_CASE("wind profile interpolation") {
  WindProfile p;
  p.values = {0.2, 0.4, 0.8};
  CHECK(p.at(0.0) == 0.2);
  CHECK(p.at(0.5) == Approx(0.3));
  CHECK(p.at(1.25) == Approx(0.5));
  CHECK(p.at(100.0) == 0.8);
}

TEST_CASE("synthetic wind profile starts at its level and round trips") {
  const auto w = synthetic_wind_profile(0.89, 180.0, 5);
  CHECK(w.values.front() == 0.89);
  CHECK(w.values.size() >= 181);
  const auto dir = std::filesystem::temp_directory_path() / "rms39_test_wind";
  std::filesystem::create_directories(dir);
  const auto path = (dir / wind_profile_name("WP2")).string();
  write_wind_profile(path, w);
  const auto r = read_wind_profile(path);
  REQUIRE(r.values.size() == w.values.size());
  for (std::size_t k = 0; k < r.values.size(); ++k) CHECK(r.values[k] == Approx(w.values[k]).margin(1e-9));
  {
    std::ofstream bad(path);
    bad << "t_s,p_pu\n0,0.5\n1,1.5\n";
  }
  CHECK_THROWS_AS(read_wind_profile(path), ScenarioError);
  std::filesystem::remove_all(dir);
}
