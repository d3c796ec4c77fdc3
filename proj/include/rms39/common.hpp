#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rms39 {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kBaseMva = 100.0;
inline constexpr double kNominalHz = 60.0;
inline constexpr double kOmega0 = 2.0 * kPi * kNominalHz;

/// Base of every library exception.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent input data (unknown bus, duplicate id, bad table shape).
class StructuralError : public Error {
public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
  using Error::Error;
};

class NonconvergenceError : public Error {
public:
  NonconvergenceError(const std::string& what, double last_mismatch, int iterations)
      : Error(what + " (last mismatch " + std::to_string(last_mismatch) + " after " +
              std::to_string(iterations) + " iterations)"),
        last_mismatch_(last_mismatch), iterations_(iterations) {}

  double last_mismatch() const noexcept { return last_mismatch_; }
  int iterations() const noexcept { return iterations_; }

private:
  double last_mismatch_;
  int iterations_;
};

class SingularNetworkError : public Error {
public:
  using Error::Error;
};

class InitializationError : public Error {
public:
  InitializationError(const std::string& device, const std::string& what)
      : Error("initialization of " + device + ": " + what), device_(device) {}

  const std::string& device() const noexcept { return device_; }

private:
  std::string device_;
};

/// Malformed scenario, dataset or trace file. `field()` names the offending entry.
class ScenarioError : public Error {
public:
  ScenarioError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

class SimulationAbort : public Error {
public:
  SimulationAbort(double time, const std::string& what)
      : Error("simulation aborted at t=" + std::to_string(time) + " s: " + what), time_(time) {}

  double time() const noexcept { return time_; }

private:
  double time_;
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace rms39
