#pragma once

// Voltage- and frequency-dependent dynamic load with buffered frequency and
// windowed RMS voltage measurements.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rms39/common.hpp"

namespace rms39 {

struct LoadParams {
  double kpv = 1.0;
  double kpf = 1.0;
  double kqv = 2.0;
  double kqf = -1.0;
  double v0 = 1.0;  ///< pu
  double f0 = 1.0;  ///< pu
  /// Below this voltage the load behaves as constant impedance.
  double collapse_voltage = 0.3;
};

struct PQ {
  double p = 0.0;
  double q = 0.0;
};

/// P = P0 (V/V0)^Kpv [1 + Kpf (f - f0)], Q likewise with Kqv, Kqf.
inline PQ load_power(double p0, double q0, double v, double f, const LoadParams& k) {
  if (!(v > 0.0)) return {};
  const double df = f - k.f0;
  if (v < k.collapse_voltage) {
    const PQ edge = load_power(p0, q0, k.collapse_voltage, f, k);
    const double z = (v / k.collapse_voltage) * (v / k.collapse_voltage);
    return {edge.p * z, edge.q * z};
  }
  const double vr = v / k.v0;
  return {p0 * std::pow(vr, k.kpv) * (1.0 + k.kpf * df), q0 * std::pow(vr, k.kqv) * (1.0 + k.kqf * df)};
}

/// Fixed-length sample window refreshed on a report interval. Samples arrive
/// on the 1 ms grid; the reported value holds between reports. In RMS mode the
/// window stores squares and reports the root of their mean.
class WindowedMeasurement {
public:
  enum class Mode { Mean, Rms };

  WindowedMeasurement(Mode mode, std::size_t window, std::size_t report_every, double initial)
      : buffer_(window), report_every_(report_every), mode_(mode) {
    if (window == 0 || report_every == 0 || report_every > window)
      throw DomainError("measurement window must hold at least one report interval");
    reset(initial);
  }

  std::size_t window() const { return buffer_.size(); }
  std::size_t report_interval() const { return report_every_; }
  std::size_t overlap() const { return buffer_.size() - report_every_; }
  double reported() const { return reported_; }

  /// Refills the window with a steady value.
  void reset(double value) {
    std::fill(buffer_.begin(), buffer_.end(), mode_ == Mode::Rms ? value * value : value);
    head_ = 0;
    since_report_ = 0;
    reported_ = value;
  }

  double push(double sample) {
    buffer_[head_] = mode_ == Mode::Rms ? sample * sample : sample;
    head_ = (head_ + 1) % buffer_.size();
    if (++since_report_ == report_every_) {
      since_report_ = 0;
      double sum = 0.0;
      for (double x : buffer_) sum += x;
      const double mean = sum / static_cast<double>(buffer_.size());
      reported_ = mode_ == Mode::Rms ? std::sqrt(mean) : mean;
    }
    return reported_;
  }

private:
  std::vector<double> buffer_;
  std::size_t report_every_;
  Mode mode_;
  std::size_t head_ = 0;
  std::size_t since_report_ = 0;
  double reported_ = 0.0;
};

/// 240-sample buffer, 220-sample overlap: the mean is reported every 20 samples.
class FrequencyMeasurement : public WindowedMeasurement {
public:
  explicit FrequencyMeasurement(double initial = 1.0) : WindowedMeasurement(Mode::Mean, 240, 20, initial) {}
};

/// RMS over a 240 ms window, reported every 20 ms.
class VoltageMeasurement : public WindowedMeasurement {
public:
  explicit VoltageMeasurement(double initial = 1.0) : WindowedMeasurement(Mode::Rms, 240, 20, initial) {}
};

inline std::pair<FrequencyMeasurement, double> frequency_measurement_step(FrequencyMeasurement meas,
                                                                          double raw_estimate) {
  const double f = meas.push(raw_estimate);
  return {std::move(meas), f};
}

inline std::pair<VoltageMeasurement, double> rms_measurement_step(VoltageMeasurement meas, double magnitude) {
  const double v = meas.push(magnitude);
  return {std::move(meas), v};
}

/// Demand time series on a fixed 20 ms grid; zero-order hold in between.
struct LoadProfile {
  double step = 0.02;  ///< s
  std::vector<double> p_mw;
  std::vector<double> q_mvar;

  bool empty() const { return p_mw.empty(); }

  PQ at(double t) const {
    if (p_mw.empty()) return {};
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / step + 1e-9)));
    k = std::min(k, p_mw.size() - 1);
    return {p_mw[k], q_mvar[k]};
  }

  void validate() const {
    if (p_mw.size() != q_mvar.size()) throw StructuralError("load profile P and Q lengths differ");
    for (double p : p_mw)
      if (p < 0.0) throw StructuralError("load profile has negative active power");
  }
};

}  // namespace rms39
