#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "selforg/constants.hpp"
#include "selforg/dynamics.hpp"
#include "selforg/random.hpp"

namespace selforg {

// LO phase relative to the pump: phi(t) = initial + rate * t + random walk.
// The total excursion is confined to +-bound by reflection.
struct LoDrift {
  double initial_phase = 0.0;
  double rate = 0.0;         // rad/s
  double random_walk = 0.0;  // rad/sqrt(s)
  double bound = 0.9 * pi;
};

class LoPhaseTrack {
 public:
  LoPhaseTrack() = default;
  // Samples the random walk on a 1 us grid over [0, duration].
  LoPhaseTrack(const LoDrift& drift, double duration, Rng& rng);

  double operator()(double t) const;

 private:
  double initial_ = 0.0;
  double grid_ = 1e-6;
  std::vector<double> excursion_;  // relative to initial, on the grid
  double rate_ = 0.0;
};

struct HeterodyneConfig {
  double beat_freq = two_pi * 20e6;  // rad/s
  double sample_rate = 100e6;        // samples/s
  double gain = 1.0;                 // V per sqrt(photon)
  LoDrift lo_drift;
  // Field-equivalent shot noise per quadrature, sqrt(photon) * sqrt(s).
  double shot_noise_density = 0.0;
  // Additive detector noise, V rms per sample.
  double detector_noise = 0.0;
  double window = 5e-6;
  double step = 1e-6;

  int window_samples() const;
  int step_samples() const;
  void validate() const;

  // Per-quadrature rms of the demodulated amplitude from both noise terms,
  // in sqrt(photon) units. Scales as 1/sqrt(window).
  double demod_noise_sigma() const;
};

struct VoltageTrace {
  double t0 = 0.0;  // time of sample 0 on the sequence clock
  double sample_rate = 0.0;
  double gain = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> samples;
};

enum class FrameKind { kAntinodeReference, kNodeMeasurement };

struct DemodTrace {
  std::vector<double> times;  // window centers, sequence clock
  std::vector<std::complex<double>> amplitudes;
  int frame_id = 0;
  FrameKind kind = FrameKind::kNodeMeasurement;
  double pca_angle = 0.0;  // calibrated axis; set by calibrate_frames
  std::vector<double> c_proj;
};

// V = G Im(c(t) e^{i phi(t)} e^{i w t}) + noise, sampled from
// field.times.front() + time_offset to field.times.back() + time_offset.
// The field trace is linearly interpolated between its snapshots.
VoltageTrace synthesize_voltage(const FieldTrace& field,
                                const HeterodyneConfig& config, Rng& rng,
                                const LoPhaseTrack& lo_phase = {},
                                double time_offset = 0.0);

// Hann-windowed DFT at the beat frequency, normalized so a field c gives
// back c e^{i phi}. Throws SignalError if the beat frequency is not an exact
// bin of the window or the trace is shorter than one window.
DemodTrace demodulate(const VoltageTrace& voltage,
                      const HeterodyneConfig& config);

// Equivalent demodulator output computed from the field directly: the
// Hann-weighted mean of c e^{i phi} on the same window grid, plus complex
// Gaussian noise of demod_noise_sigma() per quadrature.
DemodTrace demodulate_fast(const FieldTrace& field,
                           const HeterodyneConfig& config, Rng& rng,
                           const LoPhaseTrack& lo_phase = {},
                           double time_offset = 0.0);

// Field rotated into the projection frame so real part equals c_proj.
FieldTrace projected_frame(const TrajectoryTrace& trace);

// Major-axis angle in [0, pi) of the uncentered second-moment matrix.
// Throws SignalError when the relative eigenvalue split is below tolerance.
double pca_phase(std::span<const std::complex<double>> points,
                 double tolerance = 1e-3);

struct CalibrationOptions {
  double ambiguity_tolerance = 1e-3;  // rad around pi/2
  double pca_tolerance = 1e-3;
};

// Resolves signs and projection axes for a sequence that starts and ends
// with antinode references. Fills pca_angle and c_proj of every frame and
// returns the node frames. Throws SignalError on drift >= pi or ambiguity.
std::vector<DemodTrace> calibrate_frames(std::vector<DemodTrace>& frames,
                                         const CalibrationOptions& options = {});

// Non-overlapping block means of a uniformly sampled trace.
std::vector<double> moving_average(std::span<const double> trace,
                                   double sample_interval,
                                   double averaging_time);

void write_voltage(std::ostream& out, const VoltageTrace& voltage);
VoltageTrace read_voltage(std::istream& in);

// JSON lines of (t, re, im, c_proj, frame).
void write_demod_jsonl(std::ostream& out, const DemodTrace& trace);

}  // namespace selforg
