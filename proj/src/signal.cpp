#include "selforg/signal.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <iomanip>
#include <istream>
#include <ostream>

#include "selforg/errors.hpp"

namespace selforg {

namespace {

double wrap_pi(double a) {  // to (-pi, pi]
  a = std::remainder(a, two_pi);
  return a <= -pi ? a + two_pi : a;
}

double wrap_half_pi(double a) {  // to (-pi/2, pi/2]
  a = std::remainder(a, pi);
  return a <= -pi / 2 ? a + pi : a;
}

double hann(int n, int length) {
  return 0.5 * (1.0 - std::cos(two_pi * n / length));
}

// Linear interpolation of a complex trace sampled at increasing times.
class FieldInterpolator {
 public:
  explicit FieldInterpolator(const FieldTrace& f) : f_(f) {
    if (f_.times.size() < 2) throw SignalError("field trace needs >= 2 samples");
  }

  std::complex<double> operator()(double t) {
    const auto& ts = f_.times;
    if (t <= ts.front()) return f_.field.front();
    if (t >= ts.back()) return f_.field.back();
    while (idx_ + 1 < ts.size() && ts[idx_ + 1] < t) ++idx_;
    while (idx_ > 0 && ts[idx_] > t) --idx_;
    const double u = (t - ts[idx_]) / (ts[idx_ + 1] - ts[idx_]);
    return (1.0 - u) * f_.field[idx_] + u * f_.field[idx_ + 1];
  }

 private:
  const FieldTrace& f_;
  std::size_t idx_ = 0;
};

}  // namespace

LoPhaseTrack::LoPhaseTrack(const LoDrift& drift, double duration, Rng& rng)
    : initial_(drift.initial_phase), rate_(drift.rate) {
  if (std::abs(drift.rate * duration) > drift.bound) {
    throw SignalError("deterministic LO drift exceeds the configured bound");
  }
  const auto n = static_cast<std::size_t>(std::ceil(duration / grid_)) + 2;
  excursion_.assign(n, 0.0);
  if (drift.random_walk <= 0) return;
  std::normal_distribution<double> normal(0.0, drift.random_walk * std::sqrt(grid_));
  double walk = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    walk += normal(rng);
    const double total = drift.rate * grid_ * static_cast<double>(i) + walk;
    if (total > drift.bound) walk -= 2.0 * (total - drift.bound);
    if (total < -drift.bound) walk -= 2.0 * (total + drift.bound);
    excursion_[i] = walk;
  }
}

double LoPhaseTrack::operator()(double t) const {
  double walk = 0.0;
  if (!excursion_.empty()) {
    const double x = std::clamp(t / grid_, 0.0, double(excursion_.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(x), excursion_.size() - 2);
    const double u = x - static_cast<double>(i);
    walk = (1.0 - u) * excursion_[i] + u * excursion_[i + 1];
  }
  return initial_ + rate_ * t + walk;
}

int HeterodyneConfig::window_samples() const {
  return static_cast<int>(std::lround(window * sample_rate));
}
int HeterodyneConfig::step_samples() const {
  return static_cast<int>(std::lround(step * sample_rate));
}

void HeterodyneConfig::validate() const {
  if (!(beat_freq > 0)) throw ConfigError("beat_freq", "must be > 0");
  if (!(sample_rate > 4.0 * beat_freq / two_pi))
    throw ConfigError("sample_rate", "must exceed 4x the beat frequency");
  if (std::abs(window * sample_rate - window_samples()) > 1e-6 ||
      window_samples() < 2)
    throw ConfigError("window", "must be an integer number of samples");
  if (std::abs(step * sample_rate - step_samples()) > 1e-6 || step_samples() < 1)
    throw ConfigError("step", "must be an integer number of samples");
  if (!(gain > 0)) throw ConfigError("gain", "must be > 0");
  if (shot_noise_density < 0) throw ConfigError("shot_noise_density", "must be >= 0");
  if (detector_noise < 0) throw ConfigError("detector_noise", "must be >= 0");
}

double HeterodyneConfig::demod_noise_sigma() const {
  const double shot = shot_noise_density * shot_noise_density * 3.0 / window;
  const double det = 3.0 * detector_noise * detector_noise /
                     (window_samples() * gain * gain);
  return std::sqrt(shot + det);
}

VoltageTrace synthesize_voltage(const FieldTrace& field,
                                const HeterodyneConfig& config, Rng& rng,
                                const LoPhaseTrack& lo_phase,
                                double time_offset) {
  config.validate();
  FieldInterpolator interp(field);
  VoltageTrace v;
  v.sample_rate = config.sample_rate;
  v.gain = config.gain;
  v.t0 = field.times.front() + time_offset;
  const double span = field.times.back() - field.times.front();
  const auto n = static_cast<std::size_t>(std::floor(span * config.sample_rate + 1e-9)) + 1;
  v.samples.resize(n);

  const double sigma_v =
      std::sqrt(std::pow(config.gain * config.shot_noise_density, 2) *
                    config.sample_rate +
                config.detector_noise * config.detector_noise);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double local = static_cast<double>(i) / config.sample_rate;
    const double t = v.t0 + local;
    const std::complex<double> c =
        interp(field.times.front() + local) * std::polar(1.0, lo_phase(t));
    double s = config.gain * (c * std::polar(1.0, config.beat_freq * t)).imag();
    if (sigma_v > 0) s += sigma_v * normal(rng);
    v.samples[i] = s;
  }
  return v;
}

DemodTrace demodulate(const VoltageTrace& voltage,
                      const HeterodyneConfig& config) {
  config.validate();
  const int length = config.window_samples();
  const int stride = config.step_samples();
  const double cycles = config.beat_freq / two_pi * config.window;
  if (std::abs(cycles - std::round(cycles)) > 1e-6) {
    throw SignalError("beat frequency is not an exact bin of the window");
  }
  if (voltage.samples.size() < static_cast<std::size_t>(length)) {
    throw SignalError("voltage trace is shorter than one window");
  }
  std::vector<double> weights(length);
  double weight_sum = 0.0;
  for (int n = 0; n < length; ++n) weight_sum += weights[n] = hann(n, length);

  DemodTrace out;
  const double norm = 2.0 / (voltage.gain * weight_sum);
  const double w = config.beat_freq;
  const std::complex<double> i_unit(0.0, 1.0);
  for (std::size_t start = 0; start + length <= voltage.samples.size();
       start += stride) {
    std::complex<double> acc{};
    for (int n = 0; n < length; ++n) {
      const double t = voltage.t0 + static_cast<double>(start + n) / voltage.sample_rate;
      acc += weights[n] * voltage.samples[start + n] * std::polar(1.0, -w * t);
    }
    out.amplitudes.push_back(i_unit * norm * acc);
    out.times.push_back(voltage.t0 +
                        (static_cast<double>(start) + 0.5 * length) / voltage.sample_rate);
  }
  return out;
}

DemodTrace demodulate_fast(const FieldTrace& field,
                           const HeterodyneConfig& config, Rng& rng,
                           const LoPhaseTrack& lo_phase, double time_offset) {
  config.validate();
  const int length = config.window_samples();
  const int stride = config.step_samples();
  // Evaluate on a coarser sub-grid when it divides both window and step.
  const int coarse = (length % 10 == 0 && stride % 10 == 0) ? 10 : 1;
  const int points = length / coarse;
  const double dt = coarse / config.sample_rate;

  FieldInterpolator interp(field);
  const double t0 = field.times.front();
  const double span = field.times.back() - t0;
  const auto n_samples =
      static_cast<std::size_t>(std::floor(span * config.sample_rate + 1e-9)) + 1;
  if (n_samples < static_cast<std::size_t>(length)) {
    throw SignalError("field trace is shorter than one window");
  }
  const std::size_t n_windows = (n_samples - length) / stride + 1;
  const std::size_t n_grid = (n_windows - 1) * (stride / coarse) + points;

  const double sigma_q = config.demod_noise_sigma();
  const double sigma_point = sigma_q * std::sqrt(2.0 * points / 3.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::complex<double>> grid(n_grid);
  for (std::size_t g = 0; g < n_grid; ++g) {
    const double local = static_cast<double>(g) * dt;
    grid[g] = interp(t0 + local) * std::polar(1.0, lo_phase(t0 + time_offset + local));
    if (sigma_point > 0) {
      const double re = normal(rng);
      const double im = normal(rng);
      grid[g] += sigma_point * std::complex<double>(re, im);
    }
  }
  std::vector<double> weights(points);
  double weight_sum = 0.0;
  for (int n = 0; n < points; ++n) weight_sum += weights[n] = hann(n, points);

  DemodTrace out;
  for (std::size_t j = 0; j < n_windows; ++j) {
    const std::size_t first = j * (stride / coarse);
    std::complex<double> acc{};
    for (int n = 0; n < points; ++n) acc += weights[n] * grid[first + n];
    out.amplitudes.push_back(acc / weight_sum);
    out.times.push_back(t0 + time_offset +
                        (static_cast<double>(j * stride) + 0.5 * length) /
                            config.sample_rate);
  }
  return out;
}

FieldTrace projected_frame(const TrajectoryTrace& trace) {
  FieldTrace ft;
  ft.times = trace.times;
  ft.field.reserve(trace.fields.size());
  for (const auto& f : trace.fields) {
    ft.field.push_back(f.field * std::polar(1.0, -f.proj_angle));
    ft.c_proj.push_back(f.c_proj);
  }
  return ft;
}

double pca_phase(std::span<const std::complex<double>> points,
                 double tolerance) {
  if (points.size() < 2) throw SignalError("PCA needs at least two points");
  Eigen::Matrix2d moment = Eigen::Matrix2d::Zero();
  for (const auto& c : points) {
    const Eigen::Vector2d v(c.real(), c.imag());
    moment.noalias() += v * v.transpose();
  }
  moment /= static_cast<double>(points.size());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(moment);
  const double major = es.eigenvalues()[1];
  const double minor = es.eigenvalues()[0];
  if (!(major > 0) || (major - minor) / major < tolerance) {
    throw SignalError("degenerate point cloud: no principal axis");
  }
  const Eigen::Vector2d axis = es.eigenvectors().col(1);
  double angle = std::atan2(axis.y(), axis.x());
  angle = std::fmod(angle + two_pi, pi);
  return angle >= pi ? angle - pi : angle;
}

namespace {

double frame_time(const DemodTrace& f) {
  return f.times.empty() ? 0.0 : 0.5 * (f.times.front() + f.times.back());
}

void project_frame(DemodTrace& f, double angle) {
  f.pca_angle = angle;
  f.c_proj.resize(f.amplitudes.size());
  for (std::size_t i = 0; i < f.amplitudes.size(); ++i)
    f.c_proj[i] = project(f.amplitudes[i], angle);
}

// Reference direction: PCA axis oriented so the mean projection is positive.
double reference_phase(const DemodTrace& f, double tolerance) {
  const double axis = pca_phase(f.amplitudes, tolerance);
  double mean = 0.0;
  for (const auto& a : f.amplitudes) mean += project(a, axis);
  return mean >= 0 ? axis : axis + pi;
}

}  // namespace

std::vector<DemodTrace> calibrate_frames(std::vector<DemodTrace>& frames,
                                         const CalibrationOptions& options) {
  if (frames.size() < 2 || frames.front().kind != FrameKind::kAntinodeReference ||
      frames.back().kind != FrameKind::kAntinodeReference) {
    throw SignalError("sequence must start and end with antinode references");
  }
  const double first = reference_phase(frames.front(), options.pca_tolerance);
  const double last = reference_phase(frames.back(), options.pca_tolerance);

  // Track the axis through the sequence modulo pi to resolve whole turns of
  // the drift that the two references alone cannot distinguish.
  std::vector<std::optional<double>> axes(frames.size());
  double unwrapped = first;
  bool tracked = false;
  for (std::size_t i = 1; i < frames.size(); ++i) {
    std::optional<double> axis;
    if (i + 1 == frames.size()) {
      axis = last;
    } else {
      try {
        axis = pca_phase(frames[i].amplitudes, options.pca_tolerance);
        tracked = true;
      } catch (const SignalError&) {
      }
    }
    axes[i] = axis;
    if (axis) unwrapped += wrap_half_pi(*axis - unwrapped);
  }
  double drift = wrap_pi(last - first);
  if (tracked) {
    const double estimate = unwrapped - first;
    drift += two_pi * std::round((estimate - drift) / two_pi);
  }
  if (std::abs(drift) >= pi) {
    throw SignalError("LO phase drift between references is >= pi");
  }

  const double t_first = frame_time(frames.front());
  const double t_last = frame_time(frames.back());
  project_frame(frames.front(), first);
  project_frame(frames.back(), last);

  std::vector<DemodTrace> nodes;
  for (std::size_t i = 1; i + 1 < frames.size(); ++i) {
    DemodTrace& f = frames[i];
    const double u = t_last > t_first ? (frame_time(f) - t_first) / (t_last - t_first)
                                      : static_cast<double>(i) / (frames.size() - 1);
    const double expected = first + drift * u;
    double angle = expected;
    if (axes[i]) {
      const double offset = wrap_pi(*axes[i] - expected);
      if (std::abs(std::abs(offset) - pi / 2) < options.ambiguity_tolerance) {
        throw SignalError("frame axis is ambiguous: pi/2 from the interpolated reference");
      }
      angle = std::abs(offset) < pi / 2 ? *axes[i] : *axes[i] + pi;
    }
    project_frame(f, angle);
    if (f.kind == FrameKind::kNodeMeasurement) nodes.push_back(f);
  }
  return nodes;
}

std::vector<double> moving_average(std::span<const double> trace,
                                   double sample_interval,
                                   double averaging_time) {
  if (averaging_time < 5e-6 * (1 - 1e-9)) {
    throw AnalysisError("averaging time must be at least 5 us");
  }
  const auto block = static_cast<std::size_t>(
      std::max(1L, std::lround(averaging_time / sample_interval)));
  if (trace.size() < block) {
    throw AnalysisError("trace is shorter than the averaging window");
  }
  std::vector<double> out;
  out.reserve(trace.size() / block);
  for (std::size_t start = 0; start + block <= trace.size(); start += block) {
    double sum = 0.0;
    for (std::size_t i = start; i < start + block; ++i) sum += trace[i];
    out.push_back(sum / static_cast<double>(block));
  }
  return out;
}

void write_voltage(std::ostream& out, const VoltageTrace& v) {
  // Header: magic, sample_rate, gain, t0, seed, count; then raw doubles.
  const char magic[8] = {'S', 'O', 'V', 'O', 'L', 'T', '0', '1'};
  out.write(magic, sizeof magic);
  const auto put = [&](const auto& x) {
    out.write(reinterpret_cast<const char*>(&x), sizeof x);
  };
  put(v.sample_rate);
  put(v.gain);
  put(v.t0);
  put(v.seed);
  const std::uint64_t n = v.samples.size();
  put(n);
  out.write(reinterpret_cast<const char*>(v.samples.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
}

VoltageTrace read_voltage(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string(magic, 8) != "SOVOLT01") {
    throw SignalError("not a voltage trace file");
  }
  VoltageTrace v;
  const auto get = [&](auto& x) {
    in.read(reinterpret_cast<char*>(&x), sizeof x);
  };
  get(v.sample_rate);
  get(v.gain);
  get(v.t0);
  get(v.seed);
  std::uint64_t n = 0;
  get(n);
  v.samples.resize(n);
  in.read(reinterpret_cast<char*>(v.samples.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw SignalError("truncated voltage trace");
  return v;
}

void write_demod_jsonl(std::ostream& out, const DemodTrace& trace) {
  for (std::size_t i = 0; i < trace.amplitudes.size(); ++i) {
    nlohmann::json j = {{"t", trace.times[i]},
                        {"re", trace.amplitudes[i].real()},
                        {"im", trace.amplitudes[i].imag()},
                        {"c_proj", i < trace.c_proj.size() ? trace.c_proj[i]
                                                           : trace.amplitudes[i].real()},
                        {"frame", trace.frame_id}};
    out << j.dump() << '\n';
  }
}

}  // namespace selforg
