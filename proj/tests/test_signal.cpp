#include "doctest.h"

#include <sstream>

#include "selforg/errors.hpp"
#include "selforg/signal.hpp"
#include "synthetic.hpp"

using namespace selforg;
using selforg::testing::real_field;

namespace {

struct Moments {
  double var_re = 0, var_im = 0, cov = 0;
  std::size_t n = 0;
};

Moments noise_moments(const std::vector<std::complex<double>>& a) {
  Moments m;
  for (const auto& z : a) {
    m.var_re += z.real() * z.real();
    m.var_im += z.imag() * z.imag();
    m.cov += z.real() * z.imag();
  }
  m.n = a.size();
  m.var_re /= m.n;
  m.var_im /= m.n;
  m.cov /= m.n;
  return m;
}

}  // namespace

TEST_SUITE("signal") {

TEST_CASE("demodulation returns the field times the LO phasor") {
  HeterodyneConfig het;
  het.lo_drift.initial_phase = 0.7;
  Rng rng(1);
  const LoPhaseTrack lo(het.lo_drift, 40e-6, rng);
  const std::complex<double> c(3.0, -1.2);
  FieldTrace f = real_field(30e-6, 0.1e-6, [](double) { return 0.0; });
  for (auto& x : f.field) x = c;
  const DemodTrace full = demodulate(synthesize_voltage(f, het, rng, lo), het);
  const DemodTrace fast = demodulate_fast(f, het, rng, lo);
  REQUIRE(full.amplitudes.size() == fast.amplitudes.size());
  const auto expected = c * std::polar(1.0, 0.7);
  for (std::size_t i = 0; i < full.amplitudes.size(); ++i) {
    CHECK(std::abs(full.amplitudes[i] - expected) < 1e-9 * std::abs(c));
    CHECK(std::abs(fast.amplitudes[i] - expected) < 1e-9 * std::abs(c));
    CHECK(full.times[i] == doctest::Approx(fast.times[i]));
  }
  CHECK(full.times.front() == doctest::Approx(2.5e-6));
}

TEST_CASE("beat frequency off the window grid is rejected") {
  HeterodyneConfig het;
  het.beat_freq = two_pi * 20.1e6;
  Rng rng(1);
  const FieldTrace f = real_field(20e-6, 0.1e-6, [](double) { return 1.0; });
  CHECK_THROWS_AS(demodulate(synthesize_voltage(f, het, rng), het), SignalError);
}

TEST_CASE("demodulated noise is isotropic with the predicted variance") {
  HeterodyneConfig het;
  het.step = het.window;  // independent windows
  het.shot_noise_density = 2e-3;
  het.detector_noise = 0.05;
  const double sigma = het.demod_noise_sigma();
  const FieldTrace f = real_field(1e-3, 1e-6, [](double) { return 0.0; });
  std::vector<std::complex<double>> full, fast;
  for (int seed = 0; seed < 8; ++seed) {
    Rng rng(100 + seed);
    const auto a = demodulate(synthesize_voltage(f, het, rng), het).amplitudes;
    full.insert(full.end(), a.begin(), a.end());
    const auto b = demodulate_fast(f, het, rng).amplitudes;
    fast.insert(fast.end(), b.begin(), b.end());
  }
  for (const auto* set : {&full, &fast}) {
    const Moments m = noise_moments(*set);
    const double tol = 5.0 * std::sqrt(2.0 / m.n);
    CHECK(m.var_re / (sigma * sigma) == doctest::Approx(1.0).epsilon(tol));
    CHECK(m.var_im / (sigma * sigma) == doctest::Approx(1.0).epsilon(tol));
    CHECK(std::abs(m.cov) / (sigma * sigma) < tol);
  }
}

TEST_CASE("noise per window falls as one over the square root of its length") {
  HeterodyneConfig a, b;
  a.shot_noise_density = b.shot_noise_density = 1e-3;
  b.window = 4 * a.window;
  CHECK(a.demod_noise_sigma() / b.demod_noise_sigma() == doctest::Approx(2.0));
}

TEST_CASE("PCA axis rotates with the point cloud") {
  Rng rng(7);
  std::normal_distribution<double> major(0.0, 2.0), minor(0.0, 0.3);
  std::vector<std::complex<double>> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(major(rng), minor(rng));
  const double base = pca_phase(pts);
  for (double alpha : {0.3, 1.2, 2.9, -0.8}) {
    std::vector<std::complex<double>> rot;
    for (const auto& p : pts) rot.push_back(p * std::polar(1.0, alpha));
    const double got = pca_phase(rot);
    const double diff = std::remainder(got - base - alpha, pi);
    CHECK(std::abs(diff) < 1e-10);
  }
}

TEST_CASE("PCA rejects an isotropic cloud") {
  std::vector<std::complex<double>> ring;
  for (int i = 0; i < 64; ++i) ring.push_back(std::polar(1.0, two_pi * i / 64));
  CHECK_THROWS_AS(pca_phase(ring), SignalError);
}

TEST_CASE("calibration resolves the sign under a large LO drift") {
  HeterodyneConfig het;
  het.shot_noise_density = 1e-4;  // per-window sigma ~ 0.08
  const double frame = 30e-6;
  const int nodes = 4;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(1000 + trial);
    LoDrift drift;
    drift.initial_phase = 0.37 * trial;
    drift.rate = (trial % 2 ? 0.8 : -0.8) * pi / ((nodes + 2) * frame);
    auto seq = testing::synthetic_sequence(het, drift, nodes, 1.0, 0.5, frame, rng);
    const auto out = calibrate_frames(seq.frames);
    REQUIRE(out.size() == seq.node_signs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      CHECK(testing::mean(out[i].c_proj) * seq.node_signs[i] > 0.3);
    }
    CHECK(testing::mean(seq.frames.front().c_proj) == doctest::Approx(1.0).epsilon(0.08));
  }
}

TEST_CASE("calibration needs references at both ends") {
  HeterodyneConfig het;
  Rng rng(3);
  auto seq = testing::synthetic_sequence(het, LoDrift{}, 2, 1.0, 0.5, 20e-6, rng);
  seq.frames.back().kind = FrameKind::kNodeMeasurement;
  CHECK_THROWS_AS(calibrate_frames(seq.frames), SignalError);
}

TEST_CASE("moving average enforces the minimum averaging time") {
  std::vector<double> x(100, 1.0);
  CHECK_THROWS_AS(moving_average(x, 1e-6, 2e-6), AnalysisError);
  const auto y = moving_average(x, 1e-6, 5e-6);
  CHECK(y.size() == 20);
  CHECK(y.front() == doctest::Approx(1.0));
}

TEST_CASE("voltage round trip") {
  HeterodyneConfig het;
  het.detector_noise = 0.01;
  Rng rng(4);
  const FieldTrace f = real_field(10e-6, 0.1e-6, [](double t) { return 1e5 * t; });
  const VoltageTrace v = synthesize_voltage(f, het, rng);
  std::stringstream ss;
  write_voltage(ss, v);
  const VoltageTrace back = read_voltage(ss);
  CHECK(back.samples == v.samples);
  CHECK(back.sample_rate == v.sample_rate);
  CHECK(back.t0 == v.t0);
}

}  // TEST_SUITE
