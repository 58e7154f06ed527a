#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selforg/criticality.hpp"
#include "selforg/model.hpp"
#include "selforg/random.hpp"

namespace selforg {

// Normalized shot-ensemble correlator of real traces,
// g1(t1, t) = <c(t1) c(t)> / sqrt(<c(t1)^2> <c(t)^2>).
struct CoherenceCurve {
  std::vector<double> times;  // relative to t1
  std::vector<double> g1;
  int shots = 0;
  double averaging_time = 0.0;
  // Some |g1| exceeds 1 + 3/sqrt(shots).
  bool exceeds_bound = false;
};

// shots[s][i] sampled at times[i]. Throws AnalysisError for fewer than 20
// shots or a time slice without fluctuation.
CoherenceCurve g1(std::span<const std::vector<double>> shots,
                  std::span<const double> times, std::size_t t1_index = 0,
                  double averaging_time = 0.0);

// g(t) ~ exp(-t / tau) (a cos(w t) + b sin(w t)), least squares over a
// (w, tau) grid with golden refinement. frequency is in Hz.
struct DampedCosineFit {
  double frequency = 0.0;
  double decay_time = 0.0;
  double amplitude = 0.0;
  double rms_residual = 0.0;
};

DampedCosineFit fit_damped_cosine(std::span<const double> times,
                                  std::span<const double> values,
                                  double max_frequency);

// First time the envelope |g| stays below 1/e, linearly interpolated;
// nullopt if it never does within the curve.
std::optional<double> envelope_decay_time(const CoherenceCurve& curve);

enum class DwellClass { kSymmetryBreaking, kSwitching, kRapidOscillation };

std::string to_string(DwellClass c);

struct Dwell {
  double start = 0.0;
  double duration = 0.0;
  int sign = 1;
};

struct DwellStatistics {
  std::vector<Dwell> dwells;
  double threshold = 0.0;
  double mean_dwell = 0.0;
  int switches = 0;
  double high_frequency_fraction = 0.0;
  DwellClass classification = DwellClass::kSymmetryBreaking;
};

// Schmitt trigger: the state becomes + above +threshold and - below
// -threshold, otherwise keeps its value; the first sample takes its sign.
// Dwells shorter than min_dwell do not count as switches. The rapid class
// wins when more than half the power of the +-1 state signal lies above
// 1 / (4 averaging_window).
DwellStatistics dwell_statistics(std::span<const double> trace,
                                 double sample_interval, double threshold,
                                 double min_dwell, double averaging_window);

// Default threshold: half the fitted bimodal peak position.
double dwell_threshold(const BoltzmannFit& fit);

struct DwellSummary {
  int n_atoms = 0;
  double mean_dwell = 0.0;
  double sigma = 0.0;  // bootstrap over shots
  std::vector<double> per_shot;  // mean dwell of each shot
  std::array<int, 3> class_counts{};
};

DwellSummary summarize_dwells(int n_atoms, std::span<const DwellStatistics> shots,
                              int n_boot, Rng& rng);

// Fraction of bootstrap resamples in which mean(a) > mean(b).
double bootstrap_greater(std::span<const double> a, std::span<const double> b,
                         int n_boot, Rng& rng);

struct BiasEnsemble {
  double bias = 0.0;               // delta z, metres
  std::vector<double> shot_means;  // time-averaged c_proj per shot
};

struct SusceptibilityResult {
  double chi = 0.0;
  double sigma_chi = 0.0;
  double slope = 0.0;      // d(c/c_an)/d(delta z), 1/m
  double intercept = 0.0;
  double reference_mean = 0.0;
  double reference_sigma = 0.0;
  std::size_t points_used = 0;
  double rabi_over_critical = 0.0;
  int n_atoms = 0;
};

// chi = slope of mean c_proj / mean c_antinode versus delta z over
// |delta z| <= inner_range, divided by k. Throws AnalysisError for fewer
// than two distinct inner biases or a reference consistent with zero.
SusceptibilityResult susceptibility(std::span<const BiasEnsemble> grid,
                                    std::span<const double> reference_shot_means,
                                    double wavelength,
                                    double inner_range_lambdas = 0.01);

// N M nu^2 lambda^2 / (16 k_B T)
double saturation_susceptibility(const ExperimentConfig& config,
                                 double temperature);

// N M nu^2 <z_dom^2> / (k_B T) under the dominant-mode Boltzmann weight
// exp(-U / k_B T), U = 1/2 N M nu^2 z^2 + hbar D_eff N^2 sin^2(k z).
double thermal_susceptibility(const ExperimentConfig& config,
                              double d_effective, double temperature);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double sigma_slope = 0.0;
  double sigma_intercept = 0.0;
  double r_squared = 0.0;
};

LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct PowerLawFit {
  double exponent = 0.0;
  double sigma_exponent = 0.0;
  double prefactor = 0.0;
  double r_squared = 0.0;
};

// y = prefactor * x^exponent by least squares in log-log. Needs >= 4
// positive points.
PowerLawFit power_law_fit(std::span<const double> x, std::span<const double> y);

struct ScalingPoint {
  int n_atoms = 0;
  double delta_pa = 0.0;
  double omega_c = 0.0;
  double sigma = 0.0;
};

// Temperature at which the critical-pump formula best matches the table
// (weighted least squares, golden section on [t_min, t_max]).
double fit_temperature(const ExperimentConfig& base,
                       std::span<const ScalingPoint> table,
                       const EpsilonModel& epsilon, double t_min = 0.0,
                       double t_max = 500e-6);

}  // namespace selforg
