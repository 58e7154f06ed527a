#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "selforg/random.hpp"

namespace selforg {

struct FitOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;      // on the mean negative log-likelihood
  double range_sigmas = 6.0;    // quadrature half-width in sample rms
  int quadrature_intervals = 2000;
  double d_floor = 1e-10;       // lower bound of the standardized quartic
  int histogram_bins = 30;
};

// Density p(x) = exp(-B x^2 - D x^4) / Z on [-range, range].
struct BoltzmannFit {
  double b_coeff = 0.0;
  double d_coeff = 0.0;
  double normalization = 1.0;  // Z
  double range = 0.0;
  double scale = 1.0;          // sample rms used for standardization
  double neg_log_likelihood = 0.0;  // per sample, standardized units
  double residual = 0.0;       // Pearson chi^2 per degree of freedom
  int iterations = 0;
  std::size_t samples = 0;
  bool d_at_floor = false;

  // Bootstrap results, filled by bootstrap_b.
  double bootstrap_mean_b = 0.0;
  double bootstrap_sigma_b = 0.0;

  double density(double x) const;
  bool bimodal() const { return b_coeff < 0; }
  // Maxima at +-sqrt(-B / (2 D)) when bimodal.
  std::optional<double> peak() const;
  // E[x^2], E[x^4] of the fitted density.
  std::array<double, 2> moments() const;
};

// Maximum-likelihood fit. Throws FitError for fewer than 50 samples, a
// degenerate sample, or non-convergence.
BoltzmannFit fit_boltzmann(std::span<const double> samples,
                           const FitOptions& options = {});

// The same estimator in the infinite-sample limit: the density whose
// second and fourth moments equal m2 and m4 on [-range_sigmas sqrt(m2), ...].
BoltzmannFit fit_boltzmann_moments(double m2, double m4,
                                   const FitOptions& options = {});

// Least squares on the log histogram; for comparison with the MLE.
BoltzmannFit fit_boltzmann_histogram(std::span<const double> samples,
                                     const FitOptions& options = {});

struct BootstrapResult {
  double mean_b = 0.0;
  double sigma_b = 0.0;
  int failures = 0;
  int resamples = 0;
  bool flagged = false;  // more than 30% of resamples failed
};

BootstrapResult bootstrap_b(std::span<const double> samples, int n_boot,
                            Rng& rng, const FitOptions& options = {});

struct BPoint {
  double omega = 0.0;
  double b = 0.0;
  double sigma_b = 0.0;
};

struct CriticalPointEstimate {
  double omega_c = 0.0;
  double sigma_stat = 0.0;
  double systematic_up = 0.06;
  double systematic_down = 0.085;
  BPoint lower;  // B > 0 side
  BPoint upper;  // B < 0 side
  // d omega_c / d (B1, B2, omega1, omega2)
  std::array<double, 4> partials{};
  bool multiple_crossings = false;
};

// Linear interpolation of B = 0 between the lowest-omega bracketing pair and
// propagated error with sigma_omega = fraction * omega. Throws
// AnalysisError if B never changes sign from positive to negative.
CriticalPointEstimate interpolate_critical(std::span<const BPoint> points,
                                           double sigma_omega_fraction = 0.10);

struct FittedPoint {
  double omega = 0.0;
  BoltzmannFit fit;
};

struct NoiseCorrection {
  double factor = 1.0;  // omega_c(noiseless) / omega_c(as measured)
  bool reliable = true;
  double omega_c_measured = 0.0;
  double omega_c_noiseless = 0.0;
  std::vector<double> noiseless_b;
  // Largest |B| mismatch when the candidate noiseless densities are
  // convolved with the noise and refitted, relative to the measured B.
  double forward_mismatch = 0.0;
};

// Finds noiseless candidate densities whose convolution with N(0, sigma^2)
// reproduces each measured fit, refits B for them and re-interpolates.
NoiseCorrection noise_correction(std::span<const FittedPoint> points,
                                 double detector_sigma,
                                 const FitOptions& options = {});

// Moments of a fitted density convolved with N(0, sigma^2), by quadrature.
std::array<double, 2> convolved_moments(const BoltzmannFit& fit, double sigma);

}  // namespace selforg
