#include "selforg/criticality.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "selforg/constants.hpp"
#include "selforg/errors.hpp"

namespace selforg {

namespace {

constexpr std::size_t kMinSamples = 50;

// Moments of exp(-b y^2 - d y^4) on [-range, range] by composite Simpson on
// the positive half. Exponents are shifted by their maximum to avoid
// overflow for deep double wells.
struct StdMoments {
  double log_z = 0.0;
  std::array<double, 5> even{};  // E[y^0], E[y^2], ..., E[y^8]
};

StdMoments standardized_moments(double b, double d, double range, int intervals) {
  if (intervals % 2) ++intervals;
  const double h = range / intervals;
  double e_max = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= intervals; ++i) {
    const double y2 = (i * h) * (i * h);
    e_max = std::max(e_max, -b * y2 - d * y2 * y2);
  }
  std::array<double, 5> acc{};
  for (int i = 0; i <= intervals; ++i) {
    const double y2 = (i * h) * (i * h);
    const double simpson = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    double w = simpson * std::exp(-b * y2 - d * y2 * y2 - e_max);
    for (auto& a : acc) {
      a += w;
      w *= y2;
    }
  }
  StdMoments m;
  const double z_half = acc[0] * h / 3.0;
  m.log_z = std::log(2.0 * z_half) + e_max;
  for (std::size_t k = 0; k < acc.size(); ++k) m.even[k] = acc[k] / acc[0];
  return m;
}

struct StdFit {
  double b = 0.0;
  double d = 0.0;
  double nll = 0.0;
  int iterations = 0;
  bool at_floor = false;
};

// Convex in (b, d): exponential family with sufficient statistics y^2, y^4.
StdFit solve_standardized(double t2, double t4, double range,
                          const FitOptions& o) {
  auto objective = [&](double b, double d) {
    return b * t2 + d * t4 +
           standardized_moments(b, d, range, o.quadrature_intervals).log_z;
  };
  StdFit f;
  f.b = 0.5 / t2;
  f.d = std::max(o.d_floor, 1e-2);
  f.nll = objective(f.b, f.d);
  for (int it = 1; it <= o.max_iterations; ++it) {
    const StdMoments m = standardized_moments(f.b, f.d, range, o.quadrature_intervals);
    const double e2 = m.even[1], e4 = m.even[2], e6 = m.even[3], e8 = m.even[4];
    const Eigen::Vector2d grad(t2 - e2, t4 - e4);
    Eigen::Matrix2d hess;
    hess << e4 - e2 * e2, e6 - e2 * e4, e6 - e2 * e4, e8 - e4 * e4;

    Eigen::Vector2d delta = -hess.ldlt().solve(grad);
    const bool pinned = f.d <= o.d_floor * (1 + 1e-12) && grad.y() > 0;
    if (pinned || f.d + delta.y() < o.d_floor) {
      // Active bound on d: Newton in b alone, d projected to the floor.
      delta.x() = -grad.x() / hess(0, 0);
      delta.y() = o.d_floor - f.d;
    }
    double step = 1.0;
    double nb = f.b, nd = f.d, nll = f.nll;
    for (int k = 0; k < 60; ++k) {
      nb = f.b + step * delta.x();
      nd = std::max(o.d_floor, f.d + step * delta.y());
      nll = objective(nb, nd);
      if (nll <= f.nll + 1e-14 * std::abs(f.nll)) break;
      step *= 0.5;
    }
    const double change = f.nll - nll;
    f.b = nb;
    f.d = nd;
    f.nll = std::min(nll, f.nll);
    f.iterations = it;
    f.at_floor = f.d <= o.d_floor * (1 + 1e-12);
    const double scaled_grad = f.at_floor ? std::abs(grad.x()) : grad.norm();
    if (std::abs(change) < o.tolerance && scaled_grad < 1e-4) return f;
  }
  throw FitError("Boltzmann fit did not converge");
}

BoltzmannFit to_fit(const StdFit& s, double scale, double range_std,
                    const FitOptions& o) {
  BoltzmannFit fit;
  fit.scale = scale;
  fit.b_coeff = s.b / (scale * scale);
  fit.d_coeff = s.d / std::pow(scale, 4);
  fit.range = range_std * scale;
  fit.normalization =
      scale * std::exp(standardized_moments(s.b, s.d, range_std, o.quadrature_intervals).log_z);
  fit.neg_log_likelihood = s.nll;
  fit.iterations = s.iterations;
  fit.d_at_floor = s.at_floor;
  return fit;
}

double pearson_residual(const BoltzmannFit& fit, std::span<const double> x,
                        int bins) {
  const double width = 2.0 * fit.range / bins;
  std::vector<double> observed(bins, 0.0);
  for (double v : x) {
    const int i = std::clamp(static_cast<int>((v + fit.range) / width), 0, bins - 1);
    observed[i] += 1.0;
  }
  double chi2 = 0.0;
  int used = 0;
  for (int i = 0; i < bins; ++i) {
    const double lo = -fit.range + i * width;
    constexpr int sub = 10;
    const double h = width / sub;
    double integral = 0.0;
    for (int j = 0; j <= sub; ++j) {
      const double w = (j == 0 || j == sub) ? 1.0 : (j % 2 ? 4.0 : 2.0);
      integral += w * fit.density(lo + j * h);
    }
    const double expected = integral * h / 3.0 * static_cast<double>(x.size());
    if (expected < 5.0) continue;
    chi2 += (observed[i] - expected) * (observed[i] - expected) / expected;
    ++used;
  }
  return used > 2 ? chi2 / (used - 2) : 0.0;
}

}  // namespace

double BoltzmannFit::density(double x) const {
  if (std::abs(x) > range) return 0.0;
  const double x2 = x * x;
  return std::exp(-b_coeff * x2 - d_coeff * x2 * x2) / normalization;
}

std::optional<double> BoltzmannFit::peak() const {
  if (b_coeff >= 0 || d_coeff <= 0) return std::nullopt;
  return std::sqrt(-b_coeff / (2.0 * d_coeff));
}

std::array<double, 2> BoltzmannFit::moments() const {
  const double b = b_coeff * scale * scale;
  const double d = d_coeff * std::pow(scale, 4);
  const StdMoments m = standardized_moments(b, d, range / scale, 2000);
  return {m.even[1] * scale * scale, m.even[2] * std::pow(scale, 4)};
}

BoltzmannFit fit_boltzmann(std::span<const double> samples,
                           const FitOptions& options) {
  if (samples.size() < kMinSamples) {
    throw FitError("Boltzmann fit needs at least 50 samples");
  }
  const double n = static_cast<double>(samples.size());
  double m2 = 0.0;
  for (double x : samples) m2 += x * x;
  m2 /= n;
  if (!(m2 > 0)) throw FitError("degenerate sample: all values zero");
  const double scale = std::sqrt(m2);
  double t4 = 0.0, y_max = 0.0;
  for (double x : samples) {
    const double y = x / scale;
    t4 += y * y * y * y;
    y_max = std::max(y_max, std::abs(y));
  }
  t4 /= n;
  if (t4 - 1.0 < 1e-9) throw FitError("degenerate sample: |x| is constant");
  const double range = std::max(options.range_sigmas, 1.001 * y_max);

  BoltzmannFit fit = to_fit(solve_standardized(1.0, t4, range, options), scale,
                            range, options);
  fit.samples = samples.size();
  fit.residual = pearson_residual(fit, samples, options.histogram_bins);
  return fit;
}

BoltzmannFit fit_boltzmann_moments(double m2, double m4,
                                   const FitOptions& options) {
  if (!(m2 > 0) || !(m4 > m2 * m2 * (1 + 1e-9))) {
    throw FitError("moments do not describe a non-degenerate density");
  }
  const double scale = std::sqrt(m2);
  return to_fit(solve_standardized(1.0, m4 / (m2 * m2), options.range_sigmas, options),
                scale, options.range_sigmas, options);
}

BoltzmannFit fit_boltzmann_histogram(std::span<const double> samples,
                                     const FitOptions& options) {
  if (samples.size() < kMinSamples) {
    throw FitError("Boltzmann fit needs at least 50 samples");
  }
  double m2 = 0.0;
  for (double x : samples) m2 += x * x;
  const double scale = std::sqrt(m2 / static_cast<double>(samples.size()));
  if (!(scale > 0)) throw FitError("degenerate sample: all values zero");
  const double range = options.range_sigmas;
  const int bins = options.histogram_bins;
  const double width = 2.0 * range / bins;
  std::vector<double> counts(bins, 0.0);
  for (double x : samples) {
    const int i = static_cast<int>((x / scale + range) / width);
    if (i >= 0 && i < bins) counts[i] += 1.0;
  }
  // weighted least squares of log(count) on (1, y^2, y^4), weight = count
  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (int i = 0; i < bins; ++i) {
    if (counts[i] < 1.0) continue;
    const double y = -range + (i + 0.5) * width;
    const Eigen::Vector3d row(1.0, -y * y, -y * y * y * y);
    normal += counts[i] * row * row.transpose();
    rhs += counts[i] * std::log(counts[i]) * row;
  }
  const Eigen::Vector3d coef = normal.ldlt().solve(rhs);
  StdFit s;
  s.b = coef[1];
  s.d = std::max(options.d_floor, coef[2]);
  s.at_floor = coef[2] <= options.d_floor;
  BoltzmannFit fit = to_fit(s, scale, range, options);
  fit.samples = samples.size();
  fit.residual = pearson_residual(fit, samples, bins);
  return fit;
}

BootstrapResult bootstrap_b(std::span<const double> samples, int n_boot,
                            Rng& rng, const FitOptions& options) {
  BootstrapResult r;
  r.resamples = n_boot;
  if (samples.empty() || n_boot < 1) {
    r.failures = n_boot;
    r.flagged = true;
    r.mean_b = r.sigma_b = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  // Index draws for every resample come first so that the sequence of
  // resamples is fixed by the seed alone.
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  std::vector<std::vector<double>> draws(n_boot, std::vector<double>(samples.size()));
  for (auto& d : draws)
    for (auto& v : d) v = samples[pick(rng)];

  std::vector<double> bs;
  for (const auto& d : draws) {
    try {
      bs.push_back(fit_boltzmann(d, options).b_coeff);
    } catch (const FitError&) {
      ++r.failures;
    }
  }
  r.flagged = r.failures > 0.3 * n_boot;
  if (bs.empty()) {
    r.mean_b = r.sigma_b = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  const double mean = std::accumulate(bs.begin(), bs.end(), 0.0) / bs.size();
  double var = 0.0;
  for (double b : bs) var += (b - mean) * (b - mean);
  r.mean_b = mean;
  r.sigma_b = bs.size() > 1 ? std::sqrt(var / (bs.size() - 1)) : 0.0;
  return r;
}

CriticalPointEstimate interpolate_critical(std::span<const BPoint> points,
                                           double sigma_omega_fraction) {
  std::vector<BPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const BPoint& a, const BPoint& b) { return a.omega < b.omega; });

  std::optional<std::size_t> bracket;
  int crossings = 0;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    const double b1 = sorted[i].b, b2 = sorted[i + 1].b;
    const bool down = b1 >= 0 && b2 < 0;
    const bool up = b1 < 0 && b2 >= 0;
    if (down || up) ++crossings;
    if (down && !bracket) bracket = i;
  }
  if (!bracket) throw AnalysisError("B does not change sign from positive to negative");

  CriticalPointEstimate est;
  est.lower = sorted[*bracket];
  est.upper = sorted[*bracket + 1];
  est.multiple_crossings = crossings > 1;

  const double w1 = est.lower.omega, w2 = est.upper.omega;
  const double b1 = est.lower.b, b2 = est.upper.b;
  const double db = b1 - b2;
  est.omega_c = w1 - b1 * (w1 - w2) / db;
  est.partials = {(w1 - w2) * b2 / (db * db), -(w1 - w2) * b1 / (db * db),
                  -b2 / db, b1 / db};
  const std::array<double, 4> sigmas = {est.lower.sigma_b, est.upper.sigma_b,
                                        sigma_omega_fraction * w1,
                                        sigma_omega_fraction * w2};
  double var = 0.0;
  for (int i = 0; i < 4; ++i) var += std::pow(est.partials[i] * sigmas[i], 2);
  est.sigma_stat = std::sqrt(var);
  return est;
}

std::array<double, 2> convolved_moments(const BoltzmannFit& fit, double sigma) {
  if (sigma <= 0) return fit.moments();
  // Numerical convolution on a grid covering the fit range plus 8 sigma.
  const double half = fit.range + 8.0 * sigma;
  constexpr int n = 1600;
  const double h = 2.0 * half / n;
  constexpr int sub = 4000;
  const double hu = 2.0 * fit.range / sub;
  std::vector<double> pu(sub + 1);
  for (int j = 0; j <= sub; ++j) {
    const double w = (j == 0 || j == sub) ? 1.0 : (j % 2 ? 4.0 : 2.0);
    pu[j] = w * fit.density(-fit.range + j * hu) * hu / 3.0;
  }
  const double norm = 1.0 / (sigma * std::sqrt(two_pi));
  double z = 0.0, e2 = 0.0, e4 = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -half + i * h;
    double p = 0.0;
    for (int j = 0; j <= sub; ++j) {
      const double u = -fit.range + j * hu;
      const double r = (x - u) / sigma;
      if (std::abs(r) < 9.0) p += pu[j] * std::exp(-0.5 * r * r);
    }
    p *= norm;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    z += w * p;
    e2 += w * p * x * x;
    e4 += w * p * x * x * x * x;
  }
  return {e2 / z, e4 / z};
}

NoiseCorrection noise_correction(std::span<const FittedPoint> points,
                                 double detector_sigma,
                                 const FitOptions& options) {
  std::vector<BPoint> measured;
  for (const auto& p : points)
    measured.push_back({p.omega, p.fit.b_coeff, p.fit.bootstrap_sigma_b});

  NoiseCorrection nc;
  nc.omega_c_measured = interpolate_critical(measured).omega_c;
  if (detector_sigma <= 0) {
    nc.omega_c_noiseless = nc.omega_c_measured;
    for (const auto& m : measured) nc.noiseless_b.push_back(m.b);
    return nc;
  }

  const double s2 = detector_sigma * detector_sigma;
  std::vector<BPoint> clean;
  for (const auto& p : points) {
    const auto [m2_meas, m4_meas] = p.fit.moments();
    // Gaussian convolution adds s2 to m2 and 6 s2 m2 + 3 s2^2 to m4.
    const double m2 = m2_meas - s2;
    const double m4 = m4_meas - 6.0 * s2 * m2 - 3.0 * s2 * s2;
    if (s2 > 0.5 * m2_meas) nc.reliable = false;
    if (!(m2 > 0) || !(m4 > m2 * m2 * (1 + 1e-6))) {
      nc.reliable = false;
      nc.noiseless_b.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    BoltzmannFit candidate;
    try {
      candidate = fit_boltzmann_moments(m2, m4, options);
    } catch (const FitError&) {
      nc.reliable = false;
      nc.noiseless_b.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    nc.noiseless_b.push_back(candidate.b_coeff);
    clean.push_back({p.omega, candidate.b_coeff, p.fit.bootstrap_sigma_b});

    const auto [f2, f4] = convolved_moments(candidate, detector_sigma);
    const double forward = fit_boltzmann_moments(f2, f4, options).b_coeff;
    nc.forward_mismatch =
        std::max(nc.forward_mismatch, std::abs(forward - p.fit.b_coeff) * m2_meas);
  }
  try {
    nc.omega_c_noiseless = interpolate_critical(clean).omega_c;
    nc.factor = nc.omega_c_noiseless / nc.omega_c_measured;
  } catch (const AnalysisError&) {
    nc.reliable = false;
    nc.omega_c_noiseless = std::numeric_limits<double>::quiet_NaN();
    nc.factor = std::numeric_limits<double>::quiet_NaN();
  }
  return nc;
}

}  // namespace selforg
