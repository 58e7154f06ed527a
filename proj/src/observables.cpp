#include "selforg/observables.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "selforg/errors.hpp"

namespace selforg {

namespace {

double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

template <typename F>
double golden_minimize(F&& f, double a, double b, int iterations = 80) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct CosineResidual {
  std::span<const double> t, y;
  double amplitude = 0.0;

  double operator()(double w, double tau) {
    Eigen::MatrixX2d basis(static_cast<Eigen::Index>(t.size()), 2);
    Eigen::VectorXd target(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double env = std::exp(-t[i] / tau);
      basis(i, 0) = env * std::cos(w * t[i]);
      basis(i, 1) = env * std::sin(w * t[i]);
      target[i] = y[i];
    }
    Eigen::Vector2d coef;
    if (w == 0.0) {
      const double n = basis.col(0).squaredNorm();
      coef << basis.col(0).dot(target) / n, 0.0;
    } else {
      coef = basis.colPivHouseholderQr().solve(target);
    }
    amplitude = coef.norm();
    return (basis * coef - target).squaredNorm();
  }
};

}  // namespace

CoherenceCurve g1(std::span<const std::vector<double>> shots,
                  std::span<const double> times, std::size_t t1_index,
                  double averaging_time) {
  if (shots.size() < 20) throw AnalysisError("g1 needs at least 20 shots");
  const std::size_t n = times.size();
  if (t1_index >= n) throw AnalysisError("t1 lies outside the analysis span");
  for (const auto& s : shots)
    if (s.size() != n) throw AnalysisError("shot traces differ in length");

  std::vector<double> second(n, 0.0), cross(n, 0.0);
  for (const auto& s : shots) {
    for (std::size_t i = 0; i < n; ++i) {
      second[i] += s[i] * s[i];
      cross[i] += s[t1_index] * s[i];
    }
  }
  CoherenceCurve out;
  out.shots = static_cast<int>(shots.size());
  out.averaging_time = averaging_time;
  const double bound = 1.0 + 3.0 / std::sqrt(static_cast<double>(shots.size()));
  for (std::size_t i = t1_index; i < n; ++i) {
    if (!(second[i] > 0) || !(second[t1_index] > 0))
      throw AnalysisError("zero variance in a time slice");
    const double g = cross[i] / std::sqrt(second[t1_index] * second[i]);
    out.times.push_back(times[i] - times[t1_index]);
    out.g1.push_back(g);
    if (std::abs(g) > bound) out.exceeds_bound = true;
  }
  return out;
}

DampedCosineFit fit_damped_cosine(std::span<const double> times,
                                  std::span<const double> values,
                                  double max_frequency) {
  if (times.size() != values.size() || times.size() < 4)
    throw AnalysisError("damped cosine fit needs >= 4 points");
  const double span = times.back() - times.front();
  CosineResidual res{times, values};
  const double w_max = two_pi * max_frequency;
  const double lt_min = std::log(span / 50.0), lt_max = std::log(span * 1e3);

  constexpr int nw = 241, nt = 81;
  double best = INFINITY, best_w = 0.0, best_lt = lt_max;
  for (int i = 0; i < nw; ++i) {
    const double w = w_max * i / (nw - 1);
    for (int j = 0; j < nt; ++j) {
      const double lt = lt_min + (lt_max - lt_min) * j / (nt - 1);
      const double r = res(w, std::exp(lt));
      if (r < best) {
        best = r;
        best_w = w;
        best_lt = lt;
      }
    }
  }
  const double dw = w_max / (nw - 1), dlt = (lt_max - lt_min) / (nt - 1);
  for (int round = 0; round < 4; ++round) {
    best_w = golden_minimize([&](double w) { return res(w, std::exp(best_lt)); },
                             std::max(0.0, best_w - dw), best_w + dw);
    best_lt = golden_minimize([&](double lt) { return res(best_w, std::exp(lt)); },
                              best_lt - dlt, std::min(lt_max, best_lt + dlt));
  }
  DampedCosineFit fit;
  const double r = res(best_w, std::exp(best_lt));
  fit.frequency = best_w / two_pi;
  fit.decay_time = std::exp(best_lt);
  fit.amplitude = res.amplitude;
  fit.rms_residual = std::sqrt(r / static_cast<double>(times.size()));
  return fit;
}

std::optional<double> envelope_decay_time(const CoherenceCurve& curve) {
  // Running maximum of |g| from the tail inwards is the envelope.
  const std::size_t n = curve.g1.size();
  std::vector<double> env(n);
  double m = 0.0;
  for (std::size_t i = n; i-- > 0;) env[i] = m = std::max(m, std::abs(curve.g1[i]));
  const double level = std::exp(-1.0);
  for (std::size_t i = 1; i < n; ++i) {
    if (env[i] < level) {
      const double f = (env[i - 1] - level) / (env[i - 1] - env[i]);
      return curve.times[i - 1] + f * (curve.times[i] - curve.times[i - 1]);
    }
  }
  return std::nullopt;
}

std::string to_string(DwellClass c) {
  switch (c) {
    case DwellClass::kSymmetryBreaking: return "symmetry-breaking";
    case DwellClass::kSwitching: return "switching";
    case DwellClass::kRapidOscillation: return "rapid-oscillation";
  }
  return "unknown";
}

DwellStatistics dwell_statistics(std::span<const double> trace,
                                 double sample_interval, double threshold,
                                 double min_dwell, double averaging_window) {
  DwellStatistics out;
  out.threshold = threshold;
  if (trace.empty()) return out;

  std::vector<int> state(trace.size());
  int s = trace[0] >= 0 ? 1 : -1;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace[i] > threshold) s = 1;
    else if (trace[i] < -threshold) s = -1;
    state[i] = s;
  }

  std::size_t begin = 0;
  for (std::size_t i = 1; i <= state.size(); ++i) {
    if (i == state.size() || state[i] != state[begin]) {
      out.dwells.push_back({static_cast<double>(begin) * sample_interval,
                            static_cast<double>(i - begin) * sample_interval,
                            state[begin]});
      begin = i;
    }
  }
  double total = 0.0;
  for (const auto& d : out.dwells) total += d.duration;
  out.mean_dwell = total / static_cast<double>(out.dwells.size());
  for (std::size_t i = 1; i < out.dwells.size(); ++i) {
    if (out.dwells[i].duration >= min_dwell * (1 - 1e-9) &&
        out.dwells[i - 1].duration >= min_dwell * (1 - 1e-9))
      ++out.switches;
  }

  // one-sided power spectrum of the state signal
  const std::size_t n = state.size();
  const double cutoff = 1.0 / (4.0 * averaging_window);
  double high = 0.0, all = 0.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc{};
    for (std::size_t i = 0; i < n; ++i)
      acc += static_cast<double>(state[i]) *
             std::polar(1.0, -two_pi * static_cast<double>(k * i % n) / static_cast<double>(n));
    const double freq = static_cast<double>(k) / (static_cast<double>(n) * sample_interval);
    const double weight = (k == 0 || 2 * k == n) ? 1.0 : 2.0;
    const double p = weight * std::norm(acc);
    all += p;
    if (freq > cutoff) high += p;
  }
  out.high_frequency_fraction = all > 0 ? high / all : 0.0;

  if (out.high_frequency_fraction > 0.5) out.classification = DwellClass::kRapidOscillation;
  else if (out.switches == 0) out.classification = DwellClass::kSymmetryBreaking;
  else out.classification = DwellClass::kSwitching;
  return out;
}

double dwell_threshold(const BoltzmannFit& fit) {
  if (const auto p = fit.peak()) return 0.5 * *p;
  return 0.5 * fit.scale;
}

DwellSummary summarize_dwells(int n_atoms, std::span<const DwellStatistics> shots,
                              int n_boot, Rng& rng) {
  DwellSummary out;
  out.n_atoms = n_atoms;
  for (const auto& s : shots) {
    out.per_shot.push_back(s.mean_dwell);
    ++out.class_counts[static_cast<int>(s.classification)];
  }
  if (out.per_shot.empty()) return out;
  out.mean_dwell = mean(out.per_shot);
  std::uniform_int_distribution<std::size_t> pick(0, out.per_shot.size() - 1);
  std::vector<double> means;
  for (int b = 0; b < n_boot; ++b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < out.per_shot.size(); ++i) acc += out.per_shot[pick(rng)];
    means.push_back(acc / static_cast<double>(out.per_shot.size()));
  }
  out.sigma = sample_sd(means);
  return out;
}

double bootstrap_greater(std::span<const double> a, std::span<const double> b,
                         int n_boot, Rng& rng) {
  if (a.empty() || b.empty() || n_boot < 1) return 0.0;
  std::uniform_int_distribution<std::size_t> pa(0, a.size() - 1), pb(0, b.size() - 1);
  int wins = 0;
  for (int i = 0; i < n_boot; ++i) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) ma += a[pa(rng)];
    for (std::size_t j = 0; j < b.size(); ++j) mb += b[pb(rng)];
    if (ma / a.size() > mb / b.size()) ++wins;
  }
  return static_cast<double>(wins) / n_boot;
}

SusceptibilityResult susceptibility(std::span<const BiasEnsemble> grid,
                                    std::span<const double> reference_shot_means,
                                    double wavelength, double inner_range_lambdas) {
  if (reference_shot_means.size() < 2)
    throw AnalysisError("antinode reference needs at least two shots");
  SusceptibilityResult out;
  out.reference_mean = mean(reference_shot_means);
  out.reference_sigma = sample_sd(reference_shot_means) /
                        std::sqrt(static_cast<double>(reference_shot_means.size()));
  if (!(out.reference_mean > 3.0 * out.reference_sigma) || !(out.reference_mean > 0))
    throw AnalysisError("antinode reference is consistent with zero");

  std::vector<double> x, y, w;
  const double limit = inner_range_lambdas * wavelength * (1 + 1e-9);
  for (const auto& e : grid) {
    if (std::abs(e.bias) > limit || e.shot_means.empty()) continue;
    x.push_back(e.bias);
    y.push_back(mean(e.shot_means) / out.reference_mean);
    const double se = e.shot_means.size() > 1
                          ? sample_sd(e.shot_means) / std::sqrt(static_cast<double>(e.shot_means.size()))
                          : 0.0;
    w.push_back(se / out.reference_mean);
  }
  std::vector<double> distinct = x;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw AnalysisError("susceptibility needs >= 2 inner bias points");

  const LinearFit fit = linear_fit(x, y);
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.points_used = x.size();
  const double k = two_pi / wavelength;
  out.chi = fit.slope / k;

  // slope error from the per-point standard errors
  const double xm = mean(x);
  double sxx = 0.0;
  for (double xi : x) sxx += (xi - xm) * (xi - xm);
  double var_slope = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    var_slope += std::pow((x[i] - xm) / sxx * w[i], 2);
  const double rel_ref = out.reference_sigma / out.reference_mean;
  out.sigma_chi = std::sqrt(var_slope / (k * k) + std::pow(out.chi * rel_ref, 2));
  return out;
}

double saturation_susceptibility(const ExperimentConfig& config,
                                 double temperature) {
  const auto& c = config.constants;
  return config.n_atoms * c.mass * config.nu * config.nu * config.wavelength *
         config.wavelength / (16.0 * c.k_B * temperature);
}

double thermal_susceptibility(const ExperimentConfig& config,
                              double d_effective, double temperature) {
  const auto& c = config.constants;
  const double kt = c.k_B * temperature;
  const double n = config.n_atoms;
  const double k = config.wavenumber();
  const double stiffness = n * c.mass * config.nu * config.nu;
  auto potential = [&](double z) {
    const double s = std::sin(k * z);
    return 0.5 * stiffness * z * z + c.hbar * d_effective * n * n * s * s;
  };
  // Range: well beyond both the harmonic width and the lambda/4 minima.
  const double half = 8.0 * std::sqrt(kt / stiffness) + 0.75 * config.wavelength;
  constexpr int intervals = 20000;
  const double h = 2.0 * half / intervals;
  double u_min = INFINITY;
  for (int i = 0; i <= intervals; ++i) u_min = std::min(u_min, potential(-half + i * h));
  double z0 = 0.0, z2 = 0.0;
  for (int i = 0; i <= intervals; ++i) {
    const double z = -half + i * h;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double p = w * std::exp(-(potential(z) - u_min) / kt);
    z0 += p;
    z2 += p * z * z;
  }
  return stiffness * (z2 / z0) / kt;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw AnalysisError("linear fit needs >= 2 points");
  const double n = static_cast<double>(x.size());
  const double xm = mean(x), ym = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
    syy += (y[i] - ym) * (y[i] - ym);
  }
  if (!(sxx > 0)) throw AnalysisError("linear fit needs distinct x values");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  double sse = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    sse += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
  f.r_squared = syy > 0 ? 1.0 - sse / syy : 1.0;
  if (x.size() > 2) {
    const double s2 = sse / (n - 2);
    f.sigma_slope = std::sqrt(s2 / sxx);
    f.sigma_intercept = std::sqrt(s2 * (1.0 / n + xm * xm / sxx));
  }
  return f;
}

PowerLawFit power_law_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 4) throw AnalysisError("power-law fit needs >= 4 points");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw AnalysisError("power-law fit needs positive data");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const LinearFit lf = linear_fit(lx, ly);
  return {lf.slope, lf.sigma_slope, std::exp(lf.intercept), lf.r_squared};
}

double fit_temperature(const ExperimentConfig& base,
                       std::span<const ScalingPoint> table,
                       const EpsilonModel& epsilon, double t_min, double t_max) {
  if (table.empty()) throw AnalysisError("temperature fit needs data");
  auto cost = [&](double t) {
    double s = 0.0;
    for (const auto& p : table) {
      ExperimentConfig c = base;
      c.n_atoms = p.n_atoms;
      c.delta_pa = p.delta_pa;
      c.temperature = t;
      double model;
      try {
        model = critical_pump(c, epsilon);
      } catch (const UnstableConfigError&) {
        return std::numeric_limits<double>::infinity();
      }
      const double sigma = p.sigma > 0 ? p.sigma : p.omega_c;
      s += std::pow((model - p.omega_c) / sigma, 2);
    }
    return s;
  };
  return golden_minimize(cost, t_min, t_max, 100);
}

}  // namespace selforg
