// Command-line front end: simulate | demod | fit | gone | susceptibility |
// sweep | report.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "selforg/config_io.hpp"
#include "selforg/criticality.hpp"
#include "selforg/errors.hpp"
#include "selforg/observables.hpp"
#include "selforg/pipeline.hpp"
#include "selforg/signal.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace selforg;

namespace {

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> shots;
  std::optional<double> averaging_us;
  int workers = 0;
};

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) app->add_option("-c,--config", c.config, "JSON run configuration");
  app->add_option("-o,--out", c.out, "output directory");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--shots", c.shots, "shots per point");
  app->add_option("--averaging-time", c.averaging_us, "averaging time in us");
  app->add_option("--workers", c.workers, "worker threads (default: SELFORG_WORKERS or all cores)");
}

RunConfig load_config(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) rc.seed = *c.seed;
  if (c.shots) rc.shots = *c.shots;
  if (c.averaging_us) rc.analysis.averaging_time = *c.averaging_us * 1e-6;
  rc.validate();
  return rc;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

int cmd_simulate(const Common& c, bool states) {
  const RunConfig rc = load_config(c);
  fs::create_directories(c.out);
  DynamicsOptions opts = rc.dynamics.options();
  opts.record_states = states;
  std::vector<ShotResult> shots(static_cast<std::size_t>(rc.shots));
  parallel_for(shots.size(), c.workers, [&](std::size_t s) {
    const std::uint64_t seed = shot_seed(rc.seed, s);
    const TrajectoryTrace tr = simulate_shot(
        rc.experiment, RampSchedule::from_config(rc.experiment), seed, opts);
    char name[32];
    std::snprintf(name, sizeof name, "trace_%04zu.csv", s);
    std::ofstream out(fs::path(c.out) / name);
    write_trace_csv(out, tr);
    shots[s] = run_shot(rc, seed);
  });
  write_shots_csv(fs::path(c.out) / "shots.csv", shots);
  write_file(fs::path(c.out) / "config.json", to_json(rc).dump(2) + "\n");
  std::cout << "wrote " << shots.size() << " traces to " << c.out << "\n";
  return 0;
}

int cmd_demod(const Common& c, const std::string& trace, const std::string& voltage,
              bool full_rf) {
  const RunConfig rc = load_config(c);
  fs::create_directories(c.out);
  DemodTrace d;
  Rng rng(derive_seed(rc.seed, {1}));
  if (!voltage.empty()) {
    std::ifstream in(voltage, std::ios::binary);
    if (!in) throw Error("cannot open " + voltage);
    d = demodulate(read_voltage(in), rc.heterodyne);
  } else {
    std::ifstream in(trace);
    if (!in) throw Error("cannot open " + trace);
    FieldTrace ft = read_trace_csv(in);
    // rotate into the projection frame: real part is c_proj
    for (std::size_t i = 0; i < ft.field.size(); ++i)
      ft.field[i] = ft.c_proj[i];
    if (full_rf) {
      const VoltageTrace v = synthesize_voltage(ft, rc.heterodyne, rng);
      std::ofstream vout(fs::path(c.out) / "voltage.bin", std::ios::binary);
      write_voltage(vout, v);
      d = demodulate(v, rc.heterodyne);
    } else {
      d = demodulate_fast(ft, rc.heterodyne, rng);
    }
  }
  d.c_proj.clear();
  for (const auto& a : d.amplitudes) d.c_proj.push_back(a.real());
  std::ofstream out(fs::path(c.out) / "demod.jsonl");
  write_demod_jsonl(out, d);
  std::cout << "wrote " << d.times.size() << " windows\n";
  return 0;
}

// Fit input: either one samples file, or JSON lines {"omega": "30 MHz",
// "samples": "path"} for an interpolation of B across omega.
int cmd_fit(const Common& c, const std::string& samples, const std::string& points,
            int n_boot) {
  fs::create_directories(c.out);
  const std::uint64_t seed = c.seed.value_or(1);
  std::vector<std::pair<double, std::string>> inputs;
  if (!samples.empty()) inputs.emplace_back(0.0, samples);
  if (!points.empty()) {
    std::ifstream in(points);
    if (!in) throw Error("cannot open " + points);
    const fs::path base = fs::path(points).parent_path();
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const fs::path ref = j.at("samples").get<std::string>();
      inputs.emplace_back(parse_quantity(j.at("omega"), Quantity::kFrequency, "omega"),
                          (ref.is_absolute() ? ref : base / ref).string());
    }
  }
  if (inputs.empty()) throw ConfigError("fit", "give --samples or --points");

  std::ostringstream csv;
  csv << "omega,b,sigma_b,d,residual,samples\n";
  std::vector<BPoint> bpoints;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto x = read_samples(inputs[i].second);
    BoltzmannFit fit = fit_boltzmann(x);
    Rng rng(derive_seed(seed, {i}));
    const BootstrapResult bs = bootstrap_b(x, n_boot, rng);
    fit.bootstrap_mean_b = bs.mean_b;
    fit.bootstrap_sigma_b = bs.sigma_b;
    csv << fmt(inputs[i].first) << ',' << fmt(fit.b_coeff) << ',' << fmt(bs.sigma_b) << ','
        << fmt(fit.d_coeff) << ',' << fmt(fit.residual) << ',' << x.size() << '\n';
    bpoints.push_back({inputs[i].first, fit.b_coeff, bs.sigma_b});
    if (inputs.size() == 1)
      write_file(fs::path(c.out) / "fit.json", fit_to_json(fit).dump(2) + "\n");
  }
  write_file(fs::path(c.out) / "fit.csv", csv.str());
  if (bpoints.size() >= 2) {
    const CriticalPointEstimate est = interpolate_critical(bpoints);
    write_file(fs::path(c.out) / "critical.json", critical_to_json(est).dump(2) + "\n");
    std::cout << "omega_c = 2pi x " << est.omega_c / two_pi / 1e6 << " MHz +- "
              << est.sigma_stat / two_pi / 1e6 << " MHz\n";
  }
  std::cout << csv.str();
  return 0;
}

int cmd_gone(const Common& c, const std::string& shots_file, double threshold) {
  const RunConfig rc = load_config(c);
  fs::create_directories(c.out);
  const auto shots = read_shots_csv(shots_file);
  if (shots.empty()) throw Error("no shots in " + shots_file);

  std::vector<std::vector<double>> blocks;
  for (const auto& s : shots) blocks.push_back(analysis_samples(s, rc.analysis));
  const double dt = rc.analysis.averaging_time;
  std::vector<double> times;
  for (std::size_t i = 0; i < blocks.front().size(); ++i)
    times.push_back(rc.analysis.analysis_start + (static_cast<double>(i) + 0.5) * dt);

  std::ostringstream g1csv;
  g1csv << "t,g1\n";
  try {
    const CoherenceCurve curve = g1(blocks, times, 0, dt);
    for (std::size_t i = 0; i < curve.times.size(); ++i)
      g1csv << fmt(curve.times[i]) << ',' << fmt(curve.g1[i]) << '\n';
  } catch (const AnalysisError& e) {
    std::cerr << "g1: " << e.what() << "\n";
  }
  write_file(fs::path(c.out) / "g1.csv", g1csv.str());

  if (!(threshold > 0)) {
    std::vector<double> pooled;
    for (const auto& b : blocks) pooled.insert(pooled.end(), b.begin(), b.end());
    threshold = dwell_threshold(fit_boltzmann(pooled));
  }
  std::ostringstream dcsv;
  dcsv << "shot,switches,mean_dwell,high_frequency_fraction,class\n";
  std::array<int, 3> counts{};
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    const auto st = dwell_statistics(blocks[s], dt, threshold, dt, dt);
    ++counts[static_cast<int>(st.classification)];
    dcsv << s << ',' << st.switches << ',' << fmt(st.mean_dwell) << ','
         << fmt(st.high_frequency_fraction) << ',' << to_string(st.classification) << '\n';
  }
  write_file(fs::path(c.out) / "dwell.csv", dcsv.str());
  std::cout << "threshold " << threshold << ": symmetry-breaking " << counts[0]
            << ", switching " << counts[1] << ", rapid-oscillation " << counts[2] << "\n";
  return 0;
}

int cmd_susceptibility(const Common& c, std::vector<double> biases_lambda,
                       double window_us) {
  RunConfig rc = load_config(c);
  fs::create_directories(c.out);
  const double lambda = rc.experiment.wavelength;
  auto ensemble = [&](double bias, std::uint64_t key) {
    RunConfig p = rc;
    p.experiment.tweezer_bias = bias;
    const auto shots = run_shots(p, derive_seed(rc.seed, {key}), c.workers);
    std::vector<double> means;
    for (const auto& s : shots) {
      double acc = 0.0;
      int n = 0;
      for (std::size_t i = 0; i < s.times.size(); ++i)
        if (s.times[i] >= 0 && s.times[i] < window_us * 1e-6) acc += s.c_proj[i], ++n;
      means.push_back(n ? acc / n : 0.0);
    }
    return means;
  };
  const auto reference = ensemble(0.25 * lambda, 0);
  std::vector<BiasEnsemble> grid;
  std::ostringstream csv;
  csv << "bias_lambda,mean_c_proj,shots\n";
  for (std::size_t i = 0; i < biases_lambda.size(); ++i) {
    BiasEnsemble e{biases_lambda[i] * lambda, ensemble(biases_lambda[i] * lambda, i + 1)};
    double m = 0.0;
    for (double v : e.shot_means) m += v;
    csv << fmt(biases_lambda[i]) << ',' << fmt(m / e.shot_means.size()) << ','
        << e.shot_means.size() << '\n';
    grid.push_back(std::move(e));
  }
  write_file(fs::path(c.out) / "bias_curve.csv", csv.str());
  const SusceptibilityResult r = susceptibility(grid, reference, lambda);
  const json j = {{"chi", r.chi},
                  {"sigma_chi", r.sigma_chi},
                  {"slope", r.slope},
                  {"reference_mean", r.reference_mean},
                  {"points_used", r.points_used},
                  {"n_atoms", rc.experiment.n_atoms},
                  {"rabi_peak", rc.experiment.rabi_peak},
                  {"saturation", saturation_susceptibility(rc.experiment,
                                                           rc.experiment.temperature)}};
  write_file(fs::path(c.out) / "susceptibility.json", j.dump(2) + "\n");
  std::cout << "chi = " << r.chi << " +- " << r.sigma_chi << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& spec_path, bool no_resume) {
  SweepSpec spec = load_sweep_spec(spec_path);
  if (c.seed) spec.base.seed = *c.seed;
  if (c.shots) spec.base.shots = *c.shots;
  if (c.averaging_us) spec.base.analysis.averaging_time = *c.averaging_us * 1e-6;
  if (c.out != "out") spec.output_dir = c.out;
  SweepOptions opts;
  opts.workers = c.workers;
  opts.resume = !no_resume;
  opts.progress = [&](const ManifestEntry& e) {
    std::cerr << "point " << e.index + 1 << "/" << spec.size() << " " << e.status
              << (e.error.empty() ? "" : ": " + e.error) << "\n";
  };
  const RunManifest m = run_sweep(spec, opts);
  std::cout << "sweep finished: " << m.points.size() - m.failures() << " done, "
            << m.failures() << " failed\n";
  return m.failures() ? 1 : 0;
}

// Plot-ready long-format tables from a finished sweep directory.
int cmd_report(const std::string& dir, int bins) {
  const fs::path root(dir);
  std::ifstream mf(root / "manifest.json");
  if (!mf) throw Error("no manifest.json in " + dir);
  const RunManifest m = RunManifest::from_json(json::parse(mf));
  std::ifstream sf(root / "spec.json");
  const SweepSpec spec = parse_sweep_spec(json::parse(sf));

  std::ostringstream hist;
  hist << "index";
  for (const auto& a : m.axes) hist << ',' << a;
  hist << ",c_proj,density\n";
  for (const auto& e : m.points) {
    if (e.status != "done") continue;
    const auto x = read_samples(root / e.files[1]);
    if (x.empty()) continue;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double half = std::max(std::abs(*lo), std::abs(*hi)) * 1.0001 + 1e-12;
    const double w = 2.0 * half / bins;
    std::vector<double> counts(bins, 0.0);
    for (double v : x) counts[std::min(bins - 1, static_cast<int>((v + half) / w))] += 1.0;
    for (int b = 0; b < bins; ++b) {
      hist << e.index;
      for (double v : e.coordinates) hist << ',' << fmt(v);
      hist << ',' << fmt(-half + (b + 0.5) * w) << ',' << fmt(counts[b] / (x.size() * w))
           << '\n';
    }
  }
  write_file(root / "report_bifurcation.csv", hist.str());

  // Critical points per group and scaling fits over n_atoms or delta_pa.
  std::vector<std::optional<BPoint>> bvals(spec.size());
  for (const auto& e : m.points) {
    if (e.status != "done") continue;
    std::ifstream in(root / e.files[2]);
    const json j = json::parse(in);
    if (!j.contains("fit")) continue;
    bvals[e.index] = BPoint{spec.point(e.index).experiment.rabi_peak, j["fit"]["b"].get<double>(),
                            j["fit"]["bootstrap_sigma_b"].get<double>()};
  }
  const auto rows = critical_points(spec, bvals);
  std::ostringstream crit;
  crit << "group,omega_c_mhz,sigma_mhz\n";
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const auto& r : rows) {
    std::string g;
    for (const auto& [name, v] : r.group) g += name + "=" + fmt(v) + ";";
    if (!r.estimate) {
      crit << g << ",nan,nan\n";
      continue;
    }
    crit << g << ',' << fmt(r.estimate->omega_c / two_pi / 1e6) << ','
         << fmt(r.estimate->sigma_stat / two_pi / 1e6) << '\n';
    for (const auto& [name, v] : r.group) {
      if (name == "n_atoms" || name == "delta_pa") {
        series[name].first.push_back(std::abs(v));
        series[name].second.push_back(r.estimate->omega_c);
      }
    }
  }
  write_file(root / "report_critical.csv", crit.str());
  json summary = json::object();
  for (const auto& [name, xy] : series) {
    if (xy.first.size() < 4) continue;
    if (name == "n_atoms") {
      const PowerLawFit f = power_law_fit(xy.first, xy.second);
      summary["n_atoms"] = {{"exponent", f.exponent}, {"sigma_exponent", f.sigma_exponent},
                            {"r_squared", f.r_squared}};
    } else {
      const LinearFit f = linear_fit(xy.first, xy.second);
      summary["delta_pa"] = {{"slope", f.slope}, {"intercept", f.intercept},
                             {"r_squared", f.r_squared}};
    }
  }
  write_file(root / "report_scaling.json", summary.dump(2) + "\n");
  std::cout << crit.str() << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-organization of a tweezer array in an optical cavity"};
  app.require_subcommand(1);

  Common common;
  bool states = false;
  auto* sim = app.add_subcommand("simulate", "simulate shots and write traces");
  add_common(sim, common);
  sim->add_flag("--states", states, "include atom positions in the traces");

  std::string trace, voltage;
  bool full_rf = false;
  auto* demod = app.add_subcommand("demod", "demodulate a trace or a voltage record");
  add_common(demod, common);
  demod->add_option("--trace", trace, "trace CSV from simulate");
  demod->add_option("--voltage", voltage, "binary voltage record");
  demod->add_flag("--full-rf", full_rf, "synthesize and demodulate the RF voltage");

  std::string samples, points;
  int n_boot = 10;
  auto* fit = app.add_subcommand("fit", "Boltzmann fit and critical-point interpolation");
  add_common(fit, common, false);
  fit->add_option("--samples", samples, "file of c_proj samples");
  fit->add_option("--points", points, "JSON lines of {omega, samples}");
  fit->add_option("--bootstrap", n_boot, "bootstrap resamples");

  std::string shots_file;
  double threshold = 0.0;
  auto* gone = app.add_subcommand("gone", "coherence and dwell analysis of a shot file");
  add_common(gone, common);
  gone->add_option("--shots-file", shots_file, "shots.csv of a point")->required();
  gone->add_option("--threshold", threshold, "dwell threshold (default: half the fitted peak)");

  std::vector<double> biases{-0.01, -0.005, 0.0, 0.005, 0.01};
  double window_us = 50.0;
  auto* sus = app.add_subcommand("susceptibility", "bias response at the configured pump");
  add_common(sus, common);
  sus->add_option("--biases", biases, "tweezer biases in wavelengths");
  sus->add_option("--window", window_us, "averaging span after the ramp, us");

  std::string spec;
  bool no_resume = false;
  auto* sweep = app.add_subcommand("sweep", "run a parameter sweep");
  add_common(sweep, common, false);
  sweep->add_option("--spec", spec, "sweep specification")->required();
  sweep->add_flag("--no-resume", no_resume, "recompute every point");

  std::string report_dir = "out";
  int bins = 40;
  auto* report = app.add_subcommand("report", "plot-ready tables from a sweep");
  report->add_option("--dir", report_dir, "sweep output directory");
  report->add_option("--bins", bins, "histogram bins");

  CLI11_PARSE(app, argc, argv);
  try {
    if (sim->parsed()) return cmd_simulate(common, states);
    if (demod->parsed()) return cmd_demod(common, trace, voltage, full_rf);
    if (fit->parsed()) return cmd_fit(common, samples, points, n_boot);
    if (gone->parsed()) return cmd_gone(common, shots_file, threshold);
    if (sus->parsed()) return cmd_susceptibility(common, biases, window_us);
    if (sweep->parsed()) return cmd_sweep(common, spec, no_resume);
    if (report->parsed()) return cmd_report(report_dir, bins);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
