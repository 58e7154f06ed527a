#include "selforg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "selforg/errors.hpp"
#include "selforg/signal.hpp"

namespace selforg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  // Write then rename so an interrupted run never leaves a partial file.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

// Exclusive lock on an output directory for the lifetime of the object.
class DirectoryLock {
 public:
  explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw Error("output directory is locked by another sweep: " + path_.string());
    std::fclose(f);
  }
  ~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  fs::path path_;
};

std::string point_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "point_%05zu", i);
  return buf;
}

}  // namespace

int default_workers() {
  if (const char* env = std::getenv("SELFORG_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& body) {
  if (workers <= 0) workers = default_workers();
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

ShotResult run_shot(const RunConfig& config, std::uint64_t seed) {
  const DynamicsOptions options = config.dynamics.options();
  const TrajectoryTrace trace = simulate_shot(
      config.experiment, RampSchedule::from_config(config.experiment), seed, options);

  // The projected frame stands in for a perfectly calibrated sequence;
  // noise and the LO track use their own streams.
  const FieldTrace field = projected_frame(trace);
  Rng noise_rng(derive_seed(seed, {1}));
  Rng lo_rng(derive_seed(seed, {2}));
  const HeterodyneConfig& het = config.heterodyne;
  DemodTrace demod;
  if (config.analysis.fast_path) {
    demod = demodulate_fast(field, het, noise_rng);
  } else {
    const VoltageTrace v = synthesize_voltage(field, het, noise_rng);
    demod = demodulate(v, het);
  }

  ShotResult shot;
  shot.seed = seed;
  for (std::size_t i = 0; i < demod.times.size(); ++i) {
    shot.times.push_back(demod.times[i] - trace.ramp_time);
    shot.c_proj.push_back(demod.amplitudes[i].real());
  }
  const double t0 = trace.ramp_time + config.analysis.analysis_start;
  const double t1 = t0 + config.analysis.analysis_span;
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    if (trace.times[i] >= t0 && trace.times[i] <= t1) {
      sum += trace.temperatures[i];
      ++count;
    }
  }
  shot.analysis_temperature = count ? sum / count : 0.0;
  return shot;
}

std::vector<ShotResult> run_shots(const RunConfig& config,
                                  std::uint64_t point_seed, int workers) {
  std::vector<ShotResult> shots(static_cast<std::size_t>(config.shots));
  parallel_for(shots.size(), workers, [&](std::size_t s) {
    shots[s] = run_shot(config, shot_seed(point_seed, s));
  });
  return shots;
}

std::vector<double> analysis_samples(const ShotResult& shot,
                                     const AnalysisSettings& analysis) {
  std::vector<double> window;
  const double t0 = analysis.analysis_start;
  const double t1 = t0 + analysis.analysis_span;
  for (std::size_t i = 0; i < shot.times.size(); ++i) {
    if (shot.times[i] >= t0 - 1e-12 && shot.times[i] < t1 - 1e-12)
      window.push_back(shot.c_proj[i]);
  }
  if (shot.times.size() < 2) throw SignalError("shot has fewer than two samples");
  const double interval = shot.times[1] - shot.times[0];
  return moving_average(window, interval, analysis.averaging_time);
}

PointResult analyze_shots(const RunConfig& config, std::uint64_t seed,
                          std::vector<ShotResult> shots) {
  PointResult r;
  r.config = config;
  r.seed = seed;
  r.shots = std::move(shots);
  double temp = 0.0;
  for (const auto& s : r.shots) {
    const auto blocks = analysis_samples(s, config.analysis);
    r.samples.insert(r.samples.end(), blocks.begin(), blocks.end());
    temp += s.analysis_temperature;
  }
  r.analysis_temperature = r.shots.empty() ? 0.0 : temp / r.shots.size();
  try {
    BoltzmannFit fit = fit_boltzmann(r.samples);
    if (config.analysis.bootstrap > 0) {
      Rng rng(derive_seed(seed, {0xb0075ULL}));
      r.bootstrap = bootstrap_b(r.samples, config.analysis.bootstrap, rng);
      fit.bootstrap_mean_b = r.bootstrap.mean_b;
      fit.bootstrap_sigma_b = r.bootstrap.sigma_b;
    }
    r.fit = fit;
  } catch (const FitError& e) {
    r.fit_error = e.what();
  }
  return r;
}

PointResult run_point(const RunConfig& config, std::uint64_t point_seed,
                      int workers) {
  config.validate();
  return analyze_shots(config, point_seed, run_shots(config, point_seed, workers));
}

std::uint64_t point_seed(const SweepSpec& spec, std::size_t i) {
  const auto idx = spec.coordinates(i);
  std::uint64_t h = derive_seed(spec.base.seed, {});
  for (std::size_t a = 0; a < spec.axes.size(); ++a) {
    std::uint64_t name = 0;
    for (unsigned char c : spec.axes[a].name) name = splitmix64(name ^ c);
    const double v = spec.axes[a].values[idx[a]];
    h = derive_seed(h, {name, std::bit_cast<std::uint64_t>(v)});
  }
  return h;
}

std::size_t RunManifest::failures() const {
  return static_cast<std::size_t>(std::count_if(
      points.begin(), points.end(), [](const ManifestEntry& e) { return e.status != "done"; }));
}

json RunManifest::to_json() const {
  json pts = json::array();
  for (const auto& e : points) {
    pts.push_back({{"index", e.index},
                   {"coordinates", e.coordinates},
                   {"seed", e.seed},
                   {"config_digest", e.config_digest},
                   {"status", e.status},
                   {"error", e.error},
                   {"started", e.started},
                   {"finished", e.finished},
                   {"files", e.files}});
  }
  return {{"tool_version", tool_version}, {"spec_digest", spec_digest},
          {"axes", axes}, {"points", pts}, {"files", files}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.tool_version = j.value("tool_version", "");
  m.spec_digest = j.value("spec_digest", "");
  m.axes = j.value("axes", std::vector<std::string>{});
  m.files = j.value("files", std::vector<std::string>{});
  for (const auto& p : j.at("points")) {
    ManifestEntry e;
    e.index = p.at("index").get<std::size_t>();
    e.coordinates = p.at("coordinates").get<std::vector<double>>();
    e.seed = p.at("seed").get<std::uint64_t>();
    e.config_digest = p.at("config_digest").get<std::string>();
    e.status = p.at("status").get<std::string>();
    e.error = p.value("error", "");
    e.started = p.value("started", "");
    e.finished = p.value("finished", "");
    e.files = p.value("files", std::vector<std::string>{});
    m.points.push_back(std::move(e));
  }
  return m;
}

void write_shots_csv(const fs::path& path, const std::vector<ShotResult>& shots) {
  std::ostringstream out;
  out << "seed,analysis_temperature";
  if (!shots.empty())
    for (double t : shots.front().times) out << ",t=" << fmt(t);
  out << '\n';
  for (const auto& s : shots) {
    out << s.seed << ',' << fmt(s.analysis_temperature);
    for (double c : s.c_proj) out << ',' << fmt(c);
    out << '\n';
  }
  write_text(path, out.str());
}

std::vector<ShotResult> read_shots_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> times;
  {
    std::stringstream ss(line);
    std::string cell;
    for (int col = 0; std::getline(ss, cell, ','); ++col)
      if (col >= 2) times.push_back(std::stod(cell.substr(2)));
  }
  std::vector<ShotResult> shots;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ShotResult s;
    s.times = times;
    std::stringstream ss(line);
    std::string cell;
    for (int col = 0; std::getline(ss, cell, ','); ++col) {
      if (col == 0) s.seed = std::stoull(cell);
      else if (col == 1) s.analysis_temperature = std::stod(cell);
      else s.c_proj.push_back(std::stod(cell));
    }
    if (s.c_proj.size() != times.size()) throw Error("ragged row in " + path.string());
    shots.push_back(std::move(s));
  }
  return shots;
}

void write_samples_csv(const fs::path& path, const std::vector<double>& samples) {
  std::ostringstream out;
  out << "c_proj\n";
  for (double v : samples) out << fmt(v) << '\n';
  write_text(path, out.str());
}

std::vector<double> read_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<double> v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    const double x = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) continue;  // header
    v.push_back(x);
  }
  return v;
}

json fit_to_json(const BoltzmannFit& f) {
  return {{"b", f.b_coeff},
          {"d", f.d_coeff},
          {"normalization", f.normalization},
          {"range", f.range},
          {"scale", f.scale},
          {"neg_log_likelihood", f.neg_log_likelihood},
          {"residual", f.residual},
          {"iterations", f.iterations},
          {"samples", f.samples},
          {"d_at_floor", f.d_at_floor},
          {"bootstrap_mean_b", f.bootstrap_mean_b},
          {"bootstrap_sigma_b", f.bootstrap_sigma_b}};
}

json critical_to_json(const CriticalPointEstimate& e) {
  return {{"omega_c", e.omega_c},
          {"sigma_stat", e.sigma_stat},
          {"systematic_up", e.systematic_up},
          {"systematic_down", e.systematic_down},
          {"omega_1", e.lower.omega},
          {"b_1", e.lower.b},
          {"sigma_b_1", e.lower.sigma_b},
          {"omega_2", e.upper.omega},
          {"b_2", e.upper.b},
          {"sigma_b_2", e.upper.sigma_b},
          {"partials", e.partials},
          {"multiple_crossings", e.multiple_crossings}};
}

std::vector<CriticalRow> critical_points(
    const SweepSpec& spec, const std::vector<std::optional<BPoint>>& b) {
  std::size_t rabi_axis = spec.axes.size();
  for (std::size_t a = 0; a < spec.axes.size(); ++a)
    if (spec.axes[a].name == "rabi_peak") rabi_axis = a;
  if (rabi_axis == spec.axes.size()) return {};

  std::map<std::vector<std::size_t>, std::vector<BPoint>> groups;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    auto key = spec.coordinates(i);
    key.erase(key.begin() + static_cast<long>(rabi_axis));
    auto& g = groups[key];
    if (b[i]) g.push_back(*b[i]);
  }
  std::vector<CriticalRow> rows;
  for (const auto& [key, points] : groups) {
    CriticalRow row;
    for (std::size_t a = 0, k = 0; a < spec.axes.size(); ++a) {
      if (a == rabi_axis) continue;
      row.group.emplace_back(spec.axes[a].name, spec.axes[a].values[key[k++]]);
    }
    try {
      row.estimate = interpolate_critical(points);
    } catch (const AnalysisError& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

RunManifest run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  spec.validate();
  const fs::path root(spec.output_dir);
  fs::create_directories(root / "points");
  DirectoryLock lock(root);

  RunManifest previous;
  const fs::path manifest_path = root / "manifest.json";
  if (options.resume && fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    previous = RunManifest::from_json(json::parse(in));
  }

  RunManifest m;
  m.tool_version = SELFORG_VERSION;
  m.spec_digest = config_digest(spec.base);
  for (const auto& a : spec.axes) m.axes.push_back(a.name);
  write_text(root / "spec.json", to_json(spec).dump(2) + "\n");

  std::vector<std::optional<BPoint>> bvals(spec.size());
  std::ostringstream results;
  results << "index";
  for (const auto& a : spec.axes) results << ',' << a.name;
  results << ",seed,samples,b,sigma_b,d,residual,analysis_temperature,status\n";

  for (std::size_t i = 0; i < spec.size(); ++i) {
    const RunConfig cfg = spec.point(i);
    ManifestEntry e;
    e.index = i;
    const auto idx = spec.coordinates(i);
    for (std::size_t a = 0; a < spec.axes.size(); ++a)
      e.coordinates.push_back(spec.axes[a].values[idx[a]]);
    e.seed = point_seed(spec, i);
    e.config_digest = config_digest(cfg);
    const fs::path dir = root / "points" / point_dir_name(i);
    const std::string rel = "points/" + point_dir_name(i);
    e.files = {rel + "/shots.csv", rel + "/samples.csv", rel + "/fit.json"};

    const ManifestEntry* old = nullptr;
    for (const auto& p : previous.points)
      if (p.index == i && p.config_digest == e.config_digest && p.seed == e.seed &&
          p.status == "done")
        old = &p;
    bool reuse = old != nullptr;
    if (reuse)
      for (const auto& f : e.files) reuse = reuse && fs::exists(root / f);

    json fit_json;
    if (reuse) {
      e = *old;
      std::ifstream in(dir / "fit.json");
      fit_json = json::parse(in);
    } else {
      e.started = utc_now();
      try {
        fs::create_directories(dir);
        const PointResult r = run_point(cfg, e.seed, options.workers);
        write_shots_csv(dir / "shots.csv", r.shots);
        write_samples_csv(dir / "samples.csv", r.samples);
        fit_json = {{"analysis_temperature", r.analysis_temperature},
                    {"bootstrap_failures", r.bootstrap.failures},
                    {"bootstrap_flagged", r.bootstrap.flagged},
                    {"error", r.fit_error}};
        if (r.fit) fit_json["fit"] = fit_to_json(*r.fit);
        write_text(dir / "fit.json", fit_json.dump(2) + "\n");
        e.status = "done";
      } catch (const std::exception& ex) {
        e.status = "failed";
        e.error = ex.what();
      }
      e.finished = utc_now();
    }

    results << i;
    for (double c : e.coordinates) results << ',' << fmt(c);
    results << ',' << e.seed;
    if (e.status == "done" && fit_json.contains("fit")) {
      const auto& f = fit_json["fit"];
      const double b = f["b"].get<double>(), sb = f["bootstrap_sigma_b"].get<double>();
      bvals[i] = BPoint{cfg.experiment.rabi_peak, b, sb};
      results << ',' << f["samples"].get<std::size_t>() << ',' << fmt(b) << ',' << fmt(sb)
              << ',' << fmt(f["d"].get<double>()) << ',' << fmt(f["residual"].get<double>())
              << ',' << fmt(fit_json["analysis_temperature"].get<double>()) << ",done\n";
    } else {
      results << ",0,nan,nan,nan,nan,nan," << (e.status == "done" ? "fit_failed" : "failed")
              << '\n';
    }
    m.points.push_back(e);
    write_text(manifest_path, m.to_json().dump(2) + "\n");
    if (options.progress) options.progress(e);
  }

  write_text(root / "results.csv", results.str());
  m.files.push_back("results.csv");

  const auto rows = critical_points(spec, bvals);
  if (!rows.empty()) {
    std::ostringstream crit;
    for (const auto& a : spec.axes)
      if (a.name != "rabi_peak") crit << a.name << ',';
    crit << "omega_c,sigma_stat,omega_1,b_1,omega_2,b_2,multiple_crossings,error\n";
    for (const auto& r : rows) {
      for (const auto& [_, v] : r.group) crit << fmt(v) << ',';
      if (r.estimate) {
        const auto& est = *r.estimate;
        crit << fmt(est.omega_c) << ',' << fmt(est.sigma_stat) << ',' << fmt(est.lower.omega)
             << ',' << fmt(est.lower.b) << ',' << fmt(est.upper.omega) << ','
             << fmt(est.upper.b) << ',' << (est.multiple_crossings ? 1 : 0) << ",\n";
      } else {
        crit << "nan,nan,nan,nan,nan,nan,0," << r.error << '\n';
      }
    }
    write_text(root / "critical.csv", crit.str());
    m.files.push_back("critical.csv");
  }
  write_text(manifest_path, m.to_json().dump(2) + "\n");
  return m;
}

}  // namespace selforg
