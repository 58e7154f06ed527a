#include "selforg/config_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "selforg/errors.hpp"

namespace selforg {

using nlohmann::json;

namespace {

struct UnitEntry {
  std::string_view suffix;
  double factor;
};

const std::map<Quantity, std::vector<UnitEntry>>& unit_table() {
  static const std::map<Quantity, std::vector<UnitEntry>> table = {
      {Quantity::kFrequency,
       {{"rad/s", 1.0},
        {"Hz", two_pi},
        {"kHz", two_pi * 1e3},
        {"MHz", two_pi * 1e6},
        {"GHz", two_pi * 1e9}}},
      {Quantity::kTime,
       {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"\xce\xbcs", 1e-6}, {"ns", 1e-9}}},
      {Quantity::kLength,
       {{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"\xce\xbcm", 1e-6}, {"nm", 1e-9}}},
      {Quantity::kTemperature,
       {{"K", 1.0}, {"mK", 1e-3}, {"uK", 1e-6}, {"\xce\xbcK", 1e-6}, {"nK", 1e-9}}},
      {Quantity::kPlain, {}},
  };
  return table;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// Reads an object key by key and remembers which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "config" : path_, "must be an object");
  }

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void quantity(const std::string& key, double& out, Quantity kind,
                double wavelength = 0.0) {
    if (const json* v = get(key)) out = parse_quantity(*v, kind, name(key), wavelength);
  }

  template <typename T>
  void value(const std::string& key, T& out) {
    const json* v = get(key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(name(key), "has the wrong type");
    }
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(name(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string force_mode_name(ForceMode m) {
  return m == ForceMode::kStrict ? "strict" : "semi_self_consistent";
}

std::string field_mode_name(FieldMode m) {
  return m == FieldMode::kRelaxation ? "relaxation" : "adiabatic";
}

ExperimentConfig parse_experiment(const json& j, const std::string& path) {
  ExperimentConfig c;
  Reader r(j, path);
  r.quantity("wavelength", c.wavelength, Quantity::kLength);
  const double lambda = c.wavelength;
  r.value("n_atoms", c.n_atoms);
  r.quantity("rabi_peak", c.rabi_peak, Quantity::kFrequency);
  r.quantity("delta_pa", c.delta_pa, Quantity::kFrequency);
  r.quantity("delta_pc", c.delta_pc, Quantity::kFrequency);
  r.quantity("g0", c.g0, Quantity::kFrequency);
  r.quantity("kappa", c.kappa, Quantity::kFrequency);
  r.quantity("gamma", c.gamma, Quantity::kFrequency);
  r.quantity("nu", c.nu, Quantity::kFrequency);
  r.quantity("spacing", c.spacing, Quantity::kLength, lambda);
  r.quantity("temperature", c.temperature, Quantity::kTemperature);
  r.quantity("ramp_time", c.ramp_time, Quantity::kTime);
  r.quantity("record_time", c.record_time, Quantity::kTime);
  r.quantity("tweezer_bias", c.tweezer_bias, Quantity::kLength, lambda);
  r.value("dims", c.dims);
  if (const json* v = r.get("transverse_nus")) {
    if (!v->is_array() || v->size() != 2)
      throw ConfigError(r.name("transverse_nus"), "must be a list of two frequencies");
    for (int i = 0; i < 2; ++i)
      c.transverse_nus[i] = parse_quantity((*v)[i], Quantity::kFrequency,
                                           r.name("transverse_nus"));
  }
  if (const json* v = r.get("constants")) {
    if (v->is_string()) {
      c.constants = PhysicalConstants::load(v->get<std::string>());
    } else {
      Reader cr(*v, r.name("constants"));
      cr.value("version", c.constants.version);
      cr.value("hbar", c.constants.hbar);
      cr.value("k_B", c.constants.k_B);
      cr.value("mass", c.constants.mass);
      cr.finish();
    }
  }
  r.finish();
  return c;
}

DynamicsSettings parse_dynamics(const json& j) {
  DynamicsSettings d;
  Reader r(j, "dynamics");
  r.quantity("dt", d.dt, Quantity::kTime);
  r.value("decimation", d.decimation);
  std::string force = force_mode_name(d.force_mode);
  std::string field = field_mode_name(d.field_mode);
  r.value("force_mode", force);
  r.value("field_mode", field);
  r.value("heating", d.heating);
  r.finish();
  if (force == "strict") d.force_mode = ForceMode::kStrict;
  else if (force == "semi_self_consistent") d.force_mode = ForceMode::kSemiSelfConsistent;
  else throw ConfigError("dynamics.force_mode", "must be 'strict' or 'semi_self_consistent'");
  if (field == "relaxation") d.field_mode = FieldMode::kRelaxation;
  else if (field == "adiabatic") d.field_mode = FieldMode::kAdiabatic;
  else throw ConfigError("dynamics.field_mode", "must be 'adiabatic' or 'relaxation'");
  return d;
}

HeterodyneConfig parse_heterodyne(const json& j) {
  HeterodyneConfig h;
  Reader r(j, "heterodyne");
  r.quantity("beat_freq", h.beat_freq, Quantity::kFrequency);
  if (const json* v = r.get("sample_rate")) {
    // samples per second; frequency suffixes are read without the 2 pi
    h.sample_rate = parse_quantity(*v, Quantity::kFrequency, "heterodyne.sample_rate");
    if (v->is_string()) h.sample_rate /= two_pi;
  }
  r.value("gain", h.gain);
  r.value("shot_noise_density", h.shot_noise_density);
  r.value("detector_noise", h.detector_noise);
  r.quantity("window", h.window, Quantity::kTime);
  r.quantity("step", h.step, Quantity::kTime);
  if (const json* v = r.get("lo_drift")) {
    Reader lr(*v, "heterodyne.lo_drift");
    lr.value("initial_phase", h.lo_drift.initial_phase);
    lr.value("rate", h.lo_drift.rate);
    lr.value("random_walk", h.lo_drift.random_walk);
    lr.value("bound", h.lo_drift.bound);
    lr.finish();
  }
  r.finish();
  return h;
}

AnalysisSettings parse_analysis(const json& j) {
  AnalysisSettings a;
  Reader r(j, "analysis");
  r.quantity("analysis_start", a.analysis_start, Quantity::kTime);
  r.quantity("analysis_span", a.analysis_span, Quantity::kTime);
  r.quantity("averaging_time", a.averaging_time, Quantity::kTime);
  r.value("epsilon_model", a.epsilon_model);
  r.value("fast_path", a.fast_path);
  r.value("bootstrap", a.bootstrap);
  r.finish();
  return a;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("malformed JSON: ") + e.what());
  }
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const std::set<std::string, std::less<>>& axis_names() {
  static const std::set<std::string, std::less<>> names = {
      "n_atoms", "rabi_peak", "delta_pa", "delta_pc",
      "tweezer_bias", "temperature", "averaging_time"};
  return names;
}

Quantity axis_quantity(std::string_view name) {
  if (name == "n_atoms") return Quantity::kPlain;
  if (name == "tweezer_bias") return Quantity::kLength;
  if (name == "temperature") return Quantity::kTemperature;
  if (name == "averaging_time") return Quantity::kTime;
  return Quantity::kFrequency;
}

}  // namespace

double parse_quantity(const json& value, Quantity kind, const std::string& field,
                      double wavelength) {
  if (value.is_number()) return value.get<double>();
  if (!value.is_string()) throw ConfigError(field, "must be a number or a quantity string");
  const std::string text = trim(value.get<std::string>());
  double number = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), number);
  if (ec != std::errc()) throw ConfigError(field, "cannot parse '" + text + "'");
  const std::string unit = trim(std::string_view(end, text.data() + text.size() - end));
  if (unit.empty()) return number;
  if (kind == Quantity::kLength && (unit == "lambda" || unit == "\xce\xbb")) {
    if (!(wavelength > 0)) throw ConfigError(field, "lambda units need a wavelength");
    return number * wavelength;
  }
  for (const auto& u : unit_table().at(kind)) {
    if (u.suffix == unit) return number * u.factor;
  }
  if (kind == Quantity::kFrequency && unit == "MS/s") return number * two_pi * 1e6;
  throw ConfigError(field, "unknown unit '" + unit + "'");
}

DynamicsOptions DynamicsSettings::options() const {
  DynamicsOptions o;
  o.dt = dt;
  o.decimation = decimation;
  o.force_mode = force_mode;
  o.field_mode = field_mode;
  o.heating.enabled = heating;
  return o;
}

void RunConfig::validate() const {
  experiment.validate();
  heterodyne.validate();
  if (!(dynamics.dt > 0) || dynamics.dt > max_timestep(experiment) * (1 + 1e-12))
    throw ConfigError("dynamics.dt", "must be in (0, 2 pi / (50 nu)]");
  if (dynamics.decimation < 1) throw ConfigError("dynamics.decimation", "must be >= 1");
  if (analysis.averaging_time < 5e-6 * (1 - 1e-12))
    throw ConfigError("analysis.averaging_time", "must be >= 5 us");
  if (!(analysis.analysis_span >= analysis.averaging_time))
    throw ConfigError("analysis.analysis_span", "must be >= averaging_time");
  if (analysis.analysis_start < 0) throw ConfigError("analysis.analysis_start", "must be >= 0");
  if (experiment.ramp_time + analysis.analysis_start + analysis.analysis_span >
      experiment.record_time * (1 + 1e-12))
    throw ConfigError("analysis.analysis_span", "must end within record_time");
  if (analysis.bootstrap < 0) throw ConfigError("analysis.bootstrap", "must be >= 0");
  (void)EpsilonModel::from_name(analysis.epsilon_model, 1.0);
  if (shots < 1) throw ConfigError("shots", "must be >= 1");
}

bool operator==(const HeterodyneConfig& a, const HeterodyneConfig& b) {
  return a.beat_freq == b.beat_freq && a.sample_rate == b.sample_rate &&
         a.gain == b.gain && a.lo_drift.initial_phase == b.lo_drift.initial_phase &&
         a.lo_drift.rate == b.lo_drift.rate &&
         a.lo_drift.random_walk == b.lo_drift.random_walk &&
         a.lo_drift.bound == b.lo_drift.bound &&
         a.shot_noise_density == b.shot_noise_density &&
         a.detector_noise == b.detector_noise && a.window == b.window &&
         a.step == b.step;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
  return a.experiment == b.experiment && a.dynamics == b.dynamics &&
         a.heterodyne == b.heterodyne && a.analysis == b.analysis &&
         a.shots == b.shots && a.seed == b.seed;
}

RunConfig parse_run_config(const json& j) {
  RunConfig c;
  Reader r(j, "");
  if (const json* v = r.get("experiment")) c.experiment = parse_experiment(*v, "experiment");
  if (const json* v = r.get("dynamics")) c.dynamics = parse_dynamics(*v);
  if (const json* v = r.get("heterodyne")) c.heterodyne = parse_heterodyne(*v);
  if (const json* v = r.get("analysis")) c.analysis = parse_analysis(*v);
  r.value("shots", c.shots);
  r.value("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_json_file(path));
}

json to_json(const ExperimentConfig& c) {
  return {
      {"n_atoms", c.n_atoms},
      {"rabi_peak", c.rabi_peak},
      {"delta_pa", c.delta_pa},
      {"delta_pc", c.delta_pc},
      {"g0", c.g0},
      {"kappa", c.kappa},
      {"gamma", c.gamma},
      {"nu", c.nu},
      {"wavelength", c.wavelength},
      {"spacing", c.spacing},
      {"temperature", c.temperature},
      {"ramp_time", c.ramp_time},
      {"record_time", c.record_time},
      {"tweezer_bias", c.tweezer_bias},
      {"dims", c.dims},
      {"transverse_nus", {c.transverse_nus[0], c.transverse_nus[1]}},
      {"constants",
       {{"version", c.constants.version},
        {"hbar", c.constants.hbar},
        {"k_B", c.constants.k_B},
        {"mass", c.constants.mass}}},
  };
}

json to_json(const RunConfig& c) {
  const auto& h = c.heterodyne;
  return {
      {"experiment", to_json(c.experiment)},
      {"dynamics",
       {{"dt", c.dynamics.dt},
        {"decimation", c.dynamics.decimation},
        {"force_mode", force_mode_name(c.dynamics.force_mode)},
        {"field_mode", field_mode_name(c.dynamics.field_mode)},
        {"heating", c.dynamics.heating}}},
      {"heterodyne",
       {{"beat_freq", h.beat_freq},
        {"sample_rate", h.sample_rate},
        {"gain", h.gain},
        {"shot_noise_density", h.shot_noise_density},
        {"detector_noise", h.detector_noise},
        {"window", h.window},
        {"step", h.step},
        {"lo_drift",
         {{"initial_phase", h.lo_drift.initial_phase},
          {"rate", h.lo_drift.rate},
          {"random_walk", h.lo_drift.random_walk},
          {"bound", h.lo_drift.bound}}}}},
      {"analysis",
       {{"analysis_start", c.analysis.analysis_start},
        {"analysis_span", c.analysis.analysis_span},
        {"averaging_time", c.analysis.averaging_time},
        {"epsilon_model", c.analysis.epsilon_model},
        {"fast_path", c.analysis.fast_path},
        {"bootstrap", c.analysis.bootstrap}}},
      {"shots", c.shots},
      {"seed", c.seed},
  };
}

std::string config_digest(const ExperimentConfig& config) {
  return hex(fnv1a(to_json(config).dump()));
}

std::string config_digest(const RunConfig& config) {
  return hex(fnv1a(to_json(config).dump()));
}

void apply_axis(RunConfig& c, std::string_view axis, double value) {
  auto& e = c.experiment;
  if (axis == "n_atoms") e.n_atoms = static_cast<int>(std::lround(value));
  else if (axis == "rabi_peak") e.rabi_peak = value;
  else if (axis == "delta_pa") e.delta_pa = value;
  else if (axis == "delta_pc") e.delta_pc = value;
  else if (axis == "tweezer_bias") e.tweezer_bias = value;
  else if (axis == "temperature") e.temperature = value;
  else if (axis == "averaging_time") c.analysis.averaging_time = value;
  else throw ConfigError("axes." + std::string(axis), "not a sweepable field");
}

std::size_t SweepSpec::size() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.values.size();
  return n;
}

std::vector<std::size_t> SweepSpec::coordinates(std::size_t i) const {
  std::vector<std::size_t> idx(axes.size());
  for (std::size_t a = axes.size(); a-- > 0;) {
    idx[a] = i % axes[a].values.size();
    i /= axes[a].values.size();
  }
  return idx;
}

RunConfig SweepSpec::point(std::size_t i) const {
  RunConfig c = base;
  const auto idx = coordinates(i);
  for (std::size_t a = 0; a < axes.size(); ++a)
    apply_axis(c, axes[a].name, axes[a].values[idx[a]]);
  return c;
}

void SweepSpec::validate() const {
  base.validate();
  std::set<std::string> seen;
  for (const auto& a : axes) {
    if (!axis_names().count(a.name)) throw ConfigError("axes." + a.name, "not a sweepable field");
    if (!seen.insert(a.name).second) throw ConfigError("axes." + a.name, "listed twice");
    if (a.values.empty()) throw ConfigError("axes." + a.name, "has no values");
  }
  if (size() > budget) {
    throw ConfigError("budget", "grid has " + std::to_string(size()) +
                                    " points, more than " + std::to_string(budget));
  }
  for (std::size_t i = 0; i < size(); ++i) {
    try {
      point(i).validate();
    } catch (const ConfigError& e) {
      throw ConfigError(e.field(), std::string(e.what()) + " (grid point " +
                                       std::to_string(i) + ")");
    }
  }
}

SweepSpec parse_sweep_spec(const json& j) {
  SweepSpec s;
  Reader r(j, "");
  json run = json::object();
  for (const char* key : {"experiment", "dynamics", "heterodyne", "analysis", "shots", "seed"}) {
    if (const json* v = r.get(key)) run[key] = *v;
  }
  s.base = parse_run_config(run);
  r.value("budget", s.budget);
  r.value("output_dir", s.output_dir);
  if (const json* v = r.get("axes")) {
    Reader ar(*v, "axes");
    for (const auto& [name, values] : v->items()) {
      ar.get(name);
      if (!axis_names().count(name)) throw ConfigError("axes." + name, "not a sweepable field");
      if (!values.is_array()) throw ConfigError("axes." + name, "must be a list");
      SweepAxis axis{name, {}};
      for (const auto& x : values)
        axis.values.push_back(parse_quantity(x, axis_quantity(name), "axes." + name,
                                             s.base.experiment.wavelength));
      s.axes.push_back(std::move(axis));
    }
  }
  r.finish();
  s.validate();
  return s;
}

SweepSpec load_sweep_spec(const std::string& path) {
  return parse_sweep_spec(read_json_file(path));
}

json to_json(const SweepSpec& s) {
  json j = to_json(s.base);
  j["budget"] = s.budget;
  j["output_dir"] = s.output_dir;
  json axes = json::object();
  for (const auto& a : s.axes) axes[a.name] = a.values;
  j["axes"] = axes;
  return j;
}

}  // namespace selforg
