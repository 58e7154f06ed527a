#include "selforg/dynamics.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "selforg/config_io.hpp"
#include "selforg/errors.hpp"

namespace selforg {

Eigen::VectorXd TrajectoryTrace::c_proj() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(fields.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) out[i] = fields[i].c_proj;
  return out;
}

double array_order_parameter(const AtomArrayState& state,
                             const ExperimentConfig& config) {
  const double k = config.wavenumber();
  if (!state.is_3d()) return order_parameter(state.z, k);
  return ((state.z.array() * k).sin() *
          (state.transverse.col(0).array() * k).cos())
      .mean();
}

AtomArrayState thermal_initialize(const ExperimentConfig& config, Rng& rng) {
  AtomArrayState s = centered_state(config);
  if (config.temperature <= 0) return s;
  const auto& c = config.constants;
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma_p = std::sqrt(c.mass * c.k_B * config.temperature);
  const double sigma_z = thermal_sigma(config.temperature, config);
  for (Eigen::Index n = 0; n < s.size(); ++n) {
    s.z[n] += sigma_z * normal(rng);
    s.p[n] = sigma_p * normal(rng);
  }
  if (s.is_3d()) {
    for (int axis = 0; axis < 2; ++axis) {
      const double nu_t = config.transverse_nus[axis];
      const double sigma_t = std::sqrt(c.k_B * config.temperature /
                                       (c.mass * nu_t * nu_t));
      for (Eigen::Index n = 0; n < s.size(); ++n) {
        s.transverse(n, axis) = sigma_t * normal(rng);
        s.transverse_momenta(n, axis) = sigma_p * normal(rng);
      }
    }
  }
  return s;
}

double max_timestep(const ExperimentConfig& config) {
  return two_pi / (50.0 * config.nu);
}

Integrator::Integrator(const ExperimentConfig& config, DynamicsOptions options)
    : config_(config),
      options_(std::move(options)),
      schedule_(RampSchedule::from_config(config)),
      frozen_detuning_(options_.frozen_detuning.value_or(
          thermal_effective_detuning(config.temperature, config))),
      k_(config.wavenumber()),
      m_nu2_(config.constants.mass * config.nu * config.nu) {
  config_.validate();
  if (!(options_.dt > 0) || options_.dt > max_timestep(config_) * (1 + 1e-12)) {
    throw TimestepError("dt must be in (0, " +
                        std::to_string(max_timestep(config_)) + "] s");
  }
  if (options_.decimation < 1) throw ConfigError("decimation", "must be >= 1");
}

double Integrator::d_strength(const AtomArrayState& state, double rabi) const {
  const double eff = options_.force_mode == ForceMode::kStrict
                         ? frozen_detuning_
                         : effective_detuning(state.z, config_);
  return cavity_potential_strength(config_.g0, rabi, config_.delta_pa, eff,
                                   config_.kappa);
}

Forces Integrator::force(const AtomArrayState& state, double rabi) const {
  Forces f;
  const double n = static_cast<double>(state.size());
  const double theta = array_order_parameter(state, config_);
  const double coupling =
      2.0 * config_.constants.hbar * d_strength(state, rabi) * n * theta * k_;
  f.z = -m_nu2_ * (state.z - state.centers);
  if (!state.is_3d()) {
    f.z.array() -= coupling * (state.z.array() * k_).cos();
    return f;
  }
  const auto kz = state.z.array() * k_;
  const auto kx = state.transverse.col(0).array() * k_;
  f.z.array() -= coupling * kz.cos() * kx.cos();
  const double m = config_.constants.mass;
  f.transverse.resize(state.size(), 2);
  f.transverse.col(0) = -m * config_.transverse_nus[0] * config_.transverse_nus[0] *
                        state.transverse.col(0);
  f.transverse.col(0).array() += coupling * kz.sin() * kx.sin();
  f.transverse.col(1) = -m * config_.transverse_nus[1] * config_.transverse_nus[1] *
                        state.transverse.col(1);
  return f;
}

void Integrator::step(AtomArrayState& state, double t, Rng& rng) const {
  const double dt = options_.dt;
  const double m = config_.constants.mass;
  const double rabi0 = schedule_.rabi_at(t);
  const double rabi1 = schedule_.rabi_at(t + dt);

  Forces f = force(state, rabi0);
  state.p += 0.5 * dt * f.z;
  state.z += (dt / m) * state.p;
  if (state.is_3d()) {
    state.transverse_momenta += 0.5 * dt * f.transverse;
    state.transverse += (dt / m) * state.transverse_momenta;
  }
  f = force(state, rabi1);
  state.p += 0.5 * dt * f.z;
  if (state.is_3d()) state.transverse_momenta += 0.5 * dt * f.transverse;

  if (!options_.heating.enabled) return;
  const double hbar_k = config_.constants.hbar * k_;
  std::normal_distribution<double> normal(0.0, 1.0);
  if (!state.is_3d()) {
    const double rate =
        options_.heating.scattering_rate(rabi1, config_.delta_pa, config_.gamma);
    if (rate <= 0) return;
    const double kick = hbar_k * std::sqrt(rate * dt);
    for (Eigen::Index n = 0; n < state.size(); ++n) state.p[n] += kick * normal(rng);
    return;
  }
  for (Eigen::Index n = 0; n < state.size(); ++n) {
    const double local = rabi1 * std::cos(k_ * state.transverse(n, 0));
    const double rate =
        options_.heating.scattering_rate(local, config_.delta_pa, config_.gamma);
    if (rate <= 0) continue;
    const double kick = hbar_k * std::sqrt(rate * dt / 3.0);
    state.p[n] += kick * normal(rng);
    state.transverse_momenta(n, 0) += kick * normal(rng);
    state.transverse_momenta(n, 1) += kick * normal(rng);
  }
}

CavitySnapshot Integrator::snapshot(const AtomArrayState& state,
                                    double rabi) const {
  CavitySnapshot snap;
  snap.theta = array_order_parameter(state, config_);
  snap.eff_detuning = effective_detuning(state.z, config_);
  snap.field = adiabatic_field(snap.theta, snap.eff_detuning, rabi, config_);
  snap.proj_angle = projection_angle(snap.eff_detuning, config_.kappa);
  snap.c_proj = project(snap.field, snap.proj_angle);
  return snap;
}

Forces force(const AtomArrayState& state, const ExperimentConfig& config,
             double rabi_now, ForceMode mode) {
  DynamicsOptions options;
  options.force_mode = mode;
  options.dt = max_timestep(config);
  return Integrator(config, options).force(state, rabi_now);
}

AtomArrayState step(const AtomArrayState& state, const ExperimentConfig& config,
                    double dt, double t, Rng& rng,
                    const DynamicsOptions& options) {
  DynamicsOptions o = options;
  o.dt = dt;
  AtomArrayState next = state;
  Integrator(config, o).step(next, t, rng);
  return next;
}

TrajectoryTrace simulate_shot(const ExperimentConfig& config,
                              const RampSchedule& schedule, std::uint64_t seed,
                              const DynamicsOptions& options) {
  ExperimentConfig cfg = config;
  cfg.ramp_time = schedule.ramp_time;
  cfg.record_time = schedule.duration();
  cfg.rabi_peak = schedule.peak_rabi;
  const Integrator integrator(cfg, options);

  Rng rng(seed);
  AtomArrayState state = thermal_initialize(cfg, rng);

  const double dt = options.dt;
  const auto n_steps =
      static_cast<long>(std::llround(schedule.duration() / dt));
  const auto n_records = static_cast<std::size_t>(n_steps / options.decimation + 1);

  TrajectoryTrace trace;
  trace.ramp_time = schedule.ramp_time;
  trace.dt = dt;
  trace.decimation = options.decimation;
  trace.seed = seed;
  trace.config_digest = config_digest(cfg);
  trace.times.reserve(n_records);
  trace.fields.reserve(n_records);
  trace.temperatures.reserve(n_records);

  std::complex<double> field{};  // relaxation mode state
  const bool relax = options.field_mode == FieldMode::kRelaxation;

  auto record = [&](double t, const CavitySnapshot& snap) {
    trace.times.push_back(t);
    trace.fields.push_back(snap);
    trace.temperatures.push_back(kinetic_temperature(state, cfg));
    if (options.record_states) trace.states.push_back(state);
  };

  CavitySnapshot snap = integrator.snapshot(state, schedule.rabi_at(0.0));
  field = snap.field;
  record(0.0, snap);
  for (long i = 0; i < n_steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    integrator.step(state, t, rng);
    const bool keep = (i + 1) % options.decimation == 0;
    if (!relax && !keep) continue;
    snap = integrator.snapshot(state, schedule.rabi_at(t + dt));
    if (relax) {
      const std::complex<double> rate(-cfg.kappa, snap.eff_detuning);
      const std::complex<double> steady = snap.field;
      field = steady + (field - steady) * std::exp(rate * dt);
      snap.field = field;
      snap.c_proj = project(field, snap.proj_angle);
    }
    if (keep) record(t + dt, snap);
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const TrajectoryTrace& trace) {
  out << "# config_digest=" << trace.config_digest << '\n'
      << "# seed=" << trace.seed << '\n'
      << "# dt=" << std::setprecision(17) << trace.dt << '\n'
      << "# decimation=" << trace.decimation << '\n'
      << "# ramp_time=" << trace.ramp_time << '\n';
  const bool positions = !trace.states.empty();
  out << 't';
  if (positions) {
    for (Eigen::Index n = 0; n < trace.states.front().size(); ++n)
      out << ",z_" << n + 1;
  }
  out << ",theta,re_c,im_c,c_proj\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    out << trace.times[i];
    if (positions) {
      for (Eigen::Index n = 0; n < trace.states[i].size(); ++n)
        out << ',' << trace.states[i].z[n];
    }
    const auto& f = trace.fields[i];
    out << ',' << f.theta << ',' << f.field.real() << ',' << f.field.imag()
        << ',' << f.c_proj << '\n';
  }
}

FieldTrace field_trace(const TrajectoryTrace& trace) {
  FieldTrace ft;
  ft.times = trace.times;
  for (const auto& f : trace.fields) {
    ft.field.push_back(f.field);
    ft.c_proj.push_back(f.c_proj);
  }
  return ft;
}

FieldTrace read_trace_csv(std::istream& in) {
  FieldTrace ft;
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    for (std::string col; std::getline(ss, col, ',');) header.push_back(col);
    break;
  }
  auto column = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SignalError("trace is missing column '" + name + "'");
  };
  const std::size_t ct = column("t"), cre = column("re_c"),
                    cim = column("im_c"), cp = column("c_proj");
  std::vector<double> row;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    row.clear();
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) row.push_back(std::stod(cell));
    if (row.size() != header.size()) throw SignalError("ragged trace row");
    ft.times.push_back(row[ct]);
    ft.field.emplace_back(row[cre], row[cim]);
    ft.c_proj.push_back(row[cp]);
  }
  return ft;
}

}  // namespace selforg
