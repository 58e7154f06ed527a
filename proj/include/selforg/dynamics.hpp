#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "selforg/model.hpp"
#include "selforg/random.hpp"

namespace selforg {

// Linear ramp to peak_rabi over ramp_time, then constant for hold_time.
struct RampSchedule {
  double ramp_time = 50e-6;
  double hold_time = 200e-6;
  double peak_rabi = 0.0;

  double duration() const { return ramp_time + hold_time; }
  double rabi_at(double t) const {
    if (t < ramp_time && ramp_time > 0) return peak_rabi * t / ramp_time;
    return peak_rabi;
  }

  static RampSchedule from_config(const ExperimentConfig& config) {
    return {config.ramp_time, config.record_time - config.ramp_time,
            config.rabi_peak};
  }
};

// Photon recoil heating. Each scattering event gives a momentum kick of
// hbar k; in 1D the full kick acts along the cavity axis, in 3D each axis
// receives one third of the variance.
struct HeatingModel {
  using RateFn = std::function<double(double rabi, double delta_pa, double gamma)>;

  bool enabled = true;
  RateFn scattering_rate = far_detuned_rate;

  // gamma rabi^2 / (4 delta_pa^2), events/s
  static double far_detuned_rate(double rabi, double delta_pa, double gamma) {
    return gamma * rabi * rabi / (4.0 * delta_pa * delta_pa);
  }
};

enum class ForceMode {
  kSemiSelfConsistent,  // D from the instantaneous effective detuning
  kStrict,              // D from a frozen detuning (conserves H_eff)
};

enum class FieldMode {
  kAdiabatic,   // field slaved to the atoms
  kRelaxation,  // dc/dt = (i eff - kappa) c - i S N theta, for validation
};

struct DynamicsOptions {
  double dt = 20e-9;
  int decimation = 10;
  ForceMode force_mode = ForceMode::kSemiSelfConsistent;
  FieldMode field_mode = FieldMode::kAdiabatic;
  // Detuning used by kStrict; defaults to the thermal average at the
  // configured temperature.
  std::optional<double> frozen_detuning;
  HeatingModel heating;
  bool record_states = false;
};

struct Forces {
  Eigen::VectorXd z;
  Eigen::MatrixX2d transverse;
};

// Decimated record of one shot. times are measured from the start of the
// ramp; subtract ramp_time for the usual "t = 0 at end of ramp" convention.
struct TrajectoryTrace {
  std::vector<double> times;
  std::vector<CavitySnapshot> fields;
  std::vector<double> temperatures;  // axial kinetic temperature
  std::vector<AtomArrayState> states;  // empty unless record_states
  double ramp_time = 0.0;
  double dt = 0.0;
  int decimation = 1;
  std::uint64_t seed = 0;
  std::string config_digest;

  double sample_interval() const { return dt * decimation; }
  Eigen::VectorXd c_proj() const;
};

// Order parameter including the pump standing wave cos(k x) in 3D mode.
double array_order_parameter(const AtomArrayState& state,
                             const ExperimentConfig& config);

AtomArrayState thermal_initialize(const ExperimentConfig& config, Rng& rng);

// Deterministic forces for the current pump strength.
class Integrator {
 public:
  Integrator(const ExperimentConfig& config, DynamicsOptions options = {});

  Forces force(const AtomArrayState& state, double rabi) const;

  // One velocity-Verlet step followed by a recoil kick. Throws TimestepError
  // if dt does not resolve the trap oscillation.
  void step(AtomArrayState& state, double t, Rng& rng) const;

  CavitySnapshot snapshot(const AtomArrayState& state, double rabi) const;

  const ExperimentConfig& config() const { return config_; }
  const DynamicsOptions& options() const { return options_; }
  double frozen_detuning() const { return frozen_detuning_; }

 private:
  double d_strength(const AtomArrayState& state, double rabi) const;

  ExperimentConfig config_;
  DynamicsOptions options_;
  RampSchedule schedule_;
  double frozen_detuning_;
  double k_;
  double m_nu2_;
};

// Free-function forms of the integrator operations.
Forces force(const AtomArrayState& state, const ExperimentConfig& config,
             double rabi_now, ForceMode mode = ForceMode::kSemiSelfConsistent);

AtomArrayState step(const AtomArrayState& state, const ExperimentConfig& config,
                    double dt, double t, Rng& rng,
                    const DynamicsOptions& options = {});

TrajectoryTrace simulate_shot(const ExperimentConfig& config,
                              const RampSchedule& schedule, std::uint64_t seed,
                              const DynamicsOptions& options = {});

// Largest step that still resolves the trap: 1 / (50 nu / 2 pi).
double max_timestep(const ExperimentConfig& config);

// CSV with '#' header lines (config digest, seed, dt, decimation) and
// columns t, z_1..z_N, theta, re_c, im_c, c_proj. Positions are written
// only when the trace recorded states.
void write_trace_csv(std::ostream& out, const TrajectoryTrace& trace);

struct FieldTrace {
  std::vector<double> times;
  std::vector<std::complex<double>> field;
  std::vector<double> c_proj;
};

FieldTrace read_trace_csv(std::istream& in);
FieldTrace field_trace(const TrajectoryTrace& trace);

}  // namespace selforg
