#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "selforg/dynamics.hpp"
#include "selforg/model.hpp"
#include "selforg/signal.hpp"

namespace selforg {

enum class Quantity { kFrequency, kTime, kLength, kTemperature, kPlain };

// "80 MHz" -> 2 pi 80e6 rad/s, "35 uK", "50 us", "780 nm", "4.5 lambda".
// Bare numbers are taken as SI (rad/s for frequencies). lambda needs the
// wavelength in metres.
double parse_quantity(const nlohmann::json& value, Quantity kind,
                      const std::string& field, double wavelength = 0.0);

struct DynamicsSettings {
  double dt = 20e-9;
  int decimation = 10;
  ForceMode force_mode = ForceMode::kSemiSelfConsistent;
  FieldMode field_mode = FieldMode::kAdiabatic;
  bool heating = true;

  DynamicsOptions options() const;
  friend bool operator==(const DynamicsSettings&, const DynamicsSettings&) = default;
};

struct AnalysisSettings {
  double analysis_start = 0.0;  // after the end of the ramp
  double analysis_span = 100e-6;
  double averaging_time = 5e-6;
  std::string epsilon_model = "calibrated";
  bool fast_path = true;
  int bootstrap = 10;

  friend bool operator==(const AnalysisSettings&, const AnalysisSettings&) = default;
};

struct RunConfig {
  ExperimentConfig experiment;
  DynamicsSettings dynamics;
  HeterodyneConfig heterodyne;
  AnalysisSettings analysis;
  int shots = 180;
  std::uint64_t seed = 1;

  void validate() const;
};

bool operator==(const HeterodyneConfig& a, const HeterodyneConfig& b);
bool operator==(const RunConfig& a, const RunConfig& b);

// Unknown keys throw ConfigError naming the key.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// SI numbers only, so parse(to_json(c)) == c exactly.
nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const ExperimentConfig& config);

// FNV-1a of the canonical JSON of the physics-relevant fields.
std::string config_digest(const ExperimentConfig& config);
std::string config_digest(const RunConfig& config);

struct SweepAxis {
  std::string name;  // n_atoms, rabi_peak, delta_pa, delta_pc, tweezer_bias,
                     // temperature, averaging_time
  std::vector<double> values;  // SI
};

struct SweepSpec {
  RunConfig base;
  std::vector<SweepAxis> axes;
  std::size_t budget = 10000;  // bound on the number of grid points
  std::string output_dir = "out";

  std::size_t size() const;
  // Grid indices of point i, last axis fastest.
  std::vector<std::size_t> coordinates(std::size_t i) const;
  RunConfig point(std::size_t i) const;
  void validate() const;
};

SweepSpec parse_sweep_spec(const nlohmann::json& j);
SweepSpec load_sweep_spec(const std::string& path);
nlohmann::json to_json(const SweepSpec& spec);

void apply_axis(RunConfig& config, std::string_view axis, double value);

}  // namespace selforg
