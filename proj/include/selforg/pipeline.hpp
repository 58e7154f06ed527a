#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selforg/config_io.hpp"
#include "selforg/criticality.hpp"

namespace selforg {

// Worker count from SELFORG_WORKERS, else the hardware concurrency.
int default_workers();

// Runs body(i) for i in [0, n) on up to `workers` threads. Exceptions are
// rethrown on the caller's thread (lowest index first).
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& body);

// One simulated shot after the signal chain.
struct ShotResult {
  std::uint64_t seed = 0;
  std::vector<double> times;   // demod window centers, end of ramp = 0
  std::vector<double> c_proj;  // calibrated demodulated quadrature
  double analysis_temperature = 0.0;  // mean axial kinetic temperature
};

ShotResult run_shot(const RunConfig& config, std::uint64_t shot_seed);

// Seed of shot s of a point.
inline std::uint64_t shot_seed(std::uint64_t point_seed, std::size_t shot) {
  return derive_seed(point_seed, {static_cast<std::uint64_t>(shot)});
}

std::vector<ShotResult> run_shots(const RunConfig& config,
                                  std::uint64_t point_seed, int workers = 0);

// Block means of one shot over the analysis window.
std::vector<double> analysis_samples(const ShotResult& shot,
                                     const AnalysisSettings& analysis);

struct PointResult {
  RunConfig config;
  std::uint64_t seed = 0;
  std::vector<ShotResult> shots;
  std::vector<double> samples;
  std::optional<BoltzmannFit> fit;
  BootstrapResult bootstrap;
  std::string fit_error;
  double analysis_temperature = 0.0;  // ensemble mean
};

// Fits the pooled block means of a set of shots.
PointResult analyze_shots(const RunConfig& config, std::uint64_t seed,
                          std::vector<ShotResult> shots);

PointResult run_point(const RunConfig& config, std::uint64_t point_seed,
                      int workers = 0);

// Seed from the master seed and the axis values of grid point i, so adding
// or removing grid values leaves other points untouched.
std::uint64_t point_seed(const SweepSpec& spec, std::size_t i);

struct ManifestEntry {
  std::size_t index = 0;
  std::vector<double> coordinates;  // axis values, SI
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string status;  // done | failed
  std::string error;
  std::string started;
  std::string finished;
  std::vector<std::string> files;
};

struct RunManifest {
  std::string tool_version;
  std::string spec_digest;
  std::vector<std::string> axes;
  std::vector<ManifestEntry> points;
  std::vector<std::string> files;  // summary outputs

  std::size_t failures() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

struct SweepOptions {
  int workers = 0;
  bool resume = true;
  // Called after each point is committed.
  std::function<void(const ManifestEntry&)> progress;
};

// Executes every grid point, writes per-point outputs, results.csv,
// critical.csv and manifest.json under spec.output_dir. Points already
// completed with the same config digest are skipped.
RunManifest run_sweep(const SweepSpec& spec, const SweepOptions& options = {});

// Critical points for every group of grid points that differ only in
// rabi_peak. Written to critical.csv by run_sweep.
struct CriticalRow {
  std::vector<std::pair<std::string, double>> group;
  std::optional<CriticalPointEstimate> estimate;
  std::string error;
};

// b[i] is the fitted B of grid point i, empty if its fit failed.
std::vector<CriticalRow> critical_points(
    const SweepSpec& spec, const std::vector<std::optional<BPoint>>& b);

// Per-point files.
void write_shots_csv(const std::filesystem::path& path,
                     const std::vector<ShotResult>& shots);
std::vector<ShotResult> read_shots_csv(const std::filesystem::path& path);
void write_samples_csv(const std::filesystem::path& path,
                       const std::vector<double>& samples);
std::vector<double> read_samples(const std::filesystem::path& path);
nlohmann::json fit_to_json(const BoltzmannFit& fit);
nlohmann::json critical_to_json(const CriticalPointEstimate& est);

}  // namespace selforg
