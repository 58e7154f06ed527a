#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <string_view>

#include "selforg/constants.hpp"

namespace selforg {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Physical and protocol parameters. Internal units are SI with angular
// frequencies in rad/s; unit conversion happens in the config parser only.
struct ExperimentConfig {
  int n_atoms = 20;
  double rabi_peak = two_pi * 30e6;
  double delta_pa = -two_pi * 80e6;
  double delta_pc = -two_pi * 1.9e6;
  double g0 = two_pi * 3.1e6 / std::numbers::sqrt2;
  double kappa = two_pi * 0.53e6;
  double gamma = two_pi * 3.0e6;
  double nu = two_pi * 93e3;
  double wavelength = 780e-9;
  double spacing = 4.5 * 780e-9;
  double temperature = 35e-6;
  double ramp_time = 50e-6;
  double record_time = 250e-6;
  double tweezer_bias = 0.0;
  int dims = 1;
  // Placeholders: transverse tweezer frequencies are not known.
  std::array<double, 2> transverse_nus{two_pi * 93e3, two_pi * 17e3};
  PhysicalConstants constants{};

  double wavenumber() const { return two_pi / wavelength; }

  // Spacing in units of half wavelengths is odd: neighbours sit at opposite
  // standing-wave signs and the dominant mode is staggered.
  bool half_integer_spacing() const;
  int stagger(Eigen::Index n) const {
    return half_integer_spacing() && (n % 2 != 0) ? -1 : 1;
  }

  // Throws ConfigError naming the first violated field.
  void validate() const;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;
};

// Per-atom coordinates. Transverse blocks are empty in 1D mode; in 3D the
// columns are (x, y) with x along the pump.
struct AtomArrayState {
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  Eigen::VectorXd centers;
  Eigen::MatrixX2d transverse;
  Eigen::MatrixX2d transverse_momenta;

  Eigen::Index size() const { return z.size(); }
  bool is_3d() const { return transverse.rows() > 0; }
};

struct CavitySnapshot {
  double theta = 0.0;
  double eff_detuning = 0.0;
  std::complex<double> field{};
  double c_proj = 0.0;
  double proj_angle = 0.0;
};

struct PotentialParams {
  double d_strength = 0.0;
  double epsilon_t = 1.0;
  double sigma_th = 0.0;
};

// z0n = spacing * n + stagger(n) * tweezer_bias
Eigen::VectorXd tweezer_centers(const ExperimentConfig& config);

// Atoms at rest on their tweezer centers.
AtomArrayState centered_state(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Formulas. Templated on the scalar so they accept complex-step or other
// non-double arguments in tests.

template <typename Derived>
typename Derived::Scalar order_parameter(const Eigen::MatrixBase<Derived>& z,
                                         double wavenumber) {
  return (z.array() * wavenumber).sin().mean();
}

double order_parameter(const AtomArrayState& state, double wavelength);

// Delta_pc - sum_n g0^2 sin^2(k z_n) / Delta_pa
template <typename Derived>
typename Derived::Scalar effective_detuning(const Eigen::MatrixBase<Derived>& z,
                                            const ExperimentConfig& config) {
  const double k = config.wavenumber();
  const double shift = config.g0 * config.g0 / config.delta_pa;
  return config.delta_pc - shift * (z.array() * k).sin().square().sum();
}

double effective_detuning(const AtomArrayState& state,
                          const ExperimentConfig& config);

// Quadrature angle arctan(-kappa / eff_detuning), resolved with atan2 so that
// the returned axis is the direction of (-eff_detuning, kappa). For the red
// detuned case eff_detuning < 0 this lies in (0, pi/2). A positive order
// parameter then projects to positive c_proj when delta_pa < 0.
inline double projection_angle(double eff_detuning, double kappa) {
  return std::atan2(kappa, -eff_detuning);
}

// Steady state field <c> = A * theta / (eff_detuning + i kappa) with
// A = N * rabi * g0 / (2 delta_pa), in sqrt(photon) units.
template <typename Scalar>
std::complex<Scalar> adiabatic_field(Scalar theta, Scalar eff_detuning,
                                     double rabi, const ExperimentConfig& config) {
  const double amplitude =
      config.n_atoms * rabi * config.g0 / (2.0 * config.delta_pa);
  return amplitude * theta /
         std::complex<Scalar>(eff_detuning, Scalar(config.kappa));
}

std::complex<double> adiabatic_field(const AtomArrayState& state,
                                     const ExperimentConfig& config,
                                     double rabi);

inline double project(std::complex<double> field, double angle) {
  return field.real() * std::cos(angle) + field.imag() * std::sin(angle);
}

// N rabi g0 / (2 |delta_pa|) * theta / sqrt(eff^2 + kappa^2); the direct
// route to the projected quadrature, independent of adiabatic_field.
template <typename Scalar>
Scalar projected_quadrature(Scalar theta, Scalar eff_detuning, double rabi,
                            const ExperimentConfig& config) {
  using std::sqrt;
  const double amplitude = config.n_atoms * rabi * config.g0 /
                           (2.0 * std::abs(config.delta_pa));
  return amplitude * theta /
         sqrt(eff_detuning * eff_detuning + config.kappa * config.kappa);
}

CavitySnapshot cavity_snapshot(const AtomArrayState& state,
                               const ExperimentConfig& config, double rabi);

// D = (g0 rabi / (2 delta_pa))^2 * eff / (eff^2 + kappa^2), rad/s.
template <typename Scalar>
Scalar cavity_potential_strength(double g0, Scalar rabi, double delta_pa,
                                 Scalar eff_detuning, double kappa) {
  const Scalar s = g0 * rabi / (2.0 * delta_pa);
  return s * s * eff_detuning / (eff_detuning * eff_detuning + kappa * kappa);
}

inline double cavity_potential_strength(const ExperimentConfig& config,
                                        double eff_detuning) {
  return cavity_potential_strength(config.g0, config.rabi_peak,
                                   config.delta_pa, eff_detuning, config.kappa);
}

// sqrt(k_B T / (M nu^2)), the rms axial spread of a thermal harmonic atom.
double thermal_sigma(double temperature, const ExperimentConfig& config);

// Thermal average of the effective detuning for Gaussian positions around
// the tweezer centers: <sin^2> = (1 - exp(-2 k^2 sigma^2) (1 - 2 sin^2(k b))) / 2
// where b is the static offset of each center from its node.
double thermal_effective_detuning(double temperature,
                                  const ExperimentConfig& config);

// Reduction of the effective coupling by thermal motion. Every model returns
// exactly 1 at T = 0.
class EpsilonModel {
 public:
  enum class Kind {
    kUnity,             // epsilon = 1
    kDebyeWaller,       // exp(-scale * k^2 sigma^2) [* transverse factor]
    kLinearResponse1D,  // (1 - exp(-2 k^2 sigma^2)) / (2 k^2 sigma^2)
  };

  static EpsilonModel unity() { return EpsilonModel(Kind::kUnity, 1.0, false); }
  static EpsilonModel debye_waller(double exponent_scale = 1.0,
                                   bool transverse = false) {
    return EpsilonModel(Kind::kDebyeWaller, exponent_scale, transverse);
  }
  static EpsilonModel linear_response_1d() {
    return EpsilonModel(Kind::kLinearResponse1D, 1.0, false);
  }
  // Debye-Waller form with the shipped exponent scale.
  static EpsilonModel calibrated();
  static EpsilonModel from_name(std::string_view name, double exponent_scale);

  double operator()(double temperature, const ExperimentConfig& config) const;

  Kind kind() const { return kind_; }
  double exponent_scale() const { return exponent_scale_; }
  bool transverse() const { return transverse_; }
  std::string name() const;

 private:
  EpsilonModel(Kind kind, double scale, bool transverse)
      : kind_(kind), exponent_scale_(scale), transverse_(transverse) {}

  Kind kind_;
  double exponent_scale_;
  bool transverse_;
};

// Exponent scale of the shipped calibration; data/epsilon_calibration.json
// holds the same value together with the anchor it reproduces.
inline constexpr double kCalibratedEpsilonScale = 1.6028147105317878;

// Solves for the Debye-Waller exponent scale that makes critical_pump at
// config.temperature equal target_rabi.
double calibrate_epsilon_scale(const ExperimentConfig& config,
                               double target_rabi);

PotentialParams potential_params(const ExperimentConfig& config,
                                 double eff_detuning,
                                 const EpsilonModel& epsilon);

// Critical pump Rabi frequency at config.temperature. Throws
// UnstableConfigError when the thermal effective detuning is not negative.
double critical_pump(const ExperimentConfig& config,
                     const EpsilonModel& epsilon);

// Same formula with an explicit effective detuning and epsilon value.
template <typename Scalar>
Scalar critical_pump_formula(const ExperimentConfig& config, Scalar n_atoms,
                             Scalar delta_pa, Scalar delta_pc_t,
                             Scalar epsilon) {
  using std::abs;
  using std::sqrt;
  const double k = config.wavenumber();
  const double m_nu2 = config.constants.mass * config.nu * config.nu;
  const Scalar numerator = 2.0 * m_nu2 * delta_pa * delta_pa *
                           (delta_pc_t * delta_pc_t + config.kappa * config.kappa);
  const Scalar denominator = n_atoms * config.g0 * config.g0 * k * k *
                             abs(delta_pc_t) * config.constants.hbar * epsilon;
  return sqrt(numerator / denominator);
}

// (1/N) sum_n stagger(n) (z_n - spacing * n)
double dominant_mode_coordinate(const AtomArrayState& state,
                                const ExperimentConfig& config);

// 1/2 N M nu^2 z^2 + hbar D N^2 sin^2(k z)
double dominant_mode_potential(double z_dom, const ExperimentConfig& config,
                               double d_strength);

// D at which the curvature of dominant_mode_potential vanishes at z = 0,
// -M nu^2 / (2 hbar N k^2). D = r^2 times this value corresponds to a pump
// r times the harmonic critical pump.
double critical_potential_strength(const ExperimentConfig& config);

// Sum of kinetic and tweezer energy plus hbar D N^2 theta^2 (1D, fixed D).
double effective_energy(const AtomArrayState& state,
                        const ExperimentConfig& config, double d_strength);

// Kinetic temperature sum p^2 / (N M k_B) along the cavity axis.
double kinetic_temperature(const AtomArrayState& state,
                           const ExperimentConfig& config);

}  // namespace selforg
