#include "selforg/model.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "selforg/errors.hpp"

namespace selforg {

PhysicalConstants PhysicalConstants::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("constants", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("constants", std::string("malformed table: ") + e.what());
  }
  PhysicalConstants c;
  for (const char* key : {"version", "hbar", "k_B", "mass"}) {
    if (!j.contains(key)) throw ConfigError(key, "missing from constants table");
  }
  c.version = j.at("version").get<std::string>();
  c.hbar = j.at("hbar").get<double>();
  c.k_B = j.at("k_B").get<double>();
  c.mass = j.at("mass").get<double>();
  if (!(c.hbar > 0 && c.k_B > 0 && c.mass > 0))
    throw ConfigError("constants", "all constants must be positive");
  return c;
}

bool ExperimentConfig::half_integer_spacing() const {
  const long halves = std::lround(spacing / (0.5 * wavelength));
  return halves % 2 != 0;
}

void ExperimentConfig::validate() const {
  if (n_atoms < 1) throw ConfigError("n_atoms", "must be >= 1");
  if (!(kappa > 0)) throw ConfigError("kappa", "must be > 0");
  if (!(nu > 0)) throw ConfigError("nu", "must be > 0");
  if (!(wavelength > 0)) throw ConfigError("wavelength", "must be > 0");
  if (!(temperature >= 0)) throw ConfigError("temperature", "must be >= 0");
  if (delta_pa == 0) throw ConfigError("delta_pa", "must be nonzero");
  if (!(g0 >= 0)) throw ConfigError("g0", "must be >= 0");
  if (!(gamma >= 0)) throw ConfigError("gamma", "must be >= 0");
  if (!(rabi_peak >= 0)) throw ConfigError("rabi_peak", "must be >= 0");
  const double halves = spacing / (0.5 * wavelength);
  if (!(spacing > 0) || std::abs(halves - std::round(halves)) > 1e-6)
    throw ConfigError("spacing", "must be a positive multiple of wavelength/2");
  if (!(ramp_time >= 0)) throw ConfigError("ramp_time", "must be >= 0");
  if (!(record_time > ramp_time))
    throw ConfigError("record_time", "must exceed ramp_time");
  if (dims != 1 && dims != 3) throw ConfigError("dims", "must be 1 or 3");
  if (dims == 3 && !(transverse_nus[0] > 0 && transverse_nus[1] > 0))
    throw ConfigError("transverse_nus", "must be > 0 in 3D mode");
}

Eigen::VectorXd tweezer_centers(const ExperimentConfig& config) {
  Eigen::VectorXd centers(config.n_atoms);
  for (Eigen::Index n = 0; n < centers.size(); ++n) {
    centers[n] = config.spacing * static_cast<double>(n) +
                 config.stagger(n) * config.tweezer_bias;
  }
  return centers;
}

AtomArrayState centered_state(const ExperimentConfig& config) {
  AtomArrayState s;
  s.centers = tweezer_centers(config);
  s.z = s.centers;
  s.p = Eigen::VectorXd::Zero(config.n_atoms);
  if (config.dims == 3) {
    s.transverse = Eigen::MatrixX2d::Zero(config.n_atoms, 2);
    s.transverse_momenta = Eigen::MatrixX2d::Zero(config.n_atoms, 2);
  }
  return s;
}

double order_parameter(const AtomArrayState& state, double wavelength) {
  return order_parameter(state.z, two_pi / wavelength);
}

double effective_detuning(const AtomArrayState& state,
                          const ExperimentConfig& config) {
  return effective_detuning(state.z, config);
}

std::complex<double> adiabatic_field(const AtomArrayState& state,
                                     const ExperimentConfig& config,
                                     double rabi) {
  const double theta = order_parameter(state.z, config.wavenumber());
  return adiabatic_field(theta, effective_detuning(state.z, config), rabi,
                         config);
}

CavitySnapshot cavity_snapshot(const AtomArrayState& state,
                               const ExperimentConfig& config, double rabi) {
  CavitySnapshot snap;
  snap.theta = order_parameter(state.z, config.wavenumber());
  snap.eff_detuning = effective_detuning(state.z, config);
  snap.field = adiabatic_field(snap.theta, snap.eff_detuning, rabi, config);
  snap.proj_angle = projection_angle(snap.eff_detuning, config.kappa);
  snap.c_proj = project(snap.field, snap.proj_angle);
  return snap;
}

double thermal_sigma(double temperature, const ExperimentConfig& config) {
  const auto& c = config.constants;
  return std::sqrt(c.k_B * temperature / (c.mass * config.nu * config.nu));
}

double thermal_effective_detuning(double temperature,
                                  const ExperimentConfig& config) {
  const double k = config.wavenumber();
  const double sigma = thermal_sigma(temperature, config);
  const double damping = std::exp(-2.0 * k * k * sigma * sigma);
  const Eigen::ArrayXd centers = tweezer_centers(config).array();
  const double sum_sin2 =
      (0.5 * (1.0 - (2.0 * k * centers).cos() * damping)).sum();
  return config.delta_pc - config.g0 * config.g0 / config.delta_pa * sum_sin2;
}

EpsilonModel EpsilonModel::calibrated() {
  return debye_waller(kCalibratedEpsilonScale, false);
}

EpsilonModel EpsilonModel::from_name(std::string_view name,
                                     double exponent_scale) {
  if (name == "unity") return unity();
  if (name == "debye_waller") return debye_waller(exponent_scale, false);
  if (name == "debye_waller_transverse") return debye_waller(exponent_scale, true);
  if (name == "linear_response_1d") return linear_response_1d();
  if (name == "calibrated") return calibrated();
  throw ConfigError("epsilon_model", "unknown model '" + std::string(name) + "'");
}

std::string EpsilonModel::name() const {
  switch (kind_) {
    case Kind::kUnity:
      return "unity";
    case Kind::kDebyeWaller:
      return transverse_ ? "debye_waller_transverse" : "debye_waller";
    case Kind::kLinearResponse1D:
      return "linear_response_1d";
  }
  return "unknown";
}

double EpsilonModel::operator()(double temperature,
                                const ExperimentConfig& config) const {
  const double k = config.wavenumber();
  const double sigma = thermal_sigma(temperature, config);
  const double x = k * k * sigma * sigma;
  switch (kind_) {
    case Kind::kUnity:
      return 1.0;
    case Kind::kDebyeWaller: {
      double eps = std::exp(-exponent_scale_ * x);
      if (transverse_) {
        // pump standing wave along x enters squared through rabi^2
        const auto& c = config.constants;
        const double nu_x = config.transverse_nus[0];
        const double sx2 = c.k_B * temperature / (c.mass * nu_x * nu_x);
        eps *= std::exp(-k * k * sx2);
      }
      return eps;
    }
    case Kind::kLinearResponse1D:
      return x < 1e-12 ? 1.0 - x : (1.0 - std::exp(-2.0 * x)) / (2.0 * x);
  }
  return 1.0;
}

double critical_pump(const ExperimentConfig& config,
                     const EpsilonModel& epsilon) {
  const double delta_t = thermal_effective_detuning(config.temperature, config);
  if (!(delta_t < 0.0)) {
    throw UnstableConfigError(
        "thermal effective detuning is not red of the cavity; no "
        "self-organization threshold exists");
  }
  const double eps = epsilon(config.temperature, config);
  return critical_pump_formula<double>(config, config.n_atoms, config.delta_pa,
                                       delta_t, eps);
}

double calibrate_epsilon_scale(const ExperimentConfig& config,
                               double target_rabi) {
  const double at_unity = critical_pump(config, EpsilonModel::unity());
  // rabi_c ~ eps^(-1/2)  =>  eps = (rabi_c(eps=1) / target)^2
  const double eps = std::pow(at_unity / target_rabi, 2);
  const double k = config.wavenumber();
  const double sigma = thermal_sigma(config.temperature, config);
  const double x = k * k * sigma * sigma;
  if (!(eps > 0 && eps < 1) || x <= 0)
    throw ConfigError("temperature",
                      "calibration target needs 0 < epsilon < 1 and T > 0");
  return -std::log(eps) / x;
}

PotentialParams potential_params(const ExperimentConfig& config,
                                 double eff_detuning,
                                 const EpsilonModel& epsilon) {
  return {cavity_potential_strength(config, eff_detuning),
          epsilon(config.temperature, config),
          thermal_sigma(config.temperature, config)};
}

double dominant_mode_coordinate(const AtomArrayState& state,
                                const ExperimentConfig& config) {
  double sum = 0.0;
  for (Eigen::Index n = 0; n < state.size(); ++n) {
    sum += config.stagger(n) *
           (state.z[n] - config.spacing * static_cast<double>(n));
  }
  return sum / static_cast<double>(state.size());
}

double dominant_mode_potential(double z_dom, const ExperimentConfig& config,
                               double d_strength) {
  const double n = config.n_atoms;
  const double m_nu2 = config.constants.mass * config.nu * config.nu;
  const double s = std::sin(config.wavenumber() * z_dom);
  return 0.5 * n * m_nu2 * z_dom * z_dom +
         config.constants.hbar * d_strength * n * n * s * s;
}

double critical_potential_strength(const ExperimentConfig& config) {
  const double k = config.wavenumber();
  return -config.constants.mass * config.nu * config.nu /
         (2.0 * config.constants.hbar * config.n_atoms * k * k);
}

double effective_energy(const AtomArrayState& state,
                        const ExperimentConfig& config, double d_strength) {
  const auto& c = config.constants;
  const double m_nu2 = c.mass * config.nu * config.nu;
  const double kinetic = state.p.squaredNorm() / (2.0 * c.mass);
  const double trap = 0.5 * m_nu2 * (state.z - state.centers).squaredNorm();
  const double n = static_cast<double>(state.size());
  const double theta = order_parameter(state.z, config.wavenumber());
  return kinetic + trap + c.hbar * d_strength * n * n * theta * theta;
}

double kinetic_temperature(const AtomArrayState& state,
                           const ExperimentConfig& config) {
  const auto& c = config.constants;
  return state.p.squaredNorm() /
         (static_cast<double>(state.size()) * c.mass * c.k_B);
}

}  // namespace selforg
