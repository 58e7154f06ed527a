#pragma once

#include <numbers>
#include <string>

namespace selforg {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// Versioned table of the constants the model needs. The compiled-in defaults
// equal data/physical_constants.json; load() replaces them at startup.
struct PhysicalConstants {
  std::string version = "codata2018-rb87-v1";
  double hbar = 1.054571817e-34;         // J s
  double k_B = 1.380649e-23;             // J/K
  double mass = 1.4431608951127549e-25;  // kg, 87Rb (86.909180527 u)

  static PhysicalConstants load(const std::string& path);

  friend bool operator==(const PhysicalConstants&,
                         const PhysicalConstants&) = default;
};

}  // namespace selforg
