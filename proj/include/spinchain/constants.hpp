#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spinchain {

/// Version tag written into reproducibility manifests.
inline constexpr std::string_view kConstantsVersion = "spinchain-constants-1";

/// Planck constant [J s].
inline constexpr double kPlanck = 6.62607015e-34;

/// Boltzmann constant [J/K].
inline constexpr double kBoltzmann = 1.380649e-23;

/// Default sample temperature [K].
inline constexpr double kDefaultTemperature = 298.0;

/// A spin-1/2 nuclear species. Gyromagnetic ratios are stored in MHz/T
/// (signed), so that gamma * B(tesla) * 1e6 is the bare Larmor frequency
/// in Hz.
struct Isotope {
    std::string symbol;
    double gamma_mhz_per_t = 0.0;
    double spin = 0.5;

    /// Bare Larmor frequency in Hz at the given field (signed).
    double larmor_hz(double field_tesla) const { return gamma_mhz_per_t * 1e6 * field_tesla; }
};

/// Reference gyromagnetic ratios in MHz/T. Values can be overridden per
/// input file; these are standard tabulated magnitudes.
const std::vector<Isotope>& builtin_isotopes();

/// Looks up an isotope by symbol ("1H", "13C", "15N", ...) in the builtin
/// table. Returns nullopt for unknown symbols.
std::optional<Isotope> find_isotope(std::string_view symbol);

}  // namespace spinchain
