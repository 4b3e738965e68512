#pragma once

#include <map>
#include <optional>
#include <string>

#include "spinchain/dynamics.hpp"
#include "spinchain/spin_system.hpp"

namespace spinchain {

/// Parse error carrying the offending line number(s).
class ParseError : public SpinSystemError {
  public:
    using SpinSystemError::SpinSystemError;
};

/// Optional [fit] configuration from the input file.
struct FitConfig {
    double field_tesla = 16.4428;
    double linewidth_hz = 0.5;
    bool free_couplings = true;
    bool free_shifts = false;
    bool free_linewidth = false;
    int max_iterations = 120;
    double secular_factor = 1e9;  // keep homonuclear flip-flops by default
};

/// Structured input file: spin system (required), optional isotope
/// overrides, optional protocol schedule and fit configuration.
struct SpinFile {
    SpinSystem system;
    std::optional<ProtocolSchedule> protocol;
    FitConfig fit;
    std::string name;
};

/// Parses the structured text format:
///   [isotopes]   symbol gamma_mhz_per_t        (optional overrides)
///   [spins]      label isotope shift_ppm count
///   [couplings]  site_a site_b J_hz            (upper triangle)
///   [protocol]   prepolarize/ramp/sudden/evolve/detect lines (optional)
///   [fit]        key = value lines             (optional)
/// Malformed input raises ParseError with line numbers.
SpinFile parse_spin_file(const std::string& path);

/// Parses from an in-memory string (used by tests and round-trips).
SpinFile parse_spin_text(const std::string& text, const std::string& origin = "<string>");

/// Serializes a system back to the file format; parse(serialize(s))
/// yields an equal system.
std::string serialize_spin_system(const SpinSystem& system, const std::string& name = "");

}  // namespace spinchain
