#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spinchain/dynamics.hpp"
#include "spinchain/hamiltonian.hpp"
#include "spinchain/spin_system.hpp"

namespace spinchain {

/// Uniformly sampled real time trace.
struct TimeSeries {
    std::vector<double> samples;
    double dwell_s = 0.0;
    double start_s = 0.0;
    std::string label;
};

/// 1D frequency-domain result with a strictly increasing axis.
struct Spectrum1D {
    std::vector<double> frequencies_hz;
    std::vector<double> amplitudes;
    std::map<std::string, std::string> metadata;
};

struct Peak {
    double frequency_hz = 0.0;
    double amplitude = 0.0;
    double width_hz = 0.0;  // full width at half maximum
};

/// 2D frequency-domain result (rows = f1 bins, cols = f2 bins).
struct Spectrum2D {
    Eigen::MatrixXd amplitudes;
    std::vector<double> f1_hz;
    std::vector<double> f2_hz;
    std::string f1_label;
    std::string f2_label;
    std::string mode;  // acquisition-mode tag
    std::map<std::string, std::string> metadata;
};

// ---------------------------------------------------------------------------
// Processing
// ---------------------------------------------------------------------------

enum class WindowKind { None, Exponential, Gaussian, CosineSquared };

struct Window {
    WindowKind kind = WindowKind::None;
    /// Exponential: decay rate in 1/s (w = exp(-rate t)); Gaussian: 1/e
    /// width in s (w = exp(-(t/width)^2)). CosineSquared ignores it.
    double parameter = 0.0;

    static Window none() { return {WindowKind::None, 0.0}; }
    static Window exponential(double rate_per_s) { return {WindowKind::Exponential, rate_per_s}; }
    static Window gaussian(double width_s) { return {WindowKind::Gaussian, width_s}; }
    static Window cosine_squared() { return {WindowKind::CosineSquared, 0.0}; }

    static Window parse(const std::string& text);  // "none" | "exp[:rate]" | "gauss[:w]" | "cos2"
    std::string describe() const;
};

/// Complex FFT, forward convention X_k = sum_n x_n exp(-2 pi i k n / N).
std::vector<Complex> fft_forward(std::vector<Complex> samples);

/// Mean subtraction, apodization, zero-filling to length * factor and FFT;
/// returns the one-sided magnitude spectrum with frequency axis
/// 0 .. 1/(2 dwell).
Spectrum1D process_1d(const TimeSeries& series, const Window& window, int zero_fill_factor);

/// Local maxima above threshold * max, with 3-point parabolic frequency
/// refinement and widths from half-max crossings.
std::vector<Peak> pick_peaks(const Spectrum1D& spectrum, double threshold);

// ---------------------------------------------------------------------------
// Zero-field stick spectra
// ---------------------------------------------------------------------------

struct Stick {
    double frequency_hz = 0.0;
    double intensity = 0.0;
};

struct StickOptions {
    double merge_tol_hz = 0.01;       // lines closer than this are merged
    double relative_threshold = 1e-8; // drop sticks below this fraction of the max
};

/// Allowed-transition sticks of the zero-field J Hamiltonian for a given
/// initial-state / detection operator pair: intensity
/// |<i|D|j> <j|rho0|i>| at frequency |lambda_i - lambda_j|. This is the
/// resolution-free oracle for the FFT pipeline.
std::vector<Stick> zulf_stick_spectrum(const SpinSystem& system, const Matrix& rho0,
                                       const Matrix& detect, const StickOptions& opts = {});

/// Default observable pair: rho0 is the gamma-weighted z-magnetization of
/// the sudden-dropped high-field thermal state, detection the
/// gamma-weighted z-magnetization (restricted to `observe` when given).
std::vector<Stick> zulf_stick_spectrum(const SpinSystem& system, const StickOptions& opts = {},
                                       const std::optional<std::string>& observe_isotope = {});

// ---------------------------------------------------------------------------
// Indirect J-spectroscopy (field cycling)
// ---------------------------------------------------------------------------

struct SeriesOptions {
    double temperature_k = kDefaultTemperature;
    /// Isotope symbols or group labels to detect; empty = groups from the
    /// schedule's Detect segment, or all groups.
    std::vector<std::string> observe;
};

/// Runs the field-cycle protocol for every tau in the grid and returns the
/// group-summed <I_z> detection series per observed group. The schedule
/// must contain exactly one variable-duration evolution segment; the grid
/// must be uniform. Equivalent to calling run_protocol per tau, but reuses
/// the blocked eigen-decompositions across the sweep.
std::vector<TimeSeries> indirect_j_series(FieldCycleEngine& engine,
                                          const ProtocolSchedule& schedule,
                                          const std::vector<double>& tau_grid,
                                          const SeriesOptions& opts = {});

std::vector<TimeSeries> indirect_j_series(const SpinSystem& system,
                                          const ProtocolSchedule& schedule,
                                          const std::vector<double>& tau_grid,
                                          const SeriesOptions& opts = {});

/// Uniform tau grid: n points spaced by dwell starting at 0.
std::vector<double> uniform_tau_grid(int points, double dwell_s);

// ---------------------------------------------------------------------------
// High-field spectra
// ---------------------------------------------------------------------------

struct HighFieldOptions {
    double linewidth_hz = 0.5;        // Lorentzian FWHM
    double temperature_k = kDefaultTemperature;
    int grid_points = 0;              // 0 = automatic from span and linewidth
    double margin_hz = 20.0;          // axis margin beyond outermost line
    double intensity_threshold = 1e-9; // relative line cut
    std::optional<double> min_offset_hz, max_offset_hz;  // explicit axis range
};

/// One allowed high-field transition (frequency as offset from the bare
/// Larmor frequency of the observed isotope).
struct SpectralLine {
    double offset_hz = 0.0;
    double intensity = 0.0;
};

/// Transition lines of the observed isotope: blocked diagonalization,
/// I^- transition moments between adjacent total-Mz sectors, weighted by
/// linearized thermal population differences. Intensities are normalized
/// to a unit maximum.
std::vector<SpectralLine> highfield_lines(const SpinSystem& system, const HamiltonianSpec& spec,
                                          const std::string& observe_isotope,
                                          const HighFieldOptions& opts = {});

/// Lorentzian-broadened spectrum of the observed isotope, reported as
/// offsets from the isotope's bare Larmor frequency (metadata carries the
/// ppm conversion).
Spectrum1D highfield_spectrum(const SpinSystem& system, const HamiltonianSpec& spec,
                              const std::string& observe_isotope,
                              const HighFieldOptions& opts = {});

}  // namespace spinchain
