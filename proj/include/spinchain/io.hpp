#pragma once

#include <string>
#include <vector>

#include "spinchain/fitting.hpp"
#include "spinchain/spectra.hpp"

namespace spinchain {

/// Two-column text (frequency Hz, amplitude) with a `# key: value`
/// metadata header block.
void write_spectrum1d(const std::string& path, const Spectrum1D& spectrum);
Spectrum1D read_spectrum1d(const std::string& path);

/// Two-column text (time s, value) with the same header style.
void write_series(const std::string& path, const TimeSeries& series);
TimeSeries read_series(const std::string& path);

/// Dense matrix text with axis header lines: `# f1_hz: ...` and
/// `# f2_hz: ...`, then one row per f1 bin.
void write_spectrum2d(const std::string& path, const Spectrum2D& spectrum);

/// Key-value reproducibility manifest. Lines beginning with `timing.` are
/// excluded from determinism comparisons.
void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries);

/// Human-readable fit report plus a machine-readable key=value file.
void write_fit_report(const std::string& report_path, const std::string& values_path,
                      const FitParameterSet& set, const FitResult& result);

}  // namespace spinchain
