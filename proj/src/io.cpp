#include "spinchain/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace spinchain {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SpinSystemError("cannot write '" + path + "'");
    out.precision(12);
    return out;
}

}  // namespace

void write_spectrum1d(const std::string& path, const Spectrum1D& spectrum) {
    auto out = open_out(path);
    for (const auto& [key, value] : spectrum.metadata) out << "# " << key << ": " << value << "\n";
    out << "# columns: frequency_hz amplitude\n";
    for (std::size_t k = 0; k < spectrum.frequencies_hz.size(); ++k)
        out << spectrum.frequencies_hz[k] << " " << spectrum.amplitudes[k] << "\n";
}

Spectrum1D read_spectrum1d(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpinSystemError("cannot read '" + path + "'");
    Spectrum1D spec;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos && colon > 2) {
                std::string key = line.substr(2, colon - 2);
                std::string value = line.substr(colon + 1);
                key.erase(key.find_last_not_of(" \t") + 1);
                value.erase(0, value.find_first_not_of(" \t"));
                if (key != "columns") spec.metadata[key] = value;
            }
            continue;
        }
        std::istringstream row(line);
        double f = 0.0, a = 0.0;
        if (row >> f >> a) {
            spec.frequencies_hz.push_back(f);
            spec.amplitudes.push_back(a);
        }
    }
    if (spec.frequencies_hz.empty())
        throw SpinSystemError("'" + path + "' contains no spectrum data");
    return spec;
}

void write_series(const std::string& path, const TimeSeries& series) {
    auto out = open_out(path);
    out << "# label: " << series.label << "\n";
    out << "# dwell_s: " << series.dwell_s << "\n";
    out << "# start_s: " << series.start_s << "\n";
    out << "# columns: time_s value\n";
    for (std::size_t k = 0; k < series.samples.size(); ++k)
        out << series.start_s + k * series.dwell_s << " " << series.samples[k] << "\n";
}

TimeSeries read_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpinSystemError("cannot read '" + path + "'");
    TimeSeries series;
    std::string line;
    std::vector<double> times;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                std::string key = line.substr(2, colon - 2);
                std::string value = line.substr(colon + 1);
                key.erase(key.find_last_not_of(" \t") + 1);
                value.erase(0, value.find_first_not_of(" \t"));
                if (key == "label") series.label = value;
                if (key == "dwell_s") series.dwell_s = std::stod(value);
                if (key == "start_s") series.start_s = std::stod(value);
            }
            continue;
        }
        std::istringstream row(line);
        double t = 0.0, v = 0.0;
        if (row >> t >> v) {
            times.push_back(t);
            series.samples.push_back(v);
        }
    }
    if (series.samples.empty()) throw SpinSystemError("'" + path + "' contains no series data");
    if (series.dwell_s == 0.0 && times.size() > 1) series.dwell_s = times[1] - times[0];
    return series;
}

void write_spectrum2d(const std::string& path, const Spectrum2D& spectrum) {
    auto out = open_out(path);
    for (const auto& [key, value] : spectrum.metadata) out << "# " << key << ": " << value << "\n";
    out << "# mode: " << spectrum.mode << "\n";
    out << "# f1_label: " << spectrum.f1_label << "\n";
    out << "# f2_label: " << spectrum.f2_label << "\n";
    out << "# f1_hz:";
    for (double f : spectrum.f1_hz) out << " " << f;
    out << "\n# f2_hz:";
    for (double f : spectrum.f2_hz) out << " " << f;
    out << "\n# rows: f1 bins, columns: f2 bins\n";
    for (Eigen::Index r = 0; r < spectrum.amplitudes.rows(); ++r) {
        for (Eigen::Index c = 0; c < spectrum.amplitudes.cols(); ++c) {
            if (c) out << " ";
            out << spectrum.amplitudes(r, c);
        }
        out << "\n";
    }
}

void write_manifest(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
    auto out = open_out(path);
    for (const auto& [key, value] : entries) out << key << " = " << value << "\n";
}

void write_fit_report(const std::string& report_path, const std::string& values_path,
                      const FitParameterSet& set, const FitResult& result) {
    {
        auto out = open_out(report_path);
        out << "total-lineshape fit\n";
        out << "  status:            " << (result.converged ? "converged" : "not converged")
            << " (" << result.message << ")\n";
        out << "  iterations:        " << result.iterations << "\n";
        out << "  residual norm:     " << result.residual_norm << " (initial "
            << result.initial_residual_norm << ")\n";
        out << "  uncertainties:     "
            << (result.uncertainties_available ? "from inverse approximate Hessian"
                                               : "unavailable (singular Hessian)")
            << "\n\n";
        out << std::left << std::setw(24) << "  parameter" << std::setw(18) << "value"
            << "uncertainty\n";
        for (std::size_t i = 0; i < set.parameters.size(); ++i) {
            const FitParameter& p = set.parameters[i];
            std::string label;
            switch (p.kind) {
                case FitParameter::Kind::Coupling:
                    label = "J(" + p.site_a + "," + p.site_b + ")";
                    break;
                case FitParameter::Kind::Shift:
                    label = "shift(" + p.site_a + ")";
                    break;
                case FitParameter::Kind::Linewidth:
                    label = "linewidth";
                    break;
            }
            out << "  " << std::left << std::setw(22) << label << std::setw(18)
                << result.values(i);
            if (result.uncertainties_available)
                out << result.uncertainties(i);
            else
                out << "n/a";
            out << "\n";
        }
    }
    {
        auto out = open_out(values_path);
        out << "converged = " << (result.converged ? 1 : 0) << "\n";
        out << "iterations = " << result.iterations << "\n";
        out << "residual_norm = " << result.residual_norm << "\n";
        for (std::size_t i = 0; i < set.parameters.size(); ++i) {
            const FitParameter& p = set.parameters[i];
            std::string key;
            switch (p.kind) {
                case FitParameter::Kind::Coupling:
                    key = "J." + p.site_a + "." + p.site_b;
                    break;
                case FitParameter::Kind::Shift:
                    key = "shift." + p.site_a;
                    break;
                case FitParameter::Kind::Linewidth:
                    key = "linewidth";
                    break;
            }
            out << key << " = " << result.values(i) << "\n";
            if (result.uncertainties_available)
                out << key << ".uncertainty = " << result.uncertainties(i) << "\n";
        }
    }
}

}  // namespace spinchain
