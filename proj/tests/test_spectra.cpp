#include "doctest.h"

#include <cmath>

#include "spinchain/spectra.hpp"
#include "test_support.hpp"

using namespace spinchain;

TEST_CASE("pure cosine lands within one FFT bin") {
    TimeSeries ts;
    ts.dwell_s = 0.5e-3;
    ts.label = "synthetic";
    for (int k = 0; k < 256; ++k)
        ts.samples.push_back(std::cos(2.0 * M_PI * 126.09 * k * ts.dwell_s));
    const Spectrum1D spec = process_1d(ts, Window::none(), 4);
    const auto peaks = pick_peaks(spec, 0.5);
    REQUIRE(peaks.size() >= 1);
    const double bin = spec.frequencies_hz[1] - spec.frequencies_hz[0];
    CHECK(std::abs(peaks.front().frequency_hz - 126.09) <= bin);
}

TEST_CASE("constant series is silent after mean subtraction") {
    TimeSeries ts;
    ts.dwell_s = 1e-3;
    ts.samples.assign(64, 3.7);
    const Spectrum1D spec = process_1d(ts, Window::none(), 1);
    for (double a : spec.amplitudes) CHECK(a < 1e-12);
}

TEST_CASE("plain FFT obeys Parseval's identity") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<Complex> x(128);
    double time_energy = 0.0;
    for (auto& v : x) {
        v = Complex(dist(rng), dist(rng));
        time_energy += std::norm(v);
    }
    const auto transformed = fft_forward(x);
    double freq_energy = 0.0;
    for (const auto& v : transformed) freq_energy += std::norm(v);
    CHECK(std::abs(time_energy - freq_energy / 128.0) < 1e-9);
}

TEST_CASE("processing validates its inputs") {
    TimeSeries empty;
    empty.dwell_s = 1e-3;
    CHECK_THROWS_AS(process_1d(empty, Window::none(), 1), SpinSystemError);
    TimeSeries ts;
    ts.dwell_s = 1e-3;
    ts.samples.assign(8, 0.0);
    CHECK_THROWS_AS(process_1d(ts, Window::none(), 3), SpinSystemError);
    CHECK_THROWS_AS(process_1d(ts, Window::none(), 0), SpinSystemError);
}

TEST_CASE("window parsing round-trips") {
    CHECK(Window::parse("none").kind == WindowKind::None);
    CHECK(Window::parse("exp:5").parameter == doctest::Approx(5.0));
    CHECK(Window::parse("gauss:0.02").parameter == doctest::Approx(0.02));
    CHECK(Window::parse("cos2").kind == WindowKind::CosineSquared);
    CHECK_THROWS_AS(Window::parse("hamming"), SpinSystemError);
}

namespace {

Spectrum1D lorentzian_spectrum(const std::vector<std::pair<double, double>>& lines,
                               double width_hz, double lo, double hi, int points) {
    Spectrum1D spec;
    const double half = width_hz / 2.0;
    for (int k = 0; k < points; ++k) {
        const double f = lo + (hi - lo) * k / (points - 1);
        double a = 0.0;
        for (const auto& [nu, amp] : lines) a += amp * half * half / ((f - nu) * (f - nu) + half * half);
        spec.frequencies_hz.push_back(f);
        spec.amplitudes.push_back(a);
    }
    return spec;
}

}  // namespace

TEST_CASE("peak picking refines a synthetic Lorentzian") {
    const Spectrum1D spec = lorentzian_spectrum({{100.0, 1.0}}, 1.0, 50.0, 150.0, 2001);
    const auto peaks = pick_peaks(spec, 0.1);
    REQUIRE(peaks.size() == 1);
    CHECK(std::abs(peaks[0].frequency_hz - 100.0) <= 0.05);
    CHECK(peaks[0].width_hz == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("flat spectrum has no peaks") {
    Spectrum1D spec;
    for (int k = 0; k < 100; ++k) {
        spec.frequencies_hz.push_back(k);
        spec.amplitudes.push_back(1.0);
    }
    CHECK(pick_peaks(spec, 0.5).empty());
    CHECK_THROWS_AS(pick_peaks(spec, 0.0), SpinSystemError);
    CHECK_THROWS_AS(pick_peaks(spec, 1.0), SpinSystemError);
}

TEST_CASE("two separated Lorentzians are both recovered") {
    const Spectrum1D spec =
        lorentzian_spectrum({{100.0, 1.0}, {110.0, 0.8}}, 1.0, 80.0, 130.0, 4001);
    const auto peaks = pick_peaks(spec, 0.3);
    REQUIRE(peaks.size() == 2);
    CHECK(std::abs(peaks[0].frequency_hz - 100.0) < 0.05);
    CHECK(std::abs(peaks[1].frequency_hz - 110.0) < 0.05);
}

TEST_CASE("XA3 sticks sit at J and 2J") {
    const SpinSystem sys = test::xan_subsystem(3, 126.09);
    const auto sticks = zulf_stick_spectrum(sys);
    REQUIRE(!sticks.empty());
    // Only two transition frequencies exist; both must be present.
    bool at_j = false, at_2j = false;
    for (const auto& s : sticks) {
        if (std::abs(s.frequency_hz - 126.09) <= 0.1) at_j = true;
        if (std::abs(s.frequency_hz - 252.18) <= 0.1) at_2j = true;
        CHECK((std::abs(s.frequency_hz - 126.09) <= 0.1 ||
               std::abs(s.frequency_hz - 252.18) <= 0.1));
    }
    CHECK(at_j);
    CHECK(at_2j);
}

TEST_CASE("XA2 sticks sit at 3J/2 with nothing at 2J") {
    const SpinSystem sys = test::xan_subsystem(2, 130.61);
    const auto sticks = zulf_stick_spectrum(sys);
    REQUIRE(sticks.size() == 1);
    CHECK(std::abs(sticks[0].frequency_hz - 195.92) <= 0.1);
    for (const auto& s : sticks)
        CHECK(std::abs(s.frequency_hz - 2.0 * 130.61) > 5.0);
}

TEST_CASE("single spin has no transitions") {
    std::vector<Spin> spins{{"H", *find_isotope("1H"), 0.0}};
    const SpinSystem sys(spins, Eigen::MatrixXd::Zero(1, 1));
    CHECK(zulf_stick_spectrum(sys).empty());
}

TEST_CASE("stick frequencies are eigenvalue differences") {
    // Brute-force difference enumeration on a random 4-spin system.
    std::mt19937 rng(17);
    const SpinSystem sys = test::random_system(rng, 4);
    const auto sticks = zulf_stick_spectrum(sys, {0.0001, 1e-10});
    const Eigen::VectorXd values =
        block_decompose(build_j_hamiltonian(sys), sys.size()).all_values_sorted();
    for (const auto& s : sticks) {
        bool matched = false;
        for (int i = 0; i < values.size() && !matched; ++i)
            for (int k = 0; k < values.size() && !matched; ++k)
                if (std::abs(std::abs(values(i) - values(k)) - s.frequency_hz) < 1e-6)
                    matched = true;
        CHECK(matched);
    }
}

TEST_CASE("tau grid helpers") {
    const auto grid = uniform_tau_grid(256, 0.5e-3);
    CHECK(grid.size() == 256);
    CHECK(grid.back() == doctest::Approx(0.1275));
}

TEST_CASE("single-point series equals the protocol detection") {
    const SpinSystem sys = test::xan_subsystem(2, 130.61);
    const ProtocolSchedule schedule = ProtocolSchedule::field_cycle();
    const auto series = indirect_j_series(sys, schedule, {0.0});
    const ProtocolResult direct = run_protocol(sys, schedule, kDefaultTemperature, 0.0);
    REQUIRE(series.size() == direct.detected.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        CHECK(series[i].label == direct.detected[i].first);
        CHECK(series[i].samples[0] == doctest::Approx(direct.detected[i].second).epsilon(1e-10));
    }
}

TEST_CASE("series fast path equals running the protocol per tau") {
    const SpinSystem sys = test::xan_subsystem(2, 130.61);
    const ProtocolSchedule schedule = ProtocolSchedule::field_cycle();
    const auto grid = uniform_tau_grid(7, 1.3e-3);
    FieldCycleEngine engine(sys);
    const auto series = indirect_j_series(engine, schedule, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const ProtocolResult direct = engine.run(schedule, kDefaultTemperature, grid[k]);
        for (std::size_t s = 0; s < series.size(); ++s)
            CHECK(series[s].samples[k] ==
                  doctest::Approx(direct.detected[s].second).epsilon(1e-9));
    }
}

TEST_CASE("non-uniform tau grids are rejected") {
    const SpinSystem sys = test::xan_subsystem(2, 130.61);
    const ProtocolSchedule schedule = ProtocolSchedule::field_cycle();
    CHECK_THROWS_AS(indirect_j_series(sys, schedule, {0.0, 1e-3, 3e-3}), SpinSystemError);
}

TEST_CASE("CH pair series oscillates at J with the analytic contrast") {
    // Ideal-protocol two-spin model: S_H(tau) =
    // e/2 [(gH + gC) + (gH - gC) cos(2 pi J tau)], so the modulation depth
    // is (gH - gC)/(gH + gC); corrections are second order in J/dNu at the
    // transfer field.
    const double j = 140.0;
    const SpinSystem sys = test::two_spin_ch(j);
    const ProtocolSchedule schedule = ProtocolSchedule::field_cycle();
    const std::vector<double> grid = {0.0, 0.25 / j, 0.5 / j, 0.75 / j, 1.0 / j};
    const auto series = indirect_j_series(sys, schedule, grid, {});
    const TimeSeries* s_h = nullptr;
    for (const auto& ts : series)
        if (ts.label == "H") s_h = &ts;
    REQUIRE(s_h != nullptr);
    const double mean = 0.5 * (s_h->samples[0] + s_h->samples[2]);
    const double amp = 0.5 * (s_h->samples[0] - s_h->samples[2]);
    const double expected_ratio = (42.577 - 10.708) / (42.577 + 10.708);
    CHECK(amp / mean == doctest::Approx(expected_ratio).epsilon(0.02));
    // Full period recurrence.
    CHECK(s_h->samples[4] == doctest::Approx(s_h->samples[0]).epsilon(1e-4));
    // Quarter-period points sit at the mean.
    CHECK(s_h->samples[1] == doctest::Approx(mean).epsilon(0.01));
}

TEST_CASE("pipeline peaks match the stick oracle") {
    const SpinSystem sys = test::xan_subsystem(3, 126.09);
    const ProtocolSchedule schedule = ProtocolSchedule::field_cycle();
    const auto series = indirect_j_series(sys, schedule, uniform_tau_grid(256, 0.5e-3));
    const auto sticks = zulf_stick_spectrum(sys);
    for (const auto& ts : series) {
        // Exponential apodization suppresses truncation sidelobes.
        const Spectrum1D spec = process_1d(ts, Window::exponential(20.0), 4);
        const double bin = spec.frequencies_hz[1] - spec.frequencies_hz[0];
        for (const auto& peak : pick_peaks(spec, 0.2)) {
            bool near_stick = false;
            for (const auto& stick : sticks)
                if (std::abs(stick.frequency_hz - peak.frequency_hz) <= bin) near_stick = true;
            CHECK(near_stick);
        }
    }
}

TEST_CASE("equivalent protons give a single high-field line") {
    std::vector<Spin> spins{{"H", *find_isotope("1H"), 1.0}};
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(1, 1);
    SpinSystem compact(spins, j, {{"H", {0}, 2}});
    HamiltonianSpec spec;
    spec.field_tesla = 16.4428;
    spec.truncation = Truncation::Secular;
    const Spectrum1D s = highfield_spectrum(compact, spec, "1H");
    const auto peaks = pick_peaks(s, 0.5);
    REQUIRE(peaks.size() == 1);
    // Offset equals the chemical-shift term gamma B delta.
    const double expected = 42.577e6 * 16.4428 * 1.0e-6;
    CHECK(peaks[0].frequency_hz == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("CH pair proton spectrum is a 135.2 Hz doublet") {
    const SpinSystem sys = test::two_spin_ch(135.2);
    HamiltonianSpec spec;
    spec.field_tesla = 16.4428;
    spec.truncation = Truncation::Secular;
    const Spectrum1D s = highfield_spectrum(sys, spec, "1H");
    const auto peaks = pick_peaks(s, 0.4);
    REQUIRE(peaks.size() == 2);
    CHECK(peaks[1].frequency_hz - peaks[0].frequency_hz == doctest::Approx(135.2).epsilon(1e-3));
}

TEST_CASE("butyronitrile 15N spectrum shows the 17.37 Hz one-bond doublet") {
    const SpinSystem sys = test::butyronitrile_compact();
    HamiltonianSpec spec;
    spec.field_tesla = 16.4428;
    spec.truncation = Truncation::Secular;
    HighFieldOptions opts;
    const Spectrum1D s = highfield_spectrum(sys, spec, "15N", opts);
    const auto peaks = pick_peaks(s, 0.25);
    REQUIRE(peaks.size() >= 2);
    // Intensity-weighted centroids of the two doublet halves, split at the
    // multiplet centroid.
    double all_c = 0.0, all_w = 0.0;
    for (const auto& p : peaks) {
        all_c += p.frequency_hz * p.amplitude;
        all_w += p.amplitude;
    }
    const double center = all_c / all_w;
    double lo_c = 0.0, lo_w = 0.0, hi_c = 0.0, hi_w = 0.0;
    for (const auto& p : peaks) {
        if (p.frequency_hz < center) {
            lo_c += p.frequency_hz * p.amplitude;
            lo_w += p.amplitude;
        } else {
            hi_c += p.frequency_hz * p.amplitude;
            hi_w += p.amplitude;
        }
    }
    REQUIRE(lo_w > 0.0);
    REQUIRE(hi_w > 0.0);
    CHECK(hi_c / hi_w - lo_c / lo_w == doctest::Approx(17.37).epsilon(0.03));
}

TEST_CASE("observe isotope must be present") {
    const SpinSystem sys = test::two_spin_ch(140.0);
    HamiltonianSpec spec;
    spec.field_tesla = 9.4;
    CHECK_THROWS_AS(highfield_spectrum(sys, spec, "19F"), SpinSystemError);
    CHECK_THROWS_AS(zulf_stick_spectrum(sys, {}, std::string("31P")), SpinSystemError);
}
