#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "spinchain/tocsy2d.hpp"
#include "test_support.hpp"

using namespace spinchain;

namespace {

SpinSystem hn_pair(double j_hz, double shift_h_ppm) {
    std::vector<Spin> spins{{"H", *find_isotope("1H"), shift_h_ppm},
                            {"N", *find_isotope("15N"), 0.0}};
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 2);
    j(0, 1) = j(1, 0) = j_hz;
    return SpinSystem(std::move(spins), std::move(j));
}

// Max amplitude over the modulated f1 region (away from the axial edge).
double cross_ridge_max(const Spectrum2D& spec, int edge_bins = 24) {
    double max = 0.0;
    for (int r = edge_bins; r < spec.amplitudes.rows(); ++r)
        max = std::max(max, spec.amplitudes.row(r).maxCoeff());
    return max;
}

double f1_of_max(const Spectrum2D& spec, int edge_bins = 24) {
    int best_r = edge_bins;
    double best = -1.0;
    for (int r = edge_bins; r < spec.amplitudes.rows(); ++r) {
        const double v = spec.amplitudes.row(r).maxCoeff();
        if (v > best) {
            best = v;
            best_r = r;
        }
    }
    return spec.f1_hz[best_r];
}

// Width of the f1 interval whose profile stays above a fraction of the
// profile maximum: the multiplet span along the indirect axis.
double f1_spread(const Spectrum2D& spec, double fraction = 0.25) {
    std::vector<double> profile(spec.amplitudes.rows());
    for (int r = 0; r < spec.amplitudes.rows(); ++r)
        profile[r] = spec.amplitudes.row(r).maxCoeff();
    const double cut = fraction * *std::max_element(profile.begin(), profile.end());
    double lo = 0.0, hi = 0.0;
    bool seen = false;
    for (int r = 0; r < spec.amplitudes.rows(); ++r) {
        if (profile[r] < cut) continue;
        if (!seen) lo = spec.f1_hz[r];
        hi = spec.f1_hz[r];
        seen = true;
    }
    return seen ? hi - lo : 0.0;
}

}  // namespace

TEST_CASE("grid metadata and output dimensions") {
    const SpinSystem sys = hn_pair(5.0, 1.0);
    Tocsy2DOptions opts;
    opts.n_t1 = 128;
    opts.zero_fill_1 = 4;
    opts.n_t2 = 64;
    opts.zero_fill_2 = 2;
    opts.t_mix_s = 0.0;
    const Spectrum2D spec = tocsy2d(sys, opts);
    CHECK(spec.amplitudes.rows() == 512);
    CHECK(spec.amplitudes.cols() == 128);
    CHECK(spec.metadata.at("si1") == "512");
    CHECK(spec.mode == "States-TPPI");
    CHECK(spec.f1_hz.size() == 512);
    CHECK(spec.f1_hz.front() == doctest::Approx(-500.0));
}

TEST_CASE("zero mixing time leaves heteronuclear planes uncorrelated") {
    // Normalization reference: the mixed counterpart of the same
    // experiment. With ideal transfers and no mixing the down- and up-maps
    // cancel exactly, so nothing reaches the nitrogen channel.
    const SpinSystem sys = hn_pair(5.0, 1.0);
    Tocsy2DOptions opts;
    opts.t_mix_s = 0.0;
    opts.n_t1 = 64;
    opts.n_t2 = 128;
    opts.carrier_f1_ppm = 0.0;
    const Spectrum2D unmixed = tocsy2d(sys, opts);
    Tocsy2DOptions mixed = opts;
    mixed.t_mix_s = 0.05;
    const double reference = tocsy2d(sys, mixed).amplitudes.maxCoeff();
    REQUIRE(reference > 0.0);
    CHECK(unmixed.amplitudes.maxCoeff() <= 1e-6 * reference);
}

TEST_CASE("mixing builds proton-nitrogen cross peaks at the proton offset") {
    // J = 5 Hz: t_mix = 1/(2J) gives complete zero-field population
    // exchange in the two-spin case.
    const SpinSystem sys = hn_pair(5.0, 1.0);
    Tocsy2DOptions opts;
    opts.t_mix_s = 0.1;
    opts.n_t1 = 64;
    opts.n_t2 = 128;
    opts.carrier_f1_ppm = 0.0;  // proton offset = +400.2 Hz at 9.4 T
    const Spectrum2D spec = tocsy2d(sys, opts);
    const double global_max = spec.amplitudes.maxCoeff();
    CHECK(cross_ridge_max(spec) > 1e-2 * global_max);
    const double expected_offset = 42.577e6 * 9.4 * 1.0e-6;
    CHECK(f1_of_max(spec) == doctest::Approx(expected_offset).epsilon(0.05));
}

TEST_CASE("cross-peak amplitude grows with mixing from zero") {
    const SpinSystem sys = hn_pair(5.0, 1.0);
    Tocsy2DOptions base;
    base.n_t1 = 32;
    base.n_t2 = 64;
    base.carrier_f1_ppm = 0.0;

    Tocsy2DOptions small = base;
    small.t_mix_s = 0.004;
    Tocsy2DOptions full = base;
    full.t_mix_s = 0.1;  // sin^2(pi J t) = 1
    const double ridge_small = cross_ridge_max(tocsy2d(sys, small));
    const double ridge_full = cross_ridge_max(tocsy2d(sys, full));
    CHECK(ridge_full > 5.0 * ridge_small);
}

TEST_CASE("carbon refocusing collapses the f1 doublet") {
    const SpinSystem sys = test::two_spin_ch(140.0);
    Tocsy2DOptions opts;
    opts.evolve_f1 = "1H";
    opts.observe_f2 = "13C";
    opts.t_mix_s = 0.02;
    opts.n_t1 = 64;
    opts.dwell_t1_s = 2e-3;  // SW1 = 500 Hz covers the +-70 Hz doublet
    opts.n_t2 = 64;
    opts.carrier_f1_ppm = -0.3;  // keep the proton lines off dead center
    const Spectrum2D plain = tocsy2d(sys, opts);
    Tocsy2DOptions ref = opts;
    ref.refocus_13c = true;
    const Spectrum2D refocused = tocsy2d(sys, ref);
    CHECK(f1_spread(refocused) < f1_spread(plain));
    // The unrefocused doublet spans +-J/2 about the offset; the refocused
    // line collapses to the chemical shift.
    CHECK(f1_spread(plain) > 100.0);
    CHECK(f1_spread(refocused) < 30.0);
}

TEST_CASE("invalid tocsy options are rejected") {
    const SpinSystem sys = hn_pair(5.0, 1.0);
    Tocsy2DOptions opts;
    opts.evolve_f1 = "19F";
    CHECK_THROWS_AS(tocsy2d(sys, opts), SpinSystemError);
    Tocsy2DOptions neg;
    neg.t_mix_s = -1.0;
    CHECK_THROWS_AS(tocsy2d(sys, neg), SpinSystemError);
    Tocsy2DOptions tiny;
    tiny.n_t1 = 1;
    CHECK_THROWS_AS(tocsy2d(sys, tiny), SpinSystemError);
}
