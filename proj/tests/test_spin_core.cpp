#include "doctest.h"

#include <unsupported/Eigen/KroneckerProduct>

#include "spinchain/operators.hpp"
#include "spinchain/spin_system.hpp"
#include "test_support.hpp"

using namespace spinchain;

namespace {

// Brute-force Kronecker embedding, independent of the bit-arithmetic
// construction under test.
Matrix kron_oracle(int n_spins, int index, Axis axis) {
    Matrix sx(2, 2), sy(2, 2), sz(2, 2), id = Matrix::Identity(2, 2);
    sx << 0.0, 0.5, 0.5, 0.0;
    sy << 0.0, Complex(0, -0.5), Complex(0, 0.5), 0.0;
    sz << 0.5, 0.0, 0.0, -0.5;
    const Matrix& op = axis == Axis::X ? sx : (axis == Axis::Y ? sy : sz);
    Matrix result = Matrix::Identity(1, 1);
    for (int k = 0; k < n_spins; ++k) {
        const Matrix& factor = (k == index) ? op : id;
        result = Eigen::kroneckerProduct(result, factor).eval();
    }
    return result;
}

}  // namespace

TEST_CASE("single spin z operator, one spin") {
    const Matrix iz = single_spin_operator(1, 0, Axis::Z);
    CHECK(iz(0, 0).real() == doctest::Approx(0.5));
    CHECK(iz(1, 1).real() == doctest::Approx(-0.5));
    CHECK(std::abs(iz(0, 1)) == 0.0);
}

TEST_CASE("spin 0 is the most significant qubit") {
    const Matrix iz = single_spin_operator(2, 0, Axis::Z);
    CHECK(iz(0, 0).real() == doctest::Approx(0.5));
    CHECK(iz(1, 1).real() == doctest::Approx(0.5));
    CHECK(iz(2, 2).real() == doctest::Approx(-0.5));
    CHECK(iz(3, 3).real() == doctest::Approx(-0.5));
}

TEST_CASE("operators match the Kronecker oracle") {
    for (int n : {1, 2, 3}) {
        for (int idx = 0; idx < n; ++idx) {
            for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
                const Matrix built = single_spin_operator(n, idx, axis);
                const Matrix expected = kron_oracle(n, idx, axis);
                CHECK((built - expected).cwiseAbs().maxCoeff() < 1e-15);
            }
        }
    }
}

TEST_CASE("total z operator of two spins") {
    const Matrix fz = total_spin_operator(2, Axis::Z);
    CHECK(fz(0, 0).real() == doctest::Approx(1.0));
    CHECK(fz(1, 1).real() == doctest::Approx(0.0));
    CHECK(fz(2, 2).real() == doctest::Approx(0.0));
    CHECK(fz(3, 3).real() == doctest::Approx(-1.0));
}

TEST_CASE("singleton subset equals the single-spin operator") {
    const std::vector<int> subset{1};
    const Matrix total = total_spin_operator(3, Axis::X, subset);
    const Matrix single = single_spin_operator(3, 1, Axis::X);
    CHECK((total - single).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("index out of range is rejected") {
    CHECK_THROWS(single_spin_operator(2, 2, Axis::Z));
    CHECK_THROWS(single_spin_operator(2, -1, Axis::X));
    const auto sys = test::two_spin_ch(140.0);
    CHECK_THROWS(single_spin_operator(sys, 5, Axis::Z));
    const std::vector<int> bad{0, 7};
    CHECK_THROWS(total_spin_operator(sys, Axis::Z, bad));
}

TEST_CASE("angular momentum commutators close cyclically") {
    for (int a = 0; a < 3; ++a) {
        const Matrix ix = single_spin_operator(3, a, Axis::X);
        const Matrix iy = single_spin_operator(3, a, Axis::Y);
        const Matrix iz = single_spin_operator(3, a, Axis::Z);
        const Complex i(0.0, 1.0);
        CHECK((ix * iy - iy * ix - i * iz).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((iy * iz - iz * iy - i * ix).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((iz * ix - ix * iz - i * iy).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("operators on distinct spins commute") {
    for (Axis a : {Axis::X, Axis::Y, Axis::Z})
        for (Axis b : {Axis::X, Axis::Y, Axis::Z}) {
            const Matrix op1 = single_spin_operator(3, 0, a);
            const Matrix op2 = single_spin_operator(3, 2, b);
            CHECK(commutator_norm(op1, op2) <= 1e-14);
        }
}

TEST_CASE("constructed operators are traceless") {
    for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
        CHECK(std::abs(single_spin_operator(3, 1, axis).trace()) < 1e-14);
        CHECK(std::abs(total_spin_operator(3, axis).trace()) < 1e-14);
    }
}

TEST_CASE("compact butyronitrile expands to twelve spins") {
    const SpinSystem compact = test::butyronitrile_compact();
    CHECK(compact.size() == 8);
    const SpinSystem full = expand_equivalence(compact);
    CHECK(full.size() == 12);
    CHECK(full.expanded());

    // Four 13C, one 15N, seven 1H.
    CHECK(full.spins_of_isotope("13C").size() == 4);
    CHECK(full.spins_of_isotope("15N").size() == 1);
    CHECK(full.spins_of_isotope("1H").size() == 7);

    // Replicated couplings: every H8 member couples to C5 with the same J,
    // and intra-group couplings are zero.
    const auto h8 = test::find_spins(full, {"H8a", "H8b", "H8c"});
    const int c5 = test::find_spins(full, {"C5"}).front();
    for (int m : h8) CHECK(full.coupling(m, c5) == doctest::Approx(126.09));
    CHECK(full.coupling(h8[0], h8[1]) == 0.0);
    CHECK(full.coupling(h8[1], h8[2]) == 0.0);
}

TEST_CASE("expansion is idempotent and identity without groups") {
    const SpinSystem expanded = expand_equivalence(test::butyronitrile_compact());
    const SpinSystem twice = expand_equivalence(expanded);
    CHECK(twice.size() == expanded.size());
    CHECK((twice.couplings() - expanded.couplings()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < expanded.size(); ++i)
        CHECK(twice.spin(i).label == expanded.spin(i).label);

    const SpinSystem plain = test::two_spin_ch(140.0);
    const SpinSystem same = expand_equivalence(plain);
    CHECK(same.size() == plain.size());
    CHECK((same.couplings() - plain.couplings()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-spin group replicates couplings to external spins") {
    std::vector<Spin> spins{{"X", *find_isotope("13C"), 0.0}, {"A", *find_isotope("1H"), 1.0}};
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 2);
    j(0, 1) = j(1, 0) = 5.0;
    SpinSystem compact(spins, j, {{"A", {1}, 2}});
    const SpinSystem full = expand_equivalence(compact);
    CHECK(full.size() == 3);
    CHECK(full.coupling(0, 1) == doctest::Approx(5.0));
    CHECK(full.coupling(0, 2) == doctest::Approx(5.0));
    CHECK(full.coupling(1, 2) == 0.0);
}

TEST_CASE("invalid systems are rejected") {
    const Isotope h = *find_isotope("1H");
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2, 2);

    SUBCASE("asymmetric couplings") {
        j(0, 1) = 3.0;
        CHECK_THROWS_AS(SpinSystem({{"a", h, 0.0}, {"b", h, 0.0}}, j), SpinSystemError);
    }
    SUBCASE("nonzero diagonal") {
        j(0, 0) = 1.0;
        CHECK_THROWS_AS(SpinSystem({{"a", h, 0.0}, {"b", h, 0.0}}, j), SpinSystemError);
    }
    SUBCASE("group size below one") {
        CHECK_THROWS_AS(SpinSystem({{"a", h, 0.0}, {"b", h, 0.0}}, j, {{"g", {0}, 0}}),
                        SpinSystemError);
    }
    SUBCASE("group mixing isotopes") {
        const Isotope c = *find_isotope("13C");
        CHECK_THROWS_AS(SpinSystem({{"a", h, 0.0}, {"b", c, 0.0}}, j, {{"g", {0, 1}, 2}}),
                        SpinSystemError);
    }
    SUBCASE("spin in two groups") {
        CHECK_THROWS_AS(
            SpinSystem({{"a", h, 0.0}, {"b", h, 0.0}}, j, {{"g1", {0}, 2}, {"g2", {0}, 3}}),
            SpinSystemError);
    }
    SUBCASE("zero gyromagnetic ratio") {
        Isotope bad = h;
        bad.gamma_mhz_per_t = 0.0;
        CHECK_THROWS_AS(SpinSystem({{"a", bad, 0.0}, {"b", h, 0.0}}, j), SpinSystemError);
    }
}

TEST_CASE("proton subset of butyronitrile is traceless") {
    const SpinSystem full = expand_equivalence(test::butyronitrile_compact());
    const auto protons = full.spins_of_isotope("1H");
    CHECK(protons.size() == 7);
    const Eigen::VectorXd diag = total_z_diagonal(full.size(), protons);
    CHECK(std::abs(diag.sum()) < 1e-10);
}
