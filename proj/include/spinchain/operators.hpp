#pragma once

#include <Eigen/Dense>
#include <complex>
#include <span>
#include <vector>

#include "spinchain/spin_system.hpp"

namespace spinchain {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

enum class Axis { X, Y, Z, Plus, Minus };

/// Bit mask of spin `index` in the product basis (spin 0 = most
/// significant qubit; bit 0 means m = +1/2).
inline std::size_t spin_mask(int n_spins, int index) {
    return std::size_t{1} << (n_spins - 1 - index);
}

/// m quantum number of spin `index` in basis state `state` (+-1/2).
inline double spin_mz(int n_spins, int index, std::size_t state) {
    return (state & spin_mask(n_spins, index)) ? -0.5 : 0.5;
}

/// Total z projection of basis state `state`.
inline double total_mz(int n_spins, std::size_t state) {
    const int down = __builtin_popcountll(state);
    return 0.5 * (n_spins - 2 * down);
}

/// Product-basis operator 1 x ... x I_axis x ... x 1 acting on spin
/// `index` of an n-spin system (dimension 2^n). For Z the result is
/// diagonal with entries +-1/2.
Matrix single_spin_operator(int n_spins, int index, Axis axis);

inline Matrix single_spin_operator(const SpinSystem& system, int index, Axis axis) {
    if (index < 0 || index >= system.size())
        throw std::out_of_range("spin index " + std::to_string(index) + " out of range");
    return single_spin_operator(system.size(), index, axis);
}

/// Sum of single-spin operators over `subset`; an empty subset means all
/// spins.
Matrix total_spin_operator(int n_spins, Axis axis, std::span<const int> subset = {});

inline Matrix total_spin_operator(const SpinSystem& system, Axis axis,
                                  std::span<const int> subset = {}) {
    for (int i : subset)
        if (i < 0 || i >= system.size())
            throw std::out_of_range("spin index " + std::to_string(i) + " out of range");
    return total_spin_operator(system.size(), axis, subset);
}

/// Diagonal of I_z for spin `index` over the product basis, as a real
/// vector of +-1/2 entries.
RealVector single_spin_z_diagonal(int n_spins, int index);

/// Diagonal of the summed I_z over `subset` (all spins when empty).
RealVector total_z_diagonal(int n_spins, std::span<const int> subset = {});

/// Max |A - A^dagger| entry.
double hermiticity_defect(const Matrix& m);

/// Max |(U^dagger U - 1)| entry.
double unitarity_defect(const Matrix& u);

/// Max entry of |AB - BA|.
double commutator_norm(const Matrix& a, const Matrix& b);

}  // namespace spinchain
