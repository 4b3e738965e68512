#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "spinchain/operators.hpp"
#include "spinchain/spin_system.hpp"

namespace spinchain {

enum class Truncation { Full, Secular };

/// Field-dependent Hamiltonian description. All Hamiltonians are stored as
/// H/h in Hz, so eigenvalue differences are transition frequencies.
struct HamiltonianSpec {
    double field_tesla = 0.0;
    Truncation truncation = Truncation::Full;
    /// Homonuclear pairs whose shift difference (Hz) exceeds
    /// secular_factor * |J| lose their flip-flop term under secular
    /// truncation.
    double secular_factor = 10.0;

    void validate() const;
};

/// Zero-field J Hamiltonian H_J/h = -sum_{a<b} J_ab (Ix Ix + Iy Iy + Iz Iz)
/// in Hz. Hermitian and traceless; requires an expanded system.
Matrix build_j_hamiltonian(const SpinSystem& system);

/// Zeeman Hamiltonian H_Z/h = -sum_a gamma_a B (1 + delta_a 1e-6) I_az in
/// Hz (diagonal).
Matrix build_zeeman_hamiltonian(const SpinSystem& system, double field_tesla);

/// Zeeman + J coupling. Under secular truncation heteronuclear couplings
/// keep only their zz part, and homonuclear pairs failing the
/// secular_factor test are truncated the same way.
Matrix build_total_hamiltonian(const SpinSystem& system, const HamiltonianSpec& spec);

/// One magnetization sector of the product basis (or a connectivity
/// refinement of one).
struct BasisBlock {
    double mz = 0.0;
    std::vector<std::size_t> states;  // product-basis indices, ascending
};

/// Partition of the 2^N basis into total-Mz sectors, ordered by
/// descending mz (all-up first). Sizes are the binomial coefficients.
std::vector<BasisBlock> magnetization_blocks(int n_spins);

/// Splits each magnetization block into connected components of the
/// nonzero structure of H. Exact for any H that is block-diagonal over
/// the input blocks.
std::vector<BasisBlock> refine_blocks_by_connectivity(const Matrix& h,
                                                      const std::vector<BasisBlock>& blocks);

/// Eigen-decomposition of one basis block.
struct EigenBlock {
    double mz = 0.0;
    std::vector<std::size_t> states;
    Eigen::VectorXd values;  // ascending, Hz
    Matrix vectors;          // columns, orthonormal, in block-local coordinates
};

/// Blocked eigen-decomposition of a Hamiltonian. Eigenvalues are ascending
/// within each block; `blocked` is false when the Mz commutation check
/// failed and the decomposition fell back to one dense block.
struct EigenSystem {
    std::size_t dim = 0;
    std::vector<EigenBlock> blocks;
    bool blocked = true;
    std::string note;

    /// All eigenvalues, ascending.
    Eigen::VectorXd all_values_sorted() const;

    /// Full eigenvector matrix scattered back to product-basis rows.
    /// Column order follows block order. Intended for small systems and
    /// tests.
    Matrix full_vectors() const;

    /// Eigenvalues in the same column order as full_vectors().
    Eigen::VectorXd full_values() const;

    /// Max entry of |V diag(v) V^dagger - H| over all blocks.
    double reconstruction_defect(const Matrix& h) const;

    /// exp(-2 pi i H t) assembled as a dense matrix (small systems).
    Matrix propagator(double t_seconds) const;
};

struct BlockDecomposeOptions {
    bool refine = false;          // split Mz blocks by connectivity
    double commute_tol = 1e-10;   // relative [H, Fz] tolerance
};

/// Permutes the basis into total-Mz blocks, diagonalizes each block
/// independently (in parallel) and returns the merged eigen-system. If H
/// does not commute with total I_z within tolerance, blocking is refused
/// and a flagged single-block decomposition is returned.
EigenSystem block_decompose(const Matrix& h, int n_spins, BlockDecomposeOptions opts = {});

/// Checks max |H_ij| over entries that cross Mz sectors, relative to
/// max |H|. Zero for any Mz-conserving Hamiltonian.
double mz_commutation_defect(const Matrix& h, int n_spins);

/// Writes eigenvalues per block as line-oriented text (debug dump).
std::string eigen_system_dump(const EigenSystem& es);

}  // namespace spinchain
