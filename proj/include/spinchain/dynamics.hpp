#pragma once

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spinchain/hamiltonian.hpp"
#include "spinchain/spin_system.hpp"

namespace spinchain {

/// Dense system state over the 2^N product basis. Hermitian with unit
/// trace; validated on construction.
class DensityMatrix {
  public:
    explicit DensityMatrix(Matrix rho);

    const Matrix& matrix() const { return rho_; }
    std::size_t dim() const { return rho_.rows(); }

    double trace_real() const { return rho_.trace().real(); }
    double purity() const { return (rho_ * rho_).trace().real(); }
    /// Smallest eigenvalue; for tests of positive semidefiniteness.
    double min_eigenvalue() const;

  private:
    Matrix rho_;
};

/// High-temperature thermal state rho = 2^-N (1 - h H/kT) at the given
/// field (full isotropic Hamiltonian), trace renormalized to 1.
DensityMatrix thermal_state(const SpinSystem& system, double field_tesla, double temperature_k);

/// rho(t) = U rho U^dagger with U = exp(-2 pi i H t), via the blocked
/// eigen-decomposition of H.
DensityMatrix propagate(const DensityMatrix& rho, const Matrix& h_hz, int n_spins,
                        double t_seconds);

/// Same, reusing a previously computed eigen-system.
DensityMatrix propagate(const DensityMatrix& rho, const EigenSystem& es, double t_seconds);

/// Sudden field switch: the state is unchanged, only the generator of
/// subsequent evolution changes. Present so schedules carry an explicit,
/// loggable step.
DensityMatrix sudden_switch(const DensityMatrix& rho);

/// Diagnostics produced by the ideal adiabatic map.
struct AdiabaticInfo {
    double offdiagonal_norm = 0.0;  // Frobenius norm of discarded coherences
    bool degenerate = false;        // a rank ordering needed the tie-break rule
};

/// Ideal adiabatic field change: populations in the eigenbasis of from_H
/// are transferred to the rank-matched eigenstates of to_H within each
/// total-Mz block; coherences between eigenstates are discarded.
/// Eigenvalue ties are broken by the dominant product-basis index of the
/// eigenvector, flagged through `info`.
DensityMatrix adiabatic_ramp(const DensityMatrix& rho, const EigenSystem& from_es,
                             const EigenSystem& to_es, AdiabaticInfo* info = nullptr);

/// Per-spin <I_az> values, plus summed values per detection group.
struct MagnetizationReport {
    std::vector<std::pair<std::string, double>> per_spin;
    std::vector<std::pair<std::string, double>> per_group;
};

MagnetizationReport measure_magnetization(const DensityMatrix& rho, const SpinSystem& system,
                                          std::span<const int> subset = {});

// ---------------------------------------------------------------------------
// Field-cycle protocols
// ---------------------------------------------------------------------------

struct AdiabaticRampSegment {
    double from_field_tesla = 0.0;
    double to_field_tesla = 0.0;
};
struct SuddenSwitchSegment {
    double to_field_tesla = 0.0;
};
struct FreeEvolutionSegment {
    double field_tesla = 0.0;
    double duration_s = 0.0;
    bool variable = false;  // duration supplied per run (tau sweeps)
};
struct DetectSegment {
    std::vector<std::string> targets;  // isotope symbols or group labels; empty = all groups
};

using ProtocolSegment =
    std::variant<AdiabaticRampSegment, SuddenSwitchSegment, FreeEvolutionSegment, DetectSegment>;

/// Ordered field-cycle segments, preceded by thermal prepolarization.
struct ProtocolSchedule {
    double prepolarize_field_tesla = 9.4;
    std::vector<ProtocolSegment> segments;

    void validate() const;
    /// Index of the variable-duration FreeEvolution, if any.
    std::optional<std::size_t> variable_segment() const;

    /// The canonical indirect-J cycle: thermal at `high_field`, adiabatic
    /// ramp to `transfer_field`, sudden switch to `evolution_field`,
    /// variable evolution, sudden switch back, adiabatic return, detect.
    static ProtocolSchedule field_cycle(double high_field = 9.4, double transfer_field = 50e-6,
                                        double evolution_field = 50e-9,
                                        std::vector<std::string> detect_targets = {});
};

/// Block-diagonal density matrix over total-Mz sectors. Protocol segments
/// conserve total Mz, so states never develop coherences between sectors.
struct BlockDensity {
    std::vector<BasisBlock> blocks;
    std::vector<Matrix> rho;  // block-local matrices

    double trace_real() const;
    double purity() const;
    Matrix dense(std::size_t dim) const;
    /// Sum of diag(rho) weighted by a product-basis diagonal observable.
    double expectation_diagonal(const Eigen::VectorXd& diag) const;

    static BlockDensity from_dense(const Matrix& rho, const std::vector<BasisBlock>& blocks);
};

struct SegmentLog {
    std::string description;
    double field_tesla = 0.0;
    double duration_s = 0.0;
    double trace = 0.0;
    double purity = 0.0;
    std::vector<std::pair<std::string, double>> group_mz;
    std::vector<std::string> flags;
};

struct ProtocolResult {
    BlockDensity state;
    double final_field_tesla = 0.0;
    std::vector<SegmentLog> log;
    /// Group label -> <I_z> captured by the Detect segment (empty if none).
    std::vector<std::pair<std::string, double>> detected;

    DensityMatrix dense_state() const;
};

/// A protocol segment failed; carries the log of the segments that had
/// completed.
class ProtocolError : public SpinSystemError {
  public:
    ProtocolError(const std::string& what, std::vector<SegmentLog> partial)
        : SpinSystemError(what), partial_log(std::move(partial)) {}
    std::vector<SegmentLog> partial_log;
};

/// Runs field-cycle protocols on a spin system, caching the blocked
/// eigen-decomposition per field value. Instances are safe to reuse across
/// runs; runs are deterministic.
class FieldCycleEngine {
  public:
    explicit FieldCycleEngine(SpinSystem system);

    const SpinSystem& system() const { return system_; }
    const std::vector<BasisBlock>& blocks() const { return blocks_; }

    /// Blocked eigen-system of the full Hamiltonian at `field` (cached).
    const EigenSystem& eigensystem(double field_tesla);

    /// Executes the schedule. A variable evolution segment takes its
    /// duration from `tau`; supplying tau for a schedule without one is an
    /// error. Segment errors abort with the partial log attached to the
    /// exception's message and rethrown as SpinSystemError.
    ProtocolResult run(const ProtocolSchedule& schedule, double temperature_k = kDefaultTemperature,
                       std::optional<double> tau_seconds = {});

    /// Thermal-state populations per block (eigenbasis of the field's
    /// Hamiltonian), trace-normalized.
    std::vector<Eigen::VectorXd> thermal_populations(double field_tesla, double temperature_k);

  private:
    SpinSystem system_;
    std::vector<BasisBlock> blocks_;
    std::map<double, std::unique_ptr<EigenSystem>> cache_;
};

/// run_protocol convenience wrapper: engine construction plus one run.
ProtocolResult run_protocol(const SpinSystem& system, const ProtocolSchedule& schedule,
                            double temperature_k = kDefaultTemperature,
                            std::optional<double> tau_seconds = {});

/// Rank ordering of an eigen-block for the adiabatic correspondence:
/// ascending eigenvalue, ties broken by dominant product-basis index.
std::vector<int> adiabatic_rank_order(const EigenBlock& block, bool* degenerate = nullptr);

/// In-place ideal adiabatic map between two eigen-systems sharing the
/// state's block partition.
void apply_adiabatic_map(BlockDensity& state, const EigenSystem& from_es, const EigenSystem& to_es,
                         AdiabaticInfo* info = nullptr);

/// In-place blockwise unitary evolution under the eigen-system for
/// t seconds.
void apply_block_evolution(BlockDensity& state, const EigenSystem& es, double t_seconds);

}  // namespace spinchain
