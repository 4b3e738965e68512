#include "spinchain/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace spinchain {

namespace {

constexpr double kHermitianTol = 1e-12;
constexpr double kTraceTol = 1e-10;

std::string format_field(double tesla) {
    std::ostringstream out;
    out.precision(6);
    out << tesla << " T";
    return out.str();
}

}  // namespace

DensityMatrix::DensityMatrix(Matrix rho) : rho_(std::move(rho)) {
    if (rho_.rows() != rho_.cols()) throw SpinSystemError("density matrix must be square");
    const double scale = std::max(1.0, rho_.cwiseAbs().maxCoeff());
    if (hermiticity_defect(rho_) > kHermitianTol * scale * 2)
        throw SpinSystemError("density matrix is not Hermitian");
    if (std::abs(rho_.trace().real() - 1.0) > kTraceTol || std::abs(rho_.trace().imag()) > kTraceTol)
        throw SpinSystemError("density matrix trace must be 1");
}

double DensityMatrix::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(rho_, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

DensityMatrix thermal_state(const SpinSystem& system, double field_tesla, double temperature_k) {
    if (field_tesla <= 0.0) throw SpinSystemError("thermal_state requires field > 0");
    if (temperature_k <= 0.0) throw SpinSystemError("thermal_state requires temperature > 0");
    HamiltonianSpec spec;
    spec.field_tesla = field_tesla;
    const Matrix h = build_total_hamiltonian(system, spec);
    const double beta = kPlanck / (kBoltzmann * temperature_k);
    // Infinity-norm bound on h*beta guards the linearization.
    const double bound = beta * h.cwiseAbs().rowwise().sum().maxCoeff();
    if (bound >= 1.0)
        throw SpinSystemError("h*|H|/kT >= 1: high-temperature linearization invalid");
    const double dim = static_cast<double>(system.dim());
    Matrix rho = (Matrix::Identity(system.dim(), system.dim()) - beta * h) / dim;
    rho /= rho.trace().real();
    return DensityMatrix(std::move(rho));
}

DensityMatrix propagate(const DensityMatrix& rho, const Matrix& h_hz, int n_spins,
                        double t_seconds) {
    if (rho.matrix().rows() != h_hz.rows())
        throw SpinSystemError("propagate: dimension mismatch between state and Hamiltonian");
    const EigenSystem es = block_decompose(h_hz, n_spins);
    return propagate(rho, es, t_seconds);
}

DensityMatrix propagate(const DensityMatrix& rho, const EigenSystem& es, double t_seconds) {
    if (rho.dim() != es.dim)
        throw SpinSystemError("propagate: dimension mismatch between state and eigen-system");
    if (t_seconds < 0.0) throw SpinSystemError("propagate: time must be >= 0");
    if (t_seconds == 0.0) return rho;
    const Matrix u = es.propagator(t_seconds);
    return DensityMatrix(u * rho.matrix() * u.adjoint());
}

DensityMatrix sudden_switch(const DensityMatrix& rho) { return rho; }

std::vector<int> adiabatic_rank_order(const EigenBlock& block, bool* degenerate) {
    const int n = static_cast<int>(block.values.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const double scale = n ? block.values.cwiseAbs().maxCoeff() : 0.0;
    const double tol = std::max(1e-9, 1e-12 * scale);

    auto dominant_state = [&](int col) {
        int best = 0;
        double best_mag = -1.0;
        for (int r = 0; r < static_cast<int>(block.states.size()); ++r) {
            const double mag = std::abs(block.vectors(r, col));
            if (mag > best_mag + 1e-12) {
                best_mag = mag;
                best = r;
            }
        }
        return block.states[best];
    };

    // Eigenvalues are ascending; reorder degenerate clusters by dominant
    // product-basis index.
    int i = 0;
    while (i < n) {
        int j = i + 1;
        while (j < n && block.values(j) - block.values(j - 1) <= tol) ++j;
        if (j - i > 1) {
            if (degenerate) *degenerate = true;
            std::sort(order.begin() + i, order.begin() + j,
                      [&](int a, int b) { return dominant_state(a) < dominant_state(b); });
        }
        i = j;
    }
    return order;
}

void apply_adiabatic_map(BlockDensity& state, const EigenSystem& from_es, const EigenSystem& to_es,
                         AdiabaticInfo* info) {
    if (from_es.dim != to_es.dim || from_es.blocks.size() != to_es.blocks.size() ||
        state.blocks.size() != from_es.blocks.size())
        throw SpinSystemError("adiabatic map: eigen-systems use different block partitions");
    AdiabaticInfo local;
    for (std::size_t bi = 0; bi < state.rho.size(); ++bi) {
        const EigenBlock& fb = from_es.blocks[bi];
        const EigenBlock& tb = to_es.blocks[bi];
        if (fb.states != tb.states || fb.states != state.blocks[bi].states)
            throw SpinSystemError("adiabatic map: eigen-systems use different block partitions");
        const int n = static_cast<int>(fb.states.size());
        const Matrix in_from_basis = fb.vectors.adjoint() * state.rho[bi] * fb.vectors;
        local.offdiagonal_norm +=
            (in_from_basis - Matrix(in_from_basis.diagonal().asDiagonal())).squaredNorm();
        const auto from_order = adiabatic_rank_order(fb, &local.degenerate);
        const auto to_order = adiabatic_rank_order(tb, &local.degenerate);
        Eigen::VectorXd pops(n);
        for (int r = 0; r < n; ++r)
            pops(to_order[r]) = in_from_basis(from_order[r], from_order[r]).real();
        state.rho[bi] = tb.vectors * pops.asDiagonal() * tb.vectors.adjoint();
    }
    local.offdiagonal_norm = std::sqrt(local.offdiagonal_norm);
    if (info) *info = local;
}

void apply_block_evolution(BlockDensity& state, const EigenSystem& es, double t_seconds) {
    if (state.blocks.size() != es.blocks.size())
        throw SpinSystemError("block evolution: partition mismatch");
    if (t_seconds == 0.0) return;
    for (std::size_t bi = 0; bi < state.rho.size(); ++bi) {
        const EigenBlock& eb = es.blocks[bi];
        const int n = static_cast<int>(eb.states.size());
        Eigen::VectorXcd phases(n);
        for (int i = 0; i < n; ++i) {
            const double angle = -2.0 * M_PI * eb.values(i) * t_seconds;
            phases(i) = Complex(std::cos(angle), std::sin(angle));
        }
        const Matrix u = eb.vectors * phases.asDiagonal() * eb.vectors.adjoint();
        state.rho[bi] = u * state.rho[bi] * u.adjoint();
    }
}

DensityMatrix adiabatic_ramp(const DensityMatrix& rho, const EigenSystem& from_es,
                             const EigenSystem& to_es, AdiabaticInfo* info) {
    if (from_es.dim != to_es.dim || rho.dim() != from_es.dim)
        throw SpinSystemError("adiabatic_ramp: dimension mismatch");
    std::vector<BasisBlock> blocks;
    for (const auto& b : from_es.blocks) blocks.push_back(BasisBlock{b.mz, b.states});
    BlockDensity state = BlockDensity::from_dense(rho.matrix(), blocks);
    apply_adiabatic_map(state, from_es, to_es, info);
    return DensityMatrix(state.dense(rho.dim()));
}

MagnetizationReport measure_magnetization(const DensityMatrix& rho, const SpinSystem& system,
                                          std::span<const int> subset) {
    if (rho.dim() != system.dim())
        throw SpinSystemError("measure_magnetization: dimension mismatch");
    std::vector<int> indices(subset.begin(), subset.end());
    if (indices.empty()) {
        indices.resize(system.size());
        std::iota(indices.begin(), indices.end(), 0);
    }
    const Eigen::VectorXd diag_rho = rho.matrix().diagonal().real();

    MagnetizationReport report;
    std::vector<double> per_spin(system.size(), 0.0);
    for (int idx : indices) {
        if (idx < 0 || idx >= system.size())
            throw SpinSystemError("measure_magnetization: spin index out of range");
        const Eigen::VectorXd w = single_spin_z_diagonal(system.size(), idx);
        per_spin[idx] = w.dot(diag_rho);
        report.per_spin.emplace_back(system.spin(idx).label, per_spin[idx]);
    }
    for (const auto& g : system.detection_groups()) {
        bool covered = true;
        double sum = 0.0;
        for (int m : g.members) {
            if (std::find(indices.begin(), indices.end(), m) == indices.end()) {
                covered = false;
                break;
            }
            sum += per_spin[m];
        }
        if (covered) report.per_group.emplace_back(g.label, sum);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Protocol schedules
// ---------------------------------------------------------------------------

void ProtocolSchedule::validate() const {
    if (prepolarize_field_tesla <= 0.0)
        throw SpinSystemError("prepolarization field must be > 0");
    bool seen_variable = false;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& seg = segments[i];
        if (std::holds_alternative<DetectSegment>(seg) && i + 1 != segments.size())
            throw SpinSystemError("a Detect segment must be the last segment");
        if (const auto* ramp = std::get_if<AdiabaticRampSegment>(&seg)) {
            if (ramp->from_field_tesla < 0.0 || ramp->to_field_tesla < 0.0)
                throw SpinSystemError("ramp fields must be >= 0");
        } else if (const auto* sw = std::get_if<SuddenSwitchSegment>(&seg)) {
            if (sw->to_field_tesla < 0.0) throw SpinSystemError("switch field must be >= 0");
        } else if (const auto* ev = std::get_if<FreeEvolutionSegment>(&seg)) {
            if (ev->field_tesla < 0.0) throw SpinSystemError("evolution field must be >= 0");
            if (!ev->variable && ev->duration_s < 0.0)
                throw SpinSystemError("evolution duration must be >= 0");
            if (ev->variable) {
                if (seen_variable)
                    throw SpinSystemError("only one variable evolution segment is allowed");
                seen_variable = true;
            }
        }
    }
}

std::optional<std::size_t> ProtocolSchedule::variable_segment() const {
    for (std::size_t i = 0; i < segments.size(); ++i)
        if (const auto* ev = std::get_if<FreeEvolutionSegment>(&segments[i]))
            if (ev->variable) return i;
    return std::nullopt;
}

ProtocolSchedule ProtocolSchedule::field_cycle(double high_field, double transfer_field,
                                               double evolution_field,
                                               std::vector<std::string> detect_targets) {
    ProtocolSchedule s;
    s.prepolarize_field_tesla = high_field;
    s.segments = {
        AdiabaticRampSegment{high_field, transfer_field},
        SuddenSwitchSegment{evolution_field},
        FreeEvolutionSegment{evolution_field, 0.0, true},
        SuddenSwitchSegment{transfer_field},
        AdiabaticRampSegment{transfer_field, high_field},
        DetectSegment{std::move(detect_targets)},
    };
    return s;
}

// ---------------------------------------------------------------------------
// Block density
// ---------------------------------------------------------------------------

double BlockDensity::trace_real() const {
    double t = 0.0;
    for (const auto& m : rho) t += m.trace().real();
    return t;
}

double BlockDensity::purity() const {
    double p = 0.0;
    for (const auto& m : rho) p += (m * m.adjoint()).trace().real();
    return p;
}

Matrix BlockDensity::dense(std::size_t dim) const {
    Matrix out = Matrix::Zero(dim, dim);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& states = blocks[bi].states;
        for (std::size_t c = 0; c < states.size(); ++c)
            for (std::size_t r = 0; r < states.size(); ++r)
                out(states[r], states[c]) = rho[bi](r, c);
    }
    return out;
}

double BlockDensity::expectation_diagonal(const Eigen::VectorXd& diag) const {
    double sum = 0.0;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& states = blocks[bi].states;
        for (std::size_t r = 0; r < states.size(); ++r)
            sum += diag(states[r]) * rho[bi](r, r).real();
    }
    return sum;
}

BlockDensity BlockDensity::from_dense(const Matrix& dense, const std::vector<BasisBlock>& blocks) {
    BlockDensity out;
    out.blocks = blocks;
    out.rho.reserve(blocks.size());
    for (const auto& b : blocks) {
        const int n = static_cast<int>(b.states.size());
        Matrix sub(n, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) sub(r, c) = dense(b.states[r], b.states[c]);
        out.rho.push_back(std::move(sub));
    }
    return out;
}

DensityMatrix ProtocolResult::dense_state() const {
    std::size_t dim = 0;
    for (const auto& b : state.blocks) dim += b.states.size();
    return DensityMatrix(state.dense(dim));
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

FieldCycleEngine::FieldCycleEngine(SpinSystem system)
    : system_(expand_equivalence(std::move(system))), blocks_(magnetization_blocks(system_.size())) {}

const EigenSystem& FieldCycleEngine::eigensystem(double field_tesla) {
    auto it = cache_.find(field_tesla);
    if (it != cache_.end()) return *it->second;
    HamiltonianSpec spec;
    spec.field_tesla = field_tesla;
    const Matrix h = field_tesla == 0.0 ? build_j_hamiltonian(system_)
                                        : build_total_hamiltonian(system_, spec);
    auto es = std::make_unique<EigenSystem>(block_decompose(h, system_.size()));
    return *cache_.emplace(field_tesla, std::move(es)).first->second;
}

std::vector<Eigen::VectorXd> FieldCycleEngine::thermal_populations(double field_tesla,
                                                                   double temperature_k) {
    if (field_tesla <= 0.0) throw SpinSystemError("thermal populations require field > 0");
    if (temperature_k <= 0.0) throw SpinSystemError("thermal populations require temperature > 0");
    const EigenSystem& es = eigensystem(field_tesla);
    const double beta = kPlanck / (kBoltzmann * temperature_k);
    double max_abs = 0.0;
    for (const auto& b : es.blocks) max_abs = std::max(max_abs, b.values.cwiseAbs().maxCoeff());
    if (beta * max_abs >= 1.0)
        throw SpinSystemError("h*|H|/kT >= 1: high-temperature linearization invalid");
    std::vector<Eigen::VectorXd> pops;
    double total = 0.0;
    for (const auto& b : es.blocks) {
        Eigen::VectorXd p = (1.0 - beta * b.values.array()).matrix() / static_cast<double>(es.dim);
        total += p.sum();
        pops.push_back(std::move(p));
    }
    for (auto& p : pops) p /= total;
    return pops;
}

namespace {

bool fields_match(double a, double b) {
    return std::abs(a - b) <= 1e-15 + 1e-9 * std::max(std::abs(a), std::abs(b));
}

}  // namespace

ProtocolResult FieldCycleEngine::run(const ProtocolSchedule& schedule, double temperature_k,
                                     std::optional<double> tau_seconds) {
    schedule.validate();
    if (tau_seconds && !schedule.variable_segment())
        throw SpinSystemError("tau supplied but schedule has no variable evolution segment");
    if (!tau_seconds && schedule.variable_segment())
        throw SpinSystemError("schedule has a variable evolution segment but no tau was supplied");
    if (tau_seconds && *tau_seconds < 0.0) throw SpinSystemError("tau must be >= 0");

    ProtocolResult result;
    const auto groups = system_.detection_groups();
    std::vector<Eigen::VectorXd> group_diag;
    for (const auto& g : groups)
        group_diag.push_back(total_z_diagonal(system_.size(), g.members));

    auto snapshot = [&](const BlockDensity& state, std::string description, double field,
                        double duration, std::vector<std::string> flags) {
        SegmentLog log;
        log.description = std::move(description);
        log.field_tesla = field;
        log.duration_s = duration;
        log.trace = state.trace_real();
        log.purity = state.purity();
        for (std::size_t gi = 0; gi < groups.size(); ++gi)
            log.group_mz.emplace_back(groups[gi].label, state.expectation_diagonal(group_diag[gi]));
        log.flags = std::move(flags);
        result.log.push_back(std::move(log));
    };

    // Thermal prepolarization.
    double field = schedule.prepolarize_field_tesla;
    const auto pops0 = thermal_populations(field, temperature_k);
    const EigenSystem& es0 = eigensystem(field);
    BlockDensity state;
    state.blocks = blocks_;
    for (std::size_t bi = 0; bi < es0.blocks.size(); ++bi) {
        const auto& eb = es0.blocks[bi];
        state.rho.push_back(eb.vectors * pops0[bi].asDiagonal() * eb.vectors.adjoint());
    }
    snapshot(state, "thermal prepolarization at " + format_field(field), field, 0.0, {});

    try {
    for (const auto& segment : schedule.segments) {
        if (const auto* ramp = std::get_if<AdiabaticRampSegment>(&segment)) {
            if (!fields_match(field, ramp->from_field_tesla))
                throw SpinSystemError("adiabatic ramp starts at " +
                                      format_field(ramp->from_field_tesla) +
                                      " but the current field is " + format_field(field));
            const EigenSystem& from = eigensystem(ramp->from_field_tesla);
            const EigenSystem& to = eigensystem(ramp->to_field_tesla);
            std::vector<std::string> flags;
            AdiabaticInfo info;
            apply_adiabatic_map(state, from, to, &info);
            {
                std::ostringstream flag;
                flag << "discarded coherence norm " << info.offdiagonal_norm;
                flags.push_back(flag.str());
            }
            if (info.degenerate)
                flags.push_back("degenerate levels: rank ties broken by basis index");
            field = ramp->to_field_tesla;
            snapshot(state,
                     "adiabatic ramp " + format_field(ramp->from_field_tesla) + " -> " +
                         format_field(ramp->to_field_tesla),
                     field, 0.0, std::move(flags));
        } else if (const auto* sw = std::get_if<SuddenSwitchSegment>(&segment)) {
            const double from = field;
            field = sw->to_field_tesla;
            snapshot(state, "sudden switch " + format_field(from) + " -> " + format_field(field),
                     field, 0.0, {});
        } else if (const auto* ev = std::get_if<FreeEvolutionSegment>(&segment)) {
            if (!fields_match(field, ev->field_tesla))
                throw SpinSystemError("free evolution at " + format_field(ev->field_tesla) +
                                      " but the current field is " + format_field(field));
            const double duration = ev->variable ? *tau_seconds : ev->duration_s;
            if (duration > 0.0) apply_block_evolution(state, eigensystem(field), duration);
            std::ostringstream desc;
            desc << "free evolution " << duration << " s at " << format_field(field);
            snapshot(state, desc.str(), field, duration, {});
        } else if (const auto* det = std::get_if<DetectSegment>(&segment)) {
            std::vector<std::size_t> selected;
            if (det->targets.empty()) {
                for (std::size_t gi = 0; gi < groups.size(); ++gi) selected.push_back(gi);
            } else {
                for (const auto& target : det->targets) {
                    bool found = false;
                    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                        const bool label_match = groups[gi].label == target;
                        const bool isotope_match =
                            system_.spin(groups[gi].members.front()).isotope.symbol == target;
                        if (label_match || isotope_match) {
                            if (std::find(selected.begin(), selected.end(), gi) == selected.end())
                                selected.push_back(gi);
                            found = true;
                        }
                    }
                    if (!found)
                        throw SpinSystemError("detect target '" + target +
                                              "' matches no group or isotope");
                }
            }
            for (std::size_t gi : selected)
                result.detected.emplace_back(groups[gi].label,
                                             state.expectation_diagonal(group_diag[gi]));
            snapshot(state, "detect", field, 0.0, {});
        }
    }
    } catch (const ProtocolError&) {
        throw;
    } catch (const SpinSystemError& e) {
        throw ProtocolError(e.what(), std::move(result.log));
    }

    result.state = std::move(state);
    result.final_field_tesla = field;
    return result;
}

ProtocolResult run_protocol(const SpinSystem& system, const ProtocolSchedule& schedule,
                            double temperature_k, std::optional<double> tau_seconds) {
    FieldCycleEngine engine(system);
    return engine.run(schedule, temperature_k, tau_seconds);
}

}  // namespace spinchain
