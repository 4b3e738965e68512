#include "spinchain/tocsy2d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "spinchain/hamiltonian.hpp"
#include "spinchain/threading.hpp"

namespace spinchain {

namespace {

const Complex kImag(0.0, 1.0);

// Refined eigen-block with per-isotope magnetization metadata and both
// rotating-frame and lab-frame eigenvalues.
struct RefBlock {
    std::vector<std::size_t> states;
    std::vector<int> m2_iso;  // 2 * M per isotope
    Eigen::VectorXd lam_rot;
    Eigen::VectorXd lam_lab;
    Matrix v;
    int offset = 0;  // global index of the block's first eigenstate
};

using PairKey = std::uint64_t;
inline PairKey pair_key(int bi, int bj) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(bi)) << 32) |
           static_cast<std::uint32_t>(bj);
}
inline int key_row(PairKey key) { return static_cast<int>(key >> 32); }
inline int key_col(PairKey key) { return static_cast<int>(key & 0xffffffffu); }

// Block-sparse operator in the eigenbasis: (block row, block col) -> dense.
struct BlockPairMatrix {
    std::unordered_map<PairKey, Matrix> entries;
    std::unordered_map<int, std::vector<int>> cols_of_row;

    const Matrix* find(int bi, int bj) const {
        auto it = entries.find(pair_key(bi, bj));
        return it == entries.end() ? nullptr : &it->second;
    }
};

struct Stick {
    double freq_hz;
    Complex amp;
};

class Simulator {
  public:
    Simulator(const SpinSystem& system, const Tocsy2DOptions& opts)
        : sys_(expand_equivalence(system)), opts_(opts) {}

    Spectrum2D run();

  private:
    void build_frame();
    void decompose();
    void build_thermal();
    void build_mixing_map();

    BlockPairMatrix product_operator(
        const std::vector<std::pair<std::size_t, std::size_t>>& entries_rc,
        const std::vector<Complex>& values) const;
    BlockPairMatrix pulse_map(const std::vector<int>& spins, const Eigen::Matrix2cd& r) const;
    BlockPairMatrix lowering_map(const std::vector<int>& spins) const;
    void rotated_diagonal(const BlockPairMatrix& r, const Eigen::VectorXd& d,
                          const std::vector<std::pair<int, int>>& pairs,
                          BlockPairMatrix& out) const;
    std::vector<Stick> sticks_from(const BlockPairMatrix& op, const BlockPairMatrix& a) const;

    Eigen::VectorXd cycle_populations(const Eigen::VectorXd& deviation) const;
    std::vector<Complex> detect_fid(const Eigen::VectorXd& deviation) const;
    Eigen::MatrixXcd plain_modulation(const std::vector<BlockPairMatrix>& lowers,
                                      const BlockPairMatrix& q) const;
    Eigen::MatrixXcd refocused_modulation(const std::vector<BlockPairMatrix>& lowers,
                                          const BlockPairMatrix& q) const;

    SpinSystem sys_;
    Tocsy2DOptions opts_;

    std::vector<std::string> isotopes_;
    std::vector<std::vector<int>> iso_spins_;
    std::vector<double> carrier_hz_;
    int f1_iso_ = -1, f2_iso_ = -1;

    Matrix h_rot_;
    std::vector<RefBlock> blocks_;
    std::vector<int> block_of_state_;
    std::vector<int> row_of_state_;
    std::size_t dim_ = 0;
    Eigen::VectorXd lam_rot_all_, lam_lab_all_;
    std::vector<std::size_t> dominant_state_;

    Eigen::VectorXd populations_;

    struct Sector {
        std::vector<int> hf_levels;  // rank-ordered global eigenstate ids
        std::vector<int> m_order;    // transfer-field level order (same ranks)
        Eigen::MatrixXd kernel;      // |<m_k|U(t_mix)|m_j>|^2
    };
    std::vector<Sector> sectors_;

    BlockPairMatrix read_pulse_;
    BlockPairMatrix detect_op_;
    std::vector<std::pair<int, int>> detect_pairs_;
};

void Simulator::build_frame() {
    for (const auto& s : sys_.spins())
        if (std::find(isotopes_.begin(), isotopes_.end(), s.isotope.symbol) == isotopes_.end())
            isotopes_.push_back(s.isotope.symbol);
    iso_spins_.resize(isotopes_.size());
    carrier_hz_.resize(isotopes_.size());
    for (std::size_t i = 0; i < isotopes_.size(); ++i) {
        iso_spins_[i] = sys_.spins_of_isotope(isotopes_[i]);
        double lo = sys_.spin(iso_spins_[i].front()).shift_ppm;
        double hi = lo;
        for (int a : iso_spins_[i]) {
            lo = std::min(lo, sys_.spin(a).shift_ppm);
            hi = std::max(hi, sys_.spin(a).shift_ppm);
        }
        double carrier_ppm = 0.5 * (lo + hi);
        if (isotopes_[i] == opts_.evolve_f1 && opts_.carrier_f1_ppm)
            carrier_ppm = *opts_.carrier_f1_ppm;
        if (isotopes_[i] == opts_.observe_f2 && opts_.carrier_f2_ppm)
            carrier_ppm = *opts_.carrier_f2_ppm;
        const Isotope& iso = sys_.spin(iso_spins_[i].front()).isotope;
        carrier_hz_[i] = iso.larmor_hz(opts_.field_tesla) * (1.0 + carrier_ppm * 1e-6);
        if (isotopes_[i] == opts_.evolve_f1) f1_iso_ = static_cast<int>(i);
        if (isotopes_[i] == opts_.observe_f2) f2_iso_ = static_cast<int>(i);
    }
    if (f1_iso_ < 0)
        throw SpinSystemError("evolve isotope '" + opts_.evolve_f1 + "' absent from system");
    if (f2_iso_ < 0)
        throw SpinSystemError("observe isotope '" + opts_.observe_f2 + "' absent from system");

    HamiltonianSpec spec;
    spec.field_tesla = opts_.field_tesla;
    spec.truncation = Truncation::Secular;
    spec.secular_factor = opts_.secular_factor;
    h_rot_ = build_total_hamiltonian(sys_, spec);
    dim_ = sys_.dim();
    // Remove the carrier Zeeman terms. The retained secular couplings
    // commute with each per-isotope total I_z, so this frame change is
    // exact and keeps eigenvalues at chemical-shift scale.
    for (std::size_t i = 0; i < isotopes_.size(); ++i)
        for (int a : iso_spins_[i]) {
            const std::size_t mask = spin_mask(sys_.size(), a);
            for (std::size_t s = 0; s < dim_; ++s)
                h_rot_(s, s) += carrier_hz_[i] * ((s & mask) ? -0.5 : 0.5);
        }
}

void Simulator::decompose() {
    const auto refined =
        refine_blocks_by_connectivity(h_rot_, magnetization_blocks(sys_.size()));
    blocks_.reserve(refined.size());
    block_of_state_.assign(dim_, -1);
    row_of_state_.assign(dim_, -1);

    int offset = 0;
    for (const auto& rb : refined) {
        RefBlock b;
        b.states = rb.states;
        b.offset = offset;
        offset += static_cast<int>(rb.states.size());
        b.m2_iso.resize(isotopes_.size());
        for (std::size_t i = 0; i < isotopes_.size(); ++i) {
            double m = 0.0;
            for (int a : iso_spins_[i]) m += spin_mz(sys_.size(), a, b.states.front());
            b.m2_iso[i] = static_cast<int>(std::lround(2.0 * m));
        }
        blocks_.push_back(std::move(b));
    }
    parallel_for(static_cast<int>(blocks_.size()), [&](int bi) {
        RefBlock& b = blocks_[bi];
        const int n = static_cast<int>(b.states.size());
        Matrix sub(n, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) sub(r, c) = h_rot_(b.states[r], b.states[c]);
        if (n == 1) {
            b.lam_rot = Eigen::VectorXd::Constant(1, sub(0, 0).real());
            b.v = Matrix::Identity(1, 1);
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> solver(sub);
            b.lam_rot = solver.eigenvalues();
            b.v = solver.eigenvectors();
        }
        double shift = 0.0;
        for (std::size_t i = 0; i < isotopes_.size(); ++i)
            shift -= carrier_hz_[i] * 0.5 * b.m2_iso[i];
        b.lam_lab = b.lam_rot.array() + shift;
    });

    lam_rot_all_.resize(dim_);
    lam_lab_all_.resize(dim_);
    dominant_state_.resize(dim_);
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
        const RefBlock& b = blocks_[bi];
        for (std::size_t r = 0; r < b.states.size(); ++r) {
            block_of_state_[b.states[r]] = static_cast<int>(bi);
            row_of_state_[b.states[r]] = static_cast<int>(r);
        }
        for (int c = 0; c < b.lam_rot.size(); ++c) {
            lam_rot_all_(b.offset + c) = b.lam_rot(c);
            lam_lab_all_(b.offset + c) = b.lam_lab(c);
            int best = 0;
            double best_mag = -1.0;
            for (int r = 0; r < static_cast<int>(b.states.size()); ++r) {
                const double mag = std::abs(b.v(r, c));
                if (mag > best_mag + 1e-12) {
                    best_mag = mag;
                    best = r;
                }
            }
            dominant_state_[b.offset + c] = b.states[best];
        }
    }
}

void Simulator::build_thermal() {
    const double beta = kPlanck / (kBoltzmann * opts_.temperature_k);
    if (beta * lam_lab_all_.cwiseAbs().maxCoeff() >= 1.0)
        throw SpinSystemError("h*|H|/kT >= 1: high-temperature linearization invalid");
    populations_ = (1.0 - beta * lam_lab_all_.array()).matrix() / static_cast<double>(dim_);
    populations_ /= populations_.sum();
}

BlockPairMatrix Simulator::product_operator(
    const std::vector<std::pair<std::size_t, std::size_t>>& entries_rc,
    const std::vector<Complex>& values) const {
    std::unordered_map<PairKey, Matrix> raw;
    for (std::size_t e = 0; e < entries_rc.size(); ++e) {
        const auto [sr, sc] = entries_rc[e];
        const int bi = block_of_state_[sr];
        const int bj = block_of_state_[sc];
        const PairKey key = pair_key(bi, bj);
        auto it = raw.find(key);
        if (it == raw.end())
            it = raw.emplace(key, Matrix::Zero(blocks_[bi].states.size(),
                                               blocks_[bj].states.size()))
                     .first;
        it->second(row_of_state_[sr], row_of_state_[sc]) += values[e];
    }
    BlockPairMatrix out;
    out.entries.reserve(raw.size());
    for (auto& [key, m] : raw) {
        const int bi = key_row(key);
        const int bj = key_col(key);
        out.entries.emplace(key, blocks_[bi].v.adjoint() * m * blocks_[bj].v);
        out.cols_of_row[bi].push_back(bj);
    }
    return out;
}

BlockPairMatrix Simulator::pulse_map(const std::vector<int>& spins,
                                     const Eigen::Matrix2cd& r) const {
    std::size_t pulse_mask = 0;
    for (int a : spins) pulse_mask |= spin_mask(sys_.size(), a);
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    std::vector<Complex> values;
    const std::size_t n_combos = std::size_t{1} << spins.size();
    entries.reserve(dim_ * n_combos);
    values.reserve(dim_ * n_combos);
    for (std::size_t s = 0; s < dim_; ++s) {
        const std::size_t base = s & ~pulse_mask;
        for (std::size_t combo = 0; combo < n_combos; ++combo) {
            std::size_t sc = base;
            for (std::size_t k = 0; k < spins.size(); ++k)
                if (combo & (std::size_t{1} << k)) sc |= spin_mask(sys_.size(), spins[k]);
            Complex value(1.0, 0.0);
            for (int a : spins) {
                const std::size_t mask = spin_mask(sys_.size(), a);
                value *= r((s & mask) ? 1 : 0, (sc & mask) ? 1 : 0);
            }
            if (value != Complex(0.0, 0.0)) {
                entries.emplace_back(s, sc);
                values.push_back(value);
            }
        }
    }
    return product_operator(entries, values);
}

BlockPairMatrix Simulator::lowering_map(const std::vector<int>& spins) const {
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    std::vector<Complex> values;
    for (int a : spins) {
        const std::size_t mask = spin_mask(sys_.size(), a);
        for (std::size_t s = 0; s < dim_; ++s)
            if ((s & mask) == 0) {  // spin up: I^- sends it down
                entries.emplace_back(s | mask, s);
                values.emplace_back(1.0, 0.0);
            }
    }
    return product_operator(entries, values);
}

void Simulator::rotated_diagonal(const BlockPairMatrix& r, const Eigen::VectorXd& d,
                                 const std::vector<std::pair<int, int>>& pairs,
                                 BlockPairMatrix& out) const {
    out.entries.clear();
    out.cols_of_row.clear();
    for (const auto& [bi, bj] : pairs) {
        const auto it_i = r.cols_of_row.find(bi);
        if (it_i == r.cols_of_row.end()) continue;
        Matrix acc = Matrix::Zero(blocks_[bi].states.size(), blocks_[bj].states.size());
        bool any = false;
        for (int x : it_i->second) {
            const Matrix* ri = r.find(bi, x);
            const Matrix* rj = r.find(bj, x);
            if (!ri || !rj) continue;
            const Eigen::VectorXd dx = d.segment(blocks_[x].offset, blocks_[x].states.size());
            acc.noalias() += (*ri) * dx.asDiagonal() * rj->adjoint();
            any = true;
        }
        if (any) out.entries.emplace(pair_key(bi, bj), std::move(acc));
    }
}

std::vector<Stick> Simulator::sticks_from(const BlockPairMatrix& op,
                                          const BlockPairMatrix& a) const {
    std::vector<Stick> sticks;
    for (const auto& [key, m] : op.entries) {
        const int bi = key_row(key);
        const int bj = key_col(key);
        const Matrix* amp = a.find(bj, bi);
        if (!amp) continue;
        const RefBlock& blk_i = blocks_[bi];
        const RefBlock& blk_j = blocks_[bj];
        for (int c = 0; c < m.cols(); ++c)
            for (int r = 0; r < m.rows(); ++r) {
                const Complex w = m(r, c) * (*amp)(c, r);
                if (w != Complex(0.0, 0.0))
                    sticks.push_back({blk_i.lam_rot(r) - blk_j.lam_rot(c), w});
            }
    }
    double max_mag = 0.0;
    for (const auto& s : sticks) max_mag = std::max(max_mag, std::abs(s.amp));
    std::vector<Stick> kept;
    for (const auto& s : sticks)
        if (std::abs(s.amp) >= opts_.stick_threshold * max_mag) kept.push_back(s);
    return kept;
}

void Simulator::build_mixing_map() {
    const int n_spins = sys_.size();
    std::vector<std::vector<int>> levels(n_spins + 1);
    for (const auto& b : blocks_) {
        const int down = __builtin_popcountll(b.states.front());
        for (int c = 0; c < static_cast<int>(b.states.size()); ++c)
            levels[down].push_back(b.offset + c);
    }
    for (auto& sector : levels) {
        std::sort(sector.begin(), sector.end(), [&](int a, int b) {
            const double la = lam_lab_all_(a), lb = lam_lab_all_(b);
            const double tol = std::max(1e-9, 1e-12 * std::max(std::abs(la), std::abs(lb)));
            if (std::abs(la - lb) > tol) return la < lb;
            return dominant_state_[a] < dominant_state_[b];
        });
    }

    HamiltonianSpec mid;
    mid.field_tesla = opts_.transfer_field_tesla;
    const EigenSystem es_m = block_decompose(build_total_hamiltonian(sys_, mid), n_spins);
    const EigenSystem es_z = block_decompose(build_j_hamiltonian(sys_), n_spins);

    sectors_.resize(levels.size());
    parallel_for(static_cast<int>(levels.size()), [&](int k) {
        Sector& sector = sectors_[k];
        sector.hf_levels = levels[k];
        const EigenBlock& mb = es_m.blocks[k];
        sector.m_order = adiabatic_rank_order(mb);
        if (opts_.t_mix_s > 0.0) {
            const EigenBlock& zb = es_z.blocks[k];
            const int n = static_cast<int>(mb.states.size());
            Eigen::VectorXcd phases(n);
            for (int i = 0; i < n; ++i) {
                const double angle = -2.0 * M_PI * zb.values(i) * opts_.t_mix_s;
                phases(i) = Complex(std::cos(angle), std::sin(angle));
            }
            const Matrix t = zb.vectors.adjoint() * mb.vectors;
            const Matrix u = t.adjoint() * phases.asDiagonal() * t;
            sector.kernel = u.cwiseAbs2();
        }
    });
}

Eigen::VectorXd Simulator::cycle_populations(const Eigen::VectorXd& deviation) const {
    if (opts_.t_mix_s <= 0.0) return deviation;  // down- and up-maps cancel exactly
    Eigen::VectorXd out = Eigen::VectorXd::Zero(dim_);
    for (const auto& sector : sectors_) {
        const int n = static_cast<int>(sector.hf_levels.size());
        Eigen::VectorXd q(n);
        for (int r = 0; r < n; ++r) q(sector.m_order[r]) = deviation(sector.hf_levels[r]);
        const Eigen::VectorXd qp = sector.kernel * q;
        for (int r = 0; r < n; ++r) out(sector.hf_levels[r]) = qp(sector.m_order[r]);
    }
    return out;
}

std::vector<Complex> Simulator::detect_fid(const Eigen::VectorXd& deviation) const {
    BlockPairMatrix a;
    rotated_diagonal(read_pulse_, deviation, detect_pairs_, a);
    const auto sticks = sticks_from(detect_op_, a);
    std::vector<Complex> fid(opts_.n_t2, Complex(0.0, 0.0));
    for (int k = 0; k < opts_.n_t2; ++k) {
        const double t = k * opts_.dwell_t2_s;
        for (const auto& s : sticks) {
            const double angle = 2.0 * M_PI * s.freq_hz * t;
            fid[k] += s.amp * Complex(std::cos(angle), std::sin(angle));
        }
    }
    return fid;
}

Eigen::MatrixXcd Simulator::plain_modulation(const std::vector<BlockPairMatrix>& lowers,
                                             const BlockPairMatrix& q) const {
    Eigen::MatrixXcd modulation(opts_.n_t1, lowers.size());
    for (std::size_t ai = 0; ai < lowers.size(); ++ai) {
        const auto sticks = sticks_from(lowers[ai], q);
        for (int r = 0; r < opts_.n_t1; ++r) {
            const double t = r * opts_.dwell_t1_s;
            Complex m(0.0, 0.0);
            for (const auto& s : sticks) {
                const double angle = 2.0 * M_PI * s.freq_hz * t;
                m += s.amp * Complex(std::cos(angle), std::sin(angle));
            }
            modulation(r, ai) = m;
        }
    }
    return modulation;
}

Eigen::MatrixXcd Simulator::refocused_modulation(const std::vector<BlockPairMatrix>& lowers,
                                                 const BlockPairMatrix& q) const {
    // 180-degree pulse on every 13C spin as a block-pair map; each block
    // has exactly one flip partner.
    const std::vector<int> c_spins = sys_.spins_of_isotope("13C");
    Eigen::Matrix2cd r180x;
    r180x << Complex(0, 0), Complex(0, -1), Complex(0, -1), Complex(0, 0);
    const BlockPairMatrix flip = pulse_map(c_spins, r180x);
    std::vector<int> partner(blocks_.size(), -1);
    std::size_t c_mask = 0;
    for (int a : c_spins) c_mask |= spin_mask(sys_.size(), a);
    for (std::size_t bi = 0; bi < blocks_.size(); ++bi)
        partner[bi] = block_of_state_[blocks_[bi].states.front() ^ c_mask];

    Eigen::MatrixXcd modulation(opts_.n_t1, lowers.size());
    parallel_for(opts_.n_t1, [&](int row) {
        const double half_t = 0.5 * row * opts_.dwell_t1_s;
        auto phased_flip = [&](int b_to, int b_from) -> Matrix {
            // E(t1/2) Pi E(t1/2) restricted to the (b_to, b_from) pair.
            const Matrix* f = flip.find(b_to, b_from);
            Matrix out = Matrix::Zero(blocks_[b_to].states.size(),
                                      blocks_[b_from].states.size());
            if (!f) return out;
            for (int cc = 0; cc < out.cols(); ++cc)
                for (int rr = 0; rr < out.rows(); ++rr) {
                    const double angle = -2.0 * M_PI * half_t *
                                         (blocks_[b_to].lam_rot(rr) +
                                          blocks_[b_from].lam_rot(cc));
                    out(rr, cc) =
                        (*f)(rr, cc) * Complex(std::cos(angle), std::sin(angle));
                }
            return out;
        };
        for (std::size_t ai = 0; ai < lowers.size(); ++ai) {
            Complex m(0.0, 0.0);
            for (const auto& [key, op] : lowers[ai].entries) {
                const int bi = key_row(key);
                const int bj = key_col(key);
                const int x = partner[bj];
                const int y = partner[bi];
                const Matrix* qxy = q.find(x, y);
                if (!qxy) continue;
                const Matrix c1 = phased_flip(bj, x);
                const Matrix c2 = phased_flip(bi, y);
                const Matrix b = c1 * (*qxy) * c2.adjoint();
                // m += sum_ij op_ij * b_ji
                m += (op.transpose().cwiseProduct(b)).sum();
            }
            modulation(row, ai) = m;
        }
    });
    return modulation;
}

Spectrum2D Simulator::run() {
    if (opts_.n_t1 < 2 || opts_.n_t2 < 2)
        throw SpinSystemError("tocsy2d: grids need >= 2 points");
    if (opts_.dwell_t1_s <= 0.0 || opts_.dwell_t2_s <= 0.0)
        throw SpinSystemError("tocsy2d: dwell times must be > 0");
    if (opts_.t_mix_s < 0.0) throw SpinSystemError("tocsy2d: t_mix must be >= 0");
    if (opts_.zero_fill_1 < 1 || opts_.zero_fill_2 < 1)
        throw SpinSystemError("tocsy2d: zero-fill factors must be >= 1");

    build_frame();
    decompose();
    build_thermal();
    build_mixing_map();

    const double u = populations_.mean();
    const Eigen::VectorXd thermal_dev = populations_.array() - u;

    // Per-spin z diagonals in the eigenbasis: the z-filter channels.
    Eigen::MatrixXd zdiag(dim_, sys_.size());
    for (const auto& b : blocks_) {
        const Eigen::MatrixXd v2 = b.v.cwiseAbs2();
        for (int a = 0; a < sys_.size(); ++a) {
            Eigen::VectorXd za(b.states.size());
            for (std::size_t r = 0; r < b.states.size(); ++r)
                za(r) = spin_mz(sys_.size(), a, b.states[r]);
            zdiag.col(a).segment(b.offset, b.states.size()) = v2.transpose() * za;
        }
    }

    const std::vector<int>& f1_spins = iso_spins_[f1_iso_];
    const std::vector<int>& f2_spins = iso_spins_[f2_iso_];

    Eigen::Matrix2cd r90y;
    const double c = std::cos(M_PI / 4.0), s = std::sin(M_PI / 4.0);
    r90y << c, -s, s, c;
    const BlockPairMatrix excite = pulse_map(f1_spins, r90y);
    read_pulse_ = pulse_map(f2_spins, r90y);

    // rho_exc in the eigenbasis, restricted to the pairs the t1 sticks
    // need; with refocusing also to the 13C-flipped partner pairs.
    std::vector<BlockPairMatrix> lowers;
    for (int a : f1_spins) lowers.push_back(lowering_map({a}));
    std::vector<std::pair<int, int>> q_pairs;
    {
        std::vector<int> partner;
        if (opts_.refocus_13c) {
            const std::vector<int> c_spins = sys_.spins_of_isotope("13C");
            std::size_t c_mask = 0;
            for (int a : c_spins) c_mask |= spin_mask(sys_.size(), a);
            partner.resize(blocks_.size());
            for (std::size_t bi = 0; bi < blocks_.size(); ++bi)
                partner[bi] = block_of_state_[blocks_[bi].states.front() ^ c_mask];
        }
        for (const auto& low : lowers)
            for (const auto& [key, m] : low.entries) {
                const int bi = key_row(key);
                const int bj = key_col(key);
                if (opts_.refocus_13c)
                    q_pairs.emplace_back(partner[bj], partner[bi]);
                else
                    q_pairs.emplace_back(bj, bi);
            }
        std::sort(q_pairs.begin(), q_pairs.end());
        q_pairs.erase(std::unique(q_pairs.begin(), q_pairs.end()), q_pairs.end());
    }
    BlockPairMatrix q;
    rotated_diagonal(excite, thermal_dev, q_pairs, q);

    const Eigen::MatrixXcd modulation =
        opts_.refocus_13c ? refocused_modulation(lowers, q) : plain_modulation(lowers, q);

    detect_op_ = lowering_map(f2_spins);
    for (const auto& [key, m] : detect_op_.entries)
        detect_pairs_.emplace_back(key_col(key), key_row(key));
    std::sort(detect_pairs_.begin(), detect_pairs_.end());
    detect_pairs_.erase(std::unique(detect_pairs_.begin(), detect_pairs_.end()),
                        detect_pairs_.end());

    // One detection channel per f1 spin. Signals not derived from the
    // excitation pulse (axial peaks) cancel in the simulated phase cycle,
    // so only the stored f1 z orders feed the detected FID.
    std::vector<std::vector<Complex>> fid_channel(f1_spins.size());
    for (std::size_t ai = 0; ai < f1_spins.size(); ++ai)
        fid_channel[ai] = detect_fid(cycle_populations(
            (4.0 / static_cast<double>(dim_)) * zdiag.col(f1_spins[ai])));

    // States-TPPI assembly and 2D processing with cosine-squared windows.
    const int si2 = opts_.n_t2 * opts_.zero_fill_2;
    const int si1 = opts_.n_t1 * opts_.zero_fill_1;
    Eigen::MatrixXcd ft2_cos(opts_.n_t1, si2), ft2_sin(opts_.n_t1, si2);
    for (int r = 0; r < opts_.n_t1; ++r) {
        const double tppi = (r % 2 == 0) ? 1.0 : -1.0;
        for (int quad = 0; quad < 2; ++quad) {
            std::vector<Complex> row(si2, Complex(0.0, 0.0));
            for (int k = 0; k < opts_.n_t2; ++k) {
                Complex v(0.0, 0.0);
                for (std::size_t ai = 0; ai < f1_spins.size(); ++ai) {
                    const double w = quad == 0 ? modulation(r, ai).real()
                                               : modulation(r, ai).imag();
                    v += tppi * w * fid_channel[ai][k];
                }
                const double win = std::pow(
                    std::cos(0.5 * M_PI * k / std::max(1, opts_.n_t2 - 1)), 2.0);
                row[k] = v * win;
            }
            const auto spectrum_row = fft_forward(std::move(row));
            for (int k = 0; k < si2; ++k) {
                const int shifted = (k + si2 / 2) % si2;
                (quad == 0 ? ft2_cos : ft2_sin)(r, k) = spectrum_row[shifted];
            }
        }
    }

    Spectrum2D out;
    out.amplitudes.resize(si1, si2);
    for (int k = 0; k < si2; ++k) {
        std::vector<Complex> column(si1, Complex(0.0, 0.0));
        for (int r = 0; r < opts_.n_t1; ++r) {
            const Complex z = ft2_cos(r, k) + kImag * ft2_sin(r, k);
            const double win =
                std::pow(std::cos(0.5 * M_PI * r / std::max(1, opts_.n_t1 - 1)), 2.0);
            column[r] = z * win;
        }
        const auto f1_spec = fft_forward(std::move(column));
        for (int b = 0; b < si1; ++b) out.amplitudes(b, k) = std::abs(f1_spec[b]);
    }

    const double sw1 = 1.0 / opts_.dwell_t1_s;
    const double sw2 = 1.0 / opts_.dwell_t2_s;
    out.f1_hz.resize(si1);
    for (int b = 0; b < si1; ++b) out.f1_hz[b] = sw1 * b / si1 - sw1 / 2.0;
    out.f2_hz.resize(si2);
    for (int b = 0; b < si2; ++b) out.f2_hz[b] = sw2 * b / si2 - sw2 / 2.0;
    out.f1_label = opts_.evolve_f1;
    out.f2_label = opts_.observe_f2;
    out.mode = "States-TPPI";
    auto put = [&](const std::string& key, double value) {
        std::ostringstream text;
        text << value;
        out.metadata[key] = text.str();
    };
    put("t_mix_s", opts_.t_mix_s);
    put("field_tesla", opts_.field_tesla);
    put("transfer_field_tesla", opts_.transfer_field_tesla);
    out.metadata["refocus_13c"] = opts_.refocus_13c ? "true" : "false";
    out.metadata["f1_points"] = std::to_string(opts_.n_t1);
    out.metadata["f2_points"] = std::to_string(opts_.n_t2);
    out.metadata["si1"] = std::to_string(si1);
    out.metadata["si2"] = std::to_string(si2);
    return out;
}

}  // namespace

Spectrum2D tocsy2d(const SpinSystem& system, const Tocsy2DOptions& opts) {
    Simulator sim(system, opts);
    return sim.run();
}

}  // namespace spinchain
