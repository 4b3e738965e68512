#include "spinchain/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "spinchain/threading.hpp"

namespace spinchain {

void HamiltonianSpec::validate() const {
    if (field_tesla < 0.0) throw SpinSystemError("field must be >= 0");
    if (truncation == Truncation::Secular && field_tesla == 0.0)
        throw SpinSystemError("secular truncation is not meaningful at zero field");
    if (secular_factor <= 0.0) throw SpinSystemError("secular factor must be > 0");
}

namespace {

// Adds -J [Iz_a Iz_b + (I+_a I-_b + I-_a I+_b) / 2] restricted to the
// requested parts. Flip-flop entries connect anti-aligned pairs.
void add_coupling(Matrix& h, int n, int a, int b, double j_hz, bool keep_flip_flop) {
    const std::size_t dim = std::size_t{1} << n;
    const std::size_t ma = spin_mask(n, a);
    const std::size_t mb = spin_mask(n, b);
    for (std::size_t s = 0; s < dim; ++s) {
        const bool ua = (s & ma) == 0;
        const bool ub = (s & mb) == 0;
        h(s, s) -= j_hz * (ua ? 0.5 : -0.5) * (ub ? 0.5 : -0.5);
        if (keep_flip_flop && ua != ub) h(s ^ ma ^ mb, s) -= 0.5 * j_hz;
    }
}

}  // namespace

Matrix build_j_hamiltonian(const SpinSystem& system) {
    if (!system.expanded())
        throw SpinSystemError("build_j_hamiltonian requires an expanded spin system");
    const int n = system.size();
    Matrix h = Matrix::Zero(system.dim(), system.dim());
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const double j = system.coupling(a, b);
            if (j != 0.0) add_coupling(h, n, a, b, j, true);
        }
    return h;
}

Matrix build_zeeman_hamiltonian(const SpinSystem& system, double field_tesla) {
    if (field_tesla < 0.0) throw SpinSystemError("field must be >= 0");
    const int n = system.size();
    Matrix h = Matrix::Zero(system.dim(), system.dim());
    if (field_tesla == 0.0) return h;
    for (int a = 0; a < n; ++a) {
        const Spin& s = system.spin(a);
        const double nu = s.isotope.larmor_hz(field_tesla) * (1.0 + s.shift_ppm * 1e-6);
        const std::size_t mask = spin_mask(n, a);
        for (std::size_t b = 0; b < system.dim(); ++b)
            h(b, b) -= nu * ((b & mask) ? -0.5 : 0.5);
    }
    return h;
}

Matrix build_total_hamiltonian(const SpinSystem& system, const HamiltonianSpec& spec) {
    spec.validate();
    if (!system.expanded())
        throw SpinSystemError("build_total_hamiltonian requires an expanded spin system");
    const int n = system.size();
    Matrix h = build_zeeman_hamiltonian(system, spec.field_tesla);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const double j = system.coupling(a, b);
            if (j == 0.0) continue;
            bool keep_flip_flop = true;
            if (spec.truncation == Truncation::Secular) {
                const Spin& sa = system.spin(a);
                const Spin& sb = system.spin(b);
                if (sa.isotope.symbol != sb.isotope.symbol) {
                    keep_flip_flop = false;
                } else {
                    const double dnu = std::abs(sa.isotope.larmor_hz(spec.field_tesla)) *
                                       std::abs(sa.shift_ppm - sb.shift_ppm) * 1e-6;
                    keep_flip_flop = dnu <= spec.secular_factor * std::abs(j);
                }
            }
            add_coupling(h, n, a, b, j, keep_flip_flop);
        }
    return h;
}

std::vector<BasisBlock> magnetization_blocks(int n_spins) {
    const std::size_t dim = std::size_t{1} << n_spins;
    std::vector<BasisBlock> blocks(n_spins + 1);
    for (int k = 0; k <= n_spins; ++k) blocks[k].mz = 0.5 * (n_spins - 2 * k);
    for (std::size_t s = 0; s < dim; ++s)
        blocks[__builtin_popcountll(s)].states.push_back(s);
    return blocks;
}

std::vector<BasisBlock> refine_blocks_by_connectivity(const Matrix& h,
                                                      const std::vector<BasisBlock>& blocks) {
    std::vector<BasisBlock> out;
    for (const auto& block : blocks) {
        const int n = static_cast<int>(block.states.size());
        // Union-find over the block's states.
        std::vector<int> parent(n);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (int i = 0; i < n; ++i)
            for (int k = i + 1; k < n; ++k)
                if (h(block.states[i], block.states[k]) != Complex(0.0, 0.0)) {
                    const int ri = find(i), rk = find(k);
                    if (ri != rk) parent[ri] = rk;
                }
        std::vector<std::vector<std::size_t>> components(n);
        for (int i = 0; i < n; ++i) components[find(i)].push_back(block.states[i]);
        for (auto& c : components)
            if (!c.empty()) out.push_back(BasisBlock{block.mz, std::move(c)});
    }
    return out;
}

double mz_commutation_defect(const Matrix& h, int n_spins) {
    const std::size_t dim = std::size_t{1} << n_spins;
    const double scale = h.cwiseAbs().maxCoeff();
    if (scale == 0.0) return 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t k = 0; k < dim; ++k)
            if (__builtin_popcountll(i) != __builtin_popcountll(k))
                worst = std::max(worst, std::abs(h(i, k)));
    return worst / scale;
}

EigenSystem block_decompose(const Matrix& h, int n_spins, BlockDecomposeOptions opts) {
    EigenSystem es;
    es.dim = std::size_t{1} << n_spins;
    if (static_cast<std::size_t>(h.rows()) != es.dim || h.rows() != h.cols())
        throw SpinSystemError("Hamiltonian dimension does not match spin count");

    std::vector<BasisBlock> blocks;
    const double defect = mz_commutation_defect(h, n_spins);
    if (defect > opts.commute_tol) {
        es.blocked = false;
        std::ostringstream msg;
        msg << "H does not commute with total I_z (relative defect " << defect
            << "); fell back to direct diagonalization";
        es.note = msg.str();
        BasisBlock all;
        all.mz = 0.0;
        all.states.resize(es.dim);
        std::iota(all.states.begin(), all.states.end(), 0);
        blocks.push_back(std::move(all));
    } else {
        blocks = magnetization_blocks(n_spins);
        if (opts.refine) blocks = refine_blocks_by_connectivity(h, blocks);
    }

    es.blocks.resize(blocks.size());
    parallel_for(static_cast<int>(blocks.size()), [&](int bi) {
        const BasisBlock& block = blocks[bi];
        const int n = static_cast<int>(block.states.size());
        Matrix sub(n, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) sub(r, c) = h(block.states[r], block.states[c]);
        EigenBlock eb;
        eb.mz = block.mz;
        eb.states = block.states;
        if (n == 1) {
            eb.values = Eigen::VectorXd::Constant(1, sub(0, 0).real());
            eb.vectors = Matrix::Identity(1, 1);
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> solver(sub);
            eb.values = solver.eigenvalues();
            eb.vectors = solver.eigenvectors();
        }
        es.blocks[bi] = std::move(eb);
    });
    return es;
}

Eigen::VectorXd EigenSystem::all_values_sorted() const {
    std::vector<double> v;
    v.reserve(dim);
    for (const auto& b : blocks)
        for (int i = 0; i < b.values.size(); ++i) v.push_back(b.values(i));
    std::sort(v.begin(), v.end());
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix EigenSystem::full_vectors() const {
    Matrix v = Matrix::Zero(dim, dim);
    std::size_t col = 0;
    for (const auto& b : blocks) {
        for (int c = 0; c < b.vectors.cols(); ++c, ++col)
            for (std::size_t r = 0; r < b.states.size(); ++r) v(b.states[r], col) = b.vectors(r, c);
    }
    return v;
}

Eigen::VectorXd EigenSystem::full_values() const {
    Eigen::VectorXd v(dim);
    std::size_t i = 0;
    for (const auto& b : blocks)
        for (int k = 0; k < b.values.size(); ++k) v(i++) = b.values(k);
    return v;
}

double EigenSystem::reconstruction_defect(const Matrix& h) const {
    double worst = 0.0;
    for (const auto& b : blocks) {
        const int n = static_cast<int>(b.states.size());
        Matrix sub(n, n);
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) sub(r, c) = h(b.states[r], b.states[c]);
        const Matrix rebuilt = b.vectors * b.values.asDiagonal() * b.vectors.adjoint();
        worst = std::max(worst, (rebuilt - sub).cwiseAbs().maxCoeff());
    }
    return worst;
}

Matrix EigenSystem::propagator(double t_seconds) const {
    Matrix u = Matrix::Zero(dim, dim);
    for (const auto& b : blocks) {
        const int n = static_cast<int>(b.states.size());
        Eigen::VectorXcd phases(n);
        for (int i = 0; i < n; ++i) {
            const double angle = -2.0 * M_PI * b.values(i) * t_seconds;
            phases(i) = Complex(std::cos(angle), std::sin(angle));
        }
        const Matrix sub = b.vectors * phases.asDiagonal() * b.vectors.adjoint();
        for (int c = 0; c < n; ++c)
            for (int r = 0; r < n; ++r) u(b.states[r], b.states[c]) = sub(r, c);
    }
    return u;
}

std::string eigen_system_dump(const EigenSystem& es) {
    std::ostringstream out;
    out.precision(12);
    out << "# eigen system: dim " << es.dim << ", " << es.blocks.size() << " blocks"
        << (es.blocked ? "" : " (unblocked fallback)") << "\n";
    if (!es.note.empty()) out << "# note: " << es.note << "\n";
    for (std::size_t i = 0; i < es.blocks.size(); ++i) {
        const auto& b = es.blocks[i];
        out << "block " << i << " mz " << b.mz << " size " << b.states.size() << "\n";
        for (int k = 0; k < b.values.size(); ++k) out << "  " << b.values(k) << "\n";
    }
    return out.str();
}

}  // namespace spinchain
