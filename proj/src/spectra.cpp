#include "spinchain/spectra.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "spinchain/threading.hpp"

namespace spinchain {

// ---------------------------------------------------------------------------
// Windows and FFT
// ---------------------------------------------------------------------------

Window Window::parse(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (name == "none") return none();
    if (name == "exp") return exponential(arg.empty() ? 10.0 : std::stod(arg));
    if (name == "gauss") return gaussian(arg.empty() ? 0.05 : std::stod(arg));
    if (name == "cos2") return cosine_squared();
    throw SpinSystemError("unknown window '" + text + "' (expected exp|gauss|cos2|none)");
}

std::string Window::describe() const {
    std::ostringstream out;
    switch (kind) {
        case WindowKind::None: return "none";
        case WindowKind::Exponential: out << "exp:" << parameter; break;
        case WindowKind::Gaussian: out << "gauss:" << parameter; break;
        case WindowKind::CosineSquared: return "cos2";
    }
    return out.str();
}

namespace {

double window_value(const Window& w, double t, double t_total, int k, int n) {
    switch (w.kind) {
        case WindowKind::None: return 1.0;
        case WindowKind::Exponential: return std::exp(-w.parameter * t);
        case WindowKind::Gaussian: {
            const double x = w.parameter > 0.0 ? t / w.parameter : 0.0;
            return std::exp(-x * x);
        }
        case WindowKind::CosineSquared: {
            if (n <= 1) return 1.0;
            const double c = std::cos(0.5 * M_PI * k / (n - 1));
            return c * c;
        }
    }
    return 1.0;
    (void)t_total;
}

}  // namespace

std::vector<Complex> fft_forward(std::vector<Complex> samples) {
    Eigen::FFT<double> fft;
    std::vector<Complex> out;
    fft.fwd(out, samples);
    return out;
}

Spectrum1D process_1d(const TimeSeries& series, const Window& window, int zero_fill_factor) {
    if (series.samples.empty()) throw SpinSystemError("process_1d: empty series");
    if (series.dwell_s <= 0.0) throw SpinSystemError("process_1d: dwell must be > 0");
    if (zero_fill_factor < 1 || (zero_fill_factor & (zero_fill_factor - 1)) != 0)
        throw SpinSystemError("process_1d: zero-fill factor must be a power of 2");

    const int n = static_cast<int>(series.samples.size());
    const double mean = std::accumulate(series.samples.begin(), series.samples.end(), 0.0) / n;
    const std::size_t nfft = static_cast<std::size_t>(n) * zero_fill_factor;
    std::vector<Complex> data(nfft, Complex(0.0, 0.0));
    const double t_total = (n - 1) * series.dwell_s;
    for (int k = 0; k < n; ++k) {
        const double t = k * series.dwell_s;
        data[k] = (series.samples[k] - mean) * window_value(window, t, t_total, k, n);
    }
    const std::vector<Complex> transformed = fft_forward(std::move(data));

    Spectrum1D spec;
    const std::size_t half = nfft / 2;
    spec.frequencies_hz.reserve(half + 1);
    spec.amplitudes.reserve(half + 1);
    for (std::size_t k = 0; k <= half; ++k) {
        spec.frequencies_hz.push_back(static_cast<double>(k) / (nfft * series.dwell_s));
        spec.amplitudes.push_back(std::abs(transformed[k]));
    }
    spec.metadata["source"] = series.label;
    spec.metadata["window"] = window.describe();
    spec.metadata["zero_fill"] = std::to_string(zero_fill_factor);
    spec.metadata["points"] = std::to_string(n);
    {
        std::ostringstream d;
        d << series.dwell_s;
        spec.metadata["dwell_s"] = d.str();
    }
    return spec;
}

std::vector<Peak> pick_peaks(const Spectrum1D& spectrum, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw SpinSystemError("pick_peaks: threshold must be in (0, 1)");
    const auto& y = spectrum.amplitudes;
    const auto& f = spectrum.frequencies_hz;
    std::vector<Peak> peaks;
    if (y.size() < 3) return peaks;
    const double max = *std::max_element(y.begin(), y.end());
    if (max <= 0.0) return peaks;
    const double cut = threshold * max;

    for (std::size_t i = 1; i + 1 < y.size(); ++i) {
        if (y[i] < cut || y[i] < y[i - 1] || y[i] <= y[i + 1]) continue;
        Peak p;
        const double denom = y[i - 1] - 2.0 * y[i] + y[i + 1];
        const double delta = denom != 0.0 ? 0.5 * (y[i - 1] - y[i + 1]) / denom : 0.0;
        const double bin = f[1] - f[0];
        p.frequency_hz = f[i] + delta * bin;
        p.amplitude = y[i] - 0.25 * (y[i - 1] - y[i + 1]) * delta;
        // Half-max crossings, linearly interpolated.
        const double half = 0.5 * y[i];
        double left = f.front(), right = f.back();
        for (std::size_t k = i; k > 0; --k) {
            if (y[k - 1] <= half) {
                left = f[k - 1] + (half - y[k - 1]) / (y[k] - y[k - 1]) * bin;
                break;
            }
        }
        for (std::size_t k = i; k + 1 < y.size(); ++k) {
            if (y[k + 1] <= half) {
                right = f[k] + (y[k] - half) / (y[k] - y[k + 1]) * bin;
                break;
            }
        }
        p.width_hz = right - left;
        peaks.push_back(p);
    }
    return peaks;
}

// ---------------------------------------------------------------------------
// Stick spectra
// ---------------------------------------------------------------------------

namespace {

std::vector<Stick> merge_sticks(std::vector<Stick> raw, const StickOptions& opts) {
    std::sort(raw.begin(), raw.end(),
              [](const Stick& a, const Stick& b) { return a.frequency_hz < b.frequency_hz; });
    std::vector<Stick> merged;
    for (const auto& s : raw) {
        if (!merged.empty() &&
            s.frequency_hz - merged.back().frequency_hz <= opts.merge_tol_hz) {
            // Intensity-weighted position keeps merged lines centered.
            Stick& m = merged.back();
            const double w = m.intensity + s.intensity;
            if (w > 0.0)
                m.frequency_hz = (m.frequency_hz * m.intensity + s.frequency_hz * s.intensity) / w;
            m.intensity = w;
        } else {
            merged.push_back(s);
        }
    }
    double max = 0.0;
    for (const auto& s : merged) max = std::max(max, s.intensity);
    std::vector<Stick> out;
    for (const auto& s : merged)
        if (max > 0.0 && s.intensity >= opts.relative_threshold * max) out.push_back(s);
    return out;
}

}  // namespace

std::vector<Stick> zulf_stick_spectrum(const SpinSystem& system, const Matrix& rho0,
                                       const Matrix& detect, const StickOptions& opts) {
    const SpinSystem sys = expand_equivalence(system);
    if (rho0.rows() != static_cast<Eigen::Index>(sys.dim()) || detect.rows() != rho0.rows())
        throw SpinSystemError("zulf_stick_spectrum: operator dimension mismatch");
    const Matrix h = build_j_hamiltonian(sys);
    const EigenSystem es = block_decompose(h, sys.size());

    // The default observables are Mz-block-diagonal; fall back to a dense
    // pass when they are not.
    const double scale =
        std::max({1.0, rho0.cwiseAbs().maxCoeff(), detect.cwiseAbs().maxCoeff()});
    const bool blocked = mz_commutation_defect(rho0, sys.size()) <= 1e-12 &&
                         mz_commutation_defect(detect, sys.size()) <= 1e-12;

    std::vector<Stick> raw;
    if (blocked) {
        for (const auto& b : es.blocks) {
            const int n = static_cast<int>(b.states.size());
            if (n < 2) continue;
            Matrix rsub(n, n), dsub(n, n);
            for (int c = 0; c < n; ++c)
                for (int r = 0; r < n; ++r) {
                    rsub(r, c) = rho0(b.states[r], b.states[c]);
                    dsub(r, c) = detect(b.states[r], b.states[c]);
                }
            const Matrix rt = b.vectors.adjoint() * rsub * b.vectors;
            const Matrix dt = b.vectors.adjoint() * dsub * b.vectors;
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    const double intensity = std::abs(dt(i, j) * rt(j, i));
                    if (intensity > 0.0)
                        raw.push_back({std::abs(b.values(i) - b.values(j)), intensity});
                }
        }
    } else {
        const Matrix v = es.full_vectors();
        const Eigen::VectorXd vals = es.full_values();
        const Matrix rt = v.adjoint() * rho0 * v;
        const Matrix dt = v.adjoint() * detect * v;
        const int n = static_cast<int>(vals.size());
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double intensity = std::abs(dt(i, j) * rt(j, i));
                if (intensity > 1e-300 * scale)
                    raw.push_back({std::abs(vals(i) - vals(j)), intensity});
            }
    }
    return merge_sticks(std::move(raw), opts);
}

std::vector<Stick> zulf_stick_spectrum(const SpinSystem& system, const StickOptions& opts,
                                       const std::optional<std::string>& observe_isotope) {
    const SpinSystem sys = expand_equivalence(system);
    const std::size_t dim = sys.dim();
    double gamma_max = 0.0;
    for (const auto& s : sys.spins())
        gamma_max = std::max(gamma_max, std::abs(s.isotope.gamma_mhz_per_t));
    Eigen::VectorXd rho_diag = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd det_diag = Eigen::VectorXd::Zero(dim);
    for (int a = 0; a < sys.size(); ++a) {
        const double weight = sys.spin(a).isotope.gamma_mhz_per_t / gamma_max;
        const Eigen::VectorXd z = single_spin_z_diagonal(sys.size(), a);
        rho_diag += weight * z;
        if (!observe_isotope || sys.spin(a).isotope.symbol == *observe_isotope)
            det_diag += weight * z;
    }
    if (observe_isotope && !sys.has_isotope(*observe_isotope))
        throw SpinSystemError("observe isotope '" + *observe_isotope + "' absent from system");
    Matrix rho0 = rho_diag.cast<Complex>().asDiagonal();
    Matrix detect = det_diag.cast<Complex>().asDiagonal();
    return zulf_stick_spectrum(sys, rho0, detect, opts);
}

// ---------------------------------------------------------------------------
// Indirect J-series
// ---------------------------------------------------------------------------

std::vector<double> uniform_tau_grid(int points, double dwell_s) {
    if (points < 1 || dwell_s <= 0.0) throw SpinSystemError("invalid tau grid");
    std::vector<double> grid(points);
    for (int k = 0; k < points; ++k) grid[k] = k * dwell_s;
    return grid;
}

namespace {

void check_uniform(const std::vector<double>& grid) {
    if (grid.empty()) throw SpinSystemError("tau grid is empty");
    if (grid.size() == 1) return;
    const double dwell = grid[1] - grid[0];
    if (dwell <= 0.0) throw SpinSystemError("tau grid must be increasing");
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double gap = grid[k] - grid[k - 1];
        if (std::abs(gap - dwell) > 1e-9 * std::max(dwell, 1e-12))
            throw SpinSystemError("tau grid must be uniform (FFT requires uniform sampling)");
    }
}

// Per-Mz-block product-basis observable.
using BlockObservable = std::vector<Matrix>;

}  // namespace

std::vector<TimeSeries> indirect_j_series(FieldCycleEngine& engine,
                                          const ProtocolSchedule& schedule,
                                          const std::vector<double>& tau_grid,
                                          const SeriesOptions& opts) {
    schedule.validate();
    check_uniform(tau_grid);
    const auto var_index = schedule.variable_segment();
    if (!var_index)
        throw SpinSystemError("schedule needs exactly one variable evolution segment");
    const auto& var_segment = std::get<FreeEvolutionSegment>(schedule.segments[*var_index]);
    const double evolution_field = var_segment.field_tesla;

    const SpinSystem& sys = engine.system();
    const auto groups = sys.detection_groups();

    // Observed groups: explicit request, else the Detect segment, else all.
    std::vector<std::string> requested = opts.observe;
    if (requested.empty()) {
        for (const auto& seg : schedule.segments)
            if (const auto* det = std::get_if<DetectSegment>(&seg)) requested = det->targets;
    }
    std::vector<std::size_t> selected;
    if (requested.empty()) {
        selected.resize(groups.size());
        std::iota(selected.begin(), selected.end(), 0);
    } else {
        for (const auto& target : requested) {
            bool found = false;
            for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                if (groups[gi].label == target ||
                    sys.spin(groups[gi].members.front()).isotope.symbol == target) {
                    if (std::find(selected.begin(), selected.end(), gi) == selected.end())
                        selected.push_back(gi);
                    found = true;
                }
            }
            if (!found)
                throw SpinSystemError("observe target '" + target +
                                      "' matches no group or isotope");
        }
    }

    // Replay the prefix once.
    BlockDensity state;
    state.blocks = engine.blocks();
    {
        const auto pops = engine.thermal_populations(schedule.prepolarize_field_tesla,
                                                     opts.temperature_k);
        const EigenSystem& es0 = engine.eigensystem(schedule.prepolarize_field_tesla);
        for (std::size_t bi = 0; bi < es0.blocks.size(); ++bi)
            state.rho.push_back(es0.blocks[bi].vectors * pops[bi].asDiagonal() *
                                es0.blocks[bi].vectors.adjoint());
    }
    double field = schedule.prepolarize_field_tesla;
    for (std::size_t i = 0; i < *var_index; ++i) {
        const auto& seg = schedule.segments[i];
        if (const auto* ramp = std::get_if<AdiabaticRampSegment>(&seg)) {
            apply_adiabatic_map(state, engine.eigensystem(ramp->from_field_tesla),
                                engine.eigensystem(ramp->to_field_tesla));
            field = ramp->to_field_tesla;
        } else if (const auto* sw = std::get_if<SuddenSwitchSegment>(&seg)) {
            field = sw->to_field_tesla;
        } else if (const auto* ev = std::get_if<FreeEvolutionSegment>(&seg)) {
            apply_block_evolution(state, engine.eigensystem(ev->field_tesla), ev->duration_s);
        }
    }
    if (std::abs(field - evolution_field) >
        1e-15 + 1e-9 * std::max(std::abs(field), std::abs(evolution_field)))
        throw SpinSystemError("variable evolution field does not match the preceding segments");

    const EigenSystem& es_evo = engine.eigensystem(evolution_field);

    // Detection functionals pulled back through the suffix (Heisenberg
    // picture): Tr(D rho_after_suffix) = Tr(D_eff rho_at_evolution_end).
    std::vector<BlockObservable> observables(selected.size());
    for (std::size_t s = 0; s < selected.size(); ++s) {
        const auto& g = groups[selected[s]];
        const Eigen::VectorXd diag = total_z_diagonal(sys.size(), g.members);
        BlockObservable d(state.blocks.size());
        for (std::size_t bi = 0; bi < state.blocks.size(); ++bi) {
            const auto& states = state.blocks[bi].states;
            Eigen::VectorXcd sub(states.size());
            for (std::size_t r = 0; r < states.size(); ++r) sub(r) = diag(states[r]);
            d[bi] = sub.asDiagonal();
        }
        observables[s] = std::move(d);
    }
    for (std::size_t i = schedule.segments.size(); i-- > *var_index + 1;) {
        const auto& seg = schedule.segments[i];
        if (std::holds_alternative<DetectSegment>(seg) ||
            std::holds_alternative<SuddenSwitchSegment>(seg))
            continue;
        if (const auto* ramp = std::get_if<AdiabaticRampSegment>(&seg)) {
            const EigenSystem& from = engine.eigensystem(ramp->from_field_tesla);
            const EigenSystem& to = engine.eigensystem(ramp->to_field_tesla);
            for (auto& obs : observables) {
                for (std::size_t bi = 0; bi < obs.size(); ++bi) {
                    const EigenBlock& fb = from.blocks[bi];
                    const EigenBlock& tb = to.blocks[bi];
                    const int n = static_cast<int>(fb.states.size());
                    const Eigen::VectorXd d_to =
                        (tb.vectors.adjoint() * obs[bi] * tb.vectors).diagonal().real();
                    const auto from_order = adiabatic_rank_order(fb);
                    const auto to_order = adiabatic_rank_order(tb);
                    Eigen::VectorXd d_from(n);
                    for (int r = 0; r < n; ++r) d_from(from_order[r]) = d_to(to_order[r]);
                    obs[bi] = fb.vectors * d_from.asDiagonal() * fb.vectors.adjoint();
                }
            }
        } else if (const auto* ev = std::get_if<FreeEvolutionSegment>(&seg)) {
            const EigenSystem& es = engine.eigensystem(ev->field_tesla);
            for (auto& obs : observables) {
                for (std::size_t bi = 0; bi < obs.size(); ++bi) {
                    const EigenBlock& eb = es.blocks[bi];
                    const int n = static_cast<int>(eb.states.size());
                    Eigen::VectorXcd phases(n);
                    for (int k = 0; k < n; ++k) {
                        const double angle = -2.0 * M_PI * eb.values(k) * ev->duration_s;
                        phases(k) = Complex(std::cos(angle), std::sin(angle));
                    }
                    const Matrix u = eb.vectors * phases.asDiagonal() * eb.vectors.adjoint();
                    obs[bi] = u.adjoint() * obs[bi] * u;
                }
            }
        }
    }

    // Eigenbasis amplitude matrices M with S(tau) = e(tau)^H M e(tau).
    const int n_tau = static_cast<int>(tau_grid.size());
    std::vector<std::vector<double>> samples(selected.size(),
                                             std::vector<double>(n_tau, 0.0));
    for (std::size_t bi = 0; bi < state.blocks.size(); ++bi) {
        const EigenBlock& eb = es_evo.blocks[bi];
        const int n = static_cast<int>(eb.states.size());
        const Matrix rho_t = eb.vectors.adjoint() * state.rho[bi] * eb.vectors;
        Matrix phases(n, n_tau);
        for (int k = 0; k < n_tau; ++k)
            for (int i = 0; i < n; ++i) {
                const double angle = 2.0 * M_PI * eb.values(i) * tau_grid[k];
                phases(i, k) = Complex(std::cos(angle), std::sin(angle));
            }
        for (std::size_t s = 0; s < selected.size(); ++s) {
            const Matrix d_t = eb.vectors.adjoint() * observables[s][bi] * eb.vectors;
            const Matrix m = rho_t.cwiseProduct(d_t.transpose());
            const Matrix g = m * phases;
            for (int k = 0; k < n_tau; ++k)
                samples[s][k] += (phases.col(k).adjoint() * g.col(k))(0, 0).real();
        }
    }

    std::vector<TimeSeries> out;
    for (std::size_t s = 0; s < selected.size(); ++s) {
        TimeSeries ts;
        ts.samples = std::move(samples[s]);
        ts.dwell_s = tau_grid.size() > 1 ? tau_grid[1] - tau_grid[0] : 0.0;
        ts.start_s = tau_grid.front();
        ts.label = groups[selected[s]].label;
        out.push_back(std::move(ts));
    }
    return out;
}

std::vector<TimeSeries> indirect_j_series(const SpinSystem& system,
                                          const ProtocolSchedule& schedule,
                                          const std::vector<double>& tau_grid,
                                          const SeriesOptions& opts) {
    FieldCycleEngine engine(system);
    return indirect_j_series(engine, schedule, tau_grid, opts);
}

// ---------------------------------------------------------------------------
// High-field spectra
// ---------------------------------------------------------------------------

namespace {

// Sparse product-basis Hamiltonian: diagonal plus real flip-flop entries.
// Suited to the secular high-field structure where dense 2^N x 2^N
// storage would dominate the cost of repeated fitting evaluations.
struct SparseHamiltonian {
    Eigen::VectorXd diag;
    std::vector<std::tuple<std::size_t, std::size_t, double>> flip;
};

SparseHamiltonian build_sparse_total(const SpinSystem& sys, const HamiltonianSpec& spec,
                                     bool offset_frame) {
    const int n = sys.size();
    const std::size_t dim = sys.dim();
    SparseHamiltonian h;
    h.diag = Eigen::VectorXd::Zero(dim);
    for (int a = 0; a < n; ++a) {
        const Spin& s = sys.spin(a);
        double nu = s.isotope.larmor_hz(spec.field_tesla) * (1.0 + s.shift_ppm * 1e-6);
        if (offset_frame) nu -= s.isotope.larmor_hz(spec.field_tesla);
        const std::size_t mask = spin_mask(n, a);
        for (std::size_t b = 0; b < dim; ++b) h.diag(b) -= nu * ((b & mask) ? -0.5 : 0.5);
    }
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
            const double j = sys.coupling(a, b);
            if (j == 0.0) continue;
            bool keep_flip_flop = true;
            if (spec.truncation == Truncation::Secular) {
                const Spin& sa = sys.spin(a);
                const Spin& sb = sys.spin(b);
                if (sa.isotope.symbol != sb.isotope.symbol) {
                    keep_flip_flop = false;
                } else {
                    const double dnu = std::abs(sa.isotope.larmor_hz(spec.field_tesla)) *
                                       std::abs(sa.shift_ppm - sb.shift_ppm) * 1e-6;
                    keep_flip_flop = dnu <= spec.secular_factor * std::abs(j);
                }
            }
            const std::size_t ma = spin_mask(n, a);
            const std::size_t mb = spin_mask(n, b);
            for (std::size_t s = 0; s < dim; ++s) {
                const bool ua = (s & ma) == 0;
                const bool ub = (s & mb) == 0;
                h.diag(s) -= j * (ua ? 0.5 : -0.5) * (ub ? 0.5 : -0.5);
                if (keep_flip_flop && ua && !ub) h.flip.emplace_back(s ^ ma ^ mb, s, -0.5 * j);
            }
        }
    return h;
}

struct SparseEigenBlock {
    std::vector<std::size_t> states;
    Eigen::VectorXd values;   // offset-frame eigenvalues, ascending
    Eigen::MatrixXd vectors;  // real orthogonal, block-local
    double lab_shift = 0.0;   // lab energy = values + lab_shift
};

// Union-find decomposition over the flip structure, then per-block dense
// real symmetric diagonalization.
std::vector<SparseEigenBlock> sparse_decompose(const SpinSystem& sys,
                                               const SparseHamiltonian& h, bool offset_frame,
                                               double field_tesla) {
    const std::size_t dim = sys.dim();
    std::vector<std::size_t> parent(dim);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const auto& [r, c, v] : h.flip) {
        const std::size_t rr = find(r), rc = find(c);
        if (rr != rc) parent[rr] = rc;
    }
    std::vector<std::vector<std::size_t>> members(dim);
    for (std::size_t s = 0; s < dim; ++s) members[find(s)].push_back(s);

    std::vector<std::string> isotopes;
    for (const auto& s : sys.spins())
        if (std::find(isotopes.begin(), isotopes.end(), s.isotope.symbol) == isotopes.end())
            isotopes.push_back(s.isotope.symbol);

    std::vector<SparseEigenBlock> blocks;
    std::vector<int> block_of(dim, -1);
    for (auto& m : members) {
        if (m.empty()) continue;
        SparseEigenBlock b;
        std::sort(m.begin(), m.end());
        b.states = std::move(m);
        if (offset_frame) {
            for (const auto& iso : isotopes) {
                double mz = 0.0;
                for (int a : sys.spins_of_isotope(iso))
                    mz += spin_mz(sys.size(), a, b.states.front());
                b.lab_shift -=
                    sys.spin(sys.spins_of_isotope(iso).front()).isotope.larmor_hz(field_tesla) *
                    mz;
            }
        }
        for (std::size_t r = 0; r < b.states.size(); ++r)
            block_of[b.states[r]] = static_cast<int>(blocks.size());
        blocks.push_back(std::move(b));
    }
    std::vector<std::vector<std::tuple<int, int, double>>> local(blocks.size());
    std::vector<int> row_of(dim, -1);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi)
        for (std::size_t r = 0; r < blocks[bi].states.size(); ++r)
            row_of[blocks[bi].states[r]] = static_cast<int>(r);
    for (const auto& [r, c, v] : h.flip)
        local[block_of[r]].emplace_back(row_of[r], row_of[c], v);

    parallel_for(static_cast<int>(blocks.size()), [&](int bi) {
        SparseEigenBlock& b = blocks[bi];
        const int n = static_cast<int>(b.states.size());
        if (n == 1) {
            b.values = Eigen::VectorXd::Constant(1, h.diag(b.states[0]));
            b.vectors = Eigen::MatrixXd::Identity(1, 1);
            return;
        }
        Eigen::MatrixXd sub = Eigen::MatrixXd::Zero(n, n);
        for (int r = 0; r < n; ++r) sub(r, r) = h.diag(b.states[r]);
        for (const auto& [r, c, v] : local[bi]) {
            sub(r, c) += v;
            sub(c, r) += v;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sub);
        b.values = solver.eigenvalues();
        b.vectors = solver.eigenvectors();
    });
    return blocks;
}

}  // namespace

std::vector<SpectralLine> highfield_lines(const SpinSystem& system, const HamiltonianSpec& spec,
                                          const std::string& observe_isotope,
                                          const HighFieldOptions& opts) {
    spec.validate();
    if (spec.field_tesla <= 0.0)
        throw SpinSystemError("highfield_lines requires field > 0");
    const SpinSystem sys = expand_equivalence(system);
    const auto observed = sys.spins_of_isotope(observe_isotope);
    if (observed.empty())
        throw SpinSystemError("observe isotope '" + observe_isotope + "' absent from system");

    // Under secular truncation every retained term commutes with each
    // isotope's total I_z, so the bare Zeeman part can be removed exactly;
    // eigenvalues stay at chemical-shift scale, which preserves sub-mHz
    // precision. The full isotropic Hamiltonian is handled in the lab
    // frame.
    const bool offset_frame = spec.truncation == Truncation::Secular;
    const SparseHamiltonian h = build_sparse_total(sys, spec, offset_frame);
    const auto blocks = sparse_decompose(sys, h, offset_frame, spec.field_tesla);

    std::vector<int> block_of(sys.dim(), -1), row_of(sys.dim(), -1);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi)
        for (std::size_t r = 0; r < blocks[bi].states.size(); ++r) {
            block_of[blocks[bi].states[r]] = static_cast<int>(bi);
            row_of[blocks[bi].states[r]] = static_cast<int>(r);
        }

    const double beta = kPlanck / (kBoltzmann * opts.temperature_k);
    const double nu_obs = sys.spin(observed.front()).isotope.larmor_hz(spec.field_tesla);
    const double gamma_sign = nu_obs >= 0.0 ? 1.0 : -1.0;

    // Sparse structure of sum_a I_a^- grouped by block pairs.
    std::map<std::pair<int, int>, Eigen::MatrixXd> lowering;
    for (int a : observed) {
        const std::size_t mask = spin_mask(sys.size(), a);
        for (std::size_t s = 0; s < sys.dim(); ++s) {
            if (s & mask) continue;  // observed spin already down
            const std::size_t target = s ^ mask;
            const auto key = std::make_pair(block_of[target], block_of[s]);
            auto it = lowering.find(key);
            if (it == lowering.end())
                it = lowering
                         .emplace(key, Eigen::MatrixXd::Zero(blocks[key.first].states.size(),
                                                             blocks[key.second].states.size()))
                         .first;
            it->second(row_of[target], row_of[s]) += 1.0;
        }
    }

    std::vector<SpectralLine> lines;
    for (const auto& [key, lower] : lowering) {
        const SparseEigenBlock& bf = blocks[key.first];
        const SparseEigenBlock& bi = blocks[key.second];
        const Eigen::MatrixXd amp = bf.vectors.transpose() * lower * bi.vectors;
        for (int c = 0; c < amp.cols(); ++c)
            for (int r = 0; r < amp.rows(); ++r) {
                const double moment = amp(r, c) * amp(r, c);
                if (moment < 1e-18) continue;
                const double lam_i_lab = bi.values(c) + bi.lab_shift;
                const double lam_f_lab = bf.values(r) + bf.lab_shift;
                const double weight =
                    beta * std::abs(lam_f_lab - lam_i_lab) / static_cast<double>(sys.dim());
                double offset;
                if (offset_frame) {
                    offset = gamma_sign * (bf.values(r) - bi.values(c));
                } else {
                    offset = std::abs(lam_f_lab - lam_i_lab) - std::abs(nu_obs);
                }
                lines.push_back({offset, moment * weight});
            }
    }
    if (lines.empty()) return lines;
    double max = 0.0;
    for (const auto& l : lines) max = std::max(max, l.intensity);
    std::vector<SpectralLine> kept;
    for (const auto& l : lines)
        if (l.intensity >= opts.intensity_threshold * max) kept.push_back(l);
    for (auto& l : kept) l.intensity /= max;
    std::sort(kept.begin(), kept.end(),
              [](const SpectralLine& a, const SpectralLine& b) { return a.offset_hz < b.offset_hz; });
    return kept;
}

Spectrum1D highfield_spectrum(const SpinSystem& system, const HamiltonianSpec& spec,
                              const std::string& observe_isotope,
                              const HighFieldOptions& opts) {
    const auto lines = highfield_lines(system, spec, observe_isotope, opts);
    if (opts.linewidth_hz <= 0.0) throw SpinSystemError("linewidth must be > 0");

    double lo, hi;
    if (opts.min_offset_hz && opts.max_offset_hz) {
        lo = *opts.min_offset_hz;
        hi = *opts.max_offset_hz;
    } else if (!lines.empty()) {
        lo = lines.front().offset_hz - opts.margin_hz;
        hi = lines.back().offset_hz + opts.margin_hz;
    } else {
        lo = -opts.margin_hz;
        hi = opts.margin_hz;
    }
    if (hi <= lo) hi = lo + 1.0;

    int points = opts.grid_points;
    if (points <= 0) {
        points = static_cast<int>(std::ceil((hi - lo) / (opts.linewidth_hz / 6.0))) + 1;
        points = std::clamp(points, 2000, 262144);
    }

    Spectrum1D spec1d;
    spec1d.frequencies_hz.resize(points);
    spec1d.amplitudes.assign(points, 0.0);
    const double step = (hi - lo) / (points - 1);
    for (int k = 0; k < points; ++k) spec1d.frequencies_hz[k] = lo + k * step;

    // Lorentzians added within a finite window; the truncated tails stay
    // below ~2.5e-5 of a unit line.
    const double half = 0.5 * opts.linewidth_hz;
    const double window = std::max(50.0, 200.0 * half);
    for (const auto& line : lines) {
        const int k_lo = std::max(0, static_cast<int>((line.offset_hz - window - lo) / step));
        const int k_hi = std::min(points - 1, static_cast<int>((line.offset_hz + window - lo) / step) + 1);
        for (int k = k_lo; k <= k_hi; ++k) {
            const double d = spec1d.frequencies_hz[k] - line.offset_hz;
            spec1d.amplitudes[k] += line.intensity * half * half / (d * d + half * half);
        }
    }

    const SpinSystem sys = expand_equivalence(system);
    const double nu0 = sys.spin(sys.spins_of_isotope(observe_isotope).front())
                           .isotope.larmor_hz(spec.field_tesla);
    spec1d.metadata["nucleus"] = observe_isotope;
    {
        std::ostringstream v;
        v << spec.field_tesla;
        spec1d.metadata["field_tesla"] = v.str();
    }
    {
        std::ostringstream v;
        v << std::abs(nu0);
        spec1d.metadata["larmor_hz"] = v.str();
    }
    {
        std::ostringstream v;
        v << opts.linewidth_hz;
        spec1d.metadata["linewidth_hz"] = v.str();
    }
    spec1d.metadata["truncation"] =
        spec.truncation == Truncation::Secular ? "secular" : "full";
    spec1d.metadata["axis"] = "offset_hz_from_bare_larmor";
    return spec1d;
}

}  // namespace spinchain
