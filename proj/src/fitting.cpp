#include "spinchain/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "spinchain/threading.hpp"

namespace spinchain {

FitParameter FitParameter::coupling(std::string a, std::string b, double value) {
    FitParameter p;
    p.kind = Kind::Coupling;
    p.site_a = std::move(a);
    p.site_b = std::move(b);
    p.value = value;
    return p;
}

FitParameter FitParameter::shift(std::string site, double value_ppm) {
    FitParameter p;
    p.kind = Kind::Shift;
    p.site_a = std::move(site);
    p.value = value_ppm;
    return p;
}

FitParameter FitParameter::linewidth(double value_hz) {
    FitParameter p;
    p.kind = Kind::Linewidth;
    p.value = value_hz;
    return p;
}

namespace {

int site_index(const SpinSystem& sys, const std::string& label) {
    for (int i = 0; i < sys.size(); ++i)
        if (sys.spin(i).label == label) return i;
    throw SpinSystemError("fit parameter references unknown site '" + label + "'");
}

}  // namespace

void FitParameterSet::validate() const {
    spec.validate();
    if (options.linewidth_hz <= 0.0) throw SpinSystemError("fit: linewidth must be > 0");
    if (parameters.empty()) throw SpinSystemError("fit: no free parameters");
    int linewidths = 0;
    for (const auto& p : parameters) {
        if (p.lower > p.upper) throw SpinSystemError("fit: inconsistent bounds");
        if (p.value < p.lower || p.value > p.upper)
            throw SpinSystemError("fit: initial value outside bounds");
        switch (p.kind) {
            case FitParameter::Kind::Coupling:
                site_index(base, p.site_a);
                site_index(base, p.site_b);
                if (p.site_a == p.site_b)
                    throw SpinSystemError("fit: coupling parameter needs two distinct sites");
                break;
            case FitParameter::Kind::Shift:
                site_index(base, p.site_a);
                break;
            case FitParameter::Kind::Linewidth:
                if (++linewidths > 1)
                    throw SpinSystemError("fit: at most one global linewidth parameter");
                if (p.value <= 0.0) throw SpinSystemError("fit: linewidth must be > 0");
                break;
        }
    }
}

SpinSystem FitParameterSet::apply(const Eigen::VectorXd& values) const {
    if (values.size() != static_cast<Eigen::Index>(parameters.size()))
        throw SpinSystemError("fit: value vector length mismatch");
    std::vector<Spin> spins = base.spins();
    Eigen::MatrixXd j = base.couplings();
    for (std::size_t i = 0; i < parameters.size(); ++i) {
        const FitParameter& p = parameters[i];
        switch (p.kind) {
            case FitParameter::Kind::Coupling: {
                const int a = site_index(base, p.site_a);
                const int b = site_index(base, p.site_b);
                j(a, b) = j(b, a) = values(i);
                break;
            }
            case FitParameter::Kind::Shift:
                spins[site_index(base, p.site_a)].shift_ppm = values(i);
                break;
            case FitParameter::Kind::Linewidth:
                break;  // handled by the residual through options
        }
    }
    return SpinSystem(std::move(spins), std::move(j), base.groups());
}

Eigen::VectorXd FitParameterSet::initial_values() const {
    Eigen::VectorXd v(parameters.size());
    for (std::size_t i = 0; i < parameters.size(); ++i) v(i) = parameters[i].value;
    return v;
}

Eigen::VectorXd fit_residual(const FitParameterSet& set, const Eigen::VectorXd& values,
                             const std::vector<FitTarget>& targets) {
    if (targets.empty()) throw SpinSystemError("fit: no target spectra");
    const SpinSystem sys = set.apply(values);
    HighFieldOptions opts = set.options;
    for (std::size_t i = 0; i < set.parameters.size(); ++i)
        if (set.parameters[i].kind == FitParameter::Kind::Linewidth)
            opts.linewidth_hz = values(i);

    std::size_t total = 0;
    for (const auto& t : targets) total += t.spectrum.amplitudes.size();
    Eigen::VectorXd residual(total);
    std::size_t at = 0;
    for (const auto& target : targets) {
        const auto& axis = target.spectrum.frequencies_hz;
        if (axis.size() < 2) throw SpinSystemError("fit: target spectrum too short");
        HighFieldOptions local = opts;
        local.min_offset_hz = axis.front();
        local.max_offset_hz = axis.back();
        local.grid_points = static_cast<int>(axis.size());
        const Spectrum1D sim = highfield_spectrum(sys, set.spec, target.observe_isotope, local);
        const double sim_max = *std::max_element(sim.amplitudes.begin(), sim.amplitudes.end());
        const double ref_max = *std::max_element(target.spectrum.amplitudes.begin(),
                                                 target.spectrum.amplitudes.end());
        if (sim_max <= 0.0 || ref_max <= 0.0)
            throw SpinSystemError("fit: spectrum with no intensity");
        for (std::size_t k = 0; k < axis.size(); ++k)
            residual(at++) =
                sim.amplitudes[k] / sim_max - target.spectrum.amplitudes[k] / ref_max;
    }
    return residual;
}

FitResult fit(const FitParameterSet& set, const std::vector<FitTarget>& targets,
              const FitOptions& fit_opts) {
    set.validate();
    const int n = static_cast<int>(set.parameters.size());

    auto clamp = [&](Eigen::VectorXd v) {
        for (int i = 0; i < n; ++i)
            v(i) = std::clamp(v(i), set.parameters[i].lower, set.parameters[i].upper);
        return v;
    };
    auto fd_step = [&](int i) {
        switch (set.parameters[i].kind) {
            case FitParameter::Kind::Coupling: return fit_opts.fd_step_coupling_hz;
            case FitParameter::Kind::Shift: return fit_opts.fd_step_shift_ppm;
            case FitParameter::Kind::Linewidth: return fit_opts.fd_step_linewidth_hz;
        }
        return 1e-6;
    };

    FitResult result;
    Eigen::VectorXd v = clamp(set.initial_values());
    Eigen::VectorXd r = fit_residual(set, v, targets);
    double cost = r.squaredNorm();
    result.initial_residual_norm = std::sqrt(cost);

    double damping = fit_opts.initial_damping;
    Eigen::MatrixXd jacobian(r.size(), n);
    bool have_jacobian = false;

    int iter = 0;
    while (iter < fit_opts.max_iterations && !result.converged) {
        ++iter;
        // Forward-difference Jacobian; columns are independent spectrum
        // simulations and run in parallel.
        parallel_for(n, [&](int col) {
            Eigen::VectorXd vp = v;
            vp(col) += fd_step(col);
            const Eigen::VectorXd rp = fit_residual(set, vp, targets);
            jacobian.col(col) = (rp - r) / fd_step(col);
        });
        have_jacobian = true;

        const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
        const Eigen::VectorXd jtr = jacobian.transpose() * r;

        bool accepted = false;
        for (int attempt = 0; attempt < 25; ++attempt) {
            Eigen::MatrixXd damped = jtj;
            for (int i = 0; i < n; ++i)
                damped(i, i) += damping * std::max(jtj(i, i), 1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
            const Eigen::VectorXd trial = clamp(v + delta);
            const Eigen::VectorXd rt = fit_residual(set, trial, targets);
            const double trial_cost = rt.squaredNorm();
            if (trial_cost < cost) {
                const double relative = (cost - trial_cost) / std::max(cost, 1e-300);
                v = trial;
                r = rt;
                cost = trial_cost;
                damping = std::max(damping / 3.0, 1e-12);
                accepted = true;
                if (relative < fit_opts.relative_tolerance) {
                    result.converged = true;
                    result.message = "relative residual change below tolerance";
                }
                break;
            }
            damping *= 4.0;
            if (damping > 1e12) break;
        }
        if (!accepted) {
            // No damped step improves the residual: stationary point.
            result.converged = true;
            result.message = "no improving step found (stationary)";
            break;
        }
    }
    if (!result.converged) result.message = "maximum iterations reached";
    result.iterations = iter;
    result.values = v;
    result.residual_norm = std::sqrt(cost);

    // Uncertainties from the quadratic model at the optimum.
    result.uncertainties = Eigen::VectorXd::Constant(n, -1.0);
    if (have_jacobian) {
        const Eigen::Index m = r.size();
        const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
        const double variance = cost / dof;
        const Eigen::MatrixXd jtj = jacobian.transpose() * jacobian;
        const Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
        if (lu.isInvertible()) {
            const Eigen::MatrixXd cov = variance * lu.inverse();
            result.uncertainties = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
            result.uncertainties_available = true;
        }
    }
    return result;
}

}  // namespace spinchain
