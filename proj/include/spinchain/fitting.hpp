#pragma once

#include <limits>
#include <string>
#include <vector>

#include "spinchain/spectra.hpp"
#include "spinchain/spin_system.hpp"

namespace spinchain {

/// One free parameter of a total-lineshape fit. Couplings and shifts are
/// addressed by site labels of the (possibly compact) system, so
/// equivalence groups share their shift parameter by construction.
struct FitParameter {
    enum class Kind { Coupling, Shift, Linewidth };
    Kind kind = Kind::Coupling;
    std::string site_a;  // coupling: both sites; shift: site_a only
    std::string site_b;
    double value = 0.0;  // initial value
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();

    static FitParameter coupling(std::string a, std::string b, double value);
    static FitParameter shift(std::string site, double value_ppm);
    static FitParameter linewidth(double value_hz);
};

/// Target spectrum for one observed isotope. The simulation is evaluated
/// on the target grid; amplitudes are max-normalized before differencing.
struct FitTarget {
    Spectrum1D spectrum;
    std::string observe_isotope;
};

/// Free parameters plus the simulation model they feed.
struct FitParameterSet {
    explicit FitParameterSet(SpinSystem base_system) : base(std::move(base_system)) {}

    SpinSystem base;
    std::vector<FitParameter> parameters;
    HamiltonianSpec spec;
    HighFieldOptions options;

    void validate() const;
    /// System with parameter values substituted.
    SpinSystem apply(const Eigen::VectorXd& values) const;
    Eigen::VectorXd initial_values() const;
};

/// Concatenated pointwise differences between the simulated and target
/// spectra, each spectrum normalized to unit maximum. Grids that do not
/// match the target are handled by simulating directly on the target axis.
Eigen::VectorXd fit_residual(const FitParameterSet& set, const Eigen::VectorXd& values,
                             const std::vector<FitTarget>& targets);

struct FitOptions {
    int max_iterations = 120;
    double relative_tolerance = 1e-10;  // on the squared residual norm
    double fd_step_coupling_hz = 1e-4;
    double fd_step_shift_ppm = 1e-5;
    double fd_step_linewidth_hz = 1e-4;
    double initial_damping = 1e-3;
};

struct FitResult {
    Eigen::VectorXd values;
    Eigen::VectorXd uncertainties;  // per-parameter, from the quadratic model
    bool uncertainties_available = false;
    double residual_norm = 0.0;
    double initial_residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

/// Damped least squares on the total lineshape: forward-difference
/// Jacobian with per-kind steps, Marquardt-scaled damping adapted on step
/// success, termination when the relative residual change drops below
/// tolerance. Non-convergence returns the best point found, flagged.
/// Uncertainties come from the diagonal of the inverse approximate
/// Hessian scaled by the residual variance.
FitResult fit(const FitParameterSet& set, const std::vector<FitTarget>& targets,
              const FitOptions& opts = {});

}  // namespace spinchain
