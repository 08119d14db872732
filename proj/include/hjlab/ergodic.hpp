#pragma once

#include <optional>
#include <vector>

#include "hjlab/fit.hpp"
#include "hjlab/grid.hpp"
#include "hjlab/problem.hpp"

namespace hjlab {

/// Corrector and ergodic constant of the discrete cell problem
///   G_i(v) + (L v)_i = Hbar   (all components, one shared constant),
/// normalized so that component 0 vanishes at node 0.
struct ErgodicSolution {
    std::vector<ScalarField> corrector;
    double ergodic_constant = 0.0;
    double eta = 0.0;
    /// max-node residual of the discrete cell problem.
    double residual = 0.0;
    /// Last windowed oscillation of the long-time run.
    double oscillation = 0.0;
    double time = 0.0;
    int newton_iterations = 0;

    const ScalarField& v(int component = 0) const { return corrector.at(std::size_t(component)); }
    const PeriodicGrid& grid() const { return corrector.front().grid(); }
};

struct ErgodicOptions {
    /// Length of the trailing window used to estimate the constant.
    double window = 5.0;
    double max_time = 4000.0;
    /// Try the Newton polish once the oscillation drops below this value.
    double newton_switch = 1e-4;
    bool newton = true;
    int newton_max_iterations = 60;
    /// Starting profile (defaults to zero).
    std::optional<std::vector<ScalarField>> initial;
};

/// Long-time method at epsilon = 1 with the problem's eta, followed by a Newton
/// polish of the bordered system. Throws ConvergenceError when max_time passes.
ErgodicSolution solve_ergodic(const ProblemSpec& problem, const PeriodicGrid& grid, double tol,
                              const ErgodicOptions& opts = {});
ErgodicSolution solve_system_ergodic(const ProblemSpec& problem, const PeriodicGrid& grid, double tol,
                                     const ErgodicOptions& opts = {});

/// max-node residual of (v, c) in the discrete cell problem of `problem`.
double ergodic_residual(const ProblemSpec& problem, const std::vector<ScalarField>& v, double c);

struct SweepRow {
    double epsilon = 0.0;
    double eta = 0.0;
    double hbar = 0.0;
    double grad_norm = 0.0;
    double residual = 0.0;
    double wall_time = 0.0;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    /// The solved pair behind each row.
    std::vector<ErgodicSolution> solutions;
    /// Richardson estimate of the eta -> 0 constant from the two smallest epsilons.
    std::optional<double> richardson;
    /// Reference constant used for the slope (known value or Richardson).
    std::optional<double> reference;
    std::optional<LogLogFit> fit;
    /// (max - min) / max of the gradient norms across the sweep.
    double grad_variation = 0.0;
};

/// One ergodic solve per epsilon with eta = epsilon^4. Without opts.initial each
/// row starts from the previous row's corrector.
SweepTable viscosity_sweep(const ProblemSpec& family, const PeriodicGrid& grid, const std::vector<double>& epsilons,
                           double tol, std::optional<double> known_constant = std::nullopt,
                           const ErgodicOptions& opts = {});

}  // namespace hjlab
