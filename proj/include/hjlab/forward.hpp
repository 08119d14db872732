#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "hjlab/grid.hpp"
#include "hjlab/problem.hpp"
#include "hjlab/scheme.hpp"

namespace hjlab {

/// Time-indexed states of a forward solve. Each state holds all components
/// back to back (component c occupies [c*n, (c+1)*n)).
struct Trajectory {
    ProblemSpec problem;
    PeriodicGrid grid;
    double dt = 0.0;
    std::size_t stored_every = 1;
    std::vector<double> times;
    std::vector<std::vector<double>> states;

    int components() const noexcept { return problem.components(); }
    std::size_t size() const noexcept { return states.size(); }
    ScalarField field(std::size_t index, int component = 0) const;
    std::vector<ScalarField> fields(std::size_t index) const;
    const std::vector<double>& back() const { return states.back(); }
};

struct SolveReport {
    std::size_t steps = 0;
    double dt = 0.0;
    /// max over the run of the largest one-sided gradient norm.
    double max_gradient = 0.0;
    /// max over the run of |w_t| (residual form).
    double max_time_derivative = 0.0;
    /// min over the run of the explicit diagonal; negative means monotonicity was lost.
    double min_explicit_diagonal = 1.0;
    std::size_t linear_iterations = 0;
    double wall_time = 0.0;
};

struct ForwardOptions {
    /// Time step; the CFL-limited value is used when absent. The step is always
    /// shrunk so that an integer number of steps reaches T.
    std::optional<double> dt;
    std::size_t stored_every = 1;
};

/// Step size used for a horizon T: the largest T/M not exceeding `dt_max`.
double fit_step(double T, double dt_max);

/// IMEX solve of eps w_t + G(w) = -(L w) on [0, T].
std::pair<Trajectory, SolveReport> solve_cauchy(const ProblemSpec& problem, const ScalarField& u0, double T,
                                                const ForwardOptions& opts = {});
std::pair<Trajectory, SolveReport> solve_system_cauchy(const ProblemSpec& problem, const std::vector<ScalarField>& u0,
                                                       double T, const ForwardOptions& opts = {});

/// w_t in residual form: -R(w)/eps.
ScalarField time_derivative(const ProblemSpec& problem, const ScalarField& w);
std::vector<ScalarField> time_derivative(const ProblemSpec& problem, const std::vector<ScalarField>& w);

/// Re-apply one IMEX step with the trajectory's settings.
std::vector<double> replay_step(const Trajectory& traj, std::size_t index);

/// Flattens per-component fields into one state vector.
std::vector<double> stack(const std::vector<ScalarField>& fields);

// Initial data catalog.
ScalarField trig_initial(const PeriodicGrid& grid, const TrigPolynomial& t);
/// Periodic triangle wave of the given amplitude and number of teeth along x1
/// (Lipschitz, not C^1).
ScalarField sawtooth_initial(const PeriodicGrid& grid, double amplitude, int teeth = 1);

}  // namespace hjlab
