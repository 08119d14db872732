#pragma once

#include <memory>
#include <span>
#include <vector>

#include "hjlab/forward.hpp"
#include "hjlab/scheme.hpp"

namespace hjlab {

/// Linearization of one IMEX step n -> n+1.
///
/// With M = I + tau L, the step is w' = M^{-1}(w - tau G(w)). Writing
/// y = w - tau G(w) for the pre-solve state, the map y_n -> y_{n+1} has the
/// Jacobian B = (I - tau S) M^{-1}, where S holds the divided differences of G
/// between w_n and w_{n+1}. The residual R(w) = G(w) + L w obeys
/// R(w_{n+1}) = B R(w_n) exactly, so <sigma, R> is invariant under sigma_n = B^T sigma_{n+1}.
class LinearizedStep {
public:
    LinearizedStep(std::size_t index, std::shared_ptr<const StepSolver> solver, Slopes slopes);

    std::size_t index() const noexcept { return index_; }
    std::size_t size() const noexcept { return solver_->discretization().unknowns(); }
    const Slopes& slopes() const noexcept { return slopes_; }

    /// out = B f.
    void apply(std::span<const double> f, std::span<double> out) const;
    /// out = B^T g.
    void apply_transpose(std::span<const double> g, std::span<double> out) const;

private:
    std::size_t index_;
    std::shared_ptr<const StepSolver> solver_;
    Slopes slopes_;
};

/// The sequence of LinearizedStep objects of a trajectory, produced on demand.
/// Holds a reference to the trajectory, which must outlive it.
class Linearization {
public:
    Linearization(const Trajectory& traj);

    std::size_t size() const noexcept { return traj_->states.size() - 1; }
    LinearizedStep operator[](std::size_t n) const;
    /// Same step with tangent slopes at an arbitrary state w (for derivative checks).
    LinearizedStep tangent(std::size_t n, std::span<const double> w) const;
    /// Pre-solve one-step map y -> (I - tau G)(M^{-1} y).
    std::vector<double> presolve_map(std::span<const double> y) const;

    const Trajectory& trajectory() const noexcept { return *traj_; }
    const StepSolver& solver() const noexcept { return *solver_; }

private:
    const Trajectory* traj_;
    std::shared_ptr<const StepSolver> solver_;
};

Linearization linearize(const Trajectory& traj);

/// sigma at every stored time (index n matches trajectory time t_n).
struct AdjointDensity {
    PeriodicGrid grid;
    int components = 1;
    std::size_t source = 0;
    int component = 0;
    double epsilon = 1.0;
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    double max_mass_error = 0.0;
    double min_value = 0.0;

    ScalarField field(std::size_t index, int comp = 0) const;
    /// Total mass over all components.
    double mass(std::size_t index) const;
};

struct AdjointOptions {
    double mass_tolerance = 1e-8;
    /// Relative to max(1, max sigma_n).
    double positivity_tolerance = 1e-8;
};

/// Backward march sigma_n = B_n^T sigma_{n+1} from the grid Dirac at x0.
AdjointDensity solve_adjoint(const Linearization& steps, std::size_t x0, double epsilon,
                             const AdjointOptions& opts = {});
/// Same with the Dirac placed in component k (0-based).
AdjointDensity solve_system_adjoint(const Linearization& steps, std::size_t x0, int k, double epsilon,
                                    const AdjointOptions& opts = {});

/// Node (and component) of the largest |w_t| at the final time.
std::pair<std::size_t, int> argmax_time_derivative(const Trajectory& traj);

}  // namespace hjlab
