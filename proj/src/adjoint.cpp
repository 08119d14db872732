#include "hjlab/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hjlab/errors.hpp"

namespace hjlab {

LinearizedStep::LinearizedStep(std::size_t index, std::shared_ptr<const StepSolver> solver, Slopes slopes)
    : index_(index), solver_(std::move(solver)), slopes_(std::move(slopes)) {}

void LinearizedStep::apply(std::span<const double> f, std::span<double> out) const {
    const auto& disc = solver_->discretization();
    std::vector<double> x(f.size()), sx(f.size());
    solver_->solve(f, x);
    disc.apply_slopes(slopes_, x, sx);
    const double tau = solver_->tau();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - tau * sx[i];
}

void LinearizedStep::apply_transpose(std::span<const double> g, std::span<double> out) const {
    const auto& disc = solver_->discretization();
    std::vector<double> st(g.size()), rhs(g.size());
    disc.apply_slopes_transpose(slopes_, g, st);
    const double tau = solver_->tau();
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = g[i] - tau * st[i];
    solver_->solve_transpose(rhs, out);
}

Linearization::Linearization(const Trajectory& traj) : traj_(&traj) {
    if (traj.stored_every != 1) throw ConfigurationError("linearization needs every step stored (stored_every = 1)");
    if (traj.states.size() < 2) throw ConfigurationError("linearization needs at least one step");
    auto disc = std::make_shared<const Discretization>(traj.problem, traj.grid);
    solver_ = std::make_shared<const StepSolver>(disc, traj.dt / traj.problem.epsilon);
}

LinearizedStep Linearization::operator[](std::size_t n) const {
    if (n >= size()) throw ConfigurationError("linearized step index out of range");
    const auto& s = traj_->states;
    return LinearizedStep(n, solver_, solver_->discretization().secant_slopes(s[n], s[n + 1]));
}

LinearizedStep Linearization::tangent(std::size_t n, std::span<const double> w) const {
    return LinearizedStep(n, solver_, solver_->discretization().tangent_slopes(w));
}

std::vector<double> Linearization::presolve_map(std::span<const double> y) const {
    const auto& disc = solver_->discretization();
    std::vector<double> w(y.size()), g(y.size());
    solver_->solve(y, w);
    disc.hamiltonian(w, g);
    const double tau = solver_->tau();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= tau * g[i];
    return w;
}

Linearization linearize(const Trajectory& traj) { return Linearization(traj); }

ScalarField AdjointDensity::field(std::size_t index, int comp) const {
    const std::size_t n = grid.size();
    const auto& s = states.at(index);
    return ScalarField(grid, std::vector<double>(s.begin() + long(comp * n), s.begin() + long((comp + 1) * n)));
}

double AdjointDensity::mass(std::size_t index) const {
    double s = 0.0;
    for (double x : states.at(index)) s += x;
    return s * grid.cell_volume();
}

AdjointDensity solve_system_adjoint(const Linearization& steps, std::size_t x0, int k, double epsilon,
                                    const AdjointOptions& opts) {
    const Trajectory& traj = steps.trajectory();
    const PeriodicGrid& grid = traj.grid;
    const int m = traj.components();
    if (x0 >= grid.size()) throw ConfigurationError("adjoint source node out of range");
    if (k < 0 || k >= m) throw ConfigurationError("adjoint component out of range");
    if (epsilon != traj.problem.epsilon)
        throw ConfigurationError("adjoint epsilon does not match the trajectory's problem");

    AdjointDensity out{grid, m, x0, k, epsilon, traj.times, {}, 0.0, 0.0};
    const std::size_t N = steps.size();
    out.states.resize(N + 1);
    std::vector<double> sigma(std::size_t(m) * grid.size(), 0.0);
    sigma[std::size_t(k) * grid.size() + x0] = 1.0 / grid.cell_volume();
    out.states[N] = sigma;
    out.min_value = 0.0;

    auto audit = [&](std::size_t n) {
        double mass = out.mass(n);
        double err = std::abs(mass - 1.0);
        auto [lo, hi] = std::minmax_element(out.states[n].begin(), out.states[n].end());
        double mn = *lo;
        out.max_mass_error = std::max(out.max_mass_error, err);
        out.min_value = std::min(out.min_value, mn);
        if (err > opts.mass_tolerance || mn < -opts.positivity_tolerance * std::max(1.0, *hi)) {
            std::ostringstream os;
            os << "adjoint density broke conservation at step " << n << ": mass " << mass << ", min " << mn;
            throw ConservationError(os.str());
        }
    };
    audit(N);
    for (std::size_t n = N; n-- > 0;) {
        std::vector<double> next(sigma.size());
        steps[n].apply_transpose(sigma, next);
        sigma = std::move(next);
        out.states[n] = sigma;
        audit(n);
    }
    return out;
}

AdjointDensity solve_adjoint(const Linearization& steps, std::size_t x0, double epsilon, const AdjointOptions& opts) {
    if (steps.trajectory().components() != 1)
        throw ConfigurationError("solve_adjoint expects a single equation; use solve_system_adjoint");
    return solve_system_adjoint(steps, x0, 0, epsilon, opts);
}

std::pair<std::size_t, int> argmax_time_derivative(const Trajectory& traj) {
    Discretization disc(traj.problem, traj.grid);
    std::vector<double> r = disc.residual(traj.back());
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.size(); ++i)
        if (std::abs(r[i]) > std::abs(r[best])) best = i;
    return {best % traj.grid.size(), int(best / traj.grid.size())};
}

}  // namespace hjlab
