#include "hjlab/forward.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "hjlab/errors.hpp"

namespace hjlab {

namespace {

double sup_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

ScalarField Trajectory::field(std::size_t index, int component) const {
    const std::size_t n = grid.size();
    const auto& s = states.at(index);
    return ScalarField(grid, std::vector<double>(s.begin() + long(component * n), s.begin() + long((component + 1) * n)));
}

std::vector<ScalarField> Trajectory::fields(std::size_t index) const {
    std::vector<ScalarField> out;
    for (int c = 0; c < components(); ++c) out.push_back(field(index, c));
    return out;
}

std::vector<double> stack(const std::vector<ScalarField>& fields) {
    std::vector<double> out;
    for (const auto& f : fields) {
        if (!(f.grid() == fields.front().grid())) throw ConfigurationError("component fields on different grids");
        out.insert(out.end(), f.values().begin(), f.values().end());
    }
    return out;
}

double fit_step(double T, double dt_max) {
    if (!(T > 0.0) || !(dt_max > 0.0)) throw ConfigurationError("horizon and step must be positive");
    double steps = std::ceil(T / dt_max - 1e-9);
    return T / std::max(steps, 1.0);
}

std::pair<Trajectory, SolveReport> solve_system_cauchy(const ProblemSpec& problem, const std::vector<ScalarField>& u0,
                                                       double T, const ForwardOptions& opts) {
    auto t_start = std::chrono::steady_clock::now();
    problem.validate();
    if (int(u0.size()) != problem.components())
        throw ConfigurationError("expected " + std::to_string(problem.components()) + " initial fields, got " +
                                 std::to_string(u0.size()));
    if (opts.stored_every == 0) throw ConfigurationError("stored_every must be >= 1");
    const PeriodicGrid& grid = u0.front().grid();
    auto disc = std::make_shared<const Discretization>(problem, grid);

    double dt_max = disc->stable_dt(problem.epsilon);
    if (opts.dt) {
        if (*opts.dt > dt_max * (1.0 + 1e-12))
            throw ConfigurationError("dt " + std::to_string(*opts.dt) + " exceeds the stability limit " +
                                     std::to_string(dt_max));
        dt_max = *opts.dt;
    }
    const double dt = fit_step(T, dt_max);
    const auto steps = std::size_t(std::llround(T / dt));
    const double tau = dt / problem.epsilon;
    StepSolver solver(disc, tau);

    Trajectory traj{problem, grid, dt, opts.stored_every, {}, {}};
    SolveReport rep;
    rep.dt = dt;
    std::vector<double> w = stack(u0);
    traj.times.push_back(0.0);
    traj.states.push_back(w);
    rep.max_gradient = disc->max_gradient(w);

    std::vector<double> r;
    for (std::size_t n = 0; n < steps; ++n) {
        std::vector<double> next = solver.advance(w, &r);
        rep.max_time_derivative = std::max(rep.max_time_derivative, sup_norm(r) / problem.epsilon);
        rep.min_explicit_diagonal =
            std::min(rep.min_explicit_diagonal, disc->explicit_diagonal_min(disc->tangent_slopes(w), tau));
        double before = sup_norm(w);
        if (!all_finite(next) || sup_norm(next) > 2.0 * std::max(before, 1.0))
            throw StabilityError(n + 1, "field norm more than doubled at step " + std::to_string(n + 1) +
                                            " (dt=" + std::to_string(dt) + ")");
        w = std::move(next);
        rep.max_gradient = std::max(rep.max_gradient, disc->max_gradient(w));
        if ((n + 1) % opts.stored_every == 0 || n + 1 == steps) {
            traj.times.push_back(double(n + 1) * dt);
            traj.states.push_back(w);
        }
    }
    rep.steps = steps;
    rep.linear_iterations = solver.iterations();
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(traj), rep};
}

std::pair<Trajectory, SolveReport> solve_cauchy(const ProblemSpec& problem, const ScalarField& u0, double T,
                                                const ForwardOptions& opts) {
    if (problem.components() != 1) throw ConfigurationError("solve_cauchy expects a single equation");
    return solve_system_cauchy(problem, {u0}, T, opts);
}

std::vector<ScalarField> time_derivative(const ProblemSpec& problem, const std::vector<ScalarField>& w) {
    if (int(w.size()) != problem.components()) throw ConfigurationError("component count mismatch");
    const PeriodicGrid& grid = w.front().grid();
    Discretization disc(problem, grid);
    std::vector<double> r = disc.residual(stack(w));
    std::vector<ScalarField> out;
    const std::size_t n = grid.size();
    for (int c = 0; c < problem.components(); ++c) {
        std::vector<double> v(r.begin() + long(c * n), r.begin() + long((c + 1) * n));
        for (double& x : v) x = -x / problem.epsilon;
        out.emplace_back(grid, std::move(v));
    }
    return out;
}

ScalarField time_derivative(const ProblemSpec& problem, const ScalarField& w) {
    return time_derivative(problem, std::vector<ScalarField>{w}).front();
}

std::vector<double> replay_step(const Trajectory& traj, std::size_t index) {
    if (traj.stored_every != 1) throw ConfigurationError("replay needs every step stored");
    auto disc = std::make_shared<const Discretization>(traj.problem, traj.grid);
    StepSolver solver(disc, traj.dt / traj.problem.epsilon);
    return solver.advance(traj.states.at(index));
}

ScalarField trig_initial(const PeriodicGrid& grid, const TrigPolynomial& t) {
    return ScalarField::sample(grid, [&](const Point& x) { return t.value(x); });
}

ScalarField sawtooth_initial(const PeriodicGrid& grid, double amplitude, int teeth) {
    if (teeth < 1) throw ConfigurationError("sawtooth needs at least one tooth");
    return ScalarField::sample(grid, [&](const Point& x) {
        double s = x[0] * teeth;
        s -= std::floor(s);
        return amplitude * (1.0 - 4.0 * std::abs(s - 0.5));
    });
}

}  // namespace hjlab
