#include "hjlab/ergodic.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <sstream>

#include "hjlab/errors.hpp"
#include "hjlab/forward.hpp"
#include "hjlab/scheme.hpp"

namespace hjlab {

namespace {

double sup_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

std::vector<double> cell_residual(const Discretization& disc, const std::vector<double>& v, double c) {
    std::vector<double> r = disc.residual(v);
    for (double& x : r) x -= c;
    return r;
}

struct NewtonResult {
    std::vector<double> v;
    double c = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

/// Newton on F(v, c) = R(v) - c with v[0] pinned; bordered sparse LU per iteration.
NewtonResult newton_polish(const Discretization& disc, std::vector<double> v, double c, double tol, int max_it) {
    const auto N = Eigen::Index(disc.unknowns());
    std::vector<double> F = cell_residual(disc, v, c);
    double norm = sup_norm(F);
    NewtonResult best{v, c, norm, 0};
    const double target = std::max(1e-3 * tol, 1e-15);
    for (int it = 0; it < max_it && norm > target; ++it) {
        SparseMatrix J = disc.slopes_matrix(disc.tangent_slopes(v)) + disc.implicit_operator();
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(std::size_t(J.nonZeros()) + 2 * std::size_t(N) + 1);
        for (Eigen::Index col = 0; col < J.outerSize(); ++col)
            for (SparseMatrix::InnerIterator e(J, col); e; ++e) t.emplace_back(e.row(), e.col(), e.value());
        for (Eigen::Index i = 0; i < N; ++i) t.emplace_back(i, N, -1.0);
        t.emplace_back(N, 0, 1.0);
        SparseMatrix B(N + 1, N + 1);
        B.setFromTriplets(t.begin(), t.end());
        B.makeCompressed();
        Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(B);
        if (lu.info() != Eigen::Success) break;
        Eigen::VectorXd rhs(N + 1);
        for (Eigen::Index i = 0; i < N; ++i) rhs[i] = -F[std::size_t(i)];
        rhs[N] = -v[0];
        Eigen::VectorXd d = lu.solve(rhs);
        if (lu.info() != Eigen::Success || !d.allFinite()) break;

        bool accepted = false;
        for (double lambda = 1.0; lambda > 1e-6; lambda *= 0.5) {
            std::vector<double> vt(v);
            for (Eigen::Index i = 0; i < N; ++i) vt[std::size_t(i)] += lambda * d[i];
            double ct = c + lambda * d[N];
            std::vector<double> Ft = cell_residual(disc, vt, ct);
            double nt = sup_norm(Ft);
            if (nt < (1.0 - 1e-4 * lambda) * norm) {
                v = std::move(vt);
                c = ct;
                F = std::move(Ft);
                norm = nt;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        if (norm < best.residual) best = {v, c, norm, it + 1};
    }
    return best;
}

std::vector<ScalarField> split(const PeriodicGrid& grid, const std::vector<double>& v, int m) {
    std::vector<ScalarField> out;
    const std::size_t n = grid.size();
    for (int c = 0; c < m; ++c)
        out.emplace_back(grid, std::vector<double>(v.begin() + long(c * n), v.begin() + long((c + 1) * n)));
    return out;
}

}  // namespace

double ergodic_residual(const ProblemSpec& problem, const std::vector<ScalarField>& v, double c) {
    Discretization disc(problem, v.front().grid());
    return sup_norm(cell_residual(disc, stack(v), c));
}

ErgodicSolution solve_system_ergodic(const ProblemSpec& problem, const PeriodicGrid& grid, double tol,
                                     const ErgodicOptions& opts) {
    if (!(tol > 0.0)) throw ConfigurationError("ergodic tolerance must be positive");
    if (!(problem.eta > 0.0)) throw ConfigurationError("ergodic solve needs eta > 0");
    if (!(opts.window > 0.0) || !(opts.max_time > opts.window))
        throw ConfigurationError("ergodic window must be positive and below max_time");
    ProblemSpec p1 = problem;
    p1.epsilon = 1.0;
    p1.validate();
    const int m = p1.components();
    auto disc = std::make_shared<const Discretization>(p1, grid);
    const double dt = fit_step(opts.window, disc->stable_dt(1.0));
    const auto steps = std::size_t(std::llround(opts.window / dt));
    StepSolver solver(disc, dt);

    std::vector<double> u(disc->unknowns(), 0.0);
    if (opts.initial) {
        if (int(opts.initial->size()) != m) throw ConfigurationError("initial profile has the wrong component count");
        u = stack(*opts.initial);
    }

    ErgodicSolution sol;
    sol.eta = p1.eta;
    double t = 0.0;
    double osc = std::numeric_limits<double>::infinity();
    while (t + opts.window <= opts.max_time + 1e-9) {
        std::vector<double> start = u;
        for (std::size_t s = 0; s < steps; ++s) u = solver.advance(u);
        t += opts.window;
        double mean = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) mean += u[i] - start[i];
        mean /= double(u.size());
        double c = -mean / opts.window;
        osc = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) osc = std::max(osc, std::abs(u[i] - start[i] + c * opts.window));
        if (!std::isfinite(osc)) throw StabilityError(std::size_t(t / dt), "ergodic run diverged");

        bool try_newton = opts.newton && osc < opts.newton_switch;
        if (osc >= tol && !try_newton) continue;

        std::vector<double> v(u);
        double v0 = v[0];
        for (double& x : v) x -= v0;
        double res = sup_norm(cell_residual(*disc, v, c));
        int iters = 0;
        if (opts.newton) {
            NewtonResult nr = newton_polish(*disc, v, c, tol, opts.newton_max_iterations);
            if (nr.residual < res) {
                v = std::move(nr.v);
                c = nr.c;
                v[0] = 0.0;
                res = sup_norm(cell_residual(*disc, v, c));
                iters = nr.iterations;
            }
        }
        if (res <= tol || (osc < tol && res <= 10.0 * tol)) {
            sol.corrector = split(grid, v, m);
            sol.ergodic_constant = c;
            sol.residual = res;
            sol.oscillation = osc;
            sol.time = t;
            sol.newton_iterations = iters;
            return sol;
        }
        if (osc < tol) {
            std::ostringstream os;
            os << "ergodic verification failed: residual " << res << " exceeds 10*tol = " << 10 * tol;
            throw ConvergenceError(res, os.str());
        }
    }
    std::ostringstream os;
    os << "ergodic long-time run did not converge by t=" << t << "; last oscillation " << osc;
    throw ConvergenceError(osc, os.str());
}

ErgodicSolution solve_ergodic(const ProblemSpec& problem, const PeriodicGrid& grid, double tol,
                              const ErgodicOptions& opts) {
    if (problem.components() != 1) throw ConfigurationError("solve_ergodic expects a single equation");
    return solve_system_ergodic(problem, grid, tol, opts);
}

SweepTable viscosity_sweep(const ProblemSpec& family, const PeriodicGrid& grid, const std::vector<double>& epsilons,
                           double tol, std::optional<double> known_constant, const ErgodicOptions& opts) {
    if (epsilons.empty()) throw ConfigurationError("epsilon list is empty");
    SweepTable table;
    ErgodicOptions row_opts = opts;
    for (double eps : epsilons) {
        if (!(eps > 0.0)) throw ConfigurationError("epsilon values must be positive");
        auto t0 = std::chrono::steady_clock::now();
        ProblemSpec p = family.with_epsilon(eps);
        ErgodicSolution s = solve_system_ergodic(p, grid, tol, row_opts);
        // later rows start from this corrector
        if (!opts.initial) row_opts.initial = s.corrector;
        SweepRow row;
        row.epsilon = eps;
        row.eta = p.eta;
        row.hbar = s.ergodic_constant;
        for (const auto& v : s.corrector) row.grad_norm = std::max(row.grad_norm, gradient(v).max_norm());
        row.residual = s.residual;
        row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        table.rows.push_back(row);
        table.solutions.push_back(std::move(s));
    }
    const auto& r = table.rows;
    if (r.size() >= 2) {
        const auto& a = r[r.size() - 2];
        const auto& b = r[r.size() - 1];
        double q = (a.epsilon / b.epsilon) * (a.epsilon / b.epsilon);
        table.richardson = (q * b.hbar - a.hbar) / (q - 1.0);
    }
    table.reference = known_constant ? known_constant : table.richardson;
    if (table.reference && r.size() >= 3) {
        std::vector<double> x, y;
        for (const auto& row : r) {
            double d = std::abs(row.hbar - *table.reference);
            if (d > 0.0) {
                x.push_back(row.epsilon);
                y.push_back(d);
            }
        }
        if (x.size() >= 3) table.fit = fit_loglog(x, y);
    }
    double gmax = 0.0, gmin = std::numeric_limits<double>::infinity();
    for (const auto& row : r) {
        gmax = std::max(gmax, row.grad_norm);
        gmin = std::min(gmin, row.grad_norm);
    }
    table.grad_variation = gmax > 0.0 ? (gmax - gmin) / gmax : 0.0;
    return table;
}

}  // namespace hjlab
