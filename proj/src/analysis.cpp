#include "hjlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hjlab/errors.hpp"
#include "hjlab/scheme.hpp"

namespace hjlab {

namespace {

void require_matching(const Trajectory& traj, const AdjointDensity& sigma) {
    if (!(traj.grid == sigma.grid)) throw ConfigurationError("trajectory and adjoint live on different grids");
    if (traj.states.size() != sigma.states.size() || traj.times != sigma.times)
        throw ConfigurationError("trajectory and adjoint have mismatched time grids");
    if (traj.components() != sigma.components) throw ConfigurationError("component count mismatch");
}

double sup_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

std::vector<double> trapezoid_weights(const std::vector<double>& times) {
    std::vector<double> w(times.size(), 0.0);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        double d = 0.5 * (times[i + 1] - times[i]);
        w[i] += d;
        w[i + 1] += d;
    }
    return w;
}

EnergyTrace energy_trace(const Trajectory& traj, const AdjointDensity& sigma) {
    require_matching(traj, sigma);
    Discretization disc(traj.problem, traj.grid);
    EnergyTrace out;
    out.times = traj.times;
    const double vol = traj.grid.cell_volume();
    for (std::size_t n = 0; n < traj.states.size(); ++n) {
        std::vector<double> r = disc.residual(traj.states[n]);
        double e = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) e += r[i] * sigma.states[n][i];
        out.energy.push_back(e * vol);
    }
    for (double e : out.energy) out.drift = std::max(out.drift, std::abs(e - out.energy.front()));
    return out;
}

RepresentationCheck representation_check(const Trajectory& traj, const AdjointDensity& sigma) {
    EnergyTrace et = energy_trace(traj, sigma);
    Discretization disc(traj.problem, traj.grid);
    std::vector<double> r = disc.residual(traj.back());
    RepresentationCheck rc;
    rc.node = sigma.source;
    rc.component = sigma.component;
    rc.lhs = -r[std::size_t(sigma.component) * traj.grid.size() + sigma.source];
    auto w = trapezoid_weights(et.times);
    double integral = 0.0;
    for (std::size_t n = 0; n < w.size(); ++n) integral += w[n] * et.energy[n];
    double T = et.times.back() - et.times.front();
    rc.rhs = -integral / T;
    rc.gap = std::abs(rc.lhs - rc.rhs);
    return rc;
}

RepresentationCheck representation_check(const Trajectory& traj, std::size_t x0, int component) {
    Linearization lin(traj);
    AdjointDensity sigma = solve_system_adjoint(lin, x0, component, traj.problem.epsilon);
    return representation_check(traj, sigma);
}

EstimateReport key_estimates(const Trajectory& traj, const ErgodicSolution& ergodic, const AdjointDensity& sigma) {
    require_matching(traj, sigma);
    const ProblemSpec& p = traj.problem;
    if (std::abs(ergodic.eta - p.eta) > 1e-14 * std::max(1.0, p.eta))
        throw ConfigurationError("ergodic solution was computed at a different eta");
    if (sigma.epsilon != p.epsilon) throw ConfigurationError("adjoint epsilon does not match the trajectory");
    if (int(ergodic.corrector.size()) != p.components() || !(ergodic.grid() == traj.grid))
        throw ConfigurationError("ergodic solution does not match the trajectory");

    const PeriodicGrid& g = traj.grid;
    const int dim = g.dim();
    const std::size_t n = g.size();
    const double eps = p.epsilon, eta = p.eta, vol = g.cell_volume();
    const auto tw = trapezoid_weights(traj.times);

    // diffusion samples per component
    std::vector<std::vector<Matrix2>> A(std::size_t(p.components()));
    std::vector<std::vector<double>> a(std::size_t(p.components()));
    for (int c = 0; c < p.components(); ++c)
        for (std::size_t k = 0; k < n; ++k) {
            A[std::size_t(c)].push_back(p.diffusion(c).matrix(g.node(k), dim));
            a[std::size_t(c)].push_back(p.diffusion(c).a(g.node(k)));
        }

    // differences are taken through linearity: D(w - v) = Dw - Dv
    std::vector<VectorField> Dv;
    std::vector<TensorField> D2v;
    for (int c = 0; c < p.components(); ++c) {
        Dv.push_back(gradient(ergodic.v(c)));
        D2v.push_back(hessian(ergodic.v(c)));
    }

    EstimateReport rep;
    rep.epsilon = eps;
    rep.eta = eta;
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        for (int c = 0; c < p.components(); ++c) {
            ScalarField w = traj.field(t, c);
            const double* s = sigma.states[t].data() + std::size_t(c) * n;
            VectorField Dw = gradient(w);
            TensorField D2w = hessian(w);
            const auto& Dvc = Dv[std::size_t(c)];
            const auto& D2vc = D2v[std::size_t(c)];
            double i1 = 0, i2 = 0, ii = 0, es = 0, g1 = 0, g2 = 0;
            for (std::size_t k = 0; k < n; ++k) {
                double sk = s[k];
                if (sk == 0.0) continue;
                double de2 = 0, he2 = 0, hw2 = 0, q1 = 0, q2 = 0;
                double he[2][2], hw[2][2];
                for (int i = 0; i < dim; ++i) {
                    double de = Dw.at(i, k) - Dvc.at(i, k);
                    de2 += de * de;
                    for (int j = 0; j < dim; ++j) {
                        hw[i][j] = D2w.at(k, i, j);
                        he[i][j] = hw[i][j] - D2vc.at(k, i, j);
                        he2 += he[i][j] * he[i][j];
                        hw2 += hw[i][j] * hw[i][j];
                    }
                }
                const Matrix2& Ak = A[std::size_t(c)][k];
                double trA = 0;
                for (int i = 0; i < dim; ++i) trA += Ak[std::size_t(i * 3)];
                for (int i = 0; i < dim; ++i)
                    for (int j = 0; j < dim; ++j)
                        for (int l = 0; l < dim; ++l) {
                            q1 += Ak[std::size_t(i * 2 + j)] * hw[i][l] * hw[j][l];
                            q2 += Ak[std::size_t(i * 2 + j)] * he[i][l] * he[j][l];
                        }
                double ak = a[std::size_t(c)][k];
                i1 += de2 * sk;
                i2 += he2 * sk;
                ii += ak * ak * he2 * sk;
                es += (ak + eta) * hw2 * sk;
                g1 += (q1 + eta * hw2) * sk;
                g2 += trA * q2 * sk;
            }
            double wt = tw[t] * vol;
            rep.i1 += wt * i1 / eps;
            rep.i2 += wt * std::pow(eps, 7) * i2;
            rep.ii += wt * ii;
            rep.esti1 += wt * es;
            rep.general1 += wt * g1;
            rep.general2 += wt * g2;
        }
    }
    if (p.coupling) rep.coupling = coupling_estimate(traj, ergodic, sigma);
    return rep;
}

double coupling_estimate(const Trajectory& traj, const ErgodicSolution& ergodic, const AdjointDensity& sigma) {
    require_matching(traj, sigma);
    const ProblemSpec& p = traj.problem;
    if (!p.coupling) throw ConfigurationError("coupling estimate needs a coupled system");
    if (std::abs(ergodic.eta - p.eta) > 1e-14 * std::max(1.0, p.eta))
        throw ConfigurationError("ergodic solution was computed at a different eta");
    const auto& C = *p.coupling;
    const int m = C.size();
    const std::size_t n = traj.grid.size();
    const auto tw = trapezoid_weights(traj.times);
    double total = 0.0;
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        const auto& w = traj.states[t];
        const auto& s = sigma.states[t];
        double acc = 0.0;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                if (i == j || C(i, j) == 0.0) continue;
                double cij = std::abs(C(i, j));
                const auto& vi = ergodic.v(i).values();
                const auto& vj = ergodic.v(j).values();
                for (std::size_t k = 0; k < n; ++k) {
                    double d = (w[j * n + k] - vj[k]) - (w[i * n + k] - vi[k]);
                    acc += cij * d * d * s[i * n + k];
                }
            }
        total += tw[t] * acc * traj.grid.cell_volume();
    }
    return total;
}

double rate_value(const Trajectory& traj) {
    Discretization disc(traj.problem, traj.grid);
    return sup_norm(disc.residual(traj.back()));
}

RateFit rate_sweep(const ProblemSpec& family, const PeriodicGrid& grid, const std::vector<double>& epsilons,
                   const InitialData& u0, double exponent) {
    RateFit out;
    out.exponent = exponent;
    for (double eps : epsilons) {
        ProblemSpec p = family.with_epsilon(eps);
        try {
            auto [traj, rep] = solve_system_cauchy(p, u0(p, grid), 1.0);
            out.epsilons.push_back(eps);
            out.values.push_back(rate_value(traj));
        } catch (const Error&) {
            continue;
        }
    }
    if (out.values.size() < 3)
        throw ConfigurationError("rate fit needs at least 3 successful rows, got " + std::to_string(out.values.size()));
    out.envelope = envelope_constant(out.epsilons, out.values, exponent);
    if (std::all_of(out.values.begin(), out.values.end(), [](double v) { return v > 0.0; }))
        out.fit = fit_loglog(out.epsilons, out.values);
    return out;
}

LargeTimeSeries large_time_convergence(const ProblemSpec& problem, const std::vector<ScalarField>& u0, double T,
                                       const ErgodicSolution& reference) {
    ProblemSpec p = problem;
    p.epsilon = 1.0;
    if (std::abs(reference.eta - p.eta) > 1e-14 * std::max(1.0, p.eta))
        throw ConfigurationError("reference corrector was computed at a different eta");
    if (!(T >= 1.0)) throw ConfigurationError("large-time horizon must be at least 1");
    const PeriodicGrid& grid = u0.front().grid();
    Discretization disc(p, grid);
    // integer number of steps per unit time so that integer times are stored
    const double per_unit = std::ceil(1.0 / disc.stable_dt(1.0) - 1e-9);
    ForwardOptions fo;
    fo.dt = 1.0 / per_unit;
    fo.stored_every = std::size_t(per_unit);
    auto [traj, rep] = solve_system_cauchy(p, u0, std::round(T), fo);

    const double c = reference.ergodic_constant;
    std::vector<double> v = stack(reference.corrector);
    LargeTimeSeries out;
    double umax = 1.0;
    for (const auto& u : traj.states) umax = std::max(umax, sup_norm(u));
    // residual of v - Hbar t over one unit of time, plus rounding of per_unit
    // increments accumulated at magnitude umax
    out.slack = 10.0 * reference.residual + 4.0 * per_unit * std::numeric_limits<double>::epsilon() * umax;
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
        double t = traj.times[s];
        const auto& u = traj.states[s];
        double lo = std::numeric_limits<double>::infinity(), hi = -lo, raw = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            double e = u[i] + c * t - v[i];
            lo = std::min(lo, e);
            hi = std::max(hi, e);
            raw = std::max(raw, std::abs(e));
        }
        out.times.push_back(t);
        out.distance.push_back(0.5 * (hi - lo));
        out.raw.push_back(raw);
        bool mono = s == 0 || raw <= out.raw[s - 1] + out.slack;
        out.monotone.push_back(mono);
        out.all_monotone = out.all_monotone && mono;
    }
    return out;
}

double closeness_check(const ProblemSpec& problem, const std::vector<ScalarField>& u0,
                       std::optional<double> eta_regularized) {
    ProblemSpec regular = problem.with_eta(eta_regularized ? *eta_regularized : std::pow(problem.epsilon, 4));
    ProblemSpec plain = problem.with_eta(0.0);
    auto [a, ra] = solve_system_cauchy(plain, u0, 1.0);
    ForwardOptions fo;
    fo.dt = a.dt;
    auto [b, rb] = solve_system_cauchy(regular, u0, 1.0, fo);
    double d = 0.0;
    for (std::size_t i = 0; i < a.back().size(); ++i) d = std::max(d, std::abs(a.back()[i] - b.back()[i]));
    return d;
}

std::vector<EstimateRow> estimate_sweep(const ProblemSpec& family, const PeriodicGrid& grid,
                                        const std::vector<double>& epsilons, const EstimateSweepOptions& opts) {
    if (!opts.initial && !opts.start_from_corrector) throw ConfigurationError("estimate sweep needs initial data");
    std::vector<EstimateRow> rows;
    ErgodicOptions eopts = opts.ergodic;
    for (double eps : epsilons) {
        ProblemSpec p = family.with_epsilon(eps);
        ErgodicSolution erg = solve_system_ergodic(p, grid, opts.ergodic_tol, eopts);
        if (!opts.ergodic.initial) eopts.initial = erg.corrector;
        std::vector<ScalarField> u0 = opts.start_from_corrector ? erg.corrector : opts.initial(p, grid);
        auto [traj, rep] = solve_system_cauchy(p, u0, 1.0);

        auto [node, comp] = argmax_time_derivative(traj);
        if (opts.x0) node = *opts.x0;
        if (opts.component) comp = *opts.component;
        Linearization lin(traj);
        AdjointDensity sigma = solve_system_adjoint(lin, node, comp, eps, opts.adjoint);

        EstimateRow row;
        row.epsilon = eps;
        row.eta = p.eta;
        row.dt = traj.dt;
        row.steps = rep.steps;
        row.hbar = erg.ergodic_constant;
        row.max_gradient = rep.max_gradient;
        row.min_explicit_diagonal = rep.min_explicit_diagonal;
        row.estimates = key_estimates(traj, erg, sigma);
        row.representation = representation_check(traj, sigma);
        row.energy_drift = energy_trace(traj, sigma).drift;
        row.mass_error = sigma.max_mass_error;
        row.min_sigma = sigma.min_value;
        row.rate_value = rate_value(traj);
        if (opts.closeness) {
            ForwardOptions fo;
            fo.dt = traj.dt;
            auto [plain, prep] = solve_system_cauchy(p.with_eta(0.0), u0, 1.0, fo);
            double d = 0.0;
            for (std::size_t i = 0; i < plain.back().size(); ++i)
                d = std::max(d, std::abs(plain.back()[i] - traj.back()[i]));
            row.closeness = d;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace hjlab
