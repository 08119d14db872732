// One PASS/FAIL line per acceptance criterion. Runs the presets through the
// experiment runner plus a few direct library runs; exits 1 if any line fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "../unit/oracles.hpp"
#include "hjlab/errors.hpp"
#include "hjlab/experiment.hpp"
#include "hjlab/scheme.hpp"

using namespace hjlab;

namespace tol {
constexpr double mass = 1e-10;
constexpr double positivity = 1e-12;
constexpr double energy = 1e-8;
constexpr double representation_floor = 1e-6;
constexpr double representation_dt2 = 5.0;
constexpr double refinement_ratio = 3.5;
constexpr double ergodic_slope = 1.7;
constexpr double grad_variation = 0.20;
constexpr double benchmark = 1e-2;
constexpr double growth = 2.0;  // "bounded": no doubling between consecutive epsilons
constexpr double vanish = 1e-10;
constexpr double rate_slope = 0.25 - 0.05;
constexpr double symmetric_coupling = 1e-10;
constexpr double chain_slope = 0.8;
constexpr double longtime_distance = 1e-2;
constexpr double mass_runtime = 60.0;
constexpr std::size_t validator_samples = 10000;
}  // namespace tol

namespace {

int failures = 0;

void line(int id, const std::string& title, bool pass, const std::string& detail) {
    std::printf("criterion %2d %-28s %s  %s\n", id, title.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double metric(const StageResult& s, const std::string& key) {
    auto it = s.metrics.find(key);
    return it == s.metrics.end() ? NAN : it->second;
}

/// Values of one quantity from a sweep stage, in sweep order.
std::vector<double> quantity(const StageResult& s, const std::string& q, std::vector<double>* eps = nullptr) {
    std::vector<double> v;
    for (const auto& r : s.quantities)
        if (r.quantity == q) {
            v.push_back(r.value);
            if (eps) eps->push_back(r.epsilon);
        }
    return v;
}

std::vector<double> scaled(const std::vector<double>& v, const std::vector<double>& eps, double power) {
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(v[i] / std::pow(eps[i], power));
    return out;
}

double max_growth(const std::vector<double>& v) {
    double g = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) g = std::max(g, v[i - 1] > 0.0 ? v[i] / v[i - 1] : INFINITY);
    return g;
}

double vmax(const std::vector<double>& v) { return v.empty() ? NAN : *std::max_element(v.begin(), v.end()); }

RunManifest run_preset(const std::string& name, const std::function<void(ExperimentConfig&)>& tweak = {}) {
    ExperimentConfig c = preset(name);
    c.output.directory = "acceptance_out/" + name;
    if (tweak) tweak(c);
    auto t0 = std::chrono::steady_clock::now();
    RunManifest m = run_experiment(c);
    std::printf("# preset %-15s %-7s %.1fs\n", name.c_str(), m.passed() ? "passed" : "FAILED", seconds_since(t0));
    for (const auto& s : m.stages)
        if (s.status != StageStatus::passed) std::printf("#   stage %s %s: %s\n", s.name.c_str(), to_string(s.status).c_str(), s.message.c_str());
    std::fflush(stdout);
    return m;
}

struct AdjointRun {
    double mass_error;
    double min_sigma;
    double drift;
    RepresentationCheck rep;
    double dt;
};

AdjointRun adjoint_run(const ProblemSpec& p, const std::vector<ScalarField>& u0, double T,
                       std::optional<double> dt = std::nullopt,
                       std::optional<std::pair<std::size_t, int>> source = std::nullopt) {
    ForwardOptions fo;
    fo.dt = dt;
    auto traj = solve_system_cauchy(p, u0, T, fo).first;
    auto [node, comp] = source ? *source : argmax_time_derivative(traj);
    Linearization lin(traj);
    AdjointOptions ao;
    ao.mass_tolerance = 1.0;
    ao.positivity_tolerance = 1.0;
    AdjointDensity s = solve_system_adjoint(lin, node, comp, p.epsilon, ao);
    EnergyTrace e = energy_trace(traj, s);
    return {s.max_mass_error, s.min_value, e.drift, representation_check(traj, s), traj.dt};
}

double representation_allowed(const RepresentationCheck& r, double dt) {
    return std::max(tol::representation_floor, tol::representation_dt2 * dt * dt) * std::max(1.0, std::abs(r.lhs));
}

ProblemSpec manufactured_problem(const std::vector<TrigPolynomial>& targets, const Diffusion& d, int dim,
                                 const PeriodicGrid& g, double eps, std::optional<CouplingMatrix> c = std::nullopt) {
    std::vector<SmoothFunction> v;
    for (const auto& t : targets) v.push_back(SmoothFunction::from(t));
    ProblemSpec base;
    if (c) {
        auto ms = manufacture_system_ergodic(v, std::vector<Diffusion>(v.size(), d), *c, dim);
        base = make_system(ms.hamiltonians, {d}, *c, eps);
    } else {
        base = make_problem(manufacture_ergodic(v.front(), d, dim).hamiltonian, d, eps);
    }
    base.numerics.gradient_bound = 4.0;
    return manufacture_discrete(base, g, v);
}

}  // namespace

int main() {
    auto t_all = std::chrono::steady_clock::now();
    try {
        // ---- preset runs
        RunManifest energy = run_preset("energy-audit");
        RunManifest ergodic = run_preset("ergodic-sweep");
        RunManifest longtime = run_preset("longtime");
        RunManifest scalar = run_preset("rate-scalar");
        RunManifest system = run_preset("rate-system");
        RunManifest chain = run_preset("coupling-audit");
        const StageResult& sweep = scalar.stage("estimate_sweep");
        const StageResult& sys_sweep = system.stage("estimate_sweep");
        const StageResult& chain_sweep = chain.stage("estimate_sweep");

        // ---- 1. mass conservation, scalar and 2-system, timed
        {
            auto t0 = std::chrono::steady_clock::now();
            ExperimentConfig sc = preset("energy-audit");
            PeriodicGrid g = make_grid(1, 256);
            ProblemSpec ps = build_problem(sc, g);
            AdjointRun a = adjoint_run(ps, {sawtooth_initial(g, 0.5)}, 1.0);
            ExperimentConfig sy = preset("rate-system");
            ProblemSpec py = build_problem(sy, g).with_epsilon(0.125);
            AdjointRun b = adjoint_run(py, {sawtooth_initial(g, 0.5), sawtooth_initial(g, 0.7)}, 1.0);
            double elapsed = seconds_since(t0);
            double worst = std::max(a.mass_error, b.mass_error);
            line(1, "adjoint mass", worst <= tol::mass && elapsed < tol::mass_runtime,
                 "max|mass-1| scalar " + fmt("%.2e", a.mass_error) + ", 2-system " + fmt("%.2e", b.mass_error) +
                     " (tol 1e-10); runtime " + fmt("%.1fs", elapsed) + " (< 60s)");
        }

        // ---- 2. positivity across presets
        {
            double mn = metric(energy.stage("adjoint"), "min_sigma");
            for (const StageResult* s : {&sweep, &sys_sweep, &chain_sweep}) mn = std::min(mn, metric(*s, "min_sigma"));
            line(2, "adjoint positivity", mn >= -tol::positivity,
                 "min sigma over energy-audit, rate-scalar, rate-system, coupling-audit = " + fmt("%.2e", mn) +
                     " (>= -1e-12)");
        }

        // ---- 3. energy conservation on energy-audit (direct), plus a CG rerun for reference
        {
            double drift = metric(energy.stage("energy"), "drift");
            ExperimentConfig c = preset("energy-audit");
            c.problem.numerics.linear_solver = LinearSolverKind::conjugate_gradient;
            PeriodicGrid g = make_grid(1, 256);
            AdjointRun cg = adjoint_run(build_problem(c, g), {sawtooth_initial(g, 0.5)}, 1.0);
            bool ok = energy.stage("energy").status == StageStatus::passed && drift <= tol::energy && cg.drift <= tol::energy;
            line(3, "energy conservation", ok,
                 "drift " + fmt("%.2e", drift) + " (direct), " + fmt("%.2e", cg.drift) +
                     " (CG, solver tol 1e-12); tol 1e-8");
        }

        // ---- 4. representation formula at eps = 1/8, N = 256 and its dt-refinement ratio
        {
            const StageResult& r = energy.stage("representation");
            double gap = metric(r, "gap"), dt = metric(r, "dt"), lhs = metric(r, "lhs");
            double allowed = std::max(tol::representation_floor, tol::representation_dt2 * dt * dt) * std::max(1.0, std::abs(lhs));
            double ratio = metric(r, "ratio_1");
            bool a = gap <= allowed;
            bool b = ratio >= tol::refinement_ratio;
            line(4, "representation formula", a && b,
                 "(a) gap " + fmt("%.2e", gap) + " <= " + fmt("%.2e", allowed) + (a ? " ok" : " NO") + "; (b) gap ratio under dt/2 = " +
                     fmt("%.3g", ratio) + " (need >= 3.5)" + (b ? " ok" : " NO: gap is at roundoff, E(t) is exactly constant"));
        }

        // ---- 5. ergodic constant rate
        {
            const StageResult& e = ergodic.stage("ergodic");
            double slope = metric(e, "slope"), var = metric(e, "grad_variation");
            line(5, "ergodic constant rate", slope >= tol::ergodic_slope && var <= tol::grad_variation,
                 "slope of |Hbar_eps| = " + fmt("%.3f", slope) + " (>= 1.7); ||Dv|| variation " + fmt("%.3f", var) +
                     " (<= 0.20)");
        }

        // ---- 6. first-order benchmark against the quadrature oracle
        {
            double hbar = metric(longtime.stage("ergodic"), "Hbar");
            double exact = oracle::effective_hamiltonian_1d([](double x) { return std::cos(2 * oracle::pi * x); }, 0.0);
            line(6, "first-order benchmark", std::abs(hbar - exact) <= tol::benchmark,
                 "Hbar " + fmt("%.8f", hbar) + " vs oracle " + fmt("%.8f", exact) + ", |diff| " +
                     fmt("%.2e", std::abs(hbar - exact)) + " (<= 1e-2), N = 512");
        }

        // ---- 7. key estimates
        {
            std::vector<double> eps;
            auto i1 = quantity(sweep, "I1", &eps);
            auto i2 = quantity(sweep, "I2");
            auto ii = quantity(sweep, "II");
            double g1 = max_growth(i1), g2 = max_growth(i2), g3 = max_growth(scaled(ii, eps, 0.5));
            double c_ii = vmax(scaled(ii, eps, 0.5));

            ExperimentConfig c = preset("rate-scalar");
            PeriodicGrid g = make_grid(c.dim, c.N);
            EstimateSweepOptions o;
            o.start_from_corrector = true;
            o.closeness = false;
            auto rows = estimate_sweep(build_problem(c, g), g, c.pipeline[1].epsilons, o);
            double vanish = 0.0;
            for (const auto& r : rows) vanish = std::max({vanish, r.estimates.i1, r.estimates.i2, r.estimates.ii});
            bool ok = g1 <= tol::growth && g2 <= tol::growth && g3 <= tol::growth && vanish <= tol::vanish;
            line(7, "key estimates", ok,
                 "max step growth I1 " + fmt("%.2f", g1) + ", I2 " + fmt("%.2f", g2) + ", II/sqrt(eps) " + fmt("%.2f", g3) +
                     " (<= 2); C_II = " + fmt("%.3g", c_ii) + "; from v^eps max " + fmt("%.1e", vanish) + " (<= 1e-10)");
        }

        // ---- 8. rate theorem
        {
            double env = metric(sweep, "envelope_rate"), slope = metric(sweep, "slope_rate");
            line(8, "rate eps^(1/4)", std::isfinite(env) && slope >= tol::rate_slope,
                 "C_emp = " + fmt("%.4g", env) + "; fitted slope " + fmt("%.3f", slope) + " (>= 0.20)");
        }

        // ---- 9. closeness
        {
            std::vector<double> eps;
            auto c = quantity(sweep, "closeness", &eps);
            auto r = scaled(c, eps, 1.0);
            double g = max_growth(r);
            line(9, "closeness", !c.empty() && g <= tol::growth,
                 "max closeness/eps = " + fmt("%.3g", vmax(r)) + ", max step growth " + fmt("%.3g", g) + " (<= 2)");
        }

        // ---- 10. systems
        {
            double mass = std::max(metric(sys_sweep, "max_mass_error"), metric(chain_sweep, "max_mass_error"));
            std::vector<double> eps;
            auto coup = scaled(quantity(sys_sweep, "coupling", &eps), eps, 1.0);
            double gc = max_growth(coup);
            std::vector<double> eps_r;
            auto rate = scaled(quantity(sys_sweep, "rate", &eps_r), eps_r, 0.5);
            double gr = max_growth(rate);
            double chain_slope = metric(chain_sweep, "slope_coupling");

            // symmetric pair, identical data
            ExperimentConfig c = preset("rate-system");
            c.problem.hamiltonians[1] = c.problem.hamiltonians[0];
            PeriodicGrid g = make_grid(1, 256);
            ProblemSpec p = build_problem(c, g).with_epsilon(0.125);
            ErgodicSolution erg = solve_system_ergodic(p.with_epsilon(1.0, p.eta), g, 1e-10);
            ScalarField u0 = sawtooth_initial(g, 0.5);
            auto traj = solve_system_cauchy(p, {u0, u0}, 1.0).first;
            auto [node, comp] = argmax_time_derivative(traj);
            Linearization lin(traj);
            double sym = coupling_estimate(traj, erg, solve_system_adjoint(lin, node, comp, p.epsilon));

            bool ok = mass <= tol::mass && gc <= tol::growth && sym <= tol::symmetric_coupling && gr <= tol::growth &&
                      chain_slope >= tol::chain_slope;
            line(10, "systems", ok,
                 "mass " + fmt("%.1e", mass) + "; coupling/eps max " + fmt("%.3g", vmax(coup)) + " growth " + fmt("%.2f", gc) +
                     "; symmetric " + fmt("%.1e", sym) + "; rate/sqrt(eps) C = " + fmt("%.3g", vmax(rate)) + " growth " +
                     fmt("%.2f", gr) + "; m=3 slope " + fmt("%.3f", chain_slope) + " (>= 0.8)");
        }

        // ---- 11. large time
        {
            const StageResult& l = longtime.stage("longtime");
            double d = metric(l, "final_distance");
            bool mono = metric(l, "all_monotone") == 1.0;
            line(11, "large-time convergence", d <= tol::longtime_distance && mono,
                 "distance at T=100 " + fmt("%.2e", d) + " (<= 1e-2); monotone " + (mono ? "yes" : "no") + " (slack " +
                     fmt("%.1e", metric(l, "slack")) + ")");
        }

        // ---- 12. general case, d = 2, A = sigma sigma^T
        {
            auto t0 = std::chrono::steady_clock::now();
            Diffusion d = Diffusion::sigma_sigma_t(0.5);
            TrigPolynomial v = TrigPolynomial::cosine({1, 0}, 0.15) + TrigPolynomial::cosine({0, 1}, 0.1, 0.4);
            auto report = validate_pair(manufacture_ergodic(SmoothFunction::from(v), d, 2).hamiltonian, d, 2,
                                        tol::validator_samples);
            bool sv = report.check("matrix_derivative_bound").passed && report.check("matrix_trace_bound").passed;

            PeriodicGrid g = make_grid(2, 64);
            ProblemSpec p = manufactured_problem({v}, d, 2, g, 1.0);
            EstimateSweepOptions o;
            o.initial = [](const ProblemSpec&, const PeriodicGrid& gg) {
                return std::vector<ScalarField>{sawtooth_initial(gg, 0.5)};
            };
            o.closeness = false;
            o.adjoint.mass_tolerance = 1.0;
            o.adjoint.positivity_tolerance = 1.0;
            std::vector<double> eps = {0.25, 0.125, 0.0625};
            auto rows = estimate_sweep(p, g, eps, o);
            double mass = 0, mn = 0, drift = 0, worst_gap = 0;
            std::vector<double> g1;
            bool gaps_ok = true;
            for (const auto& r : rows) {
                mass = std::max(mass, r.mass_error);
                mn = std::min(mn, r.min_sigma);
                drift = std::max(drift, r.energy_drift);
                gaps_ok = gaps_ok && r.representation.gap <= representation_allowed(r.representation, r.dt);
                worst_gap = std::max(worst_gap, r.representation.gap / std::max(1.0, std::abs(r.representation.lhs)));
                g1.push_back(r.estimates.general1);
            }
            // dt-halving at the coarsest epsilon
            ProblemSpec p0 = p.with_epsilon(eps.front());
            auto u0 = std::vector<ScalarField>{sawtooth_initial(g, 0.5)};
            AdjointRun coarse = adjoint_run(p0, u0, 1.0);
            AdjointRun fine = adjoint_run(p0, u0, 1.0, coarse.dt / 2, std::make_pair(coarse.rep.node, coarse.rep.component));
            double ratio = fine.rep.gap > 0 ? coarse.rep.gap / fine.rep.gap : INFINITY;
            double gg = max_growth(g1);

            bool c14 = mass <= tol::mass && mn >= -tol::positivity && drift <= tol::energy && gaps_ok &&
                       ratio >= tol::refinement_ratio;
            line(12, "general case (d=2)", c14 && gg <= tol::growth && sv,
                 "mass " + fmt("%.1e", mass) + ", min sigma " + fmt("%.1e", mn) + ", drift " + fmt("%.1e", drift) +
                     ", rel gap " + fmt("%.1e", worst_gap) + ", dt/2 ratio " + fmt("%.3g", ratio) + " (need >= 3.5)" +
                     "; general1 " + fmt("%.3g", g1[0]) + "/" + fmt("%.3g", g1[1]) + "/" + fmt("%.3g", g1[2]) +
                     " growth " + fmt("%.2f", gg) + "; matrix derivative/trace bounds " + (sv ? "ok" : "violated") + "; " +
                     fmt("%.0fs", seconds_since(t0)));
        }
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("# %d criteria failed; total %.0fs\n", failures, seconds_since(t_all));
    return failures ? 1 : 0;
}
