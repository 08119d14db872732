#include <doctest.h>

#include <cmath>
#include <random>

#include "hjlab/adjoint.hpp"
#include "hjlab/errors.hpp"
#include "oracles.hpp"

using namespace hjlab;

namespace {

ProblemSpec scalar_problem(double eps) {
    std::array<TrigPolynomial, 2> drift{TrigPolynomial::cosine({1, 0}, 0.3), {}};
    ProblemSpec p = make_problem(Hamiltonian::quadratic(TrigPolynomial::cosine({1, 0}, 0.5), drift), Diffusion::sin2(0.5), eps);
    p.numerics.gradient_bound = 4.0;
    return p;
}

ProblemSpec system_problem(double eps) {
    Hamiltonian a = Hamiltonian::quadratic(TrigPolynomial::cosine({1, 0}, 0.5));
    Hamiltonian b = Hamiltonian::quadratic(TrigPolynomial::cosine({1, 0}, 0.3, 0.7));
    ProblemSpec p = make_system({a, b}, {Diffusion::sin2(0.5)}, CouplingMatrix::two_component(1.0), eps);
    p.numerics.gradient_bound = 4.0;
    return p;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> z;
    std::vector<double> v(n);
    for (double& x : v) x = z(rng);
    return v;
}

}  // namespace

TEST_CASE("secant slopes reproduce differences of G exactly") {
    PeriodicGrid g(2, 16);
    ProblemSpec p = make_problem(Hamiltonian::quadratic(TrigPolynomial::cosine({1, 1}, 0.4)), Diffusion::sigma_sigma_t(0.5), 0.5);
    p.numerics.gradient_bound = 4.0;
    Discretization d(p, g);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        auto wa = random_vector(rng, d.unknowns());
        auto wb = random_vector(rng, d.unknowns());
        std::vector<double> ga(d.unknowns()), gb(d.unknowns()), diff(d.unknowns()), sd(d.unknowns());
        d.hamiltonian(wa, ga);
        d.hamiltonian(wb, gb);
        for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = wb[k] - wa[k];
        d.apply_slopes(d.secant_slopes(wa, wb), diff, sd);
        for (std::size_t k = 0; k < sd.size(); ++k) CHECK(sd[k] == doctest::Approx(gb[k] - ga[k]).scale(1.0).epsilon(1e-10));
    }
}

TEST_CASE("transpose pairing holds for 100 random pairs") {
    PeriodicGrid g(1, 64);
    auto [traj, rep] = solve_system_cauchy(system_problem(0.25), {sawtooth_initial(g, 0.5), sawtooth_initial(g, 0.7)}, 0.1);
    Linearization lin(traj);
    std::mt19937_64 rng(11);
    const std::size_t n = lin[0].size();
    for (int pair = 0; pair < 100; ++pair) {
        LinearizedStep step = lin[std::size_t(pair) % lin.size()];
        auto f = random_vector(rng, n);
        auto h = random_vector(rng, n);
        std::vector<double> bf(n), bth(n);
        step.apply(f, bf);
        step.apply_transpose(h, bth);
        double lhs = dot(h, bf), rhs = dot(bth, f);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("tangent step matches finite differences of the one-step map") {
    PeriodicGrid g(1, 64);
    auto [traj, rep] = solve_cauchy(scalar_problem(0.5), trig_initial(g, TrigPolynomial::cosine({1, 0}, 0.3)), 0.05);
    Linearization lin(traj);
    const std::size_t n = lin[0].size();
    // y is the pre-solve state whose M^{-1} image is w_3
    std::vector<double> w = traj.states[3], y(n);
    {
        const double tau = lin.solver().tau();
        const SparseMatrix& L = lin.solver().discretization().implicit_operator();
        Eigen::Map<const Eigen::VectorXd> wv(w.data(), Eigen::Index(n));
        Eigen::VectorXd yv = wv + tau * (L * wv);
        for (std::size_t k = 0; k < n; ++k) y[k] = yv[Eigen::Index(k)];
    }
    auto f = trig_initial(g, TrigPolynomial::cosine({2, 0}, 1.0, 0.4)).values();
    std::vector<double> bf(n);
    lin.tangent(3, w).apply(f, bf);
    double bn = 0;
    for (double x : bf) bn = std::max(bn, std::abs(x));
    std::vector<double> errs;
    for (double h : {1e-4, 1e-5}) {
        std::vector<double> yp(y), ym(y);
        for (std::size_t k = 0; k < n; ++k) {
            yp[k] += h * f[k];
            ym[k] -= h * f[k];
        }
        auto Fp = lin.presolve_map(yp);
        auto Fm = lin.presolve_map(ym);
        double err = 0;
        for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs((Fp[k] - Fm[k]) / (2 * h) - bf[k]));
        errs.push_back(err / bn);
    }
    CHECK(errs[0] < 1e-6);
    CHECK(errs[1] < 1e-6);
}

TEST_CASE("the linearized step maps residuals exactly") {
    PeriodicGrid g(1, 64);
    auto [traj, rep] = solve_cauchy(scalar_problem(0.25), sawtooth_initial(g, 0.5), 0.1);
    Linearization lin(traj);
    const Discretization& d = lin.solver().discretization();
    for (std::size_t n : {std::size_t(0), lin.size() / 2, lin.size() - 1}) {
        auto r0 = d.residual(traj.states[n]);
        auto r1 = d.residual(traj.states[n + 1]);
        std::vector<double> br(r0.size());
        lin[n].apply(r0, br);
        for (std::size_t k = 0; k < br.size(); ++k) CHECK(br[k] == doctest::Approx(r1[k]).scale(1.0).epsilon(1e-10));
    }
}

TEST_CASE("adjoint density keeps unit mass and stays nonnegative") {
    PeriodicGrid g(1, 128);
    auto [traj, rep] = solve_system_cauchy(system_problem(0.125), {sawtooth_initial(g, 0.5), sawtooth_initial(g, 0.7)}, 1.0);
    Linearization lin(traj);
    AdjointOptions o;
    o.mass_tolerance = 1e-10;
    o.positivity_tolerance = 1e-12;
    AdjointDensity s = solve_system_adjoint(lin, 40, 1, 0.125, o);
    CHECK(s.times.size() == traj.times.size());
    CHECK(s.max_mass_error < 1e-10);
    CHECK(s.min_value >= -1e-12);
    CHECK(s.field(s.states.size() - 1, 1)[40] == doctest::Approx(128.0));
    CHECK(s.field(s.states.size() - 1, 0).max_abs() == 0.0);
    // mass moves between components through the coupling
    CHECK(integrate(s.field(0, 0)) > 0.01);
    for (std::size_t n = 0; n < s.states.size(); n += 97) CHECK(s.mass(n) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("with flat data the adjoint is the discrete heat kernel") {
    PeriodicGrid g(1, 64);
    const double a = 0.1, eps = 1.0;
    ProblemSpec p = make_problem(Hamiltonian::quadratic({}), Diffusion::constant(a), eps, 0.0);
    p.numerics.gradient_bound = 1.0;
    ForwardOptions o;
    o.dt = 1.0 / 128;
    auto [traj, rep] = solve_cauchy(p, ScalarField::constant(g, 0.3), 0.25, o);
    Linearization lin(traj);
    const int x0 = 17;
    AdjointDensity s = solve_adjoint(lin, std::size_t(x0), eps);
    const double tau = traj.dt / eps;
    const int steps = int(lin.size());
    double worst = 0;
    for (int j = 0; j < 64; ++j)
        worst = std::max(worst, std::abs(s.field(0)[std::size_t(j)] - oracle::heat_kernel_1d(64, tau * a, steps, x0, j)));
    CHECK(worst < 1e-10);
}

TEST_CASE("argmax of the time derivative and source validation") {
    PeriodicGrid g(1, 64);
    auto [traj, rep] = solve_cauchy(scalar_problem(0.25), sawtooth_initial(g, 0.5), 0.1);
    auto [node, comp] = argmax_time_derivative(traj);
    CHECK(comp == 0);
    auto wt = time_derivative(traj.problem, traj.field(traj.size() - 1));
    CHECK(std::abs(wt[node]) == doctest::Approx(wt.max_abs()));
    Linearization lin(traj);
    CHECK_THROWS_AS(solve_adjoint(lin, 64, 0.25), ConfigurationError);
    CHECK_THROWS_AS(solve_system_adjoint(lin, 3, 1, 0.25), ConfigurationError);
}
