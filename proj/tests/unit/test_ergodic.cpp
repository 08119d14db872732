#include <doctest.h>

#include <Eigen/SparseLU>
#include <cmath>

#include "hjlab/ergodic.hpp"
#include "hjlab/errors.hpp"
#include "hjlab/scheme.hpp"
#include "oracles.hpp"

using namespace hjlab;
using oracle::pi;

namespace {

ProblemSpec drift_problem(double b, double eta, Diffusion d = Diffusion::zero()) {
    std::array<TrigPolynomial, 2> drift{TrigPolynomial::constant(b), {}};
    ProblemSpec p = make_problem(Hamiltonian::quadratic(TrigPolynomial::cosine({1, 0}, 0.5), drift), d, 1.0, eta);
    p.numerics.gradient_bound = 4.0;
    return p;
}

/// Solves lambda w + G(w) + L w = 0 by damped Newton on the library operators.
std::vector<double> discounted(const ProblemSpec& p, const PeriodicGrid& g, double lambda) {
    Discretization d(p, g);
    const std::size_t n = d.unknowns();
    std::vector<double> w(n, 0.0);
    auto F = [&](const std::vector<double>& v) {
        auto r = d.residual(v);
        for (std::size_t k = 0; k < n; ++k) r[k] += lambda * v[k];
        return r;
    };
    auto sup = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s = std::max(s, std::abs(x));
        return s;
    };
    auto r = F(w);
    for (int it = 0; it < 100 && sup(r) > 1e-11; ++it) {
        SparseMatrix J = d.slopes_matrix(d.tangent_slopes(w)) + d.implicit_operator();
        SparseMatrix I{Eigen::Index(n), Eigen::Index(n)};
        I.setIdentity();
        J += lambda * I;
        Eigen::SparseLU<SparseMatrix> lu(J);
        Eigen::VectorXd rhs = Eigen::Map<Eigen::VectorXd>(r.data(), Eigen::Index(n));
        Eigen::VectorXd step = lu.solve(rhs);
        double t = 1.0;
        for (;;) {
            std::vector<double> trial(w);
            for (std::size_t k = 0; k < n; ++k) trial[k] -= t * step[Eigen::Index(k)];
            auto rt = F(trial);
            if (sup(rt) < sup(r) || t < 1e-4) {
                w = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    REQUIRE(sup(r) < 1e-9);
    return w;
}

}  // namespace

TEST_CASE("effective hamiltonian matches the 1-d quadrature formula") {
    auto V = [](double x) { return 0.5 * std::cos(2 * pi * x); };
    PeriodicGrid g(1, 256);
    for (double b : {0.5, 3.0}) {
        double exact = oracle::effective_hamiltonian_1d(V, b);
        ErgodicSolution s = solve_ergodic(drift_problem(b, 1e-6), g, 1e-10);
        CHECK(s.residual < 1e-10);
        CHECK(s.ergodic_constant == doctest::Approx(exact).epsilon(5e-3));
    }
    // flat regime: the constant is max V regardless of the drift
    CHECK(oracle::effective_hamiltonian_1d(V, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("discounted limit agrees with the ergodic constant") {
    PeriodicGrid g(1, 64);
    ProblemSpec p = drift_problem(1.0, 1e-2, Diffusion::sin2(0.3));
    ErgodicSolution s = solve_ergodic(p, g, 1e-11);
    std::vector<double> lams, errs;
    for (double lambda : {1e-1, 1e-2, 1e-3}) {
        auto w = discounted(p, g, lambda);
        double mean = 0;
        for (double x : w) mean += x;
        mean /= double(w.size());
        lams.push_back(lambda);
        errs.push_back(std::abs(lambda * mean + s.ergodic_constant));
    }
    CHECK(errs.back() < 1e-3);
    CHECK(oracle::loglog_slope(lams, errs) > 0.9);
}

TEST_CASE("corrector is normalized and solves the cell problem") {
    PeriodicGrid g(1, 64);
    ProblemSpec p = drift_problem(1.0, 1e-3, Diffusion::sin2(0.5));
    ErgodicSolution s = solve_ergodic(p, g, 1e-11);
    CHECK(s.v()[0] == 0.0);
    CHECK(ergodic_residual(p, s.corrector, s.ergodic_constant) == doctest::Approx(s.residual));
    CHECK(s.residual < 1e-11);
    // shifting H by k shifts the constant by k, not the corrector
    ErgodicSolution t = solve_ergodic(p.shifted(0.25), g, 1e-11);
    CHECK(t.ergodic_constant == doctest::Approx(s.ergodic_constant + 0.25).epsilon(1e-9));
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(t.v()[k] == doctest::Approx(s.v()[k]).scale(1.0).epsilon(1e-8));
}

TEST_CASE("discrete manufactured problem recovers its target") {
    PeriodicGrid g(1, 128);
    TrigPolynomial target = TrigPolynomial::cosine({1, 0}, 0.2) + TrigPolynomial::cosine({2, 0}, 0.05, 0.3);
    SmoothFunction v = SmoothFunction::from(target);
    Diffusion d = Diffusion::sin2(0.5);
    ProblemSpec base = make_problem(manufacture_ergodic(v, d, 1).hamiltonian, d, 1.0, 1e-8);
    base.numerics.gradient_bound = 4.0;
    ProblemSpec p = manufacture_discrete(base, g, {v});
    ErgodicSolution s = solve_ergodic(p, g, 1e-11);
    CHECK(std::abs(s.ergodic_constant) < 1e-6);
    double v0 = target.value(g.node(0));
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(s.v()[k] == doctest::Approx(target.value(g.node(k)) - v0).scale(1.0).epsilon(1e-5));
}

TEST_CASE("symmetric two-component system reduces to the scalar problem") {
    PeriodicGrid g(1, 64);
    ProblemSpec scalar = drift_problem(1.0, 1e-3, Diffusion::sin2(0.5));
    ProblemSpec sys = make_system({scalar.hamiltonians[0], scalar.hamiltonians[0]}, {Diffusion::sin2(0.5)},
                                  CouplingMatrix::two_component(2.0), 1.0, 1e-3);
    sys.numerics = scalar.numerics;
    ErgodicSolution a = solve_ergodic(scalar, g, 1e-11);
    ErgodicSolution b = solve_system_ergodic(sys, g, 1e-11);
    CHECK(b.ergodic_constant == doctest::Approx(a.ergodic_constant).epsilon(1e-9));
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(b.v(0)[k] == doctest::Approx(a.v()[k]).scale(1.0).epsilon(1e-8));
        CHECK(b.v(1)[k] == doctest::Approx(a.v()[k]).scale(1.0).epsilon(1e-8));
    }
}

TEST_CASE("running out of time is a convergence error") {
    PeriodicGrid g(1, 64);
    ErgodicOptions o;
    o.max_time = 2.0;
    o.window = 1.0;
    o.newton = false;
    CHECK_THROWS_AS(solve_ergodic(drift_problem(3.0, 1e-6), g, 1e-14, o), ConvergenceError);
}

TEST_CASE("viscosity sweep with a known constant fits a slope") {
    PeriodicGrid g(1, 64);
    TrigPolynomial target = TrigPolynomial::cosine({1, 0}, 0.2);
    SmoothFunction v = SmoothFunction::from(target);
    Diffusion d = Diffusion::sin2(0.5);
    ProblemSpec base = make_problem(manufacture_ergodic(v, d, 1).hamiltonian, d, 1.0);
    base.numerics.gradient_bound = 4.0;
    ProblemSpec p = manufacture_discrete(base, g, {v});
    SweepTable t = viscosity_sweep(p, g, {0.25, 0.125, 0.0625, 0.03125}, 1e-12, 0.0);
    REQUIRE(t.rows.size() == 4);
    REQUIRE(t.solutions.size() == 4);
    REQUIRE(t.fit);
    for (const auto& r : t.rows) CHECK(r.eta == doctest::Approx(std::pow(r.epsilon, 4)));
    // with the node correction the constant is O(eta)
    CHECK(t.fit->slope == doctest::Approx(4.0).epsilon(0.1));
    CHECK(t.grad_variation < 0.05);
}
