#include <doctest.h>

#include <cmath>

#include "hjlab/errors.hpp"
#include "hjlab/problem.hpp"
#include "oracles.hpp"

using namespace hjlab;
using oracle::pi;

namespace {

TrigPolynomial sample_poly() {
    return TrigPolynomial::cosine({1, 0}, 0.3, 0.2) + TrigPolynomial::cosine({2, 1}, -0.1, 1.1);
}

}  // namespace

TEST_CASE("trig polynomial derivatives match finite differences") {
    TrigPolynomial t = sample_poly();
    const double h = 1e-5;
    for (Point x : {Point{0.13, 0.71}, Point{0.5, 0.05}, Point{0.92, 0.33}}) {
        Point g = t.gradient(x);
        Matrix2 H = t.hessian(x);
        Tensor3 T = t.third(x);
        for (int k = 0; k < 2; ++k) {
            Point xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            CHECK(g[k] == doctest::Approx((t.value(xp) - t.value(xm)) / (2 * h)).epsilon(1e-7));
            for (int i = 0; i < 2; ++i) {
                CHECK(H[i * 2 + k] == doctest::Approx((t.gradient(xp)[i] - t.gradient(xm)[i]) / (2 * h)).epsilon(1e-6));
                for (int j = 0; j < 2; ++j)
                    CHECK(T[i * 4 + j * 2 + k] ==
                          doctest::Approx((t.hessian(xp)[i * 2 + j] - t.hessian(xm)[i * 2 + j]) / (2 * h)).epsilon(1e-5));
            }
        }
    }
    CHECK(t.lipschitz_bound() == doctest::Approx(0.3 * 2 * pi + 0.1 * 2 * pi * std::sqrt(5.0)));
}

TEST_CASE("quadratic hamiltonian values and derivatives") {
    std::array<TrigPolynomial, 2> drift{TrigPolynomial::constant(0.5), TrigPolynomial::cosine({0, 1}, 0.2)};
    Hamiltonian h = Hamiltonian::quadratic(sample_poly(), drift, 2.0);
    Point x{0.3, 0.6}, p{1.0, -0.5};
    Point b = h.drift(x);
    double expected = (p[0] - b[0]) * (p[0] - b[0]) + (p[1] - b[1]) * (p[1] - b[1]) + sample_poly().value(x);
    CHECK(h.value(x, p) == doctest::Approx(expected));
    Point gp = h.grad_p(x, p);
    CHECK(gp[0] == doctest::Approx(2.0 * (p[0] - b[0])));
    Matrix2 hpp = h.hess_pp(x, p);
    CHECK(hpp[0] == doctest::Approx(2.0));
    CHECK(hpp[1] == doctest::Approx(0.0));
    CHECK(h.theta() == doctest::Approx(1.0));
    CHECK(h.shifted(0.7).value(x, p) == doctest::Approx(expected + 0.7));
}

TEST_CASE("validator accepts the catalog examples") {
    Hamiltonian h = Hamiltonian::quadratic(sample_poly());
    for (Diffusion d : {Diffusion::zero(), Diffusion::constant(0.3), Diffusion::sin2(1.0)}) {
        auto r = validate_pair(h, d, 1, 2000);
        CHECK(r.passed());
        CHECK_NOTHROW(r.raise_if_failed());
    }
    auto r2 = validate_pair(h, Diffusion::sigma_sigma_t(1.0), 2, 2000);
    CHECK(r2.passed());
    CHECK_FALSE(r2.check("diffusion_gradient_bound").applicable);
}

TEST_CASE("validator rejects |sin| diffusion and the quartic hamiltonian") {
    Hamiltonian h = Hamiltonian::quadratic(sample_poly());
    auto r = validate_pair(h, Diffusion::abs_sin(1.0), 1, 2000);
    CHECK_FALSE(r.passed());
    CHECK_FALSE(r.check("diffusion_gradient_bound").passed);
    CHECK_THROWS_AS(r.raise_if_failed(), HypothesisViolation);

    auto q = validate_pair(Hamiltonian::quartic(), Diffusion::zero(), 1, 2000);
    CHECK_FALSE(q.check("uniform_convexity").passed);
    CHECK(q.check("uniform_convexity").empirical < 1e-3);
}

TEST_CASE("coupling validation") {
    CHECK(validate_coupling(CouplingMatrix::two_component(1.0)).passed());
    CHECK(validate_coupling(CouplingMatrix::chain(4)).passed());
    auto bad_row = validate_coupling(CouplingMatrix(2, {1.0, -0.5, -1.0, 1.0}));
    CHECK_FALSE(bad_row.check("coupling_row_sum").passed);
    auto bad_off = validate_coupling(CouplingMatrix(2, {-1.0, 1.0, 1.0, -1.0}));
    CHECK_FALSE(bad_off.check("coupling_diagonal").passed);
    CHECK_FALSE(bad_off.check("coupling_offdiagonal").passed);
    for (int m = 2; m <= 5; ++m) {
        auto c = CouplingMatrix::chain(m);
        for (int i = 0; i < m; ++i) {
            double s = 0;
            for (int j = 0; j < m; ++j) s += c(i, j);
            CHECK(s == 0.0);
        }
    }
}

TEST_CASE("diffusion catalog formulas") {
    Point x{0.2, 0.4};
    CHECK(Diffusion::sin2(0.5).a(x) == doctest::Approx(0.5 * std::pow(std::sin(pi * 0.2), 2)));
    CHECK(Diffusion::abs_sin(1.0).a(x) == doctest::Approx(std::abs(std::sin(2 * pi * 0.2))));
    Matrix2 A = Diffusion::sigma_sigma_t(2.0).matrix(x, 2);
    CHECK(A[0] == doctest::Approx(2.0 * std::pow(std::sin(pi * 0.2), 2)));
    CHECK(A[1] == 0.0);
    CHECK(A[3] == 0.0);
    // derivative of sin2 against a central difference
    const double h = 1e-6;
    Diffusion d = Diffusion::sin2(0.5);
    CHECK(d.grad_a(x)[0] == doctest::Approx((d.a({0.2 + h, 0.4}) - d.a({0.2 - h, 0.4})) / (2 * h)).epsilon(1e-6));
}

TEST_CASE("eta follows epsilon^4 unless pinned") {
    ProblemSpec p = make_problem(Hamiltonian::quadratic(sample_poly()), Diffusion::sin2(), 0.5);
    CHECK(p.eta == doctest::Approx(0.0625));
    CHECK(p.with_epsilon(0.25).eta == doctest::Approx(std::pow(0.25, 4)));
    CHECK(p.with_epsilon(0.25, 0.1).eta == doctest::Approx(0.1));
    p.pinned_eta = 1e-6;
    CHECK(p.with_epsilon(0.25).eta == doctest::Approx(1e-6));
    CHECK_THROWS_AS(make_problem(Hamiltonian::quadratic({}), Diffusion::zero(), -1.0), ConfigurationError);
}

TEST_CASE("systems need matching sizes and a valid coupling") {
    Hamiltonian h = Hamiltonian::quadratic(sample_poly());
    CHECK_NOTHROW(make_system({h, h}, {Diffusion::sin2()}, CouplingMatrix::two_component()));
    CHECK_THROWS_AS(make_system({h, h, h}, {Diffusion::sin2()}, CouplingMatrix::two_component()), ConfigurationError);
    CHECK_THROWS_AS(make_system({h, h}, {Diffusion::sin2(), Diffusion::sin2(), Diffusion::sin2()},
                                CouplingMatrix::two_component()),
                    ConfigurationError);
}

TEST_CASE("manufactured cell problem holds exactly at the nodes") {
    SmoothFunction v = SmoothFunction::from(sample_poly());
    for (int dim : {1, 2}) {
        Diffusion d = dim == 1 ? Diffusion::sin2(0.5) : Diffusion::sigma_sigma_t(0.5);
        ManufacturedErgodic m = manufacture_ergodic(v, d, dim);
        CHECK(m.ergodic_constant == 0.0);
        // exact identity at arbitrary points: H(x, Dv) - tr(A D^2 v) = 0
        for (Point x : {Point{0.1, 0.2}, Point{0.77, 0.4}}) {
            Point g = v.gradient(x);
            Matrix2 H = v.hessian(x);
            Matrix2 A = d.matrix(x, dim);
            double tr = 0;
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) tr += A[i * 2 + j] * H[j * 2 + i];
            if (dim == 1) g[1] = 0.0;
            CHECK(m.hamiltonian.value(x, g) - tr == doctest::Approx(0.0).scale(1.0));
        }
        CHECK(manufactured_residual(m, d, PeriodicGrid(dim, 32)) < 1e-12);
    }
}

TEST_CASE("system manufacturing accounts for the coupling") {
    std::vector<SmoothFunction> v = {SmoothFunction::from(TrigPolynomial::cosine({1, 0}, 0.2)),
                                     SmoothFunction::from(TrigPolynomial::cosine({1, 0}, 0.2, 0.7))};
    CouplingMatrix c = CouplingMatrix::two_component(1.0);
    Diffusion d = Diffusion::sin2(0.5);
    ManufacturedSystem m = manufacture_system_ergodic(v, {d, d}, c, 1);
    Point x{0.31, 0.0};
    for (int i = 0; i < 2; ++i) {
        Point g = v[std::size_t(i)].gradient(x);
        double lhs = m.hamiltonians[std::size_t(i)].value(x, g) - d.a(x) * v[std::size_t(i)].hessian(x)[0];
        for (int j = 0; j < 2; ++j) lhs += c(i, j) * v[std::size_t(j)].value(x);
        CHECK(lhs == doctest::Approx(0.0).scale(1.0));
    }
}
