#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hjlab/grid.hpp"

namespace hjlab {

using Matrix2 = std::array<double, 4>;  // row-major 2x2
using Tensor3 = std::array<double, 8>;  // t[i*4 + j*2 + k]

/// Sum of A cos(2 pi k.x + phi) with closed-form derivatives to third order.
class TrigPolynomial {
public:
    struct Term {
        std::array<int, 2> wave{0, 0};
        double amplitude = 0.0;
        double phase = 0.0;
    };

    TrigPolynomial() = default;
    explicit TrigPolynomial(std::vector<Term> terms) : terms_(std::move(terms)) {}

    static TrigPolynomial cosine(std::array<int, 2> wave, double amplitude, double phase = 0.0);
    static TrigPolynomial constant(double c);

    const std::vector<Term>& terms() const noexcept { return terms_; }
    bool empty() const noexcept { return terms_.empty(); }
    TrigPolynomial operator+(const TrigPolynomial& o) const;
    TrigPolynomial operator*(double s) const;

    double value(const Point& x) const;
    Point gradient(const Point& x) const;
    Matrix2 hessian(const Point& x) const;
    Tensor3 third(const Point& x) const;
    /// Sum of |amplitude| * (2 pi |k|): a bound on the gradient norm.
    double lipschitz_bound() const;

private:
    std::vector<Term> terms_;
};

/// A closed-form function on the torus. Derivative slots may be empty, in which
/// case operations that need them reject the function.
struct SmoothFunction {
    std::function<double(const Point&)> value;
    std::function<Point(const Point&)> gradient;
    std::function<Matrix2(const Point&)> hessian;
    std::function<Tensor3(const Point&)> third;

    static SmoothFunction from(const TrigPolynomial& t);
    static SmoothFunction value_only(std::function<double(const Point&)> f);
    bool has_derivatives() const { return bool(value) && bool(gradient) && bool(hessian); }
};

enum class HamiltonianFamily { quadratic, quartic, manufactured };

std::string to_string(HamiltonianFamily f);

/// Closed-form Hamiltonian. `quadratic` and `manufactured` have the separable
/// form (kappa/2)|p - b(x)|^2 + V(x) that the solvers discretize; `quartic`
/// (|p|^4/4 + V) only exists for the hypothesis validator.
class Hamiltonian {
public:
    static Hamiltonian quadratic(TrigPolynomial potential, std::array<TrigPolynomial, 2> drift = {},
                                 double kappa = 1.0);
    static Hamiltonian quartic(TrigPolynomial potential = {});
    /// H = |p|^2/2 + f(x) with f given in closed form.
    static Hamiltonian manufactured(SmoothFunction f);

    HamiltonianFamily family() const noexcept { return family_; }
    bool separable() const noexcept { return family_ != HamiltonianFamily::quartic; }
    double kappa() const noexcept { return kappa_; }
    double theta() const noexcept { return theta_; }
    double growth() const noexcept { return growth_; }
    double shift() const noexcept { return shift_; }

    /// H + k (same family, same derivatives).
    Hamiltonian shifted(double k) const;
    Hamiltonian with_constants(double theta, double growth) const;
    /// Replace V on one specific grid by node values; off that grid the closed form is used.
    Hamiltonian with_node_potential(const PeriodicGrid& grid, std::vector<double> values) const;

    double value(const Point& x, const Point& p) const;
    Point grad_p(const Point& x, const Point& p) const;
    Point grad_x(const Point& x, const Point& p) const;
    Matrix2 hess_pp(const Point& x, const Point& p) const;

    double potential(const Point& x) const;
    Point drift(const Point& x) const;
    /// Potential at grid nodes, honouring a node override for this grid.
    std::vector<double> tabulate_potential(const PeriodicGrid& grid) const;
    bool has_node_potential() const noexcept { return node_grid_.has_value(); }
    /// Upper bound on |b| over the torus, used for the dissipation constant.
    double drift_bound() const;

private:
    HamiltonianFamily family_ = HamiltonianFamily::quadratic;
    double kappa_ = 1.0;
    double theta_ = 0.5;
    double growth_ = 1e3;
    double shift_ = 0.0;
    SmoothFunction potential_;
    std::array<TrigPolynomial, 2> drift_;
    std::optional<PeriodicGrid> node_grid_;
    std::vector<double> node_potential_;
};

enum class DiffusionKind { zero, constant, sin2, abs_sin, sigma_sigma_t };

std::string to_string(DiffusionKind k);

/// Diffusion catalog. Scalar kinds enter as a(x) Lap u, the matrix kind as tr(A D^2 u).
///   constant:      a = amp
///   sin2:          a = amp sin^2(pi x1)
///   abs_sin:       a = amp |sin(2 pi x1)|   (violates |Da|^2 <= C a; validator example)
///   sigma_sigma_t: A = s s^T, s = sqrt(amp) (sin(pi x1), 0)
class Diffusion {
public:
    Diffusion() = default;
    static Diffusion zero();
    static Diffusion constant(double amp);
    static Diffusion sin2(double amp = 1.0);
    static Diffusion abs_sin(double amp = 1.0);
    static Diffusion sigma_sigma_t(double amp = 1.0);

    DiffusionKind kind() const noexcept { return kind_; }
    double amplitude() const noexcept { return amp_; }
    bool is_matrix() const noexcept { return kind_ == DiffusionKind::sigma_sigma_t; }

    double a(const Point& x) const;
    Point grad_a(const Point& x) const;
    double laplacian_a(const Point& x) const;
    /// Full matrix (a I for the scalar kinds); entries past `dim` are zero.
    Matrix2 matrix(const Point& x, int dim) const;
    /// d/dx_axis of matrix(x).
    Matrix2 matrix_derivative(const Point& x, int dim, int axis) const;
    /// Row divergence (div A)_i = sum_j d_j a^{ij}.
    Point divergence(const Point& x, int dim) const;

    MatrixField sample(const PeriodicGrid& grid) const;

private:
    Diffusion(DiffusionKind kind, double amp);

    DiffusionKind kind_ = DiffusionKind::zero;
    double amp_ = 0.0;
};

/// m x m coupling matrix, row-major.
class CouplingMatrix {
public:
    CouplingMatrix(int m, std::vector<double> entries);

    int size() const noexcept { return m_; }
    double operator()(int i, int j) const { return c_[std::size_t(i * m_ + j)]; }
    const std::vector<double>& entries() const noexcept { return c_; }

    static CouplingMatrix two_component(double strength = 1.0);
    static CouplingMatrix chain(int m);

private:
    int m_;
    std::vector<double> c_;
};

enum class NumericalFlux { engquist_osher, lax_friedrichs };
enum class LinearSolverKind { direct, conjugate_gradient };

/// Discretization settings carried with a problem.
struct Numerics {
    NumericalFlux flux = NumericalFlux::engquist_osher;
    /// Gradient box radius P used for the dissipation/CFL constant.
    double gradient_bound = 10.0;
    /// Courant number; 0 selects 0.5 in 1-d and 0.25 in 2-d.
    double cfl = 0.0;
    LinearSolverKind linear_solver = LinearSolverKind::direct;
    double solver_tolerance = 1e-12;
};

/// (H, A, epsilon, eta) for one equation, or m Hamiltonians plus a coupling matrix.
struct ProblemSpec {
    std::vector<Hamiltonian> hamiltonians;
    /// One shared diffusion, or one per component.
    std::vector<Diffusion> diffusions;
    std::optional<CouplingMatrix> coupling;
    double epsilon = 1.0;
    double eta = 0.0;
    /// When set, with_epsilon keeps this eta instead of using epsilon^4.
    std::optional<double> pinned_eta;
    Numerics numerics;

    int components() const noexcept { return int(hamiltonians.size()); }
    bool is_system() const noexcept { return coupling.has_value(); }
    const Diffusion& diffusion(int component) const;
    /// Throws ConfigurationError when the invariants fail.
    void validate() const;

    ProblemSpec with_epsilon(double eps, std::optional<double> eta_override = std::nullopt) const;
    ProblemSpec with_eta(double eta_value) const;
    ProblemSpec shifted(double k) const;
    ProblemSpec decoupled(int component) const;
};

/// Scalar problem; eta defaults to epsilon^4.
ProblemSpec make_problem(Hamiltonian h, Diffusion d, double epsilon = 1.0, std::optional<double> eta = std::nullopt);
ProblemSpec make_system(std::vector<Hamiltonian> hs, std::vector<Diffusion> ds, CouplingMatrix c,
                        double epsilon = 1.0, std::optional<double> eta = std::nullopt);

// ---------------------------------------------------------------------------
// Hypothesis validation

struct HypothesisCheck {
    std::string hypothesis;
    bool applicable = true;
    bool passed = true;
    double empirical = 0.0;
    double bound = 0.0;
    std::string witness;
};

struct ValidationReport {
    std::vector<HypothesisCheck> checks;

    bool passed() const;
    const HypothesisCheck& check(const std::string& name) const;
    /// Throws HypothesisViolation naming the first failing check.
    void raise_if_failed() const;
};

struct ValidationOptions {
    double momentum_radius = 10.0;
    /// A reported constant above this is treated as unbounded.
    double constant_cap = 1e3;
    std::uint64_t seed = 20240531;
};

/// Sampling-based check of convexity, x-growth, nonnegativity and the diffusion
/// inequalities |Da|^2 <= C a, |d_k a^{ij}| <= C(sqrt(a^ii) + sqrt(a^jj)),
/// (tr(A_k S))^2 <= C tr(S A S).
ValidationReport validate_pair(const Hamiltonian& h, const Diffusion& d, int dim, std::size_t samples,
                               const ValidationOptions& opts = {});
ValidationReport validate_coupling(const CouplingMatrix& c);

/// Quasi-random points in [0,1)^4 (Halton, bases 2, 3, 5, 7).
std::array<double, 4> halton(std::size_t index);

// ---------------------------------------------------------------------------
// Manufactured solutions

struct ManufacturedErgodic {
    Hamiltonian hamiltonian;
    SmoothFunction corrector;
    double ergodic_constant = 0.0;
};

struct ManufacturedSystem {
    std::vector<Hamiltonian> hamiltonians;
    std::vector<SmoothFunction> correctors;
    double ergodic_constant = 0.0;
};

/// H = |p|^2/2 + f with f = tr(A D^2 v) - |Dv|^2/2, so (v, 0) solves the cell problem.
ManufacturedErgodic manufacture_ergodic(const SmoothFunction& v_target, const Diffusion& d, int dim);
/// f_i = tr(A_i D^2 v_i) - |Dv_i|^2/2 - sum_j c_ij v_j.
ManufacturedSystem manufacture_system_ergodic(const std::vector<SmoothFunction>& targets,
                                              const std::vector<Diffusion>& ds, const CouplingMatrix& c, int dim);
/// Pointwise residual of the continuous cell problem at the grid nodes.
double manufactured_residual(const ManufacturedErgodic& m, const Diffusion& d, const PeriodicGrid& grid);

}  // namespace hjlab
