#include "hjlab/problem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hjlab/errors.hpp"

namespace hjlab {

namespace {

HypothesisCheck named_check(std::string name) {
    HypothesisCheck c;
    c.hypothesis = std::move(name);
    return c;
}

constexpr double pi = std::numbers::pi;
constexpr double two_pi = 2.0 * std::numbers::pi;

double norm2(const Point& p) { return p[0] * p[0] + p[1] * p[1]; }

std::string point_str(const Point& p, int dim) {
    std::ostringstream os;
    os.precision(6);
    os << "(" << p[0];
    if (dim == 2) os << ", " << p[1];
    os << ")";
    return os.str();
}

/// Smallest eigenvalue of the leading dim x dim block of a symmetric 2x2.
double min_eigen(const Matrix2& m, int dim) {
    if (dim == 1) return m[0];
    double tr = m[0] + m[3];
    double det = m[0] * m[3] - m[1] * m[2];
    return 0.5 * tr - std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
}

}  // namespace

// ---------------------------------------------------------------------------
// TrigPolynomial

TrigPolynomial TrigPolynomial::cosine(std::array<int, 2> wave, double amplitude, double phase) {
    return TrigPolynomial({Term{wave, amplitude, phase}});
}

TrigPolynomial TrigPolynomial::constant(double c) { return TrigPolynomial({Term{{0, 0}, c, 0.0}}); }

TrigPolynomial TrigPolynomial::operator+(const TrigPolynomial& o) const {
    auto t = terms_;
    t.insert(t.end(), o.terms_.begin(), o.terms_.end());
    return TrigPolynomial(std::move(t));
}

TrigPolynomial TrigPolynomial::operator*(double s) const {
    auto t = terms_;
    for (auto& term : t) term.amplitude *= s;
    return TrigPolynomial(std::move(t));
}

double TrigPolynomial::value(const Point& x) const {
    double s = 0.0;
    for (const auto& t : terms_) s += t.amplitude * std::cos(two_pi * (t.wave[0] * x[0] + t.wave[1] * x[1]) + t.phase);
    return s;
}

Point TrigPolynomial::gradient(const Point& x) const {
    Point g{0.0, 0.0};
    for (const auto& t : terms_) {
        double s = std::sin(two_pi * (t.wave[0] * x[0] + t.wave[1] * x[1]) + t.phase);
        for (int i = 0; i < 2; ++i) g[i] -= t.amplitude * two_pi * t.wave[i] * s;
    }
    return g;
}

Matrix2 TrigPolynomial::hessian(const Point& x) const {
    Matrix2 h{};
    for (const auto& t : terms_) {
        double c = std::cos(two_pi * (t.wave[0] * x[0] + t.wave[1] * x[1]) + t.phase);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) h[i * 2 + j] -= t.amplitude * two_pi * two_pi * t.wave[i] * t.wave[j] * c;
    }
    return h;
}

Tensor3 TrigPolynomial::third(const Point& x) const {
    Tensor3 r{};
    double k3 = two_pi * two_pi * two_pi;
    for (const auto& t : terms_) {
        double s = std::sin(two_pi * (t.wave[0] * x[0] + t.wave[1] * x[1]) + t.phase);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k)
                    r[i * 4 + j * 2 + k] += t.amplitude * k3 * t.wave[i] * t.wave[j] * t.wave[k] * s;
    }
    return r;
}

double TrigPolynomial::lipschitz_bound() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.amplitude) * two_pi * std::hypot(double(t.wave[0]), double(t.wave[1]));
    return s;
}

SmoothFunction SmoothFunction::from(const TrigPolynomial& t) {
    return SmoothFunction{[t](const Point& x) { return t.value(x); }, [t](const Point& x) { return t.gradient(x); },
                          [t](const Point& x) { return t.hessian(x); }, [t](const Point& x) { return t.third(x); }};
}

SmoothFunction SmoothFunction::value_only(std::function<double(const Point&)> f) {
    SmoothFunction s;
    s.value = std::move(f);
    return s;
}

// ---------------------------------------------------------------------------
// Hamiltonian

std::string to_string(HamiltonianFamily f) {
    switch (f) {
        case HamiltonianFamily::quadratic: return "quadratic";
        case HamiltonianFamily::quartic: return "quartic";
        case HamiltonianFamily::manufactured: return "manufactured";
    }
    return "?";
}

Hamiltonian Hamiltonian::quadratic(TrigPolynomial potential, std::array<TrigPolynomial, 2> drift, double kappa) {
    if (!(kappa > 0.0)) throw ConfigurationError("hamiltonian kappa must be positive");
    Hamiltonian h;
    h.family_ = HamiltonianFamily::quadratic;
    h.kappa_ = kappa;
    h.theta_ = 0.5 * kappa;
    h.potential_ = SmoothFunction::from(potential);
    h.drift_ = std::move(drift);
    return h;
}

Hamiltonian Hamiltonian::quartic(TrigPolynomial potential) {
    Hamiltonian h;
    h.family_ = HamiltonianFamily::quartic;
    h.potential_ = SmoothFunction::from(potential);
    return h;
}

Hamiltonian Hamiltonian::manufactured(SmoothFunction f) {
    if (!f.value || !f.gradient) throw ConfigurationError("manufactured potential needs value and gradient");
    Hamiltonian h;
    h.family_ = HamiltonianFamily::manufactured;
    h.potential_ = std::move(f);
    return h;
}

Hamiltonian Hamiltonian::shifted(double k) const {
    Hamiltonian h = *this;
    h.shift_ += k;
    return h;
}

Hamiltonian Hamiltonian::with_constants(double theta, double growth) const {
    if (!(theta > 0.0) || !(growth > 0.0)) throw ConfigurationError("declared constants must be positive");
    Hamiltonian h = *this;
    h.theta_ = theta;
    h.growth_ = growth;
    return h;
}

Hamiltonian Hamiltonian::with_node_potential(const PeriodicGrid& grid, std::vector<double> values) const {
    if (values.size() != grid.size()) throw ConfigurationError("node potential size does not match grid");
    Hamiltonian h = *this;
    h.node_grid_ = grid;
    h.node_potential_ = std::move(values);
    return h;
}

double Hamiltonian::potential(const Point& x) const {
    return (potential_.value ? potential_.value(x) : 0.0) + shift_;
}

Point Hamiltonian::drift(const Point& x) const { return {drift_[0].value(x), drift_[1].value(x)}; }

double Hamiltonian::drift_bound() const {
    double s = 0.0;
    for (const auto& b : drift_)
        for (const auto& t : b.terms()) s += std::abs(t.amplitude);
    return s;
}

double Hamiltonian::value(const Point& x, const Point& p) const {
    switch (family_) {
        case HamiltonianFamily::quartic: {
            double q = norm2(p);
            return 0.25 * q * q + potential(x);
        }
        case HamiltonianFamily::quadratic:
        case HamiltonianFamily::manufactured: {
            Point b = drift(x);
            Point d{p[0] - b[0], p[1] - b[1]};
            return 0.5 * kappa_ * norm2(d) + potential(x);
        }
    }
    return 0.0;
}

Point Hamiltonian::grad_p(const Point& x, const Point& p) const {
    if (family_ == HamiltonianFamily::quartic) {
        double q = norm2(p);
        return {q * p[0], q * p[1]};
    }
    Point b = drift(x);
    return {kappa_ * (p[0] - b[0]), kappa_ * (p[1] - b[1])};
}

Point Hamiltonian::grad_x(const Point& x, const Point& p) const {
    Point g = potential_.gradient ? potential_.gradient(x) : Point{0.0, 0.0};
    if (family_ == HamiltonianFamily::quartic) return g;
    Point b = drift(x);
    for (int a = 0; a < 2; ++a) {
        if (drift_[a].empty()) continue;
        Point db = drift_[a].gradient(x);
        for (int i = 0; i < 2; ++i) g[i] -= kappa_ * (p[a] - b[a]) * db[i];
    }
    return g;
}

Matrix2 Hamiltonian::hess_pp(const Point&, const Point& p) const {
    if (family_ == HamiltonianFamily::quartic) {
        double q = norm2(p);
        return {q + 2 * p[0] * p[0], 2 * p[0] * p[1], 2 * p[0] * p[1], q + 2 * p[1] * p[1]};
    }
    return {kappa_, 0.0, 0.0, kappa_};
}

std::vector<double> Hamiltonian::tabulate_potential(const PeriodicGrid& grid) const {
    if (node_grid_ && *node_grid_ == grid) {
        std::vector<double> v = node_potential_;
        for (double& x : v) x += shift_;
        return v;
    }
    if (node_grid_)
        throw ConfigurationError("hamiltonian carries a node potential for a different grid");
    std::vector<double> v(grid.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = potential(grid.node(k));
    return v;
}

// ---------------------------------------------------------------------------
// Diffusion

std::string to_string(DiffusionKind k) {
    switch (k) {
        case DiffusionKind::zero: return "zero";
        case DiffusionKind::constant: return "constant";
        case DiffusionKind::sin2: return "sin2";
        case DiffusionKind::abs_sin: return "abs_sin";
        case DiffusionKind::sigma_sigma_t: return "sigma_sigma_t";
    }
    return "?";
}

Diffusion::Diffusion(DiffusionKind kind, double amp) : kind_(kind), amp_(amp) {
    if (amp < 0.0 || !std::isfinite(amp)) throw ConfigurationError("diffusion amplitude must be finite and >= 0");
}

Diffusion Diffusion::zero() { return Diffusion(DiffusionKind::zero, 0.0); }
Diffusion Diffusion::constant(double amp) { return Diffusion(DiffusionKind::constant, amp); }
Diffusion Diffusion::sin2(double amp) { return Diffusion(DiffusionKind::sin2, amp); }
Diffusion Diffusion::abs_sin(double amp) { return Diffusion(DiffusionKind::abs_sin, amp); }
Diffusion Diffusion::sigma_sigma_t(double amp) { return Diffusion(DiffusionKind::sigma_sigma_t, amp); }

double Diffusion::a(const Point& x) const {
    switch (kind_) {
        case DiffusionKind::zero: return 0.0;
        case DiffusionKind::constant: return amp_;
        case DiffusionKind::sin2:
        case DiffusionKind::sigma_sigma_t: {
            double s = std::sin(pi * x[0]);
            return amp_ * s * s;
        }
        case DiffusionKind::abs_sin: return amp_ * std::abs(std::sin(two_pi * x[0]));
    }
    return 0.0;
}

Point Diffusion::grad_a(const Point& x) const {
    switch (kind_) {
        case DiffusionKind::zero:
        case DiffusionKind::constant: return {0.0, 0.0};
        case DiffusionKind::sin2:
        case DiffusionKind::sigma_sigma_t: return {amp_ * pi * std::sin(two_pi * x[0]), 0.0};
        case DiffusionKind::abs_sin: {
            double s = std::sin(two_pi * x[0]);
            double sgn = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
            return {amp_ * two_pi * std::cos(two_pi * x[0]) * sgn, 0.0};
        }
    }
    return {0.0, 0.0};
}

double Diffusion::laplacian_a(const Point& x) const {
    switch (kind_) {
        case DiffusionKind::zero:
        case DiffusionKind::constant: return 0.0;
        case DiffusionKind::sin2:
        case DiffusionKind::sigma_sigma_t: return amp_ * 2.0 * pi * pi * std::cos(two_pi * x[0]);
        case DiffusionKind::abs_sin: return -amp_ * two_pi * two_pi * std::abs(std::sin(two_pi * x[0]));
    }
    return 0.0;
}

Matrix2 Diffusion::matrix(const Point& x, int dim) const {
    double v = a(x);
    if (is_matrix()) return {v, 0.0, 0.0, 0.0};
    return {v, 0.0, 0.0, dim == 2 ? v : 0.0};
}

Matrix2 Diffusion::matrix_derivative(const Point& x, int dim, int axis) const {
    double d = grad_a(x)[axis];
    if (is_matrix()) return {d, 0.0, 0.0, 0.0};
    return {d, 0.0, 0.0, dim == 2 ? d : 0.0};
}

Point Diffusion::divergence(const Point& x, int dim) const {
    Point r{0.0, 0.0};
    for (int j = 0; j < dim; ++j) {
        Matrix2 dj = matrix_derivative(x, dim, j);
        for (int i = 0; i < dim; ++i) r[i] += dj[i * 2 + j];
    }
    return r;
}

MatrixField Diffusion::sample(const PeriodicGrid& grid) const {
    int dim = grid.dim();
    return MatrixField::sample(grid, [&](const Point& x) { return matrix(x, dim); });
}

// ---------------------------------------------------------------------------
// CouplingMatrix

CouplingMatrix::CouplingMatrix(int m, std::vector<double> entries) : m_(m), c_(std::move(entries)) {
    if (m < 2) throw ConfigurationError("coupling matrix needs m >= 2");
    if (c_.size() != std::size_t(m * m)) throw ConfigurationError("coupling matrix must have m*m entries");
    for (double x : c_)
        if (!std::isfinite(x)) throw ConfigurationError("coupling matrix entries must be finite");
}

CouplingMatrix CouplingMatrix::two_component(double strength) {
    return CouplingMatrix(2, {strength, -strength, -strength, strength});
}

CouplingMatrix CouplingMatrix::chain(int m) {
    std::vector<double> c(std::size_t(m * m), 0.0);
    for (int i = 0; i < m; ++i) {
        if (i > 0) {
            c[std::size_t(i * m + i - 1)] = -1.0;
            c[std::size_t(i * m + i)] += 1.0;
        }
        if (i + 1 < m) {
            c[std::size_t(i * m + i + 1)] = -1.0;
            c[std::size_t(i * m + i)] += 1.0;
        }
    }
    return CouplingMatrix(m, std::move(c));
}

// ---------------------------------------------------------------------------
// ProblemSpec

const Diffusion& ProblemSpec::diffusion(int component) const {
    return diffusions.size() == 1 ? diffusions.front() : diffusions.at(std::size_t(component));
}

void ProblemSpec::validate() const {
    if (hamiltonians.empty()) throw ConfigurationError("problem needs at least one hamiltonian");
    int m = components();
    if (diffusions.size() != 1 && diffusions.size() != std::size_t(m))
        throw ConfigurationError("problem needs one diffusion or one per component");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigurationError("epsilon must be positive");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigurationError("eta must be nonnegative");
    if (coupling) {
        if (coupling->size() != m)
            throw ConfigurationError("coupling size " + std::to_string(coupling->size()) +
                                     " does not match the number of hamiltonians " + std::to_string(m));
        validate_coupling(*coupling).raise_if_failed();
    } else if (m != 1) {
        throw ConfigurationError("several hamiltonians require a coupling matrix");
    }
    if (!(numerics.gradient_bound > 0.0)) throw ConfigurationError("gradient_bound must be positive");
    if (numerics.cfl < 0.0 || numerics.cfl > 1.0) throw ConfigurationError("cfl must lie in [0, 1]");
    if (!(numerics.solver_tolerance > 0.0)) throw ConfigurationError("solver_tolerance must be positive");
}

ProblemSpec ProblemSpec::with_epsilon(double eps, std::optional<double> eta_override) const {
    ProblemSpec p = *this;
    p.epsilon = eps;
    p.eta = eta_override ? *eta_override : pinned_eta ? *pinned_eta : std::pow(eps, 4);
    return p;
}

ProblemSpec ProblemSpec::with_eta(double eta_value) const {
    ProblemSpec p = *this;
    p.eta = eta_value;
    return p;
}

ProblemSpec ProblemSpec::shifted(double k) const {
    ProblemSpec p = *this;
    for (auto& h : p.hamiltonians) h = h.shifted(k);
    return p;
}

ProblemSpec ProblemSpec::decoupled(int component) const {
    ProblemSpec p = *this;
    p.hamiltonians = {hamiltonians.at(std::size_t(component))};
    p.diffusions = {diffusion(component)};
    p.coupling.reset();
    return p;
}

ProblemSpec make_problem(Hamiltonian h, Diffusion d, double epsilon, std::optional<double> eta) {
    ProblemSpec p;
    p.hamiltonians = {std::move(h)};
    p.diffusions = {d};
    p.epsilon = epsilon;
    p.eta = eta ? *eta : std::pow(epsilon, 4);
    p.validate();
    return p;
}

ProblemSpec make_system(std::vector<Hamiltonian> hs, std::vector<Diffusion> ds, CouplingMatrix c, double epsilon,
                        std::optional<double> eta) {
    ProblemSpec p;
    p.hamiltonians = std::move(hs);
    p.diffusions = std::move(ds);
    p.coupling = std::move(c);
    p.epsilon = epsilon;
    p.eta = eta ? *eta : std::pow(epsilon, 4);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const HypothesisCheck& c) { return c.passed; });
}

const HypothesisCheck& ValidationReport::check(const std::string& name) const {
    for (const auto& c : checks)
        if (c.hypothesis == name) return c;
    throw ConfigurationError("no hypothesis check named " + name);
}

void ValidationReport::raise_if_failed() const {
    for (const auto& c : checks) {
        if (c.passed) continue;
        std::ostringstream os;
        os << c.hypothesis << " violated: empirical " << c.empirical << " vs bound " << c.bound;
        if (!c.witness.empty()) os << " at " << c.witness;
        throw HypothesisViolation(c.hypothesis, os.str());
    }
}

std::array<double, 4> halton(std::size_t index) {
    static constexpr std::array<unsigned, 4> bases{2, 3, 5, 7};
    std::array<double, 4> r{};
    for (int d = 0; d < 4; ++d) {
        double f = 1.0, v = 0.0;
        std::size_t i = index + 1;
        while (i > 0) {
            f /= bases[d];
            v += f * double(i % bases[d]);
            i /= bases[d];
        }
        r[d] = v;
    }
    return r;
}

namespace {

struct Sample {
    Point x;
    Point p;
};

std::vector<Sample> make_samples(int dim, std::size_t count, double radius) {
    std::vector<Sample> s;
    s.reserve(count + 256);
    for (std::size_t i = 0; i < count; ++i) {
        auto u = halton(i);
        Point x{u[0], dim == 2 ? u[1] : 0.0};
        Point p{radius * (2 * u[2] - 1), dim == 2 ? radius * (2 * u[3] - 1) : 0.0};
        double n = std::sqrt(norm2(p));
        if (n > radius) p = {p[0] * radius / n, p[1] * radius / n};
        s.push_back({x, p});
        if (i < 64) s.push_back({x, {0.0, 0.0}});
    }
    // Lattice points and their close neighbours: catches degeneracies at x = k/32.
    for (int k = 0; k < 32; ++k)
        for (double off : {0.0, 1e-4, -1e-4}) {
            double x1 = k / 32.0 + off;
            x1 -= std::floor(x1);
            s.push_back({{x1, dim == 2 ? 0.5 : 0.0}, {0.0, 0.0}});
        }
    return s;
}

void record_max(HypothesisCheck& c, double value, const Sample& s, int dim, bool with_p) {
    if (value > c.empirical || (std::isinf(value) && !std::isinf(c.empirical))) {
        c.empirical = value;
        c.witness = "x=" + point_str(s.x, dim) + (with_p ? " p=" + point_str(s.p, dim) : std::string());
    }
}

}  // namespace

ValidationReport validate_pair(const Hamiltonian& h, const Diffusion& d, int dim, std::size_t samples,
                               const ValidationOptions& opts) {
    if (dim != 1 && dim != 2) throw ConfigurationError("validator dim must be 1 or 2");
    if (samples < 10) throw ConfigurationError("validator needs at least 10 samples");
    auto pts = make_samples(dim, samples, opts.momentum_radius);

    HypothesisCheck convex = named_check("uniform_convexity");
    convex.empirical = std::numeric_limits<double>::infinity();
    convex.bound = h.theta();
    HypothesisCheck growth = named_check("gradient_x_growth");
    growth.bound = std::min(h.growth(), opts.constant_cap);
    HypothesisCheck nonneg = named_check("nonnegative_diffusion");
    nonneg.empirical = std::numeric_limits<double>::infinity();
    nonneg.bound = -MatrixField::eigen_tolerance;
    HypothesisCheck da = named_check("diffusion_gradient_bound");
    da.bound = opts.constant_cap;
    da.applicable = !d.is_matrix();
    HypothesisCheck sv1 = named_check("matrix_derivative_bound");
    sv1.bound = opts.constant_cap;
    HypothesisCheck sv2 = named_check("matrix_trace_bound");
    sv2.bound = opts.constant_cap;

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    for (const auto& s : pts) {
        // convexity: lambda_min(D2pp H) >= 2 theta
        double lam = min_eigen(h.hess_pp(s.x, s.p), dim);
        if (0.5 * lam < convex.empirical) {
            convex.empirical = 0.5 * lam;
            convex.witness = "x=" + point_str(s.x, dim) + " p=" + point_str(s.p, dim);
        }
        Point gx = h.grad_x(s.x, s.p);
        double gxn = std::sqrt(gx[0] * gx[0] + (dim == 2 ? gx[1] * gx[1] : 0.0));
        record_max(growth, gxn / (1.0 + norm2(s.p)), s, dim, true);

        Matrix2 A = d.matrix(s.x, dim);
        double amin = min_eigen(A, dim);
        if (amin < nonneg.empirical) {
            nonneg.empirical = amin;
            nonneg.witness = "x=" + point_str(s.x, dim);
        }

        if (da.applicable) {
            Point g = d.grad_a(s.x);
            double g2 = g[0] * g[0] + (dim == 2 ? g[1] * g[1] : 0.0);
            double av = d.a(s.x);
            double ratio = g2 == 0.0 ? 0.0 : (av > 0.0 ? g2 / av : std::numeric_limits<double>::infinity());
            record_max(da, ratio, s, dim, false);
        }

        for (int k = 0; k < dim; ++k) {
            Matrix2 dA = d.matrix_derivative(s.x, dim, k);
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) {
                    double num = std::abs(dA[i * 2 + j]);
                    double den = std::sqrt(std::max(0.0, A[i * 3])) + std::sqrt(std::max(0.0, A[j * 3]));
                    double ratio = num == 0.0 ? 0.0 : (den > 0.0 ? num / den : std::numeric_limits<double>::infinity());
                    record_max(sv1, ratio, s, dim, false);
                }
        }

        // random symmetric S with spectral norm <= 1
        Matrix2 S{unit(rng), 0.0, 0.0, dim == 2 ? unit(rng) : 0.0};
        if (dim == 2) S[1] = S[2] = unit(rng);
        double sn = std::max(std::abs(min_eigen(S, dim)),
                             std::abs(dim == 2 ? (S[0] + S[3]) - min_eigen(S, dim) : S[0]));
        if (sn > 1.0)
            for (double& e : S) e /= sn;
        // tr(S A S)
        double tsas = 0.0;
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                for (int l = 0; l < dim; ++l) tsas += S[i * 2 + j] * A[j * 2 + l] * S[l * 2 + i];
        for (int k = 0; k < dim; ++k) {
            Matrix2 dA = d.matrix_derivative(s.x, dim, k);
            double tr = 0.0;
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j) tr += dA[i * 2 + j] * S[j * 2 + i];
            double num = tr * tr;
            double ratio = num < 1e-28 ? 0.0 : (tsas > 0.0 ? num / tsas : std::numeric_limits<double>::infinity());
            record_max(sv2, ratio, s, dim, false);
        }
    }

    convex.passed = convex.empirical >= convex.bound * (1.0 - 1e-12);
    growth.passed = growth.empirical <= growth.bound;
    nonneg.passed = nonneg.empirical >= nonneg.bound;
    da.passed = !da.applicable || da.empirical <= da.bound;
    sv1.passed = sv1.empirical <= sv1.bound;
    sv2.passed = sv2.empirical <= sv2.bound;

    ValidationReport r;
    r.checks = {convex, growth, nonneg, da, sv1, sv2};
    return r;
}

ValidationReport validate_coupling(const CouplingMatrix& c) {
    int m = c.size();
    HypothesisCheck diag = named_check("coupling_diagonal");
    HypothesisCheck off = named_check("coupling_offdiagonal");
    HypothesisCheck rows = named_check("coupling_row_sum");
    for (int i = 0; i < m; ++i) {
        if (!(c(i, i) > 0.0) && diag.passed) {
            diag.passed = false;
            diag.empirical = c(i, i);
            diag.witness = "c[" + std::to_string(i + 1) + "][" + std::to_string(i + 1) + "]";
        }
        double sum = 0.0;
        for (int j = 0; j < m; ++j) {
            sum += c(i, j);
            if (i != j && c(i, j) > 0.0 && off.passed) {
                off.passed = false;
                off.empirical = c(i, j);
                off.witness = "c[" + std::to_string(i + 1) + "][" + std::to_string(j + 1) + "]";
            }
        }
        if (sum != 0.0 && rows.passed) {
            rows.passed = false;
            rows.empirical = sum;
            rows.witness = "row " + std::to_string(i + 1);
        }
    }
    ValidationReport r;
    r.checks = {diag, off, rows};
    return r;
}

// ---------------------------------------------------------------------------
// Manufactured solutions

namespace {

SmoothFunction manufactured_potential(const SmoothFunction& v, const Diffusion& d, int dim,
                                      std::function<double(const Point&)> coupling_value,
                                      std::function<Point(const Point&)> coupling_grad) {
    if (!v.has_derivatives())
        throw ConfigurationError("manufactured target needs closed-form gradient and hessian");
    auto f = [v, d, dim, coupling_value](const Point& x) {
        Point g = v.gradient(x);
        Matrix2 H = v.hessian(x);
        Matrix2 A = d.matrix(x, dim);
        double tr = 0.0;
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) tr += A[i * 2 + j] * H[j * 2 + i];
        double g2 = g[0] * g[0] + (dim == 2 ? g[1] * g[1] : 0.0);
        return tr - 0.5 * g2 - (coupling_value ? coupling_value(x) : 0.0);
    };
    std::function<Point(const Point&)> df;
    if (v.third) {
        df = [v, d, dim, coupling_grad](const Point& x) {
            Point g = v.gradient(x);
            Matrix2 H = v.hessian(x);
            Tensor3 T = v.third(x);
            Matrix2 A = d.matrix(x, dim);
            Point r{0.0, 0.0};
            for (int k = 0; k < dim; ++k) {
                Matrix2 dA = d.matrix_derivative(x, dim, k);
                double s = 0.0;
                for (int i = 0; i < dim; ++i)
                    for (int j = 0; j < dim; ++j) s += dA[i * 2 + j] * H[i * 2 + j] + A[i * 2 + j] * T[i * 4 + j * 2 + k];
                for (int i = 0; i < dim; ++i) s -= g[i] * H[i * 2 + k];
                r[k] = s;
            }
            if (coupling_grad) {
                Point cg = coupling_grad(x);
                r[0] -= cg[0];
                r[1] -= cg[1];
            }
            return r;
        };
    } else {
        df = [f, dim](const Point& x) {
            Point r{0.0, 0.0};
            const double step = 1e-5;
            for (int k = 0; k < dim; ++k) {
                Point xp = x, xm = x;
                xp[k] += step;
                xm[k] -= step;
                r[k] = (f(xp) - f(xm)) / (2 * step);
            }
            return r;
        };
    }
    SmoothFunction s;
    s.value = f;
    s.gradient = df;
    return s;
}

}  // namespace

ManufacturedErgodic manufacture_ergodic(const SmoothFunction& v_target, const Diffusion& d, int dim) {
    auto f = manufactured_potential(v_target, d, dim, {}, {});
    return ManufacturedErgodic{Hamiltonian::manufactured(std::move(f)), v_target, 0.0};
}

ManufacturedSystem manufacture_system_ergodic(const std::vector<SmoothFunction>& targets,
                                              const std::vector<Diffusion>& ds, const CouplingMatrix& c, int dim) {
    int m = c.size();
    if (int(targets.size()) != m) throw ConfigurationError("one manufactured target per component required");
    if (ds.size() != 1 && ds.size() != std::size_t(m)) throw ConfigurationError("one diffusion or one per component");
    for (const auto& t : targets)
        if (!t.has_derivatives()) throw ConfigurationError("manufactured target needs closed-form gradient and hessian");
    ManufacturedSystem out;
    out.correctors = targets;
    for (int i = 0; i < m; ++i) {
        auto cv = [targets, c, i, m](const Point& x) {
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += c(i, j) * targets[std::size_t(j)].value(x);
            return s;
        };
        auto cg = [targets, c, i, m](const Point& x) {
            Point s{0.0, 0.0};
            for (int j = 0; j < m; ++j) {
                Point g = targets[std::size_t(j)].gradient(x);
                s[0] += c(i, j) * g[0];
                s[1] += c(i, j) * g[1];
            }
            return s;
        };
        const Diffusion& d = ds.size() == 1 ? ds[0] : ds[std::size_t(i)];
        out.hamiltonians.push_back(
            Hamiltonian::manufactured(manufactured_potential(targets[std::size_t(i)], d, dim, cv, cg)));
    }
    return out;
}

double manufactured_residual(const ManufacturedErgodic& m, const Diffusion& d, const PeriodicGrid& grid) {
    int dim = grid.dim();
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Point x = grid.node(k);
        Point g = m.corrector.gradient(x);
        if (dim == 1) g[1] = 0.0;
        Matrix2 H = m.corrector.hessian(x);
        Matrix2 A = d.matrix(x, dim);
        double tr = 0.0;
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) tr += A[i * 2 + j] * H[j * 2 + i];
        worst = std::max(worst, std::abs(m.hamiltonian.value(x, g) - tr - m.ergodic_constant));
    }
    return worst;
}

}  // namespace hjlab
