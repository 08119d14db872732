#include "hjlab/scheme.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

#include "hjlab/errors.hpp"

namespace hjlab {

namespace {

using Triplet = Eigen::Triplet<double>;
using Vec = Eigen::VectorXd;

Eigen::Map<const Vec> view(std::span<const double> s) { return Eigen::Map<const Vec>(s.data(), Eigen::Index(s.size())); }
Eigen::Map<Vec> view(std::span<double> s) { return Eigen::Map<Vec>(s.data(), Eigen::Index(s.size())); }

/// Divided difference of f(q) = kappa/2 max(q,0)^2 between qa and qb.
double secant_positive_part(double qa, double qb, double kappa) {
    if (qa == qb) return kappa * std::max(qa, 0.0);
    if (qa >= 0.0 && qb >= 0.0) return 0.5 * kappa * (qa + qb);
    if (qa <= 0.0 && qb <= 0.0) return 0.0;
    auto f = [kappa](double q) { return q > 0.0 ? 0.5 * kappa * q * q : 0.0; };
    return (f(qb) - f(qa)) / (qb - qa);
}

/// Divided difference of f(q) = kappa/2 min(q,0)^2.
double secant_negative_part(double qa, double qb, double kappa) {
    return -secant_positive_part(-qa, -qb, kappa);
}

void add_laplacian_row(const PeriodicGrid& g, std::size_t row_offset, std::size_t k, double coef,
                       std::vector<Triplet>& t) {
    double h2 = g.spacing() * g.spacing();
    double s = coef / h2;
    t.emplace_back(row_offset + k, row_offset + k, 2.0 * g.dim() * s);
    for (int a = 0; a < g.dim(); ++a) {
        t.emplace_back(row_offset + k, row_offset + g.shift(k, a, 1), -s);
        t.emplace_back(row_offset + k, row_offset + g.shift(k, a, -1), -s);
    }
}

}  // namespace

Discretization::Discretization(const ProblemSpec& problem, const PeriodicGrid& grid)
    : problem_(problem), grid_(grid), m_(problem.components()) {
    problem_.validate();
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    const double eta = problem_.eta;
    const double P = problem_.numerics.gradient_bound;

    std::vector<Triplet> trip;
    kappa_.resize(std::size_t(m_));
    potential_.resize(std::size_t(m_));
    drift_.resize(std::size_t(m_));
    for (int c = 0; c < m_; ++c) {
        const Hamiltonian& H = problem_.hamiltonians[std::size_t(c)];
        if (!H.separable())
            throw ConfigurationError("hamiltonian family '" + to_string(H.family()) + "' has no discretization");
        const Diffusion& D = problem_.diffusion(c);
        double kappa = H.kappa();
        kappa_[std::size_t(c)] = kappa;
        auto& V = potential_[std::size_t(c)];
        auto& b = drift_[std::size_t(c)];
        V = H.tabulate_potential(grid_);
        b.assign(std::size_t(dim) * n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            Point x = grid_.node(k);
            Point bx = H.drift(x);
            for (int a = 0; a < dim; ++a) b[a * n + k] = bx[a];
            if (D.is_matrix()) {
                // tr(A D2u) = div(A Du) - (div A).Du; the drift term goes into H.
                Point d = D.divergence(x, dim);
                double db = 0.0, dd = 0.0;
                for (int a = 0; a < dim; ++a) {
                    db += d[a] * bx[a];
                    dd += d[a] * d[a];
                    b[a * n + k] = bx[a] - d[a] / kappa;
                }
                V[k] += db - 0.5 * dd / kappa;
            }
        }
        for (std::size_t i = 0; i < b.size(); ++i) alpha_ = std::max(alpha_, kappa * (P + std::abs(b[i])));
        if (b.empty()) alpha_ = std::max(alpha_, kappa * P);

        const std::size_t off = std::size_t(c) * n;
        if (!D.is_matrix()) {
            for (std::size_t k = 0; k < n; ++k) add_laplacian_row(grid_, off, k, D.a(grid_.node(k)) + eta, trip);
        } else {
            std::vector<double> A(n * 4);
            for (std::size_t k = 0; k < n; ++k) {
                Matrix2 m = D.matrix(grid_.node(k), dim);
                std::copy(m.begin(), m.end(), A.begin() + long(4 * k));
            }
            double h2 = h * h;
            for (std::size_t k = 0; k < n; ++k) {
                for (int a = 0; a < dim; ++a) {
                    std::size_t kp = grid_.shift(k, a, 1), km = grid_.shift(k, a, -1);
                    double fp = 0.5 * (A[4 * k + 3 * a] + A[4 * kp + 3 * a]) / h2 + eta / h2;
                    double fm = 0.5 * (A[4 * k + 3 * a] + A[4 * km + 3 * a]) / h2 + eta / h2;
                    trip.emplace_back(off + k, off + k, fp + fm);
                    trip.emplace_back(off + k, off + kp, -fp);
                    trip.emplace_back(off + k, off + km, -fm);
                }
                if (dim == 2) {
                    // -[D1c(a12 D2c u) + D2c(a12 D1c u)], symmetric by construction.
                    const double w = -1.0 / (4.0 * h2);
                    for (int outer = 0; outer < 2; ++outer) {
                        int inner = 1 - outer;
                        for (int so : {1, -1}) {
                            std::size_t j = grid_.shift(k, outer, so);
                            double a12 = A[4 * j + 1];
                            if (a12 == 0.0) continue;
                            for (int si : {1, -1})
                                trip.emplace_back(off + k, off + grid_.shift(j, inner, si), w * so * si * a12);
                        }
                    }
                }
            }
        }
    }
    if (problem_.coupling) {
        const auto& C = *problem_.coupling;
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < m_; ++j) {
                double cij = C(i, j);
                if (cij == 0.0) continue;
                for (std::size_t k = 0; k < n; ++k) trip.emplace_back(i * n + k, j * n + k, cij);
            }
    }
    L_.resize(Eigen::Index(unknowns()), Eigen::Index(unknowns()));
    L_.setFromTriplets(trip.begin(), trip.end());
    L_.makeCompressed();

    if (m_ == 1) {
        const Diffusion& D = problem_.diffusion(0);
        if (D.is_matrix()) {
            D_.assign(n, 1.0);
            K_ = L_;
            split_ok_ = true;
        } else {
            D_.resize(n);
            split_ok_ = true;
            for (std::size_t k = 0; k < n; ++k) {
                D_[k] = D.a(grid_.node(k)) + eta;
                if (!(D_[k] > 0.0)) split_ok_ = false;
            }
            if (split_ok_) {
                std::vector<Triplet> kt;
                for (std::size_t k = 0; k < n; ++k) add_laplacian_row(grid_, 0, k, 1.0, kt);
                K_.resize(Eigen::Index(n), Eigen::Index(n));
                K_.setFromTriplets(kt.begin(), kt.end());
                K_.makeCompressed();
            }
        }
    }
}

double Discretization::cfl() const noexcept {
    if (problem_.numerics.cfl > 0.0) return problem_.numerics.cfl;
    return grid_.dim() == 1 ? 0.5 : 0.25;
}

double Discretization::stable_dt(double epsilon) const { return cfl() * epsilon * grid_.spacing() / alpha_; }

void Discretization::hamiltonian(std::span<const double> w, std::span<double> out) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    const double P = problem_.numerics.gradient_bound;
    const bool eo = problem_.numerics.flux == NumericalFlux::engquist_osher;
    for (int c = 0; c < m_; ++c) {
        const double kappa = kappa_[std::size_t(c)];
        const auto& V = potential_[std::size_t(c)];
        const auto& b = drift_[std::size_t(c)];
        const double* wc = w.data() + c * n;
        for (std::size_t k = 0; k < n; ++k) {
            double g = V[k];
            for (int a = 0; a < dim; ++a) {
                double pm = (wc[k] - wc[grid_.shift(k, a, -1)]) / h;
                double pp = (wc[grid_.shift(k, a, 1)] - wc[k]) / h;
                double ba = b[a * n + k];
                if (eo) {
                    double qm = std::max(pm - ba, 0.0);
                    double qp = std::min(pp - ba, 0.0);
                    g += 0.5 * kappa * (qm * qm + qp * qp);
                } else {
                    double q = 0.5 * (pm + pp) - ba;
                    double alpha = kappa * (P + std::abs(ba));
                    g += 0.5 * kappa * q * q - 0.5 * alpha * (pp - pm);
                }
            }
            out[c * n + k] = g;
        }
    }
}

std::vector<double> Discretization::residual(std::span<const double> w) const {
    std::vector<double> r(unknowns());
    hamiltonian(w, r);
    view(std::span<double>(r)) += L_ * view(w);
    return r;
}

Slopes Discretization::tangent_slopes(std::span<const double> w) const { return secant_slopes(w, w); }

Slopes Discretization::secant_slopes(std::span<const double> wa, std::span<const double> wb) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    const double P = problem_.numerics.gradient_bound;
    const bool eo = problem_.numerics.flux == NumericalFlux::engquist_osher;
    Slopes s;
    s.data.resize(unknowns() * std::size_t(dim) * 2);
    for (int c = 0; c < m_; ++c) {
        const double kappa = kappa_[std::size_t(c)];
        const auto& b = drift_[std::size_t(c)];
        const double* xa = wa.data() + c * n;
        const double* xb = wb.data() + c * n;
        for (int a = 0; a < dim; ++a)
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t kp = grid_.shift(k, a, 1), km = grid_.shift(k, a, -1);
                double ba = b[a * n + k];
                double pma = (xa[k] - xa[km]) / h, ppa = (xa[kp] - xa[k]) / h;
                double pmb = (xb[k] - xb[km]) / h, ppb = (xb[kp] - xb[k]) / h;
                std::size_t idx = slope_index(c, a, k);
                if (eo) {
                    s.data[idx] = secant_positive_part(pma - ba, pmb - ba, kappa);
                    s.data[idx + 1] = secant_negative_part(ppa - ba, ppb - ba, kappa);
                } else {
                    // quadratic in (p-, p+): the divided difference is the midpoint derivative
                    double q = 0.25 * (pma + ppa + pmb + ppb) - ba;
                    double alpha = kappa * (P + std::abs(ba));
                    s.data[idx] = 0.5 * kappa * q + 0.5 * alpha;
                    s.data[idx + 1] = 0.5 * kappa * q - 0.5 * alpha;
                }
            }
    }
    return s;
}

void Discretization::apply_slopes(const Slopes& s, std::span<const double> f, std::span<double> out) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    for (int c = 0; c < m_; ++c) {
        const double* fc = f.data() + c * n;
        double* oc = out.data() + c * n;
        for (std::size_t k = 0; k < n; ++k) oc[k] = 0.0;
        for (int a = 0; a < dim; ++a)
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t idx = slope_index(c, a, k);
                double sm = s.data[idx], sp = s.data[idx + 1];
                oc[k] += (sm * (fc[k] - fc[grid_.shift(k, a, -1)]) + sp * (fc[grid_.shift(k, a, 1)] - fc[k])) / h;
            }
    }
}

void Discretization::apply_slopes_transpose(const Slopes& s, std::span<const double> g,
                                            std::span<double> out) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    for (int c = 0; c < m_; ++c) {
        const double* gc = g.data() + c * n;
        double* oc = out.data() + c * n;
        for (std::size_t k = 0; k < n; ++k) oc[k] = 0.0;
        for (int a = 0; a < dim; ++a)
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t idx = slope_index(c, a, k);
                double sm = s.data[idx], sp = s.data[idx + 1];
                double gk = gc[k] / h;
                oc[k] += (sm - sp) * gk;
                oc[grid_.shift(k, a, -1)] -= sm * gk;
                oc[grid_.shift(k, a, 1)] += sp * gk;
            }
    }
}

SparseMatrix Discretization::slopes_matrix(const Slopes& s) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    std::vector<Triplet> t;
    t.reserve(unknowns() * std::size_t(dim) * 3);
    for (int c = 0; c < m_; ++c) {
        std::size_t off = std::size_t(c) * n;
        for (int a = 0; a < dim; ++a)
            for (std::size_t k = 0; k < n; ++k) {
                std::size_t idx = slope_index(c, a, k);
                double sm = s.data[idx] / h, sp = s.data[idx + 1] / h;
                t.emplace_back(off + k, off + k, sm - sp);
                t.emplace_back(off + k, off + grid_.shift(k, a, -1), -sm);
                t.emplace_back(off + k, off + grid_.shift(k, a, 1), sp);
            }
    }
    const auto nu = Eigen::Index(unknowns());
    SparseMatrix S(nu, nu);
    S.setFromTriplets(t.begin(), t.end());
    return S;
}

double Discretization::explicit_diagonal_min(const Slopes& s, double tau) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    const double h = grid_.spacing();
    double worst = 1.0;
    for (int c = 0; c < m_; ++c)
        for (std::size_t k = 0; k < n; ++k) {
            double d = 0.0;
            for (int a = 0; a < dim; ++a) {
                std::size_t idx = slope_index(c, a, k);
                d += s.data[idx] - s.data[idx + 1];
            }
            worst = std::min(worst, 1.0 - tau * d / h);
        }
    return worst;
}

double Discretization::max_gradient(std::span<const double> w) const {
    const std::size_t n = grid_.size();
    const int dim = grid_.dim();
    double worst = 0.0;
    for (int c = 0; c < m_; ++c) {
        std::span<const double> wc = w.subspan(c * n, n);
        for (std::size_t k = 0; k < n; ++k) {
            double s = 0.0;
            for (int a = 0; a < dim; ++a) {
                double d = std::max(std::abs(stencil::diff_minus(grid_, wc, k, a)),
                                    std::abs(stencil::diff_plus(grid_, wc, k, a)));
                s += d * d;
            }
            worst = std::max(worst, s);
        }
    }
    return std::sqrt(worst);
}

// ---------------------------------------------------------------------------
// StepSolver

struct StepSolver::Impl {
    LinearSolverKind kind;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>> cg;
    SparseMatrix S;
    Vec d_inv;
    mutable std::size_t iterations = 0;
};

StepSolver::StepSolver(std::shared_ptr<const Discretization> disc, double tau)
    : disc_(std::move(disc)), tau_(tau), impl_(std::make_unique<Impl>()) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigurationError("time step must be positive");
    const auto& num = disc_->problem().numerics;
    impl_->kind = num.linear_solver;
    const Eigen::Index n = Eigen::Index(disc_->unknowns());
    if (impl_->kind == LinearSolverKind::direct) {
        SparseMatrix M(n, n);
        M.setIdentity();
        M += tau * disc_->implicit_operator();
        M.makeCompressed();
        impl_->lu.analyzePattern(M);
        impl_->lu.factorize(M);
        if (impl_->lu.info() != Eigen::Success)
            throw LinearSolverError("sparse LU factorization failed: " + impl_->lu.lastErrorMessage());
    } else {
        if (!disc_->has_symmetric_split())
            throw ConfigurationError(
                "conjugate-gradient solver needs a single equation with a + eta > 0 or matrix diffusion");
        const auto& D = disc_->split_diagonal();
        Vec dinv(n);
        for (Eigen::Index i = 0; i < n; ++i) dinv[i] = 1.0 / D[std::size_t(i)];
        SparseMatrix S = tau * disc_->split_symmetric();
        for (Eigen::Index i = 0; i < n; ++i) S.coeffRef(i, i) += dinv[i];
        S.makeCompressed();
        impl_->S = std::move(S);
        impl_->d_inv = std::move(dinv);
        impl_->cg.setTolerance(num.solver_tolerance);
        impl_->cg.setMaxIterations(10 * n + 100);
        impl_->cg.compute(impl_->S);
        if (impl_->cg.info() != Eigen::Success) throw LinearSolverError("conjugate-gradient setup failed");
    }
}

StepSolver::~StepSolver() = default;

std::size_t StepSolver::iterations() const noexcept { return impl_->iterations; }

void StepSolver::solve(std::span<const double> b, std::span<double> x) const {
    if (impl_->kind == LinearSolverKind::direct) {
        view(x) = impl_->lu.solve(view(b));
        if (impl_->lu.info() != Eigen::Success) throw LinearSolverError("sparse LU solve failed");
        return;
    }
    // M = D S:  M x = b  <=>  S x = D^{-1} b
    Vec rhs = impl_->d_inv.cwiseProduct(view(b));
    view(x) = impl_->cg.solve(rhs);
    impl_->iterations += std::size_t(impl_->cg.iterations());
    if (impl_->cg.info() != Eigen::Success)
        throw LinearSolverError("conjugate gradient did not converge: error " + std::to_string(impl_->cg.error()));
}

void StepSolver::solve_transpose(std::span<const double> b, std::span<double> x) const {
    if (impl_->kind == LinearSolverKind::direct) {
        view(x) = impl_->lu.transpose().solve(view(b));
        return;
    }
    // M^T = S D:  y = S^{-1} b, x = D^{-1} y
    Vec y = impl_->cg.solve(view(b));
    impl_->iterations += std::size_t(impl_->cg.iterations());
    if (impl_->cg.info() != Eigen::Success)
        throw LinearSolverError("conjugate gradient did not converge: error " + std::to_string(impl_->cg.error()));
    auto xv = view(x);
    xv = impl_->d_inv.cwiseProduct(y);
    // M 1 = 1 gives sum(x) = sum(b) exactly; restore it after the inexact solve.
    double defect = (view(b).sum() - xv.sum()) / double(xv.size());
    xv.array() += defect;
}

std::vector<double> StepSolver::advance(std::span<const double> w, std::vector<double>* residual) const {
    std::vector<double> r = disc_->residual(w);
    std::vector<double> z(r.size());
    solve(r, z);
    std::vector<double> out(w.begin(), w.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tau_ * z[i];
    if (residual) *residual = std::move(r);
    return out;
}

// ---------------------------------------------------------------------------

ProblemSpec manufacture_discrete(const ProblemSpec& base, const PeriodicGrid& grid,
                                 const std::vector<SmoothFunction>& targets) {
    base.validate();
    const int m = base.components();
    if (int(targets.size()) != m) throw ConfigurationError("one manufactured target per component required");
    const std::size_t n = grid.size();
    std::vector<double> v(std::size_t(m) * n);
    for (int c = 0; c < m; ++c) {
        if (!targets[std::size_t(c)].value) throw ConfigurationError("manufactured target has no value function");
        for (std::size_t k = 0; k < n; ++k) v[c * n + k] = targets[std::size_t(c)].value(grid.node(k));
    }
    Discretization disc(base.with_eta(0.0), grid);
    std::vector<double> r = disc.residual(v);
    ProblemSpec out = base;
    for (int c = 0; c < m; ++c) {
        auto& H = out.hamiltonians[std::size_t(c)];
        std::vector<double> V = H.tabulate_potential(grid);
        for (std::size_t k = 0; k < n; ++k) V[k] -= H.shift() + r[c * n + k];
        H = H.with_node_potential(grid, std::move(V));
    }
    return out;
}

}  // namespace hjlab
