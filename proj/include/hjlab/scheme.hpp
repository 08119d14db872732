#pragma once

#include <Eigen/SparseCore>
#include <memory>
#include <span>
#include <vector>

#include "hjlab/grid.hpp"
#include "hjlab/problem.hpp"

namespace hjlab {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Slopes of the numerical Hamiltonian with respect to its one-sided
/// differences, laid out [component][axis][node][minus|plus].
/// Monotone fluxes give minus >= 0 >= plus.
struct Slopes {
    std::vector<double> data;
};

/// Node tables and sparse operators for one (problem, grid) pair.
///
/// The semi-discrete equation is  eps w_t = -R(w),  R(w) = G(w) + L w, where G is
/// the monotone numerical Hamiltonian (explicit part) and L collects the
/// diffusion -(a+eta)Lap (scalar kinds) or -div(A grad) - eta Lap (matrix kind)
/// together with the coupling C (x) I. For the matrix kind the first-order
/// remainder (div A).Du of the divergence splitting is folded into G by
/// shifting the drift and potential of the quadratic Hamiltonian.
class Discretization {
public:
    Discretization(const ProblemSpec& problem, const PeriodicGrid& grid);

    const PeriodicGrid& grid() const noexcept { return grid_; }
    const ProblemSpec& problem() const noexcept { return problem_; }
    int components() const noexcept { return m_; }
    std::size_t unknowns() const noexcept { return std::size_t(m_) * grid_.size(); }

    /// G(w) at every node of every component.
    void hamiltonian(std::span<const double> w, std::span<double> out) const;
    /// R(w) = G(w) + L w.
    std::vector<double> residual(std::span<const double> w) const;
    /// L (diffusion plus coupling), size unknowns x unknowns.
    const SparseMatrix& implicit_operator() const noexcept { return L_; }

    Slopes tangent_slopes(std::span<const double> w) const;
    /// Exact divided differences: G(wb) - G(wa) = S (wb - wa).
    Slopes secant_slopes(std::span<const double> wa, std::span<const double> wb) const;
    /// out = S f.
    void apply_slopes(const Slopes& s, std::span<const double> f, std::span<double> out) const;
    /// out = S^T g.
    void apply_slopes_transpose(const Slopes& s, std::span<const double> g, std::span<double> out) const;
    /// S as a sparse matrix (used by the Newton solver and tests).
    SparseMatrix slopes_matrix(const Slopes& s) const;
    /// min over nodes of the diagonal of I - tau S; >= 0 means the explicit part is monotone.
    double explicit_diagonal_min(const Slopes& s, double tau) const;

    /// Dissipation constant max kappa (P + |b|) over nodes and axes.
    double dissipation() const noexcept { return alpha_; }
    /// Courant number actually used (configured value or the dimension default).
    double cfl() const noexcept;
    /// Largest stable time step for the given epsilon.
    double stable_dt(double epsilon) const;

    /// Decomposition L = D K with D > 0 diagonal and K symmetric; only for
    /// single-equation problems with eta > 0 or matrix diffusion.
    bool has_symmetric_split() const noexcept { return split_ok_; }
    const std::vector<double>& split_diagonal() const noexcept { return D_; }
    const SparseMatrix& split_symmetric() const noexcept { return K_; }

    /// max over nodes and components of the larger one-sided gradient norm.
    double max_gradient(std::span<const double> w) const;

private:
    ProblemSpec problem_;
    PeriodicGrid grid_;
    int m_;
    std::vector<double> kappa_;
    std::vector<std::vector<double>> potential_;
    std::vector<std::vector<double>> drift_;  // [component][axis * n + k]
    SparseMatrix L_;
    SparseMatrix K_;
    std::vector<double> D_;
    bool split_ok_ = false;
    double alpha_ = 0.0;

    std::size_t slope_index(int c, int axis, std::size_t k) const {
        return ((std::size_t(c) * grid_.dim() + axis) * grid_.size() + k) * 2;
    }
};

/// Factorization of M = I + tau L and the IMEX update w' = w - tau M^{-1} R(w).
class StepSolver {
public:
    StepSolver(std::shared_ptr<const Discretization> disc, double tau);
    ~StepSolver();
    StepSolver(const StepSolver&) = delete;
    StepSolver& operator=(const StepSolver&) = delete;

    const Discretization& discretization() const noexcept { return *disc_; }
    std::shared_ptr<const Discretization> shared_discretization() const noexcept { return disc_; }
    double tau() const noexcept { return tau_; }

    /// x = M^{-1} b.
    void solve(std::span<const double> b, std::span<double> x) const;
    /// x = M^{-T} b.
    void solve_transpose(std::span<const double> b, std::span<double> x) const;
    /// One IMEX step from w; returns the residual R(w) in `residual` if non-null.
    std::vector<double> advance(std::span<const double> w, std::vector<double>* residual = nullptr) const;

    /// Cumulative iterative-solver iterations (0 for the direct solver).
    std::size_t iterations() const noexcept;

private:
    struct Impl;
    std::shared_ptr<const Discretization> disc_;
    double tau_;
    std::unique_ptr<Impl> impl_;
};

/// Discrete manufactured problem: replaces each potential by node values so that
/// the targets solve the discrete cell problem with constant 0 at eta = 0.
ProblemSpec manufacture_discrete(const ProblemSpec& base, const PeriodicGrid& grid,
                                 const std::vector<SmoothFunction>& targets);

}  // namespace hjlab
