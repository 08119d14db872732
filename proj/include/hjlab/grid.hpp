#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace hjlab {

using Point = std::array<double, 2>;

/// Uniform periodic lattice on the unit torus, d = 1 or 2, N nodes per axis.
/// Node k has multi-index (i, j) with k = i + N*j; coordinates are i/N, j/N.
class PeriodicGrid {
public:
    PeriodicGrid(int dim, int points_per_axis);

    int dim() const noexcept { return dim_; }
    int points_per_axis() const noexcept { return n_; }
    double spacing() const noexcept { return h_; }
    std::size_t size() const noexcept { return size_; }
    /// h^dim, the weight of one node in the periodic quadrature.
    double cell_volume() const noexcept { return vol_; }

    /// Flat index of (i, j); both arguments wrap modulo N.
    std::size_t index(long i, long j = 0) const noexcept;
    std::array<int, 2> multi_index(std::size_t k) const noexcept;
    /// Neighbour of k displaced by `offset` nodes along `axis`, with wrap-around.
    std::size_t shift(std::size_t k, int axis, int offset) const noexcept;
    Point node(std::size_t k) const noexcept;

    bool operator==(const PeriodicGrid&) const = default;

private:
    int dim_;
    int n_;
    double h_;
    double vol_;
    std::size_t size_;
};

PeriodicGrid make_grid(int dim, int points_per_axis);

/// Node samples of a scalar quantity.
class ScalarField {
public:
    ScalarField(const PeriodicGrid& grid, std::vector<double> values);

    static ScalarField constant(const PeriodicGrid& grid, double value);
    static ScalarField sample(const PeriodicGrid& grid, const std::function<double(const Point&)>& f);
    /// Grid Dirac: 1/h^dim at node k, zero elsewhere.
    static ScalarField dirac(const PeriodicGrid& grid, std::size_t k);

    const PeriodicGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double operator[](std::size_t k) const { return values_[k]; }
    std::size_t size() const noexcept { return values_.size(); }

    double max_abs() const;
    double min() const;
    double max() const;

    ScalarField operator+(const ScalarField& o) const;
    ScalarField operator-(const ScalarField& o) const;
    ScalarField operator+(double c) const;
    ScalarField operator*(double c) const;

private:
    PeriodicGrid grid_;
    std::vector<double> values_;
};

/// One value per node per axis, stored axis-major.
class VectorField {
public:
    VectorField(const PeriodicGrid& grid, std::vector<double> values);

    const PeriodicGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double at(int axis, std::size_t k) const { return values_[axis * grid_.size() + k]; }
    std::span<const double> component(int axis) const;
    /// Pointwise Euclidean norm squared.
    ScalarField norm_squared() const;
    double max_norm() const;

private:
    PeriodicGrid grid_;
    std::vector<double> values_;
};

/// Symmetric dim x dim matrix per node, no sign condition (Hessians).
class TensorField {
public:
    TensorField(const PeriodicGrid& grid, std::vector<double> values);

    const PeriodicGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double at(std::size_t k, int i, int j) const;
    /// Pointwise Frobenius norm squared.
    ScalarField frobenius_squared() const;

private:
    PeriodicGrid grid_;
    std::vector<double> values_;
};

/// Symmetric nonnegative dim x dim matrix per node (diffusion matrices).
class MatrixField {
public:
    static constexpr double eigen_tolerance = 1e-12;

    MatrixField(const PeriodicGrid& grid, std::vector<double> values);

    static MatrixField identity(const PeriodicGrid& grid);
    static MatrixField sample(const PeriodicGrid& grid,
                              const std::function<std::array<double, 4>(const Point&)>& a);

    const PeriodicGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    double at(std::size_t k, int i, int j) const;

private:
    PeriodicGrid grid_;
    std::vector<double> values_;
};

enum class DifferenceScheme { central, upwind_plus, upwind_minus };

VectorField gradient(const ScalarField& f, DifferenceScheme scheme = DifferenceScheme::central);
ScalarField laplacian(const ScalarField& f);
/// Central second differences on the diagonal, 4-point cross stencil off it.
TensorField hessian(const ScalarField& f);
ScalarField contract_second_derivatives(const ScalarField& f, const MatrixField& a);
double integrate(const ScalarField& f);
/// Quadrature pairing h^dim * sum f g.
double inner(const ScalarField& f, const ScalarField& g);

/// Raw-vector helpers shared by the solvers; vectors are node-indexed.
namespace stencil {
double diff_plus(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis);
double diff_minus(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis);
double diff_central(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis);
double second(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis);
double cross(const PeriodicGrid& g, std::span<const double> f, std::size_t k);
}  // namespace stencil

}  // namespace hjlab
