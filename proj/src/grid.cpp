#include "hjlab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hjlab/errors.hpp"

namespace hjlab {

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw ConfigurationError(std::string(what) + ": non-finite entry");
}

void require_same_grid(const PeriodicGrid& a, const PeriodicGrid& b) {
    if (!(a == b)) throw ConfigurationError("fields live on different grids");
}

}  // namespace

PeriodicGrid::PeriodicGrid(int dim, int points_per_axis) : dim_(dim), n_(points_per_axis) {
    if (dim != 1 && dim != 2) throw ConfigurationError("grid dim must be 1 or 2, got " + std::to_string(dim));
    if (points_per_axis < 4)
        throw ConfigurationError("grid needs at least 4 points per axis, got " + std::to_string(points_per_axis));
    h_ = 1.0 / n_;
    vol_ = dim == 1 ? h_ : h_ * h_;
    size_ = dim == 1 ? std::size_t(n_) : std::size_t(n_) * std::size_t(n_);
}

std::size_t PeriodicGrid::index(long i, long j) const noexcept {
    long n = n_;
    long ii = ((i % n) + n) % n;
    if (dim_ == 1) return std::size_t(ii);
    long jj = ((j % n) + n) % n;
    return std::size_t(ii + n * jj);
}

std::array<int, 2> PeriodicGrid::multi_index(std::size_t k) const noexcept {
    if (dim_ == 1) return {int(k), 0};
    return {int(k % std::size_t(n_)), int(k / std::size_t(n_))};
}

std::size_t PeriodicGrid::shift(std::size_t k, int axis, int offset) const noexcept {
    auto ij = multi_index(k);
    ij[axis] += offset;
    return index(ij[0], ij[1]);
}

Point PeriodicGrid::node(std::size_t k) const noexcept {
    auto ij = multi_index(k);
    return {double(ij[0]) / n_, dim_ == 2 ? double(ij[1]) / n_ : 0.0};
}

PeriodicGrid make_grid(int dim, int points_per_axis) { return PeriodicGrid(dim, points_per_axis); }

// ---------------------------------------------------------------------------
// ScalarField

ScalarField::ScalarField(const PeriodicGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw ConfigurationError("scalar field size does not match grid");
    require_finite(values_, "scalar field");
}

ScalarField ScalarField::constant(const PeriodicGrid& grid, double value) {
    return ScalarField(grid, std::vector<double>(grid.size(), value));
}

ScalarField ScalarField::sample(const PeriodicGrid& grid, const std::function<double(const Point&)>& f) {
    std::vector<double> v(grid.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(grid.node(k));
    return ScalarField(grid, std::move(v));
}

ScalarField ScalarField::dirac(const PeriodicGrid& grid, std::size_t k) {
    if (k >= grid.size()) throw ConfigurationError("dirac node out of range");
    std::vector<double> v(grid.size(), 0.0);
    v[k] = 1.0 / grid.cell_volume();
    return ScalarField(grid, std::move(v));
}

double ScalarField::max_abs() const {
    double m = 0.0;
    for (double x : values_) m = std::max(m, std::abs(x));
    return m;
}

double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

ScalarField ScalarField::operator+(const ScalarField& o) const {
    require_same_grid(grid_, o.grid_);
    std::vector<double> v(values_);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += o.values_[k];
    return ScalarField(grid_, std::move(v));
}

ScalarField ScalarField::operator-(const ScalarField& o) const {
    require_same_grid(grid_, o.grid_);
    std::vector<double> v(values_);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= o.values_[k];
    return ScalarField(grid_, std::move(v));
}

ScalarField ScalarField::operator+(double c) const {
    std::vector<double> v(values_);
    for (double& x : v) x += c;
    return ScalarField(grid_, std::move(v));
}

ScalarField ScalarField::operator*(double c) const {
    std::vector<double> v(values_);
    for (double& x : v) x *= c;
    return ScalarField(grid_, std::move(v));
}

// ---------------------------------------------------------------------------
// VectorField, TensorField, MatrixField

VectorField::VectorField(const PeriodicGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size() * std::size_t(grid_.dim()))
        throw ConfigurationError("vector field size does not match grid");
    require_finite(values_, "vector field");
}

std::span<const double> VectorField::component(int axis) const {
    return std::span<const double>(values_).subspan(axis * grid_.size(), grid_.size());
}

ScalarField VectorField::norm_squared() const {
    std::vector<double> v(grid_.size(), 0.0);
    for (int a = 0; a < grid_.dim(); ++a)
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += at(a, k) * at(a, k);
    return ScalarField(grid_, std::move(v));
}

double VectorField::max_norm() const { return std::sqrt(norm_squared().max()); }

TensorField::TensorField(const PeriodicGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    std::size_t d = std::size_t(grid_.dim());
    if (values_.size() != grid_.size() * d * d) throw ConfigurationError("tensor field size does not match grid");
    require_finite(values_, "tensor field");
}

double TensorField::at(std::size_t k, int i, int j) const {
    int d = grid_.dim();
    return values_[k * d * d + i * d + j];
}

ScalarField TensorField::frobenius_squared() const {
    int d = grid_.dim();
    std::vector<double> v(grid_.size(), 0.0);
    for (std::size_t k = 0; k < v.size(); ++k)
        for (int e = 0; e < d * d; ++e) v[k] += values_[k * d * d + e] * values_[k * d * d + e];
    return ScalarField(grid_, std::move(v));
}

MatrixField::MatrixField(const PeriodicGrid& grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    int d = grid_.dim();
    if (values_.size() != grid_.size() * std::size_t(d * d))
        throw ConfigurationError("matrix field size does not match grid");
    require_finite(values_, "matrix field");
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        const double* m = &values_[k * d * d];
        if (d == 1) {
            if (m[0] < -eigen_tolerance) throw ConfigurationError("matrix field not nonnegative at node " + std::to_string(k));
            continue;
        }
        if (m[1] != m[2]) throw ConfigurationError("matrix field not symmetric at node " + std::to_string(k));
        double tr = m[0] + m[3];
        double det = m[0] * m[3] - m[1] * m[2];
        double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        if (0.5 * tr - disc < -eigen_tolerance)
            throw ConfigurationError("matrix field not nonnegative at node " + std::to_string(k));
    }
}

MatrixField MatrixField::identity(const PeriodicGrid& grid) {
    return sample(grid, [](const Point&) { return std::array<double, 4>{1.0, 0.0, 0.0, 1.0}; });
}

MatrixField MatrixField::sample(const PeriodicGrid& grid,
                                const std::function<std::array<double, 4>(const Point&)>& a) {
    int d = grid.dim();
    std::vector<double> v(grid.size() * d * d);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto m = a(grid.node(k));
        if (d == 1) {
            v[k] = m[0];
        } else {
            std::copy(m.begin(), m.end(), v.begin() + long(4 * k));
        }
    }
    return MatrixField(grid, std::move(v));
}

double MatrixField::at(std::size_t k, int i, int j) const {
    int d = grid_.dim();
    return values_[k * d * d + i * d + j];
}

// ---------------------------------------------------------------------------
// Stencils

namespace stencil {

double diff_plus(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis) {
    return (f[g.shift(k, axis, 1)] - f[k]) / g.spacing();
}

double diff_minus(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis) {
    return (f[k] - f[g.shift(k, axis, -1)]) / g.spacing();
}

double diff_central(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis) {
    return (f[g.shift(k, axis, 1)] - f[g.shift(k, axis, -1)]) / (2.0 * g.spacing());
}

double second(const PeriodicGrid& g, std::span<const double> f, std::size_t k, int axis) {
    double h = g.spacing();
    return (f[g.shift(k, axis, 1)] - 2.0 * f[k] + f[g.shift(k, axis, -1)]) / (h * h);
}

double cross(const PeriodicGrid& g, std::span<const double> f, std::size_t k) {
    auto ij = g.multi_index(k);
    double h = g.spacing();
    double pp = f[g.index(ij[0] + 1, ij[1] + 1)];
    double mm = f[g.index(ij[0] - 1, ij[1] - 1)];
    double pm = f[g.index(ij[0] + 1, ij[1] - 1)];
    double mp = f[g.index(ij[0] - 1, ij[1] + 1)];
    return (pp - pm - mp + mm) / (4.0 * h * h);
}

}  // namespace stencil

VectorField gradient(const ScalarField& f, DifferenceScheme scheme) {
    const auto& g = f.grid();
    std::span<const double> v(f.values());
    std::vector<double> out(g.size() * g.dim());
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t k = 0; k < g.size(); ++k) {
            double d = 0.0;
            switch (scheme) {
                case DifferenceScheme::central: d = stencil::diff_central(g, v, k, a); break;
                case DifferenceScheme::upwind_plus: d = stencil::diff_plus(g, v, k, a); break;
                case DifferenceScheme::upwind_minus: d = stencil::diff_minus(g, v, k, a); break;
            }
            out[a * g.size() + k] = d;
        }
    return VectorField(g, std::move(out));
}

ScalarField laplacian(const ScalarField& f) {
    const auto& g = f.grid();
    std::span<const double> v(f.values());
    std::vector<double> out(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k)
        for (int a = 0; a < g.dim(); ++a) out[k] += stencil::second(g, v, k, a);
    return ScalarField(g, std::move(out));
}

TensorField hessian(const ScalarField& f) {
    const auto& g = f.grid();
    int d = g.dim();
    std::span<const double> v(f.values());
    std::vector<double> out(g.size() * d * d);
    for (std::size_t k = 0; k < g.size(); ++k) {
        double* m = &out[k * d * d];
        m[0] = stencil::second(g, v, k, 0);
        if (d == 2) {
            m[3] = stencil::second(g, v, k, 1);
            m[1] = m[2] = stencil::cross(g, v, k);
        }
    }
    return TensorField(g, std::move(out));
}

ScalarField contract_second_derivatives(const ScalarField& f, const MatrixField& a) {
    require_same_grid(f.grid(), a.grid());
    const auto& g = f.grid();
    int d = g.dim();
    std::span<const double> v(f.values());
    std::vector<double> out(g.size(), 0.0);
    for (std::size_t k = 0; k < g.size(); ++k) {
        double s = a.at(k, 0, 0) * stencil::second(g, v, k, 0);
        if (d == 2) {
            s += a.at(k, 1, 1) * stencil::second(g, v, k, 1);
            double off = a.at(k, 0, 1);
            if (off != 0.0) s += 2.0 * off * stencil::cross(g, v, k);
        }
        out[k] = s;
    }
    return ScalarField(g, std::move(out));
}

double integrate(const ScalarField& f) {
    double s = 0.0;
    for (double x : f.values()) s += x;
    return s * f.grid().cell_volume();
}

double inner(const ScalarField& f, const ScalarField& g) {
    require_same_grid(f.grid(), g.grid());
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += f[k] * g[k];
    return s * f.grid().cell_volume();
}

}  // namespace hjlab
