#pragma once
// Independent reference computations. Nothing here calls the library solvers.

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracle {

inline constexpr double pi = 3.14159265358979323846;

/// Composite Simpson on [0, 1] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, int n = 20000) {
    double h = 1.0 / n, s = f(0.0) + f(1.0);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return s * h / 3.0;
}

/// Effective Hamiltonian of H = |p - b|^2 / 2 + V(x) on the circle, b constant:
/// max V when the flat-level integral int sqrt(2 (max V - V)) already exceeds |b|,
/// otherwise the level c with int sqrt(2 (c - V)) = |b|.
inline double effective_hamiltonian_1d(const std::function<double(double)>& V, double b) {
    double vmax = -1e300;
    for (int i = 0; i <= 20000; ++i) vmax = std::max(vmax, V(i / 20000.0));
    auto level = [&](double c) { return simpson([&](double x) { return std::sqrt(std::max(0.0, 2.0 * (c - V(x)))); }); };
    if (level(vmax) >= std::abs(b)) return vmax;
    double lo = vmax, hi = vmax + 0.5 * b * b + 1.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        (level(mid) < std::abs(b) ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Backward-Euler discrete heat kernel on N periodic nodes:
/// value at node j after `steps` steps of (I + tau a (-Lap_h))^{-1} applied to the grid Dirac at x0.
inline double heat_kernel_1d(int N, double tau_a, int steps, int x0, int j) {
    double h = 1.0 / N, s = 0.0;
    for (int k = 0; k < N; ++k) {
        double lam = 4.0 / (h * h) * std::pow(std::sin(pi * k * h), 2);
        s += std::pow(1.0 / (1.0 + tau_a * lam), steps) * std::cos(2.0 * pi * k * (j - x0) * h);
    }
    return s;  // (1/N) * sum * (1/h) with h = 1/N
}

using Dense = std::vector<std::vector<double>>;

inline Dense matmul(const Dense& a, const Dense& b) {
    std::size_t n = a.size();
    Dense c(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

/// exp(s A) by scaling and squaring with a Taylor core.
inline Dense expm(const Dense& A, double s) {
    std::size_t n = A.size();
    int squarings = 10;
    double scale = s / std::pow(2.0, squarings);
    Dense term(n, std::vector<double>(n, 0.0)), sum(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) term[i][i] = sum[i][i] = 1.0;
    for (int k = 1; k < 30; ++k) {
        Dense next = matmul(term, A);
        for (auto& row : next)
            for (double& x : row) x *= scale / k;
        term = next;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) sum[i][j] += term[i][j];
    }
    for (int q = 0; q < squarings; ++q) sum = matmul(sum, sum);
    return sum;
}

inline std::vector<double> apply(const Dense& a, const std::vector<double>& x) {
    std::vector<double> y(a.size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
    return y;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double n = double(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace oracle
