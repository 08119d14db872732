#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "hjlab/adjoint.hpp"
#include "hjlab/ergodic.hpp"
#include "hjlab/fit.hpp"
#include "hjlab/forward.hpp"

namespace hjlab {

/// E(t) = int (G(w) + L w) . sigma dx at every stored time.
struct EnergyTrace {
    std::vector<double> times;
    std::vector<double> energy;
    double drift = 0.0;
};

EnergyTrace energy_trace(const Trajectory& traj, const AdjointDensity& sigma);

/// eps w_t(x0, T) against -(1/T) int_0^T E(t) dt (trapezoid).
struct RepresentationCheck {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
    std::size_t node = 0;
    int component = 0;
};

RepresentationCheck representation_check(const Trajectory& traj, const AdjointDensity& sigma);
/// Builds the linearization and adjoint itself.
RepresentationCheck representation_check(const Trajectory& traj, std::size_t x0, int component = 0);

/// Space-time integrals against sigma (trapezoid in time, node sum in space).
///   i1        (1/eps) |D(w - v)|^2
///   i2        eps^7 |D^2(w - v)|^2
///   ii        a^2 |D^2(w - v)|^2
///   esti1     (a + eta) |D^2 w|^2
///   general1  a^{ij} w_{ik} w_{jk} + eta |D^2 w|^2
///   general2  a^{ij} a^{ll} (v - w)_{ik} (v - w)_{jk}
///   coupling  sum_i sum_j |c_ij| [(w_j - v_j) - (w_i - v_i)]^2 sigma_i   (systems)
struct EstimateReport {
    double epsilon = 0.0;
    double eta = 0.0;
    double i1 = 0.0;
    double i2 = 0.0;
    double ii = 0.0;
    double esti1 = 0.0;
    double general1 = 0.0;
    double general2 = 0.0;
    std::optional<double> coupling;
};

EstimateReport key_estimates(const Trajectory& traj, const ErgodicSolution& ergodic, const AdjointDensity& sigma);
double coupling_estimate(const Trajectory& traj, const ErgodicSolution& ergodic, const AdjointDensity& sigma);

/// Initial data as a function of epsilon (so rows may start from v^eps).
using InitialData = std::function<std::vector<ScalarField>(const ProblemSpec&, const PeriodicGrid&)>;

struct RateFit {
    std::vector<double> epsilons;
    std::vector<double> values;
    std::optional<LogLogFit> fit;
    double exponent = 0.25;
    /// Smallest C with value <= C eps^exponent on every row.
    double envelope = 0.0;
};

/// eps ||w_t(., 1)||_inf for each epsilon (forward solve on [0, 1]).
RateFit rate_sweep(const ProblemSpec& family, const PeriodicGrid& grid, const std::vector<double>& epsilons,
                   const InitialData& u0, double exponent = 0.25);
/// eps ||w_t(., T)||_inf of a finished trajectory (max over components).
double rate_value(const Trajectory& traj);

struct LargeTimeSeries {
    std::vector<double> times;
    /// min over constants k of || u + Hbar t - (v + k) ||_inf
    std::vector<double> distance;
    /// || u - (v - Hbar t) ||_inf
    std::vector<double> raw;
    /// raw(t_j) <= raw(t_{j-1}) + slack
    std::vector<bool> monotone;
    bool all_monotone = true;
    /// 10 x cell residual plus accumulated rounding over one unit of time.
    double slack = 0.0;
};

/// Runs the undiscounted equation (eps = 1) to time T and samples integer times.
LargeTimeSeries large_time_convergence(const ProblemSpec& problem, const std::vector<ScalarField>& u0, double T,
                                       const ErgodicSolution& reference);

/// ||u(., 1) - w(., 1)||_inf between eta = 0 and eta = eta_regularized (default eps^4).
double closeness_check(const ProblemSpec& problem, const std::vector<ScalarField>& u0,
                       std::optional<double> eta_regularized = std::nullopt);

/// Everything measured for one epsilon of an estimate sweep.
struct EstimateRow {
    double epsilon = 0.0;
    double eta = 0.0;
    double dt = 0.0;
    std::size_t steps = 0;
    double hbar = 0.0;
    EstimateReport estimates;
    RepresentationCheck representation;
    double energy_drift = 0.0;
    double mass_error = 0.0;
    double min_sigma = 0.0;
    double rate_value = 0.0;
    std::optional<double> closeness;
    double max_gradient = 0.0;
    double min_explicit_diagonal = 0.0;
};

struct EstimateSweepOptions {
    InitialData initial;
    /// Start each row from its own corrector v^eps instead of `initial`.
    bool start_from_corrector = false;
    double ergodic_tol = 1e-9;
    ErgodicOptions ergodic;
    bool closeness = true;
    /// Adjoint source node; the argmax of |w_t(., 1)| when absent.
    std::optional<std::size_t> x0;
    std::optional<int> component;
    AdjointOptions adjoint;
};

std::vector<EstimateRow> estimate_sweep(const ProblemSpec& family, const PeriodicGrid& grid,
                                        const std::vector<double>& epsilons, const EstimateSweepOptions& opts);

/// Trapezoid weights for the stored times of a trajectory.
std::vector<double> trapezoid_weights(const std::vector<double>& times);

}  // namespace hjlab
