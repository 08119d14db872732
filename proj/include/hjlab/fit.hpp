#pragma once

#include <vector>

namespace hjlab {

/// Least-squares line through (log x, log y).
struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    /// Root-mean-square residual of the fit in log space.
    double residual = 0.0;
    std::size_t points = 0;
};

/// Throws ConfigurationError for fewer than 3 points or non-positive data.
LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

/// Smallest C with y_i <= C x_i^p for all i.
double envelope_constant(const std::vector<double>& x, const std::vector<double>& y, double p);

}  // namespace hjlab
