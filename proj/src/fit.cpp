#include "hjlab/fit.hpp"

#include <algorithm>
#include <cmath>

#include "hjlab/errors.hpp"

namespace hjlab {

LogLogFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ConfigurationError("fit: x and y differ in length");
    if (x.size() < 3) throw ConfigurationError("fit: at least 3 points required, got " + std::to_string(x.size()));
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ConfigurationError("fit: data must be positive");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
        sx += lx.back();
        sy += ly.back();
        sxx += lx.back() * lx.back();
        sxy += lx.back() * ly.back();
    }
    double den = n * sxx - sx * sx;
    if (den == 0.0) throw ConfigurationError("fit: x values are all equal");
    LogLogFit f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        double e = ly[i] - (f.intercept + f.slope * lx[i]);
        ss += e * e;
    }
    f.residual = std::sqrt(ss / n);
    f.points = x.size();
    return f;
}

double envelope_constant(const std::vector<double>& x, const std::vector<double>& y, double p) {
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) c = std::max(c, y[i] / std::pow(x[i], p));
    return c;
}

}  // namespace hjlab
