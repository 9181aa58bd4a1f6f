#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>

namespace levyscore {

/// Adaptive Gauss-Kronrod integral of f over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b) {
    if (a == b) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-11);
}

/// Integral over [a, b] with 0 < a < b, taken in log u so that densities
/// with a power singularity at the origin are resolved evenly.
inline double integrate_positive(const std::function<double(double)>& f, double a, double b) {
    if (!(a < b)) return 0.0;
    auto g = [&f](double v) {
        const double u = std::exp(v);
        return f(u) * u;
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, std::log(a), std::log(b),
                                                                        15, 1e-11);
}

}  // namespace levyscore
