#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lqg/rng.hpp"

namespace lqg {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// log |x|_+ with |x|_+ = max(|x|, 1)
inline double log_plus(double x) {
    const double a = std::fabs(x);
    return a > 1.0 ? std::log(a) : 0.0;
}

// Boundary restriction of the half-plane Green function:
// G(x, y) = -2 log|x-y| + 2 log|x|_+ + 2 log|y|_+, and G(x, inf) = 2 log|x|_+.
inline double green_H(double x, double y) {
    if (std::isinf(y)) return 2.0 * log_plus(x);
    if (std::isinf(x)) return 2.0 * log_plus(y);
    if (x == y) throw std::domain_error("green_H: coincident points");
    return -2.0 * std::log(std::fabs(x - y)) + 2.0 * log_plus(x) + 2.0 * log_plus(y);
}

// Boundary Poisson kernel of H with the identity uniformization.
inline double poisson_kernel_H(double x, double y) {
    if (x == y) throw std::domain_error("poisson_kernel_H: coincident points");
    const double d = x - y;
    return 1.0 / (d * d);
}

// Real Moebius self-map of the upper half-plane, z -> (az+b)/(cz+d), ad-bc > 0.
struct MobiusMap {
    double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

    MobiusMap() = default;
    MobiusMap(double a_, double b_, double c_, double d_) : a(a_), b(b_), c(c_), d(d_) {
        if (!(a * d - b * c > 0.0)) throw std::invalid_argument("MobiusMap: need ad - bc > 0");
    }

    double det() const { return a * d - b * c; }

    double operator()(double x) const {
        if (std::isinf(x)) return c == 0.0 ? kInf : a / c;
        const double den = c * x + d;
        if (den == 0.0) return kInf;
        return (a * x + b) / den;
    }

    MobiusMap compose(const MobiusMap& g) const {  // (*this) after g
        return MobiusMap(a * g.a + b * g.c, a * g.b + b * g.d, c * g.a + d * g.c,
                         c * g.b + d * g.d);
    }

    MobiusMap inverse() const { return MobiusMap(d, -b, -c, a); }
};

// Derivative with the half-plane conventions at infinity: if f(s) = inf the
// chart -1/w is used at the image, if s = inf the chart -1/z is used at the
// source, giving f'(x) = lambda^{-1} and f'(inf) = lambda for
// f(z) = a + lambda/(x - z), and f'(inf) = r^{-1} for f(z) = a + r z.
inline double mobius_derivative(const MobiusMap& f, double s) {
    const double det = f.det();
    if (std::isinf(s)) {
        if (f.c == 0.0) return f.d / f.a;     // f(inf) = inf
        return det / (f.c * f.c);             // f(inf) finite
    }
    const double den = f.c * s + f.d;
    if (den == 0.0) {                          // f(s) = inf
        const double num = f.a * s + f.b;
        return det / (num * num);
    }
    return det / (den * den);
}

// z = ((x2-x1)(x4-x3)) / ((x3-x1)(x4-x2)) in (0,1) for ordered points.
inline double cross_ratio(double x1, double x2, double x3, double x4) {
    if (!(x1 < x2 && x2 < x3 && x3 < x4))
        throw std::invalid_argument("cross_ratio: points must be strictly increasing");
    return ((x2 - x1) * (x4 - x3)) / ((x3 - x1) * (x4 - x2));
}

// Random half-plane Moebius map, bounded away from degenerate coefficients.
inline MobiusMap random_mobius(Rng& rng) {
    for (;;) {
        const double a = rng.uniform(0.5, 2.0);
        const double b = rng.uniform(-1.0, 1.0);
        const double c = rng.uniform(-0.3, 0.3);
        const double d = rng.uniform(0.7, 1.5);
        if (a * d - b * c > 0.1) return MobiusMap(a, b, c, d);
    }
}

}  // namespace lqg
