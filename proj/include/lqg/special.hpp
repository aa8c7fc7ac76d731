#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lqg {

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LogGamma {
    double log_abs;  // log |Gamma(x)|
    int sign;        // sign of Gamma(x)
};

namespace detail {

// Lanczos (g = 7, n = 9), valid for x > 0.
inline double lanczos_log_gamma_pos(double x) {
    static const double g = 7.0;
    static const double coef[9] = {0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
                                   771.32342877765313,   -176.61502916214059, 12.507343278686905,
                                   -0.13857109526572012, 9.9843695780195716e-6,
                                   1.5056327351493116e-7};
    const double z = x - 1.0;
    double a = coef[0];
    for (int i = 1; i < 9; ++i) a += coef[i] / (z + i);
    const double t = z + g + 0.5;
    return 0.5 * std::log(2.0 * M_PI) + (z + 0.5) * std::log(t) - t + std::log(a);
}

}  // namespace detail

// log |Gamma(x)| with sign, via reflection for x <= 0.
inline LogGamma log_gamma(double x) {
    if (x > 0.0) return {detail::lanczos_log_gamma_pos(x), 1};
    if (x == std::floor(x))
        throw std::domain_error("log_gamma: pole at nonpositive integer");
    // Gamma(x) Gamma(1-x) = pi / sin(pi x)
    const double s = std::sin(M_PI * x);
    const double la = std::log(M_PI / std::fabs(s)) - detail::lanczos_log_gamma_pos(1.0 - x);
    return {la, s > 0.0 ? 1 : -1};
}

inline double gamma_fn(double x) {
    const LogGamma lg = log_gamma(x);
    return lg.sign * std::exp(lg.log_abs);
}

namespace detail {

inline double hyp2f1_series(double a, double b, double c, double z, int max_iter = 20000) {
    double term = 1.0, sum = 1.0;
    for (int n = 0; n < max_iter; ++n) {
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
        sum += term;
        if (std::fabs(term) <= 1e-17 * std::fabs(sum)) return sum;
    }
    throw numeric_error("hyp2f1: series did not converge");
}

}  // namespace detail

// Gauss hypergeometric 2F1(a, b; c; z) for real z in [0, 1).
// Direct series for z <= 1/2, linear z -> 1-z transformation otherwise.
inline double hyp2f1(double a, double b, double c, double z) {
    if (c <= 0.0 && c == std::floor(c))
        throw std::domain_error("hyp2f1: c must not be a nonpositive integer");
    if (!(z >= 0.0 && z < 1.0)) throw std::domain_error("hyp2f1: z must be in [0, 1)");
    if (z == 0.0) return 1.0;
    if (z <= 0.5) return detail::hyp2f1_series(a, b, c, z);

    const double cab = c - a - b;
    if (std::fabs(cab - std::round(cab)) < 1e-8)
        return detail::hyp2f1_series(a, b, c, z, 200000);  // slow but convergent for z < 1
    const double w = 1.0 - z;
    const LogGamma lc = log_gamma(c), lcab = log_gamma(cab), lca = log_gamma(c - a),
                   lcb = log_gamma(c - b), lmab = log_gamma(-cab), la = log_gamma(a),
                   lb = log_gamma(b);
    const double t1 = lc.sign * lcab.sign * lca.sign * lcb.sign *
                      std::exp(lc.log_abs + lcab.log_abs - lca.log_abs - lcb.log_abs) *
                      detail::hyp2f1_series(a, b, a + b - c + 1.0, w);
    const double t2 = lc.sign * lmab.sign * la.sign * lb.sign *
                      std::exp(lc.log_abs + lmab.log_abs - la.log_abs - lb.log_abs + cab * std::log(w)) *
                      detail::hyp2f1_series(c - a, c - b, cab + 1.0, w);
    return t1 + t2;
}

// 2F1 at the unit argument (Gauss), needs c - a - b > 0.
inline double hyp2f1_at_one(double a, double b, double c) {
    if (!(c - a - b > 0.0)) throw std::domain_error("hyp2f1_at_one: requires c - a - b > 0");
    const LogGamma lc = log_gamma(c), lcab = log_gamma(c - a - b), lca = log_gamma(c - a),
                   lcb = log_gamma(c - b);
    return lc.sign * lcab.sign * lca.sign * lcb.sign *
           std::exp(lc.log_abs + lcab.log_abs - lca.log_abs - lcb.log_abs);
}

// Regularized lower incomplete gamma P(a, x); Q = 1 - P.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::domain_error("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    const double lga = detail::lanczos_log_gamma_pos(a);
    if (x < a + 1.0) {
        // series
        double ap = a, sum = 1.0 / a, del = sum;
        for (int n = 0; n < 500; ++n) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15)
                return sum * std::exp(-x + a * std::log(x) - lga);
        }
        throw numeric_error("gamma_p: series did not converge");
    }
    // continued fraction for Q
    double b = x + 1.0 - a,
           c = 1.0 / std::numeric_limits<double>::min(), d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) {
            const double q = std::exp(-x + a * std::log(x) - lga) * h;
            return 1.0 - q;
        }
    }
    throw numeric_error("gamma_p: continued fraction did not converge");
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

// Survival function of the chi-square distribution with df degrees of freedom.
inline double chi_square_sf(double stat, double df) { return gamma_q(df / 2.0, stat / 2.0); }

}  // namespace lqg
