#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lqg/params.hpp"
#include "lqg/rng.hpp"
#include "lqg/geometry.hpp"
#include "lqg/special.hpp"

namespace lqg {

// ---------------------------------------------------------------------------
// one-sided stable laws
// ---------------------------------------------------------------------------

// Stable subordinator marginal with E[exp(-lam S)] = exp(-lam^theta),
// sampled by Kanter's representation S = (A(U)/E)^{(1-theta)/theta}.
inline double stable_subordinator_unit(double theta, Rng& rng) {
    if (!(theta > 0.0 && theta < 1.0))
        throw std::invalid_argument("stable_subordinator_unit: theta must be in (0,1)");
    const double u = rng.uniform(0.0, M_PI);
    const double e = rng.exponential();
    const double A = std::pow(std::sin(theta * u), theta / (1.0 - theta)) *
                     std::sin((1.0 - theta) * u) /
                     std::pow(std::sin(u), 1.0 / (1.0 - theta));
    return std::pow(A / e, (1.0 - theta) / theta);
}

struct SubordinatorPath {
    double theta = 0.0;
    std::vector<double> times;
    std::vector<double> values;
};

// Y_t with independent increments, Y_t - Y_s =d (t-s)^{1/theta} S.
inline SubordinatorPath sample_stable_subordinator(const ModelParams& p,
                                                   const std::vector<double>& times, Rng& rng) {
    SubordinatorPath out;
    out.theta = p.sub_index;
    out.times = times;
    out.values.reserve(times.size());
    double prev_t = 0.0, y = 0.0;
    for (double t : times) {
        if (!(t > prev_t))
            throw std::invalid_argument("sample_stable_subordinator: times must be positive increasing");
        y += std::pow(t - prev_t, 1.0 / p.sub_index) * stable_subordinator_unit(p.sub_index, rng);
        out.values.push_back(y);
        prev_t = t;
    }
    return out;
}

// Spectrally positive strictly stable marginal normalized so that
// E[exp(-lam X_1)] = exp(lam^alpha); Chambers-Mallows-Stuck with skewness 1.
inline double spectrally_positive_stable_unit(double alpha, Rng& rng) {
    if (!(alpha > 1.0 && alpha < 2.0))
        throw std::invalid_argument("spectrally_positive_stable_unit: alpha must be in (1,2)");
    const double zeta = std::tan(M_PI * alpha / 2.0);
    const double B = std::atan(zeta) / alpha;
    const double S = std::pow(1.0 + zeta * zeta, 0.5 / alpha);
    const double u = rng.uniform(-M_PI / 2.0, M_PI / 2.0);
    const double w = rng.exponential();
    const double x = S * std::sin(alpha * (u + B)) / std::pow(std::cos(u), 1.0 / alpha) *
                     std::pow(std::cos(u - alpha * (u + B)) / w, (1.0 - alpha) / alpha);
    const double sigma = std::pow(std::fabs(std::cos(M_PI * alpha / 2.0)), 1.0 / alpha);
    return sigma * x;
}

// ---------------------------------------------------------------------------
// discretized spectrally positive stable path with explicit macroscopic jumps
// ---------------------------------------------------------------------------

struct LevyJump {
    double time;
    double size;
};

struct LevyPath {
    double dt = 0.0;
    double T = 0.0;
    double jump_floor = 0.0;
    std::vector<double> values;  // X_0 = 0 at index 0, grid step dt
    std::vector<LevyJump> jumps;

    double value_at(std::size_t k) const { return values[k]; }
    std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }
};

struct LevyPathConfig {
    double dt = 1e-3;
    double T = 1.0;
    // Jumps >= floor are kept as explicit compound-Poisson events, the rest are
    // folded into the Gaussian grid increment with matched variance and drift.
    // floor <= 0 selects an automatic value with about one event per two steps.
    double jump_floor = 0.0;
};

namespace detail {

struct StableSplit {
    double c_alpha;    // Levy density c x^{-1-alpha} with psi(lam) = lam^alpha
    double rate;       // intensity of jumps >= floor
    double mean_big;   // integral of x over jumps >= floor
    double var_small;  // integral of x^2 over jumps < floor
};

inline StableSplit stable_split(double alpha, double floor) {
    StableSplit s;
    s.c_alpha = alpha * (alpha - 1.0) / gamma_fn(2.0 - alpha);
    s.rate = s.c_alpha * std::pow(floor, -alpha) / alpha;
    s.mean_big = s.c_alpha * std::pow(floor, 1.0 - alpha) / (alpha - 1.0);
    s.var_small = s.c_alpha * std::pow(floor, 2.0 - alpha) / (2.0 - alpha);
    return s;
}

inline double auto_jump_floor(double alpha, double dt) {
    // rate(floor) * dt = 1/2
    const double c = alpha * (alpha - 1.0) / gamma_fn(2.0 - alpha);
    return std::pow(2.0 * c * dt / alpha, 1.0 / alpha);
}

}  // namespace detail

inline LevyPath sample_spectrally_positive_stable(const ModelParams& p, const LevyPathConfig& cfg,
                                                  Rng& rng) {
    if (!(cfg.dt > 0.0 && cfg.T > 0.0))
        throw std::invalid_argument("sample_spectrally_positive_stable: dt, T must be > 0");
    const double alpha = p.alpha;
    const double floor =
        cfg.jump_floor > 0.0 ? cfg.jump_floor : detail::auto_jump_floor(alpha, cfg.dt);
    const auto split = detail::stable_split(alpha, floor);
    const double sd_small = std::sqrt(split.var_small * cfg.dt);

    LevyPath path;
    path.dt = cfg.dt;
    path.T = cfg.T;
    path.jump_floor = floor;
    const std::size_t n = static_cast<std::size_t>(std::ceil(cfg.T / cfg.dt));
    path.values.reserve(n + 1);
    path.values.push_back(0.0);

    double x = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double dx = sd_small * rng.normal() - split.mean_big * cfg.dt;
        const long m = rng.poisson(split.rate * cfg.dt);
        for (long j = 0; j < m; ++j) {
            const double size = floor * std::pow(rng.uniform(), -1.0 / alpha);
            dx += size;
            path.jumps.push_back({(k + 1) * cfg.dt, size});
        }
        x += dx;
        path.values.push_back(x);
    }
    return path;
}

// First grid time at which the spectrally positive path reaches -level
// (downward passage is continuous, so the grid resolution is the only bias).
// Returns cap when the budget is exhausted first.
inline double levy_first_passage_below(const ModelParams& p, double level, double dt, double cap,
                                       Rng& rng, double jump_floor = 0.0) {
    const double floor = jump_floor > 0.0 ? jump_floor : detail::auto_jump_floor(p.alpha, dt);
    const auto split = detail::stable_split(p.alpha, floor);
    const double sd = std::sqrt(split.var_small * dt);
    double x = 0.0, t = 0.0;
    while (t < cap) {
        double dx = sd * rng.normal() - split.mean_big * dt;
        const long m = rng.poisson(split.rate * dt);
        for (long j = 0; j < m; ++j) dx += floor * std::pow(rng.uniform(), -1.0 / p.alpha);
        x += dx;
        t += dt;
        if (x <= -level) return t;
    }
    return cap;
}

// ---------------------------------------------------------------------------
// squared Bessel processes and bridges (exact transitions)
// ---------------------------------------------------------------------------

// One BESQ_d transition over time s from x: Z = s * chi'^2_d(x/s), realized as
// the Poisson mixture Gamma(d/2 + K, scale 2s) with K ~ Poisson(x / 2s).
inline double besq_step(double d, double x, double s, Rng& rng) {
    if (!(d > 0.0) || x < 0.0 || !(s > 0.0)) throw std::invalid_argument("besq_step: bad arguments");
    const long k = x > 0.0 ? rng.poisson(x / (2.0 * s)) : 0;
    return 2.0 * s * rng.gamma(d / 2.0 + static_cast<double>(k));
}

// Markov transition of the BESQ_d bridge pinned to 0: given Z_s = x and
// Z_ell = 0, the value at s + u (with v = ell - s - u remaining) is the
// exponentially tilted noncentral transition, again a Poisson-Gamma mixture.
inline double besq_bridge_step(double d, double x, double u, double v, Rng& rng) {
    if (!(d > 0.0) || x < 0.0 || !(u > 0.0) || !(v > 0.0))
        throw std::invalid_argument("besq_bridge_step: bad arguments");
    const double lam = x * v / (2.0 * u * (u + v));
    const long k = lam > 0.0 ? rng.poisson(lam) : 0;
    const double scale = 2.0 * u * v / (u + v);
    return scale * rng.gamma(d / 2.0 + static_cast<double>(k));
}

struct BesqBridge {
    double d = 0.0;
    double ell = 0.0;
    std::vector<double> times;   // includes the pinned endpoints 0 and ell
    std::vector<double> values;  // 0 at both ends
};

inline BesqBridge besq_bridge(double d, double ell, const std::vector<double>& grid, Rng& rng) {
    if (!(ell > 0.0)) throw std::invalid_argument("besq_bridge: ell must be > 0");
    BesqBridge br;
    br.d = d;
    br.ell = ell;
    br.times.push_back(0.0);
    br.values.push_back(0.0);
    double t_prev = 0.0, x = 0.0;
    for (double t : grid) {
        if (!(t > t_prev && t < ell))
            throw std::invalid_argument("besq_bridge: grid must be increasing inside (0, ell)");
        x = besq_bridge_step(d, x, t - t_prev, ell - t, rng);
        br.times.push_back(t);
        br.values.push_back(x);
        t_prev = t;
    }
    br.times.push_back(ell);
    br.values.push_back(0.0);
    return br;
}

// ---------------------------------------------------------------------------
// Poisson point process over Lebesgue x mark density
// ---------------------------------------------------------------------------

struct MarkLaw {
    double total_mass = 0.0;                        // integral of the mark density
    std::function<double(double)> inverse_cdf;      // u in (0,1) -> mark
};

// Truncated power-law marks density x^{-q} on [floor, ceil); ceil = inf allowed
// when q > 1. Throws when the truncated density is not integrable.
inline MarkLaw power_law_marks(double q, double floor, double ceil = kInf) {
    if (!(floor > 0.0)) throw std::invalid_argument("power_law_marks: floor must be > 0");
    if (std::isinf(ceil) && q <= 1.0)
        throw std::invalid_argument("power_law_marks: not integrable without upper truncation");
    MarkLaw law;
    if (q == 1.0) {
        law.total_mass = std::log(ceil / floor);
        law.inverse_cdf = [floor, ceil](double u) {
            return floor * std::pow(ceil / floor, u);
        };
        return law;
    }
    const double e = 1.0 - q;
    const double hi = std::isinf(ceil) ? 0.0 : std::pow(ceil, e);
    const double lo = std::pow(floor, e);
    law.total_mass = (hi - lo) / e;
    law.inverse_cdf = [lo, hi, e](double u) { return std::pow(lo + u * (hi - lo), 1.0 / e); };
    return law;
}

// Poisson point process on [0, T] x marks with intensity Leb x density.
inline std::vector<std::pair<double, double>> sample_ppp(double T, const MarkLaw& marks, Rng& rng) {
    if (T < 0.0) throw std::invalid_argument("sample_ppp: T must be >= 0");
    std::vector<std::pair<double, double>> pts;
    if (T == 0.0) return pts;
    const long n = rng.poisson(T * marks.total_mass);
    pts.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) pts.emplace_back(rng.uniform(0.0, T), marks.inverse_cdf(rng.uniform()));
    std::sort(pts.begin(), pts.end());
    return pts;
}

}  // namespace lqg
