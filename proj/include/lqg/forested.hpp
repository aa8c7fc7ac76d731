#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lqg/params.hpp"
#include "lqg/rng.hpp"
#include "lqg/stats.hpp"
#include "lqg/stochastic.hpp"

namespace lqg {

struct horizon_exceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Forested-line skeleton: the encoding path, its running infimum (the line
// boundary arc), and one loop of perimeter = jump size per recorded jump,
// attached at the line position swept out when the jump occurred.
struct ForestedSkeleton {
    LevyPath path;
    std::vector<double> run_inf;

    struct Loop {
        double line_pos;
        double perimeter;
    };
    std::vector<Loop> loops;

    // largest line length reachable within the simulated window
    double horizon() const { return -run_inf.back(); }

    // generalized quantum length Y_t = inf{s : X_s <= -t} on the grid
    double gen_length(double t) const {
        if (!(t > 0.0)) throw std::invalid_argument("gen_length: t must be > 0");
        if (t > horizon()) throw horizon_exceeded("gen_length: t beyond simulated horizon");
        const auto it = std::upper_bound(run_inf.begin(), run_inf.end(), -t, std::greater<>());
        return static_cast<double>(it - run_inf.begin()) * path.dt;
    }
};

inline ForestedSkeleton build_skeleton(LevyPath path) {
    ForestedSkeleton sk;
    sk.run_inf.resize(path.values.size());
    double inf = 0.0;
    for (std::size_t k = 0; k < path.values.size(); ++k) {
        inf = std::min(inf, path.values[k]);
        sk.run_inf[k] = inf;
    }
    sk.loops.reserve(path.jumps.size());
    for (const auto& j : path.jumps) {
        auto idx = static_cast<std::size_t>(j.time / path.dt);
        idx = std::min(idx, sk.run_inf.size() - 1);
        // the infimum just before the (upward) jump gives the attachment point
        sk.loops.push_back({-sk.run_inf[idx > 0 ? idx - 1 : 0], j.size});
    }
    sk.path = std::move(path);
    return sk;
}

struct TruncatedSegment {
    double line_length = 0.0;  // quantum length t of the line boundary arc
    double gen_length = 0.0;   // generalized quantum length L = Y_t
    std::vector<LevyJump> jumps;
};

inline TruncatedSegment truncate(const ForestedSkeleton& sk, double t) {
    TruncatedSegment seg;
    seg.line_length = t;
    seg.gen_length = sk.gen_length(t);
    for (const auto& j : sk.path.jumps)
        if (j.time <= seg.gen_length) seg.jumps.push_back(j);
    return seg;
}

// Unnormalized joint density of the boundary segment lengths of a generalized
// quantum disk with n marked points: (l_1 + ... + l_n)^{-g^2/4 - 1}.
inline double gqd_length_density(const ModelParams& p, const std::vector<double>& lengths) {
    if (lengths.empty()) throw std::invalid_argument("gqd_length_density: need n >= 1");
    double s = 0.0;
    for (double l : lengths) {
        if (!(l > 0.0)) throw std::invalid_argument("gqd_length_density: lengths must be > 0");
        s += l;
    }
    return std::pow(s, -p.sub_index - 1.0);
}

// ---------------------------------------------------------------------------
// length-law checks
// ---------------------------------------------------------------------------

struct PowerLawWindow {
    double t_min = 1e-2;
    double t_max = 1e2;
    double fit_lo = 0.2;  // fit window on the generalized length
    double fit_hi = 5.0;
};

struct SegmentLawReport {
    double q = 0.0;
    double target_exponent = 0.0;  // density exponent of L
    TailFit fit;
    bool divergent_case = false;
    // for q >= 2: simulated mass of {Y in [1,2]} over widening t-windows
    std::vector<double> masses;
    bool pass = false;
};

namespace detail {

// draws t from the normalized density t^{-q} on [lo, hi]
inline double truncated_power_t(double q, double lo, double hi, Rng& rng) {
    return power_law_marks(q, lo, hi).inverse_cdf(rng.uniform());
}

}  // namespace detail

// Law of the forested segment length: sampling t ~ t^{-q} dt (restricted to a
// window) and Y_t gives density exponent -(g^2/4)q + g^2/4 - 1 for q < 2, and
// an infinite-measure blow-up of {Y in [a,b]} as the window widens for q >= 2.
inline SegmentLawReport segment_length_law_check(const ModelParams& p, double q, std::size_t n,
                                                 Rng& rng, PowerLawWindow win = {}) {
    SegmentLawReport rep;
    rep.q = q;
    if (q < 2.0) {
        rep.target_exponent = -p.sub_index * q + p.sub_index - 1.0;
        std::vector<double> L(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double t = detail::truncated_power_t(q, win.t_min, win.t_max, rng);
            L[i] = std::pow(t, 1.0 / p.sub_index) * stable_subordinator_unit(p.sub_index, rng);
        }
        rep.fit = tail_exponent(L, win.fit_lo, win.fit_hi, rng);
        rep.pass = std::fabs(rep.fit.exponent - rep.target_exponent) < 0.05;
        return rep;
    }
    // q >= 2: measure of {Y_t in [1,2]} over t in [10^-w, t_max]. Integrating
    // the t-marginal exactly per subordinator draw (Y_t = t^{1/theta} S, so t
    // runs over [S^-theta, (2/S)^theta]) avoids the rare-event blow-up, and a
    // common sample across windows makes the masses pointwise monotone.
    rep.divergent_case = true;
    const double theta = p.sub_index;
    std::vector<double> draws(n);
    for (auto& s : draws) s = stable_subordinator_unit(theta, rng);
    for (int w = 1; w <= 5; ++w) {
        const double lo = std::pow(10.0, -w);
        double acc = 0.0;
        for (double s : draws) {
            const double ta = std::max(lo, std::pow(1.0 / s, theta));
            const double tb = std::min(win.t_max, std::pow(2.0 / s, theta));
            if (tb > ta) acc += (std::pow(tb, 1.0 - q) - std::pow(ta, 1.0 - q)) / (1.0 - q);
        }
        rep.masses.push_back(acc / static_cast<double>(n));
    }
    // Divergence shows as non-shrinking mass increments per widening decade:
    // logarithmic growth at q = 2, a factor 10^{q-2} per decade beyond.
    rep.pass = true;
    for (std::size_t i = 1; i < rep.masses.size(); ++i)
        if (!(rep.masses[i] > rep.masses[i - 1])) rep.pass = false;
    const double first_inc = rep.masses[1] - rep.masses[0];
    const double last_inc = rep.masses[4] - rep.masses[3];
    if (!(last_inc > 0.4 * first_inc)) rep.pass = false;
    if (q > 2.25 && !(rep.masses.back() > 10.0 * rep.masses.front())) rep.pass = false;
    return rep;
}

struct DiskExponentReport {
    double W = 0.0;
    double target_exponent = 0.0;
    TailFit fit;
    bool divergent_case = false;
    std::vector<double> masses;
    bool pass = false;
};

// Forested-disk boundary length: a boundary-length draw from the disk length
// law t^{-2W/g^2} composed with Y_t has density exponent -1 - W/2 + g^2/4 for
// W < g^2, and infinite mass in any window for W >= g^2.
inline DiskExponentReport forested_disk_exponent_check(const ModelParams& p, double W,
                                                       std::size_t n, Rng& rng,
                                                       PowerLawWindow win = {}) {
    if (!(W > 0.0)) throw std::invalid_argument("forested_disk_exponent_check: W must be > 0");
    const double q = 2.0 * W / (p.gamma * p.gamma);
    auto seg = segment_length_law_check(p, q, n, rng, win);
    DiskExponentReport rep;
    rep.W = W;
    rep.divergent_case = seg.divergent_case;
    rep.masses = std::move(seg.masses);
    rep.fit = seg.fit;
    if (!rep.divergent_case) {
        rep.target_exponent = -1.0 - W / 2.0 + p.gamma * p.gamma / 4.0;
        rep.pass = std::fabs(rep.fit.exponent - rep.target_exponent) < 0.05;
    } else {
        rep.pass = seg.pass;
    }
    return rep;
}

struct CqReport {
    double q = 0.0;
    double mc = 0.0;
    double se = 0.0;
    double formula = 0.0;
    bool pass = false;
};

// C_q = (g^2/4) E[Y_1^{(g^2/4)(q-1)}] against the closed-form moment.
inline CqReport cq_constant_check(const ModelParams& p, double q, std::size_t n, Rng& rng) {
    const double pw = p.sub_index * (q - 1.0);
    if (!(pw < p.sub_index)) throw std::invalid_argument("cq_constant_check: need q < 2");
    std::vector<double> xs(n);
    for (auto& x : xs) x = std::pow(stable_subordinator_unit(p.sub_index, rng), pw);
    const auto ms = mean_se(xs);
    CqReport rep;
    rep.q = q;
    rep.mc = p.sub_index * ms.mean;
    rep.se = p.sub_index * ms.se;
    if (pw == 0.0) {
        rep.formula = p.sub_index;
    } else {
        const LogGamma num = log_gamma(-p.alpha * pw), den = log_gamma(-pw);
        rep.formula =
            p.sub_index * p.alpha * num.sign * den.sign * std::exp(num.log_abs - den.log_abs);
    }
    rep.pass = std::fabs(rep.mc - rep.formula) <= 3.0 * rep.se + 1e-12;
    return rep;
}

}  // namespace lqg
