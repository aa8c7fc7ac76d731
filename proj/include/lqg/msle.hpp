#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lqg/geometry.hpp"
#include "lqg/loewner.hpp"
#include "lqg/parallel.hpp"
#include "lqg/params.hpp"
#include "lqg/rng.hpp"
#include "lqg/special.hpp"
#include "lqg/stats.hpp"

namespace lqg {

// ---------------------------------------------------------------------------
// link patterns
// ---------------------------------------------------------------------------

struct LinkPattern {
    int N = 0;
    std::vector<std::pair<int, int>> links;  // 1-based indices into {1..2N}

    LinkPattern() = default;
    LinkPattern(int n, std::vector<std::pair<int, int>> ls) : N(n), links(std::move(ls)) {
        validate();
    }

    void validate() const {
        if (static_cast<int>(links.size()) != N)
            throw std::invalid_argument("LinkPattern: need N links");
        std::vector<int> seen(2 * N + 1, 0);
        for (auto [i, j] : links) {
            if (i < 1 || j < 1 || i > 2 * N || j > 2 * N || i == j)
                throw std::invalid_argument("LinkPattern: index out of range");
            ++seen[i];
            ++seen[j];
        }
        for (int k = 1; k <= 2 * N; ++k)
            if (seen[k] != 1) throw std::invalid_argument("LinkPattern: not a perfect matching");
        // planarity: no two links interleave
        for (std::size_t a = 0; a < links.size(); ++a) {
            for (std::size_t b = a + 1; b < links.size(); ++b) {
                int i = std::min(links[a].first, links[a].second);
                int j = std::max(links[a].first, links[a].second);
                int k = std::min(links[b].first, links[b].second);
                int l = std::max(links[b].first, links[b].second);
                const bool k_in = k > i && k < j, l_in = l > i && l < j;
                if (k_in != l_in) throw std::invalid_argument("LinkPattern: links interleave");
            }
        }
    }

    bool has_link(int i, int j) const {
        for (auto [a, b] : links)
            if ((a == i && b == j) || (a == j && b == i)) return true;
        return false;
    }
};

inline LinkPattern lp2_side() { return LinkPattern(2, {{1, 2}, {3, 4}}); }
inline LinkPattern lp2_nested() { return LinkPattern(2, {{1, 4}, {2, 3}}); }

// ---------------------------------------------------------------------------
// closed-form partition functions, N = 1 and N = 2
// ---------------------------------------------------------------------------

// single-link partition function |y - x|^{-2b}
inline double z1(const ModelParams& p, double x, double y) {
    if (x == y) throw std::invalid_argument("z1: coincident points");
    return std::pow(std::fabs(y - x), -2.0 * p.b);
}

namespace detail {

struct Hyp2f1Params {
    double a, b, c, norm;  // norm = 2F1(a, b; c; 1)
};

inline Hyp2f1Params z2_hyp_params(double kappa) {
    Hyp2f1Params h;
    h.a = 4.0 / kappa;
    h.b = 1.0 - 4.0 / kappa;
    h.c = 8.0 / kappa;
    h.norm = hyp2f1_at_one(h.a, h.b, h.c);
    return h;
}

}  // namespace detail

// Pure two-link partition function. With z the cross-ratio of the ordered
// configuration, both patterns share one profile
//   w^{2/kappa} 2F1(4/k, 1-4/k; 8/k; w) / 2F1(4/k, 1-4/k; 8/k; 1)
// attached to the product of the linked-gap powers: w = 1 - z for the
// side-by-side pattern {{1,2},{3,4}} and w = z for the nested {{1,4},{2,3}}.
// The normalization makes each pattern factorize into z1 z1 as its linked
// pairs decouple, and the profile is increasing, so the power-law bound
// against the bare gap product holds.
inline double z2(const ModelParams& p, double x1, double x2, double x3, double x4,
                 const LinkPattern& pattern) {
    const double z = cross_ratio(x1, x2, x3, x4);
    const auto h = detail::z2_hyp_params(p.kappa);
    double w, pref;
    if (pattern.has_link(1, 2) && pattern.has_link(3, 4)) {
        w = 1.0 - z;
        pref = std::pow(x2 - x1, -2.0 * p.b) * std::pow(x4 - x3, -2.0 * p.b);
    } else if (pattern.has_link(1, 4) && pattern.has_link(2, 3)) {
        w = z;
        pref = std::pow(x4 - x1, -2.0 * p.b) * std::pow(x3 - x2, -2.0 * p.b);
    } else {
        throw std::invalid_argument("z2: pattern is not a two-link pattern");
    }
    const double profile =
        w >= 1.0 ? h.norm : std::pow(w, 2.0 / p.kappa) * hyp2f1(h.a, h.b, h.c, w);
    return pref * profile / h.norm;
}

// analytic gradient of log z2 in the configuration coordinates
inline std::array<double, 4> grad_log_z2(const ModelParams& p, double x1, double x2, double x3,
                                         double x4, const LinkPattern& pattern) {
    const double z = cross_ratio(x1, x2, x3, x4);
    const auto h = detail::z2_hyp_params(p.kappa);
    const std::array<double, 4> dlogz = {
        -1.0 / (x2 - x1) + 1.0 / (x3 - x1), 1.0 / (x2 - x1) + 1.0 / (x4 - x2),
        -1.0 / (x4 - x3) - 1.0 / (x3 - x1), 1.0 / (x4 - x3) - 1.0 / (x4 - x2)};

    const bool side = pattern.has_link(1, 2) && pattern.has_link(3, 4);
    const double w = side ? 1.0 - z : z;
    const double dw_dz = side ? -1.0 : 1.0;
    const double F = hyp2f1(h.a, h.b, h.c, w);
    const double Fp = h.a * h.b / h.c * hyp2f1(h.a + 1.0, h.b + 1.0, h.c + 1.0, w);
    const double dprofile = 2.0 / (p.kappa * w) + Fp / F;

    std::array<double, 4> out{};
    for (int j = 0; j < 4; ++j) out[j] = dprofile * dw_dz * z * dlogz[j];
    if (side) {
        out[0] += 2.0 * p.b / (x2 - x1);
        out[1] -= 2.0 * p.b / (x2 - x1);
        out[2] += 2.0 * p.b / (x4 - x3);
        out[3] -= 2.0 * p.b / (x4 - x3);
    } else {
        out[0] += 2.0 * p.b / (x4 - x1);
        out[1] += 2.0 * p.b / (x3 - x2);
        out[2] -= 2.0 * p.b / (x3 - x2);
        out[3] -= 2.0 * p.b / (x4 - x1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// PDE residual via five-point stencils
// ---------------------------------------------------------------------------

// [ (kappa/2) d_i^2 + sum_{j != i} ( 2/(x_j - x_i) d_j - 2b/(x_j - x_i)^2 ) ] Z,
// normalized by Z at the configuration
inline double pde_residual(const std::function<double(const std::vector<double>&)>& Z,
                           double kappa, std::vector<double> xs, std::size_t i, double h) {
    const double b = (6.0 - kappa) / (2.0 * kappa);
    auto shifted = [&](std::size_t j, double dh) {
        std::vector<double> y = xs;
        y[j] += dh;
        return Z(y);
    };
    const double z0 = Z(xs);
    // five-point second derivative in x_i
    const double d2 = (-shifted(i, 2.0 * h) + 16.0 * shifted(i, h) - 30.0 * z0 +
                       16.0 * shifted(i, -h) - shifted(i, -2.0 * h)) /
                      (12.0 * h * h);
    double acc = kappa / 2.0 * d2;
    for (std::size_t j = 0; j < xs.size(); ++j) {
        if (j == i) continue;
        const double dj = (-shifted(j, 2.0 * h) + 8.0 * shifted(j, h) - 8.0 * shifted(j, -h) +
                           shifted(j, -2.0 * h)) /
                          (12.0 * h);
        const double gap = xs[j] - xs[i];
        acc += 2.0 / gap * dj - 2.0 * b / (gap * gap) * z0;
    }
    return acc / z0;
}

// ---------------------------------------------------------------------------
// cascade Monte-Carlo estimator
// ---------------------------------------------------------------------------

struct CascadeConfig {
    double eps_rel = 1e-3;      // stopping gap relative to the cascaded link span
    double T_max = 50.0;
    std::size_t n_trace = 1024;
    LoewnerConfig loewner;
    int cascade_link = -1;      // index into pattern.links, -1 = adjacent heuristic
    unsigned threads = 1;
    RngState stream;            // base stream for the replica map
};

struct PartitionEval {
    double value = 0.0;  // estimate of Z_alpha
    double se = 0.0;
    std::size_t n = 0;
    std::size_t discarded = 0;
    std::size_t completed_at_horizon = 0;  // unfinished chords, completed by the
                                           // stopped-martingale expression
    double bounded_share = 0.0;            // weight share through bounded pockets
    std::pair<int, int> link_used{0, 0};
};

namespace detail {

struct ComponentPoint {
    int idx = 0;        // original 1-based index
    double x0 = 0.0;    // original position
    double g = 0.0;     // tracked image
    double gp = 0.0;    // tracked derivative
    bool alive = false;
    int component = 0;  // 0 unbounded, else pocket id
};

// evaluates the one-link partition function on a component
inline double component_z1(const ModelParams& p, const ComponentPoint& a,
                           const ComponentPoint& b, const TracedCurve* curve,
                           const std::vector<PocketArc>& pockets) {
    if (a.component == 0) {
        return std::pow(a.gp * b.gp, p.b) * z1(p, a.g, b.g);
    }
    const auto& arc = pockets[static_cast<std::size_t>(a.component - 1)];
    const double kernel = component_poisson_kernel(*curve, arc, a.x0, b.x0);
    if (!(kernel > 0.0) || !std::isfinite(kernel))
        throw numeric_error("component_z1: bad pocket kernel");
    return std::pow(kernel, p.b);
}

}  // namespace detail

namespace detail {

// Kernel of the pocket shared by two co-pocketed boundary points. Prefers the
// located pocket (optionally matched to the closure time); when the touchdown
// structure is unresolved at trace resolution, falls back to the full-curve
// polygon closed along its own base chord, a superset of the true component.
inline double shared_pocket_kernel(const TracedCurve& curve, double a, double b,
                                   double close_hint, double t_end) {
    try {
        const auto loc = locate_components(curve, {a, b}, true);
        if (!loc.ambiguous[0] && !loc.ambiguous[1] && loc.component[0] != 0 &&
            loc.component[0] == loc.component[1]) {
            const auto& arc = loc.pockets[static_cast<std::size_t>(loc.component[0] - 1)];
            if (close_hint < 0.0 || std::fabs(arc.close_time - close_hint) <= 0.25 * t_end)
                return component_poisson_kernel(curve, arc, a, b);
        }
    } catch (const std::exception&) {
    }
    PocketArc full;
    full.from = 0;
    full.to = curve.vertices.size() - 1;
    const double fa = std::real(curve.vertices.front());
    const double fb = std::real(curve.vertices.back());
    full.foot_left = std::min(fa, fb);
    full.foot_right = std::max(fa, fb);
    full.close_time = t_end;
    if (!(a > full.foot_left && a < full.foot_right && b > full.foot_left &&
          b < full.foot_right))
        throw numeric_error("shared_pocket_kernel: marked points escape the base");
    return component_poisson_kernel(curve, full, std::min(a, b), std::max(a, b));
}

}  // namespace detail

namespace detail {

struct CascadeReplicaResult {
    double weight = 0.0;
    bool usable = true;
    bool bounded = false;     // weight realized through a pocket kernel
    bool completed = false;   // chord unfinished at the horizon, martingale-completed
    bool first_spectator_swallowed = false;
    double first_spectator_swallow_time = 0.0;
};

inline CascadeReplicaResult cascade_replica(const ModelParams& p, const std::vector<double>& xs,
                                            const LinkPattern& pattern, int li, int lj, int ra,
                                            int rb, double eps, const CascadeConfig& cfg,
                                            Rng& rng) {
    CascadeReplicaResult out;
    const double xi = xs[static_cast<std::size_t>(li - 1)];
    const double xj = xs[static_cast<std::size_t>(lj - 1)];
    std::vector<double> spectators{xs[static_cast<std::size_t>(ra - 1)],
                                   xs[static_cast<std::size_t>(rb - 1)]};
    std::vector<std::pair<double, double>> rec;
    auto res = run_to_tau(p.kappa, xi, xj, spectators, eps, cfg.T_max, rng, cfg.loewner, &rec);
    const auto& st = res.state;
    const auto& pa = st.pts[1];
    const auto& pb = st.pts[2];
    out.first_spectator_swallowed = pa.swallowed;
    out.first_spectator_swallow_time = pa.swallow_time;

    if (!res.reached) {
        // stopped-martingale completion; a swallowed remaining point can no
        // longer rejoin its partner, so those contribute zero
        out.completed = true;
        if (pa.swallowed || pb.swallowed) return out;
        std::vector<double> img(4);
        img[static_cast<std::size_t>(li - 1)] = st.W;
        img[static_cast<std::size_t>(lj - 1)] = st.pts[0].g;
        img[static_cast<std::size_t>(ra - 1)] = pa.g;
        img[static_cast<std::size_t>(rb - 1)] = pb.g;
        for (int k = 1; k < 4; ++k)
            if (!(img[static_cast<std::size_t>(k)] > img[static_cast<std::size_t>(k - 1)])) {
                out.usable = false;
                return out;
            }
        try {
            const double gap = st.pts[0].g - st.W;
            out.weight = std::pow(pa.gp * pb.gp, p.b) * std::pow(gap, 2.0 * p.b) *
                         z2(p, img[0], img[1], img[2], img[3], pattern) / z1(p, xi, xj);
        } catch (const std::exception&) {
            out.usable = false;
        }
        return out;
    }

    if (!pa.swallowed && !pb.swallowed) {
        // A live point is lost only to the final closing event itself: at an
        // overflight pinch everything under the loop disconnects together
        // with the target, so the stop is the pinch and the tip's foot tells
        // on which side of each survivor it closed. Pair separation before
        // the stop always fires a swallow flag.
        const double margin = 5.0 * eps;
        auto clear_of_hull = [&](double u) {
            return u > st.w_max + margin || u < st.w_min - margin;
        };
        const double lo = std::min(pa.x0, pb.x0), hi = std::max(pa.x0, pb.x0);
        const bool interior_pair = lo > xi && hi < xj;
        if (!interior_pair && clear_of_hull(pa.x0) && clear_of_hull(pb.x0)) {
            out.weight = std::pow(pa.gp * pb.gp, p.b) * z1(p, pa.g, pb.g);
            return out;
        }
        Rng trace_rng(rng.u64(), 17);
        const auto w_grid = resample_driving(rec, 8192, p.kappa, trace_rng);
        const double trace_dt = st.t / 8192.0;
        auto bay_kernel_weight = [&]() {
            try {
                const auto curve = trace_curve(w_grid, trace_dt);
                const double kernel =
                    detail::shared_pocket_kernel(curve, pa.x0, pb.x0, -1.0, st.t);
                if (!(kernel > 0.0) || !std::isfinite(kernel))
                    throw numeric_error("bad kernel");
                out.weight = std::pow(kernel, p.b);
                out.bounded = true;
            } catch (const std::exception&) {
                out.usable = false;
            }
        };
        if (interior_pair) {
            // both survivors live strictly inside the chord's span: the final
            // closure pockets them together
            bay_kernel_weight();
            return out;
        }
        const double foot = std::real(trace_tip(w_grid, trace_dt));
        const double m2 = 0.04 * (hi - lo);
        const bool both_right = lo > xj;
        if (both_right) {
            if (foot < lo - m2) {
                out.weight = std::pow(pa.gp * pb.gp, p.b) * z1(p, pa.g, pb.g);
                return out;
            }
            if (foot > lo + m2 && foot < hi - m2) return out;  // separated, weight 0
            if (foot > hi + m2) {
                bay_kernel_weight();
                return out;
            }
            out.usable = false;  // foot lands in a margin band
            return out;
        }
        // mixed-side pair: a final bay reaching past the right point may or
        // may not span the left one; the geometry decides
        if (foot > hi + m2) {
            try {
                const auto curve = trace_curve(w_grid, trace_dt);
                const auto loc = locate_components(curve, {lo, hi}, true);
                if (loc.ambiguous[0] || loc.ambiguous[1]) {
                    out.usable = false;
                } else if (loc.component[0] == loc.component[1] && loc.component[0] != 0) {
                    const auto& arc = loc.pockets[static_cast<std::size_t>(loc.component[0] - 1)];
                    const double kernel = component_poisson_kernel(curve, arc, lo, hi);
                    out.weight = std::pow(kernel, p.b);
                    out.bounded = true;
                }
            } catch (const std::exception&) {
                out.usable = false;
            }
            return out;
        }
        if (foot < hi - m2) {
            out.weight = std::pow(pa.gp * pb.gp, p.b) * z1(p, pa.g, pb.g);
            return out;
        }
        out.usable = false;
        return out;
    }

    // at least one remaining point swallowed before the stop: pockets are
    // final; the link survives only through a shared closure event
    if (pa.swallowed != pb.swallowed || pa.swallow_time != pb.swallow_time) return out;
    try {
        Rng trace_rng(rng.u64(), 17);
        const auto w_grid = resample_driving(rec, cfg.n_trace, p.kappa, trace_rng);
        const auto curve = trace_curve(w_grid, st.t / static_cast<double>(cfg.n_trace));
        const double kernel =
            detail::shared_pocket_kernel(curve, pa.x0, pb.x0, pa.swallow_time, st.t);
        if (!(kernel > 0.0) || !std::isfinite(kernel)) throw numeric_error("bad kernel");
        out.weight = std::pow(kernel, p.b);
        out.bounded = true;
    } catch (const std::exception&) {
        out.usable = false;
    }
    return out;
}

}  // namespace detail

// One-level cascade estimate of Z_alpha for N = 2 (the recursion terminates in
// closed forms): sample the cascaded link's chord by its kappa-6 driver,
// evaluate the surviving pattern on the complement components, and average
//   Z_alpha = H(x_i, x_j)^b E[ 1_E Z_hat(components) ].
// Chords still running at the horizon are completed by the stopped-martingale
// expression, which shares the estimator's expectation.
inline PartitionEval cascade_estimate(const ModelParams& p, const std::vector<double>& xs,
                                      const LinkPattern& pattern, std::size_t n, Rng& rng,
                                      const CascadeConfig& cfg = {}) {
    if (pattern.N == 1) {
        PartitionEval ev;
        ev.value = z1(p, xs[0], xs[1]);
        ev.n = 0;
        ev.link_used = {1, 2};
        return ev;
    }
    if (pattern.N != 2 || xs.size() != 4)
        throw std::invalid_argument("cascade_estimate: this estimator handles N <= 2");
    for (std::size_t k = 1; k < xs.size(); ++k)
        if (!(xs[k] > xs[k - 1])) throw std::invalid_argument("cascade_estimate: unordered points");

    // cascaded link: configured, else the adjacency heuristic (prefer j = i+1)
    std::pair<int, int> link = {0, 0};
    if (cfg.cascade_link >= 0) {
        link = pattern.links[static_cast<std::size_t>(cfg.cascade_link)];
    } else {
        for (auto [i, j] : pattern.links)
            if (std::abs(i - j) == 1) {
                link = {i, j};
                break;
            }
        if (link.first == 0) link = pattern.links[0];
    }
    if (link.first > link.second) std::swap(link.first, link.second);
    const int li = link.first, lj = link.second;
    std::vector<int> remaining;
    for (int k = 1; k <= 4; ++k)
        if (k != li && k != lj) remaining.push_back(k);
    const int ra = remaining[0], rb = remaining[1];  // the surviving link
    const double xi = xs[static_cast<std::size_t>(li - 1)];
    const double xj = xs[static_cast<std::size_t>(lj - 1)];
    const double eps = cfg.eps_rel * (xj - xi);

    PartitionEval ev;
    ev.link_used = {li, lj};
    RngState base = cfg.stream;
    base.seed ^= rng.u64();  // tie the replica map to the caller stream
    const auto replicas = map_replicas(
        n, base, cfg.threads, [&](std::size_t, Rng& rrng) {
            return detail::cascade_replica(p, xs, pattern, li, lj, ra, rb, eps, cfg, rrng);
        });
    std::vector<double> weights;
    weights.reserve(n);
    double bounded_weight = 0.0, total_weight = 0.0;
    for (const auto& rr : replicas) {
        if (rr.completed) ev.completed_at_horizon++;
        if (!rr.usable) {
            ev.discarded++;
            continue;
        }
        weights.push_back(rr.weight);
        total_weight += rr.weight;
        if (rr.bounded) bounded_weight += rr.weight;
    }

    if (weights.size() < 2) throw numeric_error("cascade_estimate: no usable replicas");
    const auto ms = mean_se(weights);
    const double pref = z1(p, xi, xj);
    ev.value = pref * ms.mean;
    ev.se = pref * ms.se;
    ev.n = weights.size();
    ev.bounded_share = total_weight > 0.0 ? bounded_weight / total_weight : 0.0;
    return ev;
}

// ---------------------------------------------------------------------------
// martingale constancy of the cascaded partition function
// ---------------------------------------------------------------------------

struct MartingaleReport {
    double m0 = 0.0;
    std::vector<double> t_grid;
    std::vector<MeanSE> m_at_t;          // with the correct pattern
    std::vector<MeanSE> control_at_t;    // with the companion pattern
    double tau_eps_fraction = 0.0;
    bool pass = false;            // constancy within 3 SE at every grid time
    bool control_deviates = false;  // companion pattern drifts > 5 SE somewhere
};

// E[M_{t and tau_eps}] with
//   M_t = prod_{k=3,4} g'(x_k)^b (g(x_2) - W)^{2b} Z(W, g(x_2), g(x_3), g(x_4))
// is constant in t when Z is the pure partition function of the pattern; the
// companion pattern breaks constancy.
inline MartingaleReport martingale_check(const ModelParams& p, const std::vector<double>& xs,
                                         const LinkPattern& pattern,
                                         const std::vector<double>& t_grid, double eps,
                                         std::size_t n, Rng& rng) {
    if (xs.size() != 4) throw std::invalid_argument("martingale_check: need four points");
    const LinkPattern companion =
        pattern.has_link(1, 2) ? lp2_nested() : lp2_side();
    MartingaleReport rep;
    rep.t_grid = t_grid;
    rep.m0 = std::pow(xs[1] - xs[0], 2.0 * p.b) * z2(p, xs[0], xs[1], xs[2], xs[3], pattern);

    auto eval_m = [&](const LoewnerState& st, const LinkPattern& pat) {
        const double gap = st.pts[0].g - st.W;
        return std::pow(st.pts[1].gp * st.pts[2].gp, p.b) * std::pow(gap, 2.0 * p.b) *
               z2(p, st.W, st.pts[0].g, st.pts[1].g, st.pts[2].g, pat);
    };

    const std::size_t nt = t_grid.size();
    std::vector<std::vector<double>> vals(nt, std::vector<double>(n));
    std::vector<std::vector<double>> ctrl(nt, std::vector<double>(n));
    std::size_t tau_hits = 0;
    LoewnerConfig cfg;
    Driver drv;
    drv.kind = DriverKind::KappaMinus6;
    drv.target = 0;
    for (std::size_t r = 0; r < n; ++r) {
        auto st = make_loewner_state(xs[0], {xs[1], xs[2], xs[3]}, cfg);
        bool stopped = false;
        double m_cur = rep.m0;
        double c_cur = std::pow(xs[1] - xs[0], 2.0 * p.b) *
                       z2(p, xs[0], xs[1], xs[2], xs[3], companion);
        std::size_t next_t = 0;
        while (next_t < nt) {
            if (!stopped && st.pts[0].g - st.W <= eps) {
                stopped = true;
                ++tau_hits;
            }
            if (!stopped) {
                try {
                    m_cur = eval_m(st, pattern);
                    c_cur = eval_m(st, companion);
                } catch (const std::exception&) {
                    stopped = true;  // image spread degenerated below resolution
                }
            }
            if (st.t >= t_grid[next_t]) {
                vals[next_t][r] = m_cur;
                ctrl[next_t][r] = c_cur;
                ++next_t;
                continue;
            }
            if (stopped) {
                vals[next_t][r] = m_cur;
                ctrl[next_t][r] = c_cur;
                ++next_t;
                continue;
            }
            step_sle(st, drv, p.kappa, cfg, rng);
        }
    }
    rep.tau_eps_fraction = static_cast<double>(tau_hits) / static_cast<double>(n);
    rep.pass = true;
    rep.control_deviates = false;
    for (std::size_t k = 0; k < nt; ++k) {
        rep.m_at_t.push_back(mean_se(vals[k]));
        rep.control_at_t.push_back(mean_se(ctrl[k]));
        if (std::fabs(rep.m_at_t[k].mean - rep.m0) > kSigmaBand * rep.m_at_t[k].se)
            rep.pass = false;
        const double c0 = std::pow(xs[1] - xs[0], 2.0 * p.b) *
                          z2(p, xs[0], xs[1], xs[2], xs[3], companion);
        if (std::fabs(rep.control_at_t[k].mean - c0) > 5.0 * rep.control_at_t[k].se)
            rep.control_deviates = true;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// local driver
// ---------------------------------------------------------------------------

struct LocalDriverState {
    double t = 0.0;
    double W = 0.0;       // the active point x_j
    std::size_t j = 0;    // its index
    std::vector<double> passive;  // the other 2N-1 points, original order kept
};

// drift kappa d_j log Z for the closed forms; stencil fallback otherwise
inline double local_drift(const ModelParams& p, const LinkPattern& pattern,
                          const std::vector<double>& config, std::size_t j) {
    if (pattern.N == 1) {
        const std::size_t k = j == 0 ? 1 : 0;
        return p.kappa * 2.0 * p.b / (config[k] - config[j]);
    }
    if (pattern.N == 2) {
        const auto g = grad_log_z2(p, config[0], config[1], config[2], config[3], pattern);
        return p.kappa * g[j];
    }
    throw std::invalid_argument("local_drift: closed forms cover N <= 2");
}

// one Euler-Maruyama step of the local driver with passive-point flow
inline void local_driver_step(const ModelParams& p, const LinkPattern& pattern,
                              LocalDriverState& st, double dt, Rng& rng) {
    std::vector<double> config = st.passive;
    config.insert(config.begin() + static_cast<std::ptrdiff_t>(st.j), st.W);
    const double drift = local_drift(p, pattern, config, st.j);
    for (auto& v : st.passive) v += 2.0 / (v - st.W) * dt;
    st.W += drift * dt + std::sqrt(p.kappa * dt) * rng.normal();
    st.t += dt;
}

struct SpotCheckReport {
    double p_local = 0.0, se_local = 0.0;
    double p_global = 0.0, se_global = 0.0;
    double p_value = 0.0;
    bool pass = false;
};

// Survival of a fixed spectator by a fixed capacity, local driver versus the
// cascade-weighted chord law.
inline SpotCheckReport local_global_spot_check(const ModelParams& p,
                                               const std::vector<double>& xs,
                                               const LinkPattern& pattern, double t_star,
                                               std::size_t n, Rng& rng) {
    if (xs.size() != 4 || pattern.N != 2)
        throw std::invalid_argument("local_global_spot_check: N = 2 configurations only");
    const std::size_t spectator = 2;  // x_3 of the configuration
    const double swallow_gap = 1e-4 * (xs[1] - xs[0]);

    // local route: driver from x_1 with the full partition-function drift
    std::size_t survive_local = 0, n_local = 0;
    for (std::size_t r = 0; r < n; ++r) {
        LocalDriverState st;
        st.W = xs[0];
        st.j = 0;
        st.passive = {xs[1], xs[2], xs[3]};
        bool alive = true;
        while (st.t < t_star) {
            double min_gap = kInf;
            for (double v : st.passive) min_gap = std::min(min_gap, std::fabs(v - st.W));
            if (min_gap <= swallow_gap) {
                alive = st.passive[spectator - 1] - st.W > swallow_gap;
                break;
            }
            const double dt = std::min(1e-3, 0.01 * min_gap * min_gap);
            local_driver_step(p, pattern, st, dt, rng);
        }
        if (alive) alive = st.passive[spectator - 1] - st.W > swallow_gap;
        ++n_local;
        if (alive) ++survive_local;
    }

    // global route: kappa-6 chord of the cascaded adjacent link, reweighted by
    // the cascade factor; survival of the spectator read at the matched capacity
    CascadeConfig ccfg;
    const double eps = ccfg.eps_rel * (xs[1] - xs[0]);
    double wsum = 0.0, wsum2 = 0.0, swsum = 0.0;
    std::size_t used = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto rr = detail::cascade_replica(p, xs, pattern, 1, 2, 3, 4, eps, ccfg, rng);
        if (!rr.usable) continue;
        const double w = rr.weight;
        const bool alive_at_t =
            !(rr.first_spectator_swallowed && rr.first_spectator_swallow_time <= t_star);
        wsum += w;
        wsum2 += w * w;
        swsum += w * (alive_at_t ? 1.0 : 0.0);
        ++used;
    }

    SpotCheckReport rep;
    rep.p_local = static_cast<double>(survive_local) / static_cast<double>(n_local);
    rep.se_local = std::sqrt(rep.p_local * (1.0 - rep.p_local) / static_cast<double>(n_local));
    rep.p_global = swsum / wsum;
    // effective-sample-size binomial bound for the weighted proportion
    const double ess = wsum * wsum / std::max(wsum2, 1e-300);
    const double var = rep.p_global * (1.0 - rep.p_global) / std::max(ess, 1.0);
    rep.se_global = std::sqrt(std::max(var, 1e-12));
    rep.p_value = two_proportion_p(rep.p_local, rep.se_local, rep.p_global, rep.se_global);
    rep.pass = rep.p_value > kTestLevel;
    return rep;
}

// ---------------------------------------------------------------------------
// hypoellipticity rank condition
// ---------------------------------------------------------------------------

struct RankReport {
    double log_abs_det = 0.0;
    int det_sign = 0;
    double min_singular = 0.0;
    double scale = 0.0;  // geometric mean of the row norms
};

namespace detail {

inline void jacobi_svd_min(const std::vector<double>& a_in, std::size_t n, double* min_sv) {
    std::vector<double> a = a_in;  // columns rotated in place
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    app += a[k * n + p] * a[k * n + p];
                    aqq += a[k * n + q] * a[k * n + q];
                    apq += a[k * n + p] * a[k * n + q];
                }
                off = std::max(off, std::fabs(apq) / std::sqrt(app * aqq + 1e-300));
                if (std::fabs(apq) < 1e-15 * std::sqrt(app * aqq)) continue;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
            }
        }
        if (off < 1e-14) break;
    }
    double mn = kInf;
    for (std::size_t p = 0; p < n; ++p) {
        double col = 0.0;
        for (std::size_t k = 0; k < n; ++k) col += a[k * n + p] * a[k * n + p];
        mn = std::min(mn, std::sqrt(col));
    }
    *min_sv = mn;
}

}  // namespace detail

// Iterated-bracket matrix of the generator's vector fields: columns 1..2N+1
// hold 2/(x_{j+1}-x_1)^i, columns 2N+2..4N+2 hold -2i y_j/(x_j-x_1)^{i+1}.
inline std::vector<double> bracket_matrix(const std::vector<double>& xs,
                                          const std::vector<double>& ys) {
    const std::size_t n_pts = xs.size();         // 2N + 2 configuration points
    if (ys.size() != n_pts - 1)
        throw std::invalid_argument("bracket_matrix: need one y per non-seed point");
    const std::size_t n = 2 * (n_pts - 1);       // 4N + 2
    std::vector<double> A(n * n);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= n_pts - 1; ++j) {
            const double gap = xs[j] - xs[0];
            A[(i - 1) * n + (j - 1)] = 2.0 / std::pow(gap, static_cast<double>(i));
        }
        for (std::size_t j = n_pts; j <= n; ++j) {
            const std::size_t pt = j - (n_pts - 2);  // 2..2N+2, 1-based point index
            const double gap = xs[pt - 1] - xs[0];
            A[(i - 1) * n + (j - 1)] = -2.0 * static_cast<double>(i) * ys[pt - 2] /
                                       std::pow(gap, static_cast<double>(i) + 1.0);
        }
    }
    return A;
}

inline RankReport hypoellipticity_rank(const std::vector<double>& xs,
                                       const std::vector<double>& ys) {
    for (std::size_t k = 1; k < xs.size(); ++k)
        if (!(xs[k] > xs[k - 1]))
            throw std::invalid_argument("hypoellipticity_rank: chamber ordering violated");
    for (double y : ys)
        if (!(y > 0.0)) throw std::invalid_argument("hypoellipticity_rank: y must be positive");
    const std::size_t n = 2 * (xs.size() - 1);
    auto A = bracket_matrix(xs, ys);

    RankReport rep;
    rep.scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += A[i * n + j] * A[i * n + j];
        rep.scale += 0.5 * std::log(row);
    }
    rep.scale = std::exp(rep.scale / static_cast<double>(n));

    detail::jacobi_svd_min(A, n, &rep.min_singular);

    // LU with partial pivoting, log-magnitude determinant
    std::vector<std::size_t> piv(n);
    int sign = 1;
    double log_det = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t pr = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::fabs(A[r * n + c]) > std::fabs(A[pr * n + c])) pr = r;
        if (A[pr * n + c] == 0.0) {
            rep.det_sign = 0;
            rep.log_abs_det = -kInf;
            return rep;
        }
        if (pr != c) {
            for (std::size_t j = 0; j < n; ++j) std::swap(A[pr * n + j], A[c * n + j]);
            sign = -sign;
        }
        const double d = A[c * n + c];
        log_det += std::log(std::fabs(d));
        if (d < 0.0) sign = -sign;
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = A[r * n + c] / d;
            for (std::size_t j = c; j < n; ++j) A[r * n + j] -= f * A[c * n + j];
        }
    }
    (void)piv;
    rep.det_sign = sign;
    rep.log_abs_det = log_det;
    return rep;
}

// Drift field of the generator at a configuration-with-derivatives point; the
// first coordinate carries the kappa-6 term, the others the Loewner flow.
inline std::vector<double> generator_drift_field(double kappa, const std::vector<double>& xs,
                                                 const std::vector<double>& ys) {
    const std::size_t n_pts = xs.size();
    std::vector<double> v(2 * n_pts - 1, 0.0);
    v[0] = (kappa - 6.0) / (xs[0] - xs[1]);
    for (std::size_t j = 1; j < n_pts; ++j) {
        const double gap = xs[j] - xs[0];
        v[j] = 2.0 / gap;
        v[n_pts + j - 1] = -2.0 * ys[j - 1] / (gap * gap);
    }
    return v;
}

// closed form of the n-times bracketed field
inline std::vector<double> bracket_field_closed(double kappa, const std::vector<double>& xs,
                                                const std::vector<double>& ys, int order) {
    const std::size_t n_pts = xs.size();
    std::vector<double> v(2 * n_pts - 1, 0.0);
    v[0] = (6.0 - kappa) / std::pow(xs[1] - xs[0], static_cast<double>(order) + 1.0);
    for (std::size_t j = 1; j < n_pts; ++j) {
        const double gap = xs[j] - xs[0];
        v[j] = 2.0 / std::pow(gap, static_cast<double>(order) + 1.0);
        v[n_pts + j - 1] = -2.0 * (static_cast<double>(order) + 1.0) * ys[j - 1] /
                           std::pow(gap, static_cast<double>(order) + 2.0);
    }
    return v;
}

// Verifies the bracket recursion X^{[m]} = (1/m) [d_1, X^{[m-1]}] by central
// finite differences in the first coordinate; returns the max entrywise error.
inline double bracket_recursion_error(double kappa, const std::vector<double>& xs,
                                      const std::vector<double>& ys, int max_order = 4,
                                      double fd_step = 1e-6) {
    double worst = 0.0;
    for (int m = 1; m <= max_order; ++m) {
        auto xp = xs, xm = xs;
        xp[0] += fd_step;
        xm[0] -= fd_step;
        const auto fp = bracket_field_closed(kappa, xp, ys, m - 1);
        const auto fm = bracket_field_closed(kappa, xm, ys, m - 1);
        const auto target = bracket_field_closed(kappa, xs, ys, m);
        for (std::size_t c = 0; c < target.size(); ++c) {
            const double fd = (fp[c] - fm[c]) / (2.0 * fd_step) / static_cast<double>(m);
            worst = std::max(worst, std::fabs(fd - target[c]));
        }
    }
    return worst;
}

// determinant scaling exponent under x-gap dilation
inline double det_scaling_power(std::size_t n_pts) {
    const auto n = static_cast<double>(2 * (n_pts - 1));
    return -(n * (n + 1.0) / 2.0 + (n / 2.0));
}

}  // namespace lqg
