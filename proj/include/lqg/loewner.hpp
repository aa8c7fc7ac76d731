#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <stdexcept>
#include <vector>

#include "lqg/geometry.hpp"
#include "lqg/params.hpp"
#include "lqg/rng.hpp"
#include "lqg/special.hpp"

namespace lqg {

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// forward Loewner evolution with tracked boundary points
// ---------------------------------------------------------------------------

struct TrackedPoint {
    double x0 = 0.0;       // initial position
    double g = 0.0;        // g_t(x)
    double gp = 1.0;       // g_t'(x)
    int side = 0;          // sign of x0 - seed
    bool swallowed = false;
    double swallow_time = 0.0;
};

enum class DriverKind { Plain, RhoPair, KappaMinus6 };

struct Driver {
    DriverKind kind = DriverKind::Plain;
    double rho_minus = 0.0, rho_plus = 0.0;  // force-point weights
    std::size_t target = 0;                  // tracked index for the kappa-6 drift
};

struct LoewnerConfig {
    double dt_max = 1e-3;
    double c_adapt = 0.01;
    double eps_swallow_rel = 1e-4;  // swallow threshold relative to the initial min gap
    double force_offset = 1e-7;    // initial V^{pm} displacement from the seed
};

struct LoewnerState {
    double t = 0.0;
    double W = 0.0;
    double w_min = 0.0, w_max = 0.0;  // range of the driving value so far
    std::vector<TrackedPoint> pts;
    bool has_force = false;
    double Vm = 0.0, Vp = 0.0;
    double eps_swallow = 0.0;
};

inline LoewnerState make_loewner_state(double seed, const std::vector<double>& xs,
                                       const LoewnerConfig& cfg = {}, bool with_force = false) {
    LoewnerState st;
    st.W = st.w_min = st.w_max = seed;
    double min_gap = kInf;
    for (double x : xs) {
        if (x == seed) throw std::invalid_argument("make_loewner_state: point equals seed");
        TrackedPoint tp;
        tp.x0 = tp.g = x;
        tp.side = x > seed ? 1 : -1;
        st.pts.push_back(tp);
        min_gap = std::min(min_gap, std::fabs(x - seed));
    }
    st.eps_swallow = cfg.eps_swallow_rel * (std::isinf(min_gap) ? 1.0 : min_gap);
    if (with_force) {
        st.has_force = true;
        st.Vm = seed - cfg.force_offset;
        st.Vp = seed + cfg.force_offset;
    }
    return st;
}

namespace detail {

// exact update of g and g' over dt for frozen W
inline void advance_point(double W, double dt, double& g, double& gp) {
    const double gap = g - W;
    const double gap2 = gap * gap;
    g = W + (gap >= 0.0 ? 1.0 : -1.0) * std::sqrt(gap2 + 4.0 * dt);
    gp *= std::sqrt(gap2 / (gap2 + 4.0 * dt));
}

}  // namespace detail

// One adaptive Euler-Maruyama step. The tracked quantities follow the exact
// constant-driver flow over the substep, the driving value takes the Euler
// increment afterwards; points whose gap closes below eps_swallow freeze with
// their last pre-swallow data.
inline void step_sle(LoewnerState& st, const Driver& drv, double kappa, const LoewnerConfig& cfg,
                     Rng& rng) {
    double dt = cfg.dt_max;
    for (const auto& tp : st.pts)
        if (!tp.swallowed) {
            const double gap = tp.g - st.W;
            dt = std::min(dt, cfg.c_adapt * gap * gap);
        }
    if (st.has_force && (drv.rho_minus != 0.0 || drv.rho_plus != 0.0)) {
        const double gm = st.Vm - st.W, gp = st.Vp - st.W;
        dt = std::min({dt, cfg.c_adapt * gm * gm, cfg.c_adapt * gp * gp});
    }
    dt = std::max(dt, 1e-14);

    double drift = 0.0;
    switch (drv.kind) {
        case DriverKind::Plain:
            break;
        case DriverKind::RhoPair:
            drift = drv.rho_minus / (st.W - st.Vm) + drv.rho_plus / (st.W - st.Vp);
            break;
        case DriverKind::KappaMinus6:
            drift = (kappa - 6.0) / (st.W - st.pts[drv.target].g);
            break;
    }

    const double W_old = st.W;
    for (auto& tp : st.pts) {
        if (tp.swallowed) continue;
        detail::advance_point(W_old, dt, tp.g, tp.gp);
    }
    if (st.has_force) {
        double unit = 1.0;
        detail::advance_point(W_old, dt, st.Vm, unit);
        unit = 1.0;
        detail::advance_point(W_old, dt, st.Vp, unit);
    }
    st.W = W_old + drift * dt + std::sqrt(kappa * dt) * rng.normal();
    st.w_min = std::min(st.w_min, st.W);
    st.w_max = std::max(st.w_max, st.W);
    st.t += dt;

    for (std::size_t i = 0; i < st.pts.size(); ++i) {
        auto& tp = st.pts[i];
        if (tp.swallowed) continue;
        if (drv.kind == DriverKind::KappaMinus6 && i == drv.target) continue;
        const double gap = tp.g - st.W;
        if (std::fabs(gap) <= st.eps_swallow || gap * tp.side < 0.0) {
            tp.swallowed = true;
            tp.swallow_time = st.t;
        }
    }
}

struct RunToTauResult {
    LoewnerState state;
    bool reached = false;  // gap to the target hit eps before T_max
};

// Evolves the kappa-6 driver from x1 toward x2 until |g(x2) - W| <= eps.
// Spectators are tracked with full swallow bookkeeping; the driving path is
// appended to record when given.
inline RunToTauResult run_to_tau(double kappa, double x1, double x2,
                                 const std::vector<double>& spectators, double eps, double T_max,
                                 Rng& rng, const LoewnerConfig& cfg = {},
                                 std::vector<std::pair<double, double>>* record = nullptr) {
    std::vector<double> xs;
    xs.push_back(x2);
    for (double s : spectators) xs.push_back(s);
    RunToTauResult out;
    out.state = make_loewner_state(x1, xs, cfg);
    Driver drv;
    drv.kind = DriverKind::KappaMinus6;
    drv.target = 0;
    if (record) record->push_back({0.0, x1});
    while (out.state.t < T_max) {
        if (std::fabs(out.state.pts[0].g - out.state.W) <= eps) {
            out.reached = true;
            break;
        }
        step_sle(out.state, drv, kappa, cfg, rng);
        if (record) record->push_back({out.state.t, out.state.W});
    }
    if (!out.reached && std::fabs(out.state.pts[0].g - out.state.W) <= eps) out.reached = true;
    return out;
}

// ---------------------------------------------------------------------------
// curve tracing by backward composition of incremental slit maps
// ---------------------------------------------------------------------------

struct TracedCurve {
    std::vector<Complex> vertices;  // gamma(t_k), k = 0..n
    std::vector<double> times;
    double dt = 0.0;
};

namespace detail {

// H-preserving branch of sqrt((z - w)^2 - 4 dt)
inline Complex slit_inverse(Complex z, double w, double dt) {
    const Complex u = (z - w) * (z - w) - 4.0 * dt;
    Complex s = std::sqrt(u);  // principal, Re s >= 0
    if (std::real(z) - w < 0.0 && std::real(s) > 0.0) s = -s;
    if (std::imag(s) < 0.0) s = -s;  // the image must stay in closed H
    return w + s;
}

}  // namespace detail

// Piecewise-constant driving on a uniform grid; vertex k approximates the
// curve point grown during step k, via the inverse incremental vertical-slit
// maps composed from the outside in.
inline TracedCurve trace_curve(const std::vector<double>& W_grid, double dt) {
    if (W_grid.size() < 2) throw std::invalid_argument("trace_curve: need at least two samples");
    TracedCurve out;
    out.dt = dt;
    const std::size_t n = W_grid.size() - 1;
    out.vertices.reserve(n + 1);
    out.times.reserve(n + 1);
    out.vertices.push_back(Complex(W_grid[0], 0.0));
    out.times.push_back(0.0);
    for (std::size_t k = 1; k <= n; ++k) {
        // tip of the k-th incremental slit, pulled down through the earlier
        // maps; midpoint driving values on each step
        Complex z(0.5 * (W_grid[k - 1] + W_grid[k]), 2.0 * std::sqrt(dt));
        for (std::size_t j = k - 1; j >= 1; --j)
            z = detail::slit_inverse(z, 0.5 * (W_grid[j - 1] + W_grid[j]), dt);
        if (std::imag(z) < 0.0) z = Complex(std::real(z), 0.0);  // clamp blowups to the boundary
        out.vertices.push_back(z);
        out.times.push_back(k * dt);
    }
    return out;
}

// curve tip alone (the last vertex) in O(n) map compositions
inline Complex trace_tip(const std::vector<double>& W_grid, double dt) {
    const std::size_t n = W_grid.size() - 1;
    Complex z(0.5 * (W_grid[n - 1] + W_grid[n]), 2.0 * std::sqrt(dt));
    for (std::size_t j = n - 1; j >= 1; --j)
        z = detail::slit_inverse(z, 0.5 * (W_grid[j - 1] + W_grid[j]), dt);
    return z;
}

// Resamples an adaptive driving record onto a uniform grid. Grid times
// between record points are filled in by a Brownian bridge at variance rate
// kappa: plain interpolation would erase the sub-record roughness that makes
// the curve touch down.
inline std::vector<double> resample_driving(const std::vector<std::pair<double, double>>& rec,
                                            std::size_t n_steps, double kappa, Rng& rng) {
    if (rec.size() < 2) throw std::invalid_argument("resample_driving: record too short");
    std::vector<double> out(n_steps + 1);
    const double T = rec.back().first;
    std::size_t j = 0;
    double t_cur = rec[0].first, w_cur = rec[0].second;
    out[0] = w_cur;
    for (std::size_t k = 1; k <= n_steps; ++k) {
        const double t_g = T * static_cast<double>(k) / static_cast<double>(n_steps);
        while (j + 1 < rec.size() && rec[j + 1].first <= t_g) {
            ++j;
            t_cur = rec[j].first;
            w_cur = rec[j].second;
        }
        if (t_g <= t_cur || j + 1 >= rec.size()) {
            out[k] = w_cur;
            continue;
        }
        const double t_b = rec[j + 1].first, w_b = rec[j + 1].second;
        const double frac = (t_g - t_cur) / (t_b - t_cur);
        const double var = kappa * (t_g - t_cur) * (t_b - t_g) / (t_b - t_cur);
        w_cur += (w_b - w_cur) * frac + std::sqrt(std::max(var, 0.0)) * rng.normal();
        t_cur = t_g;
        out[k] = w_cur;
    }
    return out;
}

// ---------------------------------------------------------------------------
// component location for boundary points
// ---------------------------------------------------------------------------

struct PocketArc {
    std::size_t from = 0, to = 0;  // vertex index range of the enclosing arc
    double foot_left = 0.0, foot_right = 0.0;
    double close_time = 0.0;
};

struct ComponentAssignment {
    // 0 = unbounded component, k >= 1 indexes pockets[k-1]
    std::vector<int> component;
    std::vector<PocketArc> pockets;
    std::vector<bool> ambiguous;
};

namespace detail {

inline bool point_in_polygon(const std::vector<Complex>& poly, double px, double py) {
    bool in = false;
    std::size_t j = poly.size() - 1;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const double xi = std::real(poly[i]), yi = std::imag(poly[i]);
        const double xj = std::real(poly[j]), yj = std::imag(poly[j]);
        if ((yi > py) != (yj > py)) {
            const double xc = xi + (py - yi) / (yj - yi) * (xj - xi);
            if (px < xc) in = !in;
        }
        j = i;
    }
    return in;
}

}  // namespace detail

// Locates each query point among the complement components of the traced
// curve. Touchdown candidates are prominence-filtered local minima of the
// tip height (their absolute depth is resolution-limited, the minima
// structure is not); the arcs between consecutive touchdowns bound the
// candidate pockets, and the earliest enclosing arc is the component (the
// curve never re-enters a closed pocket). Points within tolerance of a foot
// are flagged ambiguous.
inline std::vector<std::size_t> touchdown_indices(const TracedCurve& curve,
                                                  bool tip_is_touchdown,
                                                  double prominence = 3.0) {
    const std::size_t n = curve.vertices.size();
    std::vector<std::size_t> touches;
    touches.push_back(0);  // the seed sits on the line
    const std::size_t win = std::max<std::size_t>(4, n / 128);
    for (std::size_t k = 1; k + 1 < n; ++k) {
        const double im = std::imag(curve.vertices[k]);
        bool is_min = true;
        for (std::size_t j = k > win ? k - win : 1; j <= std::min(n - 2, k + win) && is_min; ++j)
            if (j != k && std::imag(curve.vertices[j]) < im) is_min = false;
        if (!is_min) continue;
        double left_max = 0.0, right_max = 0.0;
        for (std::size_t j = k > win ? k - win : 1; j < k; ++j)
            left_max = std::max(left_max, std::imag(curve.vertices[j]));
        for (std::size_t j = k + 1; j <= std::min(n - 2, k + win); ++j)
            right_max = std::max(right_max, std::imag(curve.vertices[j]));
        if (std::min(left_max, right_max) > prominence * std::max(im, 1e-12))
            touches.push_back(k);
    }
    if (tip_is_touchdown) touches.push_back(n - 1);
    return touches;
}

inline ComponentAssignment locate_components(const TracedCurve& curve,
                                             const std::vector<double>& points,
                                             bool tip_is_touchdown = false,
                                             double foot_tol = 0.0) {
    if (foot_tol <= 0.0) foot_tol = 1.5 * std::cbrt(curve.dt);
    ComponentAssignment out;
    out.component.assign(points.size(), 0);
    out.ambiguous.assign(points.size(), false);

    const auto touches = touchdown_indices(curve, tip_is_touchdown);
    if (touches.size() < 2) return out;

    std::vector<Complex> poly;
    for (std::size_t ti = 0; ti + 1 < touches.size(); ++ti) {
        const std::size_t ka = touches[ti], kb = touches[ti + 1];
        if (kb - ka < 2) continue;  // no interior arc
        const double fa = std::real(curve.vertices[ka]), fb = std::real(curve.vertices[kb]);
        if (std::fabs(fa - fb) < foot_tol) continue;  // degenerate sliver
        poly.clear();
        poly.push_back(Complex(fa, 0.0));  // feet dropped to the line close the polygon
        poly.insert(poly.end(), curve.vertices.begin() + static_cast<std::ptrdiff_t>(ka),
                    curve.vertices.begin() + static_cast<std::ptrdiff_t>(kb + 1));
        poly.push_back(Complex(fb, 0.0));
        PocketArc arc;
        arc.from = ka;
        arc.to = kb;
        arc.foot_left = std::min(fa, fb);
        arc.foot_right = std::max(fa, fb);
        arc.close_time = curve.times[kb];
        bool used = false;
        for (std::size_t q = 0; q < points.size(); ++q) {
            if (out.component[q] != 0) continue;  // earliest enclosure wins
            const double x = points[q];
            if (x < arc.foot_left - foot_tol || x > arc.foot_right + foot_tol) continue;
            if (std::fabs(x - arc.foot_left) < foot_tol || std::fabs(x - arc.foot_right) < foot_tol) {
                out.ambiguous[q] = true;
                continue;
            }
            if (detail::point_in_polygon(poly, x, 1e-6 * (arc.foot_right - arc.foot_left))) {
                if (!used) {
                    out.pockets.push_back(arc);
                    used = true;
                }
                out.component[q] = static_cast<int>(out.pockets.size());
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// boundary Poisson kernel of a pocket via the geodesic zipper
// ---------------------------------------------------------------------------

namespace detail {

// removes the hyperbolic geodesic from 0 to a, tip lands at 0
struct GeodesicUnzip {
    bool mobius = false;
    double b = 0.0;  // m(z) = z / (1 - z/b)
    double d = 0.0;  // slit height after m

    static GeodesicUnzip from_tip(Complex a) {
        GeodesicUnzip u;
        if (std::fabs(std::real(a)) > 1e-12 * std::abs(a)) {
            u.mobius = true;
            u.b = std::norm(a) / std::real(a);
            u.d = std::norm(a) / std::imag(a);
        } else {
            u.d = std::imag(a);
        }
        return u;
    }

    Complex apply(Complex z) const {
        if (mobius) z = z / (1.0 - z / b);
        const Complex s = std::sqrt(z * z + d * d);
        // H-branch: follow the sign of Re z, imaginary axis maps up
        if (std::real(z) > 0.0) return std::real(s) >= 0.0 ? s : -s;
        if (std::real(z) < 0.0) return std::real(s) <= 0.0 ? s : -s;
        return std::imag(s) >= 0.0 ? s : -s;
    }

    double apply_real(double x, double* deriv) const {
        double mx = x, dm = 1.0;
        if (mobius) {
            const double den = 1.0 - x / b;
            mx = x / den;
            dm = 1.0 / (den * den);
        }
        const double root = std::sqrt(mx * mx + d * d);
        const double s = (mx >= 0.0 ? root : -root);
        if (deriv) *deriv *= dm * std::fabs(mx) / root;
        return s;
    }
};

}  // namespace detail

// Conformal map data for a pocket bounded by a real base segment [L, R] and a
// curve arc from R back to L, computed by unzipping the arc vertices along
// geodesics. Marked points live strictly inside (L, R) and map to the real
// line from the first step on, so their boundary derivatives chain through
// analytically.
class PocketMap {
  public:
    PocketMap(std::vector<Complex> arc_from_right, double L, double R) : L_(L), R_(R) {
        if (!(L < R)) throw std::invalid_argument("PocketMap: base segment degenerate");
        for (Complex z : arc_from_right)
            if (std::imag(z) > 1e-9) arc_.push_back(z);
        if (arc_.size() < 8) throw numeric_error("PocketMap: arc too sparse");
        build();
    }

    // boundary Poisson kernel between two marked points on the base segment
    double kernel(double a, double b) const {
        if (!(a > L_ && a < R_ && b > L_ && b < R_) || a == b)
            throw std::invalid_argument("PocketMap: marked points must lie inside the base");
        double da = 1.0, db = 1.0;
        const double fa = map_real(a, &da);
        const double fb = map_real(b, &db);
        const double gap = fa - fb;
        if (!std::isfinite(fa) || !std::isfinite(fb) || gap == 0.0)
            throw numeric_error("PocketMap: degenerate image");
        return da * db / (gap * gap);
    }

  private:
    void build() {
        steps_.clear();
        // initial map i sqrt((z - R)/(z - L)): base segment opens onto R_-,
        // the arc hangs in H starting from the image of the right foot
        for (Complex v : arc_) {
            Complex w = phi1(v);
            for (const auto& u : steps_) w = u.apply(w);
            if (!(std::imag(w) > 1e-12) || !std::isfinite(std::real(w)) ||
                !std::isfinite(std::imag(w)) || std::abs(w) > 1e9)
                continue;  // grazing or runaway vertex, absorbed by the interpolation
            steps_.push_back(detail::GeodesicUnzip::from_tip(w));
        }
        if (steps_.size() < 4) throw numeric_error("PocketMap: unzip chain collapsed");
    }

    Complex phi1(Complex z) const {
        return Complex(0.0, 1.0) * std::sqrt((z - R_) / (z - L_));
    }

    // phi1 on the open base segment, approached from the pocket side
    double phi1_real(double x, double* deriv) const {
        const double ratio = (R_ - x) / (x - L_);
        const double val = -std::sqrt(ratio);
        if (deriv) {
            const double dr = (L_ - R_) / ((x - L_) * (x - L_));
            *deriv *= -dr / (2.0 * std::sqrt(ratio));
        }
        return val;
    }

    double map_real(double x, double* deriv) const {
        *deriv = 1.0;
        double u = phi1_real(x, deriv);
        for (const auto& s : steps_) u = s.apply_real(u, deriv);
        // closing geodesic is the positive imaginary axis; both quarters fold
        // onto H by z^{+-2}, and the kernel does not depend on the choice of
        // the H-automorphism, so square toward the side the base landed on
        if (deriv) *deriv = std::fabs(*deriv * 2.0 * u);
        return u * u;
    }

    double L_, R_;
    std::vector<Complex> arc_;
    std::vector<detail::GeodesicUnzip> steps_;
};

// kernel for the pocket identified by locate_components
inline double component_poisson_kernel(const TracedCurve& curve, const PocketArc& arc, double a,
                                       double b, std::size_t max_vertices = 600) {
    std::vector<Complex> rev;
    const std::size_t len = arc.to - arc.from + 1;
    const std::size_t stride = std::max<std::size_t>(1, len / max_vertices);
    // walk the arc from the right foot toward the left foot
    const bool right_first = std::real(curve.vertices[arc.from]) > std::real(curve.vertices[arc.to]);
    if (right_first) {
        for (std::size_t k = arc.from; k <= arc.to; k += stride) rev.push_back(curve.vertices[k]);
    } else {
        for (std::size_t k = arc.to + 1; k-- > arc.from;) {
            if ((arc.to - k) % stride == 0) rev.push_back(curve.vertices[k]);
        }
    }
    PocketMap pm(std::move(rev), arc.foot_left, arc.foot_right);
    return pm.kernel(a, b);
}

}  // namespace lqg
