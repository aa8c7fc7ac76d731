#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "lqg/rng.hpp"
#include "lqg/special.hpp"

namespace lqg {

// Shared verdict thresholds for the whole suite.
inline constexpr double kTestLevel = 0.01;  // p-value cutoff
inline constexpr double kSigmaBand = 3.0;   // mean comparisons use 3 SE

struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline MeanSE mean_se(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("mean_se: need at least two samples");
    const double n = static_cast<double>(xs.size());
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / (n - 1.0) / n), xs.size()};
}

struct TestReport {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    bool pass = false;
};

namespace detail {

// Kolmogorov asymptotic survival function with the Stephens small-sample
// effective-size correction.
inline double ks_p_value(double d, double n_eff) {
    const double sn = std::sqrt(n_eff);
    const double lam = (sn + 0.12 + 0.11 / sn) * d;
    if (lam < 1.0) {
        // dual theta series, fast for small lambda
        if (lam < 1e-9) return 1.0;
        double sum = 0.0;
        for (int k = 1; k <= 20; k += 2) {  // odd k
            sum += std::exp(-k * k * M_PI * M_PI / (8.0 * lam * lam));
        }
        return std::min(1.0, std::max(0.0, 1.0 - std::sqrt(2.0 * M_PI) / lam * sum));
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lam * lam);
        sum += term;
        if (std::fabs(term) < 1e-12) break;
    }
    return std::min(1.0, std::max(0.0, sum));
}

}  // namespace detail

inline TestReport ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.size() < 50 || b.size() < 50)
        throw std::invalid_argument("ks_two_sample: need at least 50 samples per side");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(i / na - j / nb));
    }
    TestReport r;
    r.statistic = d;
    r.p_value = detail::ks_p_value(d, na * nb / (na + nb));
    r.n = a.size() + b.size();
    r.pass = r.p_value > kTestLevel;
    return r;
}

// One-sample KS against Uniform(0,1).
inline TestReport ks_uniform(std::vector<double> a) {
    if (a.size() < 50) throw std::invalid_argument("ks_uniform: need at least 50 samples");
    std::sort(a.begin(), a.end());
    const double n = static_cast<double>(a.size());
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d = std::max(d, std::fabs((i + 1) / n - a[i]));
        d = std::max(d, std::fabs(a[i] - i / n));
    }
    TestReport r;
    r.statistic = d;
    r.p_value = detail::ks_p_value(d, n);
    r.n = a.size();
    r.pass = r.p_value > kTestLevel;
    return r;
}

// Chi-square goodness of fit of integer counts against Poisson with the mean
// estimated from the data. Cells with small expectation are pooled.
inline TestReport chi_square_poisson(const std::vector<long>& counts) {
    if (counts.size() < 20) throw std::invalid_argument("chi_square_poisson: need >= 20 counts");
    const double n = static_cast<double>(counts.size());
    double mean = 0.0;
    long maxc = 0;
    for (long c : counts) {
        mean += c;
        maxc = std::max(maxc, c);
    }
    mean /= n;

    std::vector<double> expected;
    std::vector<double> observed;
    double p = std::exp(-mean);  // P(K = 0)
    double tail = 1.0;
    std::vector<long> hist(static_cast<std::size_t>(maxc) + 1, 0);
    for (long c : counts) ++hist[static_cast<std::size_t>(c)];
    double acc_e = 0.0, acc_o = 0.0;
    for (long k = 0; k <= maxc; ++k) {
        acc_e += n * p;
        acc_o += hist[static_cast<std::size_t>(k)];
        tail -= p;
        if (acc_e >= 5.0) {
            expected.push_back(acc_e);
            observed.push_back(acc_o);
            acc_e = acc_o = 0.0;
        }
        p *= mean / (k + 1.0);
    }
    acc_e += n * std::max(0.0, tail);
    if (!expected.empty()) {
        expected.back() += acc_e;
        observed.back() += acc_o;
    }
    if (expected.size() < 3) throw std::invalid_argument("chi_square_poisson: too few cells");
    double stat = 0.0;
    for (std::size_t k = 0; k < expected.size(); ++k) {
        const double diff = observed[k] - expected[k];
        stat += diff * diff / expected[k];
    }
    TestReport r;
    r.statistic = stat;
    r.n = counts.size();
    const double df = static_cast<double>(expected.size()) - 2.0;  // mean estimated
    r.p_value = chi_square_sf(stat, df);
    r.pass = r.p_value > kTestLevel;
    return r;
}

// Chi-square of observed counts against fixed expected counts.
inline TestReport chi_square_expected(const std::vector<double>& observed,
                                      const std::vector<double>& expected) {
    if (observed.size() != expected.size() || observed.size() < 2)
        throw std::invalid_argument("chi_square_expected: bad cell vectors");
    double stat = 0.0;
    for (std::size_t k = 0; k < observed.size(); ++k) {
        if (expected[k] <= 0.0) throw std::invalid_argument("chi_square_expected: zero cell");
        const double d = observed[k] - expected[k];
        stat += d * d / expected[k];
    }
    TestReport r;
    r.statistic = stat;
    r.n = observed.size();
    r.p_value = chi_square_sf(stat, static_cast<double>(observed.size()) - 1.0);
    r.pass = r.p_value > kTestLevel;
    return r;
}

// Two-sample chi-square on integer counts: do both samples come from one
// count distribution? Cells pooled from the top until each expected >= 5.
inline TestReport chi_square_two_sample_counts(const std::vector<long>& a,
                                               const std::vector<long>& b) {
    if (a.size() < 50 || b.size() < 50)
        throw std::invalid_argument("chi_square_two_sample_counts: need >= 50 counts per side");
    long maxc = 0;
    for (long c : a) maxc = std::max(maxc, c);
    for (long c : b) maxc = std::max(maxc, c);
    std::vector<double> ha(maxc + 1, 0.0), hb(maxc + 1, 0.0);
    for (long c : a) ++ha[c];
    for (long c : b) ++hb[c];
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    // pool cells so that the pooled totals are not tiny
    std::vector<double> pa, pb;
    double ca = 0.0, cb = 0.0;
    for (long k = 0; k <= maxc; ++k) {
        ca += ha[k];
        cb += hb[k];
        if ((ca + cb) * std::min(na, nb) / (na + nb) >= 5.0) {
            pa.push_back(ca);
            pb.push_back(cb);
            ca = cb = 0.0;
        }
    }
    if (ca + cb > 0.0 && !pa.empty()) {
        pa.back() += ca;
        pb.back() += cb;
    }
    if (pa.size() < 2) throw std::invalid_argument("chi_square_two_sample_counts: too few cells");
    double stat = 0.0;
    for (std::size_t k = 0; k < pa.size(); ++k) {
        const double tot = pa[k] + pb[k];
        const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
        stat += (pa[k] - ea) * (pa[k] - ea) / ea + (pb[k] - eb) * (pb[k] - eb) / eb;
    }
    TestReport r;
    r.statistic = stat;
    r.n = a.size() + b.size();
    r.p_value = chi_square_sf(stat, static_cast<double>(pa.size()) - 1.0);
    r.pass = r.p_value > kTestLevel;
    return r;
}

// ---------------------------------------------------------------------------
// power-law density exponent via log-binned least squares
// ---------------------------------------------------------------------------

struct TailFit {
    double exponent = 0.0;   // fitted density exponent (slope of log density)
    double ci_lo = 0.0;      // 95% bootstrap interval
    double ci_hi = 0.0;
    double r2 = 0.0;
    double hill = 0.0;       // Hill tail-index cross-check (positive index)
    std::size_t n_window = 0;
    bool poor_fit = false;
};

namespace detail {

inline double fit_log_slope(const std::vector<double>& xs, double a, double b, int nbins,
                            double* r2_out) {
    std::vector<double> edges(nbins + 1);
    const double la = std::log(a), lb = std::log(b);
    for (int i = 0; i <= nbins; ++i) edges[i] = std::exp(la + (lb - la) * i / nbins);
    std::vector<double> cnt(nbins, 0.0);
    for (double x : xs) {
        if (x < a || x >= b) continue;
        int k = static_cast<int>((std::log(x) - la) / (lb - la) * nbins);
        k = std::min(std::max(k, 0), nbins - 1);
        cnt[k] += 1.0;
    }
    std::vector<double> lx, ly;
    for (int i = 0; i < nbins; ++i) {
        if (cnt[i] <= 0.0) continue;
        const double width = edges[i + 1] - edges[i];
        lx.push_back(0.5 * (std::log(edges[i]) + std::log(edges[i + 1])));
        ly.push_back(std::log(cnt[i] / width));
    }
    if (lx.size() < 4) throw std::invalid_argument("tail_exponent: sparse window");
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
        syy += ly[i] * ly[i];
    }
    const double den = n * sxx - sx * sx;
    if (den <= 0.0) throw std::invalid_argument("tail_exponent: degenerate abscissae");
    const double slope = (n * sxy - sx * sy) / den;
    if (r2_out) {
        const double sse_den = (n * syy - sy * sy);
        *r2_out = sse_den > 0.0 ? (n * sxy - sx * sy) * (n * sxy - sx * sy) / (den * sse_den) : 0.0;
    }
    return slope;
}

}  // namespace detail

inline TailFit tail_exponent(const std::vector<double>& samples, double a, double b, Rng& rng,
                             int nbins = 24, int nboot = 200) {
    if (!(a > 0.0 && b > a)) throw std::invalid_argument("tail_exponent: bad window");
    std::vector<double> in;
    for (double x : samples)
        if (x >= a && x < b) in.push_back(x);
    if (in.size() < 500) throw std::invalid_argument("tail_exponent: sparse window");
    if (*std::max_element(in.begin(), in.end()) == *std::min_element(in.begin(), in.end()))
        throw std::invalid_argument("tail_exponent: degenerate samples");

    TailFit fit;
    fit.n_window = in.size();
    fit.exponent = detail::fit_log_slope(in, a, b, nbins, &fit.r2);
    // a power law has the same local slope on both halves of the window
    const double mid = std::sqrt(a * b);
    double drift = 0.0;
    try {
        const double lo_slope = detail::fit_log_slope(in, a, mid, std::max(nbins / 2, 6), nullptr);
        const double hi_slope = detail::fit_log_slope(in, mid, b, std::max(nbins / 2, 6), nullptr);
        drift = std::fabs(hi_slope - lo_slope);
    } catch (const std::invalid_argument&) {
        drift = 0.0;  // halves too sparse to resolve
    }
    fit.poor_fit = fit.r2 < 0.9 || drift > 0.75;

    // Hill estimator over the window, reported as a positive tail index.
    double hsum = 0.0;
    for (double x : in) hsum += std::log(x / a);
    fit.hill = hsum > 0.0 ? static_cast<double>(in.size()) / hsum : 0.0;

    std::vector<double> boot(nboot);
    std::vector<double> resample(in.size());
    for (int r = 0; r < nboot; ++r) {
        for (std::size_t i = 0; i < in.size(); ++i)
            resample[i] = in[static_cast<std::size_t>(rng.uniform() * in.size())];
        try {
            boot[r] = detail::fit_log_slope(resample, a, b, nbins, nullptr);
        } catch (const std::invalid_argument&) {
            boot[r] = fit.exponent;
        }
    }
    std::sort(boot.begin(), boot.end());
    fit.ci_lo = boot[static_cast<std::size_t>(0.025 * nboot)];
    fit.ci_hi = boot[std::min<std::size_t>(static_cast<std::size_t>(0.975 * nboot), nboot - 1)];
    return fit;
}

// Two-sided p-value for equality of a plain proportion and a weighted one.
inline double two_proportion_p(double p1, double se1, double p2, double se2) {
    const double se = std::sqrt(se1 * se1 + se2 * se2);
    if (se == 0.0) return p1 == p2 ? 1.0 : 0.0;
    const double z = std::fabs(p1 - p2) / se;
    return std::erfc(z / std::sqrt(2.0));
}

}  // namespace lqg
