#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace lqg {

// Reproducibility contract: identical (seed, stream) gives identical output
// bit-for-bit on any platform, so all distributions below are hand-rolled
// rather than delegated to implementation-defined <random> facilities.
struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    RngState child(std::uint64_t id) const {
        // SplitMix64-style mix keeps distinct children decorrelated.
        std::uint64_t z = stream + 0x9e3779b97f4a7c15ULL * (id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return RngState{seed, z ^ (z >> 31)};
    }
};

class Rng {
  public:
    explicit Rng(RngState st) {
        std::uint64_t x = st.seed ^ (0x9e3779b97f4a7c15ULL + st.stream);
        for (int i = 0; i < 4; ++i) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            s_[i] = z ^ (z >> 31);
        }
        // xoshiro must not start from the all-zero state
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }
    Rng(std::uint64_t seed, std::uint64_t stream) : Rng(RngState{seed, stream}) {}

    std::uint64_t u64() {  // xoshiro256++
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on (0, 1), never returns an exact endpoint
    double uniform() { return (static_cast<double>(u64() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * f;
        have_cached_ = true;
        return u * f;
    }

    double exponential() { return -std::log(uniform()); }

    // Marsaglia-Tsang, boosted for shape < 1. Scale 1.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be > 0");
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    long poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: mean must be >= 0");
        if (mean == 0.0) return 0;
        if (mean < 30.0) {
            // inversion by sequential search
            const double L = std::exp(-mean);
            long k = 0;
            double p = 1.0;
            do {
                ++k;
                p *= uniform();
            } while (p > L);
            return k - 1;
        }
        // PTRS transformed rejection (Hoermann 1993)
        const double smu = std::sqrt(mean);
        const double bpar = 0.931 + 2.53 * smu;
        const double apar = -0.059 + 0.02483 * bpar;
        const double inv_alpha = 1.1239 + 1.1328 / (bpar - 3.4);
        const double vr = 0.9277 - 3.6224 / (bpar - 2.0);
        for (;;) {
            double u = uniform() - 0.5;
            double v = uniform();
            double us = 0.5 - std::fabs(u);
            double k = std::floor((2.0 * apar / us + bpar) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<long>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v * inv_alpha / (apar / (us * us) + bpar)) <=
                k * std::log(mean) - mean - log_factorial(k)) {
                return static_cast<long>(k);
            }
        }
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static double log_factorial(double k) {
        // Stirling with correction, exact table for small k
        static const double tab[] = {0.0,
                                     0.0,
                                     0.6931471805599453,
                                     1.791759469228055,
                                     3.1780538303479458,
                                     4.787491742782046,
                                     6.579251212010101,
                                     8.525161361065415,
                                     10.60460290274525,
                                     12.801827480081469};
        if (k < 10.0) return tab[static_cast<int>(k)];
        const double kk = k + 1.0;
        return (kk - 0.5) * std::log(kk) - kk + 0.9189385332046727 + 1.0 / (12.0 * kk) -
               1.0 / (360.0 * kk * kk * kk);
    }

    std::uint64_t s_[4];
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace lqg
