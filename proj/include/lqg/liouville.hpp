#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lqg/geometry.hpp"
#include "lqg/params.hpp"
#include "lqg/rng.hpp"
#include "lqg/stats.hpp"

namespace lqg {

// ---------------------------------------------------------------------------
// discretized boundary field
// ---------------------------------------------------------------------------

// Dense Gaussian model of the boundary field on a uniform grid over [-R, R]
// with covariance C(x, y) = -2 log(max(|x-y|, eps)) + 2 log|x|_+ + 2 log|y|_+.
// The mollification scale is eps = (2/pi) dx: the hard-truncated log kernel
// carries an alternating-mode defect of exactly 2 log(pi/2), and this choice
// of eps absorbs it, making the matrix positive semidefinite.
class BoundaryFieldModel {
  public:
    BoundaryFieldModel(double R, std::size_t n_grid) {
        if (n_grid < 16) throw std::invalid_argument("BoundaryFieldModel: need n_grid >= 16");
        if (!(R > 0.0)) throw std::invalid_argument("BoundaryFieldModel: R must be > 0");
        n_ = n_grid;
        x_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i)
            x_[i] = -R + 2.0 * R * static_cast<double>(i) / static_cast<double>(n_ - 1);
        dx_ = x_[1] - x_[0];
        eps_ = 2.0 / M_PI * dx_;
        cov_.resize(n_ * n_);
        double max_diag = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                const double dist = std::max(std::fabs(x_[i] - x_[j]), eps_);
                const double c = -2.0 * std::log(dist) + 2.0 * log_plus(x_[i]) + 2.0 * log_plus(x_[j]);
                cov_[i * n_ + j] = cov_[j * n_ + i] = c;
            }
            max_diag = std::max(max_diag, cov_[i * n_ + i]);
        }
        // Cholesky with escalating diagonal jitter, capped at 1e-8 * max diag
        for (double jitter : {0.0, 1e-12 * max_diag, 1e-10 * max_diag, 1e-8 * max_diag}) {
            if (try_factor(jitter)) return;
        }
        throw numeric_error("BoundaryFieldModel: covariance factorization failed");
    }

    std::size_t size() const { return n_; }
    double grid_step() const { return dx_; }
    double mollification() const { return eps_; }
    const std::vector<double>& grid() const { return x_; }
    double cov(std::size_t i, std::size_t j) const { return cov_[i * n_ + j]; }

    std::size_t index_of(double s) const {
        const auto it = std::lower_bound(x_.begin(), x_.end(), s - dx_ / 2.0);
        if (it == x_.end()) throw std::invalid_argument("BoundaryFieldModel: point off the grid");
        return static_cast<std::size_t>(it - x_.begin());
    }

    std::vector<double> sample(Rng& rng) const {
        std::vector<double> z(n_), h(n_, 0.0);
        for (auto& v : z) v = rng.normal();
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            const double* row = chol_.data() + i * n_;
            for (std::size_t j = 0; j <= i; ++j) acc += row[j] * z[j];
            h[i] = acc;
        }
        return h;
    }

  private:
    bool try_factor(double jitter) {
        chol_ = cov_;
        for (std::size_t i = 0; i < n_; ++i) chol_[i * n_ + i] += jitter;
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j <= i; ++j) {
                double sum = chol_[i * n_ + j];
                for (std::size_t k = 0; k < j; ++k) sum -= chol_[i * n_ + k] * chol_[j * n_ + k];
                if (i == j) {
                    if (sum <= 0.0) return false;
                    chol_[i * n_ + i] = std::sqrt(sum);
                } else {
                    chol_[i * n_ + j] = sum / chol_[j * n_ + j];
                }
            }
            for (std::size_t j = i + 1; j < n_; ++j) chol_[i * n_ + j] = 0.0;
        }
        return true;
    }

    std::size_t n_ = 0;
    double dx_ = 0.0, eps_ = 0.0;
    std::vector<double> x_, cov_, chol_;
};

// ---------------------------------------------------------------------------
// boundary GMC length
// ---------------------------------------------------------------------------

// nu(I) = sum over grid points in I of eps^{g^2/4} e^{(g/2) h(x)} dx
inline double gmc_length(const BoundaryFieldModel& model, const std::vector<double>& h,
                         const ModelParams& p, double a, double b) {
    const double w = std::pow(model.mollification(), p.gamma * p.gamma / 4.0) * model.grid_step();
    double acc = 0.0;
    const auto& x = model.grid();
    for (std::size_t i = 0; i < model.size(); ++i)
        if (x[i] >= a && x[i] <= b) acc += w * std::exp(p.gamma / 2.0 * h[i]);
    return acc;
}

// exact first moment of nu(I) for the Gaussian field
inline double gmc_mean_exact(const BoundaryFieldModel& model, const ModelParams& p, double a,
                             double b) {
    const double w = std::pow(model.mollification(), p.gamma * p.gamma / 4.0) * model.grid_step();
    double acc = 0.0;
    const auto& x = model.grid();
    for (std::size_t i = 0; i < model.size(); ++i)
        if (x[i] >= a && x[i] <= b)
            acc += w * std::exp(p.gamma * p.gamma / 8.0 * model.cov(i, i));
    return acc;
}

// ---------------------------------------------------------------------------
// deterministic Liouville profile with boundary insertions
// ---------------------------------------------------------------------------

struct Insertion {
    double beta;
    double s;  // boundary point, may be +infinity
};

// f(x) = -2 Q log|x|_+ + (1/2) sum_i beta_i G(s_i, x)
inline double liouville_profile(const ModelParams& p, const std::vector<Insertion>& insertions,
                                double x) {
    double f = -2.0 * p.Q * log_plus(x);
    for (const auto& ins : insertions) f += 0.5 * ins.beta * green_H(ins.s, x);
    return f;
}

// ---------------------------------------------------------------------------
// Girsanov shift identity for one insertion
// ---------------------------------------------------------------------------

struct GirsanovReport {
    double beta = 0.0;
    double insertion_point = 0.0;
    // F = nu(I) and F = exp(-nu(I)) sides with standard errors
    double lhs_linear = 0.0, lhs_linear_se = 0.0;
    double rhs_linear = 0.0, rhs_linear_se = 0.0;
    double lhs_exp = 0.0, lhs_exp_se = 0.0;
    double rhs_exp = 0.0, rhs_exp_se = 0.0;
    bool pass = false;
};

// E[e^{(beta/2) h(s)} F(h)] = e^{(beta^2/8) C(s,s)} E[F(h + (beta/2) C(s, .))]
// tested for F = nu(I) and F = exp(-nu(I)); the left side uses importance
// weights, the right side the shifted field.
inline GirsanovReport girsanov_insertion_check(const BoundaryFieldModel& model,
                                               const ModelParams& p, double beta, double s,
                                               double a, double b, std::size_t n, Rng& rng) {
    GirsanovReport rep;
    rep.beta = beta;
    const std::size_t si = model.index_of(s);
    rep.insertion_point = model.grid()[si];
    const double mgf = std::exp(beta * beta / 8.0 * model.cov(si, si));

    std::vector<double> shift(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) shift[i] = beta / 2.0 * model.cov(si, i);

    std::vector<double> lhs_lin(n), lhs_exp(n), rhs_lin(n), rhs_exp(n);
    std::vector<double> h;
    for (std::size_t r = 0; r < n; ++r) {
        h = model.sample(rng);
        const double w = std::exp(beta / 2.0 * h[si]);
        const double nu = gmc_length(model, h, p, a, b);
        lhs_lin[r] = w * nu;
        lhs_exp[r] = w * std::exp(-nu);
        for (std::size_t i = 0; i < model.size(); ++i) h[i] += shift[i];
        const double nu_sh = gmc_length(model, h, p, a, b);
        rhs_lin[r] = mgf * nu_sh;
        rhs_exp[r] = mgf * std::exp(-nu_sh);
    }
    // the importance weights are heavy-tailed: per-sample standard errors come
    // out biased low, batch means behave
    auto batched = [](const std::vector<double>& xs) {
        const std::size_t nb = 100, bs = xs.size() / nb;
        std::vector<double> bm(nb, 0.0);
        for (std::size_t k = 0; k < nb; ++k) {
            for (std::size_t i = 0; i < bs; ++i) bm[k] += xs[k * bs + i];
            bm[k] /= static_cast<double>(bs);
        }
        return mean_se(bm);
    };
    const auto ml = batched(lhs_lin), mr = batched(rhs_lin);
    const auto el = batched(lhs_exp), er = batched(rhs_exp);
    rep.lhs_linear = ml.mean;
    rep.lhs_linear_se = ml.se;
    rep.rhs_linear = mr.mean;
    rep.rhs_linear_se = mr.se;
    rep.lhs_exp = el.mean;
    rep.lhs_exp_se = el.se;
    rep.rhs_exp = er.mean;
    rep.rhs_exp_se = er.se;
    const bool lin_ok =
        std::fabs(ml.mean - mr.mean) <= kSigmaBand * std::sqrt(ml.se * ml.se + mr.se * mr.se);
    const bool exp_ok =
        std::fabs(el.mean - er.mean) <= kSigmaBand * std::sqrt(el.se * el.se + er.se * er.se);
    rep.pass = lin_ok && exp_ok;
    return rep;
}

// ---------------------------------------------------------------------------
// quantum-disk radial process
// ---------------------------------------------------------------------------

struct DiskRadialProcess {
    double W = 0.0;
    double beta_w = 0.0;
    double dt = 0.0;
    double zero_mode = 0.0;
    double eps_start = 0.0;
    std::vector<double> pos_side;  // Y_t - c for t = dt, 2 dt, ...
    std::vector<double> neg_side;  // Y_{-t} - c likewise
    std::size_t rejections = 0;
};

// Both half-lines of the radial process: Brownian motion at double speed with
// drift beta_w (resp. 2Q - beta_w), conditioned so that B_{2t} - (Q - beta_w) t
// stays negative. The conditioning is approximated by rejection of discretized
// paths started at -eps_start that ever exceed 0 after time 0.
inline DiskRadialProcess sample_disk_radial(const ModelParams& p, double W, double horizon,
                                            double dt, double c, Rng& rng,
                                            double eps_start = 1e-3,
                                            std::size_t budget = 200000) {
    if (!(W >= p.gamma * p.gamma / 2.0))
        throw std::invalid_argument("sample_disk_radial: need W >= gamma^2/2");
    DiskRadialProcess out;
    out.W = W;
    out.beta_w = p.beta_of_weight(W);
    out.dt = dt;
    out.zero_mode = c;
    out.eps_start = eps_start;
    const double mu = p.Q - out.beta_w;  // >= 0
    const std::size_t steps = static_cast<std::size_t>(horizon / dt);

    auto one_side = [&](std::vector<double>& side) {
        side.clear();
        side.reserve(steps);
        for (;;) {
            if (out.rejections >= budget)
                throw numeric_error("sample_disk_radial: rejection budget exhausted");
            side.clear();
            double constraint = -eps_start;
            bool ok = true;
            for (std::size_t k = 1; k <= steps; ++k) {
                const double dw = std::sqrt(2.0 * dt) * rng.normal();
                constraint += dw - mu * dt;
                if (constraint >= 0.0) {
                    ok = false;
                    break;
                }
                // Y - c = B_{2t} + beta_w t = constraint + eps_start + Q t
                side.push_back(constraint + eps_start + p.Q * static_cast<double>(k) * dt);
            }
            if (ok) return;
            ++out.rejections;
        }
    };
    one_side(out.pos_side);
    one_side(out.neg_side);
    // the negative side has drift 2Q - beta_w instead of beta_w
    const double extra = (2.0 * p.Q - out.beta_w) - out.beta_w;
    for (std::size_t k = 1; k <= out.neg_side.size(); ++k)
        out.neg_side[k - 1] += extra * static_cast<double>(k) * dt;
    return out;
}

}  // namespace lqg
