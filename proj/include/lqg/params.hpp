#pragma once

#include <cmath>
#include <stdexcept>

namespace lqg {

// Coupled model constants. Everything is derived from gamma alone;
// the admissible range gamma in (sqrt(2), 2) corresponds to kappa in (4, 8).
struct ModelParams {
    double gamma;      // LQG coupling
    double kappa;      // 16 / gamma^2
    double Q;          // 2/gamma + gamma/2
    double b;          // (6 - kappa) / (2 kappa), boundary scaling exponent
    double beta;       // 4/gamma - gamma/2
    double alpha;      // 4 / gamma^2, Levy index in (1, 2)
    double sub_index;  // gamma^2 / 4, subordinator index in (1/2, 1)

    static ModelParams from_gamma(double gamma) {
        if (!(gamma > std::sqrt(2.0) && gamma < 2.0))
            throw std::invalid_argument("ModelParams: gamma must be in (sqrt(2), 2)");
        ModelParams p;
        p.gamma = gamma;
        p.kappa = 16.0 / (gamma * gamma);
        p.Q = 2.0 / gamma + gamma / 2.0;
        p.b = (6.0 - p.kappa) / (2.0 * p.kappa);
        p.beta = 4.0 / gamma - gamma / 2.0;
        p.alpha = 4.0 / (gamma * gamma);
        p.sub_index = gamma * gamma / 4.0;
        return p;
    }

    static ModelParams from_kappa(double kappa) {
        if (!(kappa > 4.0 && kappa < 8.0))
            throw std::invalid_argument("ModelParams: kappa must be in (4, 8)");
        return from_gamma(4.0 / std::sqrt(kappa));
    }

    // Delta_beta = (beta/2)(Q - beta/2); the identity b + Delta_beta = 1 holds.
    double delta_beta() const { return beta / 2.0 * (Q - beta / 2.0); }

    // beta_W = gamma + (2 - W)/gamma, weight-to-insertion map for disks.
    double beta_of_weight(double W) const { return gamma + (2.0 - W) / gamma; }
};

}  // namespace lqg
