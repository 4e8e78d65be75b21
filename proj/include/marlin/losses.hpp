// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "marlin/mat.hpp"

namespace marlin {

// One training step's loss breakdown. total_g = recon + lambda_w * adv_g and
// total_d = adv_d hold exactly by construction.
struct LossReport {
    double recon = 0.0;
    double adv_g = 0.0;
    double adv_d = 0.0;
    double total_g = 0.0;
    double total_d = 0.0;
    double lambda_w = 0.0;
};

// Mean squared error over all n*e element pairs of the masked tokens and
// their reconstructions.
template <typename S>
double recon_loss(const Mat<S>& masked, const Mat<S>& reconstructed) {
    require_arg(masked.same_shape(reconstructed), "recon_loss: shape mismatch");
    require_arg(masked.rows() >= 1, "recon_loss: needs at least one masked token");
    double acc = 0.0;
    for (std::size_t i = 0; i < masked.size(); ++i) {
        const double d = static_cast<double>(masked.data()[i]) - static_cast<double>(reconstructed.data()[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(masked.size());
}

// Critic objective: (1/(N*n)) * (sum of fake scores - sum of real scores).
template <typename S>
double disc_loss(const std::vector<S>& real_scores, const std::vector<S>& fake_scores, int batch,
                 int masked_count) {
    const std::size_t expected = static_cast<std::size_t>(batch) * static_cast<std::size_t>(masked_count);
    require_arg(real_scores.size() == expected && fake_scores.size() == expected,
                "disc_loss: score vectors must have length N*n");
    require_arg(expected > 0, "disc_loss: empty scores");
    double acc = 0.0;
    for (std::size_t i = 0; i < expected; ++i)
        acc += static_cast<double>(fake_scores[i]) - static_cast<double>(real_scores[i]);
    return acc / static_cast<double>(expected);
}

// Generator adversarial term: negative mean of the fake scores.
template <typename S>
double gen_adv_loss(const std::vector<S>& fake_scores, int batch, int masked_count) {
    const std::size_t expected = static_cast<std::size_t>(batch) * static_cast<std::size_t>(masked_count);
    require_arg(fake_scores.size() == expected, "gen_adv_loss: score vector must have length N*n");
    require_arg(expected > 0, "gen_adv_loss: empty scores");
    double acc = 0.0;
    for (const S v : fake_scores) acc += static_cast<double>(v);
    return -acc / static_cast<double>(expected);
}

inline LossReport combine(double recon, double adv_g, double adv_d, double lambda_w) {
    require_arg(std::isfinite(recon) && std::isfinite(adv_g) && std::isfinite(adv_d),
                "combine: losses must be finite");
    require_arg(lambda_w >= 0.0, "combine: lambda_w must be >= 0");
    LossReport r;
    r.recon = recon;
    r.adv_g = adv_g;
    r.adv_d = adv_d;
    r.lambda_w = lambda_w;
    r.total_g = recon + lambda_w * adv_g;
    r.total_d = adv_d;
    return r;
}

}  // namespace marlin
