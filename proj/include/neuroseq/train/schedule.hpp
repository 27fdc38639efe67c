#pragma once

#include "neuroseq/train/config.hpp"

#include <random>

namespace neuroseq::train {

/// Teacher-forcing ratio for `epoch`: linear from start at epoch 0 to end at
/// anneal_epochs, constant afterwards.
inline double anneal_gamma(Index epoch, const GammaSchedule& schedule)
{
    if (epoch < 0)
        throw ContractError("anneal_gamma: epoch must be non-negative");
    if (epoch >= schedule.anneal_epochs)
        return schedule.end;
    const double frac = static_cast<double>(epoch) / static_cast<double>(schedule.anneal_epochs);
    return schedule.start + (schedule.end - schedule.start) * frac;
}

/// One Bernoulli(gamma) draw from the top 53 bits of the generator.
inline bool use_ground_truth(double gamma, std::mt19937_64& rng)
{
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return u < gamma;
}

/// Picks the whole previous ground-truth vector with probability gamma,
/// otherwise the whole previous prediction.
template <typename Row>
Row teacher_mix(const Row& truth_prev, const Row& pred_prev, double gamma, std::mt19937_64& rng)
{
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw ContractError("teacher_mix: gamma must be in [0, 1]");
    return use_ground_truth(gamma, rng) ? truth_prev : pred_prev;
}

}  // namespace neuroseq::train
