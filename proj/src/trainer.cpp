#include "neuroseq/train/trainer.hpp"

namespace neuroseq::train {

void store_norm(model::ModelCheckpoint& ckpt, const NormStats& stats)
{
    ckpt.set_state("norm.mean", stats.mean);
    ckpt.set_state("norm.sd", stats.sd);
}

NormStats load_norm(const model::ModelCheckpoint& ckpt, Index width)
{
    const auto* mean = ckpt.find_state("norm.mean");
    const auto* sd = ckpt.find_state("norm.sd");
    if (!mean || !sd)
        return NormStats::identity(width);
    if (mean->value.size() != width || sd->value.size() != width)
        throw FormatError("checkpoint feature statistics have width " + std::to_string(mean->value.size()) +
                          "; model input is " + std::to_string(width));
    NormStats stats;
    stats.mean = mean->value.row(0);
    stats.sd = sd->value.row(0);
    return stats;
}

std::mt19937_64 window_rng(std::uint64_t seed, Index epoch, std::size_t window, std::uint32_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(window),
                      static_cast<std::uint32_t>(window >> 32), stream};
    return std::mt19937_64(seq);
}

std::vector<std::string> training_subjects(const std::vector<PreparedSession>& sessions)
{
    std::set<std::string> out;
    for (const auto& s : sessions)
        if (s.train_end > s.train_begin)
            for (const auto& [subject, _] : s.responses)
                out.insert(subject);
    return {out.begin(), out.end()};
}

}  // namespace neuroseq::train
