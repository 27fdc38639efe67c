#include "neuroseq/data/windows.hpp"

#include "neuroseq/core/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace neuroseq::data {

namespace {

Index window_span(const WindowGeometry& g) { return std::max(g.w_in, g.delay + g.w_out); }

// Unbiased draw from [0, bound) by rejection on the raw 64-bit stream.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound)
{
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw >= limit);
    return draw % bound;
}

}  // namespace

void validate(const WindowGeometry& g)
{
    if (g.w_in < 1 || g.w_out < 1)
        throw ConfigError("window lengths must be at least 1");
    if (g.delay < 0)
        throw ConfigError("hemodynamic delay must be non-negative");
    if (g.stride < 1)
        throw ConfigError("window stride must be at least 1");
}

Index window_count(Index length, const WindowGeometry& geometry)
{
    validate(geometry);
    const Index room = length - window_span(geometry);
    return room < 0 ? 0 : room / geometry.stride + 1;
}

std::vector<TrainingWindow> build_windows(const std::string& session_id,
                                          std::span<const std::string> subjects,
                                          Index first, Index last, const WindowGeometry& geometry)
{
    validate(geometry);
    if (first < 0)
        throw ContractError("window range must start at a non-negative TR");

    std::vector<TrainingWindow> windows;
    const Index span = window_span(geometry);
    for (Index start = first; start + span <= last; start += geometry.stride)
        for (const auto& subject : subjects)
            windows.push_back({session_id, subject, start, geometry.w_in, geometry.w_out, geometry.delay});

    if (windows.empty())
        spdlog::warn("session {}: TR range [{}, {}) is shorter than one window ({} TRs)", session_id,
                     first, last, span);
    return windows;
}

std::vector<TrainingWindow> build_windows(const std::string& session_id,
                                          std::span<const std::string> subjects, Index length,
                                          const WindowGeometry& geometry)
{
    return build_windows(session_id, subjects, 0, length, geometry);
}

std::vector<std::size_t> shuffle_epoch(std::size_t count, std::uint64_t seed, std::uint64_t epoch)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32),
                      0x5eedu};
    std::mt19937_64 rng(seq);

    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = count; i > 1; --i)
        std::swap(order[i - 1], order[bounded(rng, i)]);
    return order;
}

}  // namespace neuroseq::data
