#pragma once

#include "neuroseq/core/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace neuroseq::data {

struct WindowGeometry {
    Index w_in = 40;
    Index w_out = 35;
    Index delay = 5;
    Index stride = 1;
};

void validate(const WindowGeometry& geometry);

/// Input rows [start, start + w_in), target rows [start + delay, start + delay + w_out).
struct TrainingWindow {
    std::string session_id;
    std::string subject_id;
    Index start = 0;
    Index w_in = 0;
    Index w_out = 0;
    Index delay = 0;

    Index input_begin() const { return start; }
    Index input_end() const { return start + w_in; }
    Index target_begin() const { return start + delay; }
    Index target_end() const { return start + delay + w_out; }
};

/// Number of window starts that fit in a sequence of `length` TRs.
Index window_count(Index length, const WindowGeometry& geometry);

/// Windows at start = first, first + stride, ... lying entirely inside rows [first, last).
/// One window per subject per start; an empty result logs a warning.
std::vector<TrainingWindow> build_windows(const std::string& session_id,
                                          std::span<const std::string> subjects,
                                          Index first, Index last,
                                          const WindowGeometry& geometry);

std::vector<TrainingWindow> build_windows(const std::string& session_id,
                                          std::span<const std::string> subjects,
                                          Index length, const WindowGeometry& geometry);

/// Deterministic permutation of [0, count) for (seed, epoch).
std::vector<std::size_t> shuffle_epoch(std::size_t count, std::uint64_t seed, std::uint64_t epoch);

}  // namespace neuroseq::data
