#pragma once

#include "neuroseq/core/types.hpp"

#include <vector>

namespace neuroseq::train {

inline constexpr double kSdFloor = 1e-6;

/// Per-feature mean and standard deviation from the training split.
struct NormStats {
    RowVector<double> mean;
    RowVector<double> sd;

    /// Identity statistics (mean 0, sd 1) for `width` features.
    static NormStats identity(Index width);

    MatrixD apply(const MatrixD& x) const;
};

/// Statistics over the given row blocks of one or more matrices with equal width.
struct RowBlock {
    const MatrixD* data;
    Index begin;
    Index end;
};

NormStats compute_norm_stats(const std::vector<RowBlock>& blocks);

}  // namespace neuroseq::train
