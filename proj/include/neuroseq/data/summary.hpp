#pragma once

#include "neuroseq/core/types.hpp"

#include <vector>

namespace neuroseq::data {

/// Sentence embeddings of a narrative summary with approximate onsets (seconds).
struct SummaryContext {
    MatrixF embeddings;           // S x d_sum
    std::vector<double> anchors;  // S onsets, non-decreasing

    Index sentences() const { return embeddings.rows(); }
    Index width() const { return embeddings.cols(); }
};

/// Throws ContractError unless S >= 1, anchors match S and are non-decreasing,
/// and every value is finite.
void validate(const SummaryContext& ctx);

/// One all-zero sentence at t = 0, used when a session ships no summary.
SummaryContext placeholder_summary(Index width);

/// Normalized Gaussian weights of each sentence for time `t` (seconds).
std::vector<double> gaussian_weights(const SummaryContext& ctx, double t, double sigma);

/// Weighted sum of sentence embeddings with weights
/// exp(-(t - a_i)^2 / (2 sigma^2)) normalized to sum to one.
Eigen::VectorXd gaussian_summary_context(const SummaryContext& ctx, double t, double sigma);

}  // namespace neuroseq::data
