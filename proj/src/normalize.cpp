#include "neuroseq/train/normalize.hpp"

#include "neuroseq/core/error.hpp"

#include <cmath>

namespace neuroseq::train {

NormStats NormStats::identity(Index width)
{
    return {RowVector<double>::Zero(width), RowVector<double>::Ones(width)};
}

MatrixD NormStats::apply(const MatrixD& x) const
{
    if (x.cols() != mean.size())
        throw ContractError("normalization statistics cover " + std::to_string(mean.size()) + " features, input has " +
                            std::to_string(x.cols()));
    MatrixD out = x.rowwise() - mean;
    out.array().rowwise() /= sd.array();
    return out;
}

NormStats compute_norm_stats(const std::vector<RowBlock>& blocks)
{
    if (blocks.empty())
        throw ContractError("compute_norm_stats: no data");
    const Index width = blocks.front().data->cols();
    RowVector<double> sum = RowVector<double>::Zero(width);
    Index n = 0;
    for (const auto& b : blocks) {
        if (b.data->cols() != width)
            throw ContractError("compute_norm_stats: blocks disagree on width");
        sum += b.data->middleRows(b.begin, b.end - b.begin).colwise().sum();
        n += b.end - b.begin;
    }
    if (n < 1)
        throw ContractError("compute_norm_stats: no rows");
    NormStats stats;
    stats.mean = sum / static_cast<double>(n);
    RowVector<double> ss = RowVector<double>::Zero(width);
    for (const auto& b : blocks)
        ss += (b.data->middleRows(b.begin, b.end - b.begin).rowwise() - stats.mean).colwise().squaredNorm();
    stats.sd = (ss / static_cast<double>(n)).cwiseSqrt().cwiseMax(kSdFloor);
    return stats;
}

}  // namespace neuroseq::train
