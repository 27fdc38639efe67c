#include "neuroseq/data/summary.hpp"

#include "neuroseq/core/error.hpp"

#include <algorithm>
#include <cmath>

namespace neuroseq::data {

void validate(const SummaryContext& ctx)
{
    if (ctx.sentences() < 1 || ctx.width() < 1)
        throw ContractError("summary needs at least one sentence");
    if (static_cast<Index>(ctx.anchors.size()) != ctx.sentences())
        throw ContractError("summary has " + std::to_string(ctx.anchors.size()) + " anchors for " +
                            std::to_string(ctx.sentences()) + " sentences");
    for (std::size_t i = 0; i < ctx.anchors.size(); ++i) {
        if (!std::isfinite(ctx.anchors[i]))
            throw ContractError("summary anchor " + std::to_string(i) + " is not finite");
        if (i > 0 && ctx.anchors[i] < ctx.anchors[i - 1])
            throw ContractError("summary anchors must be non-decreasing");
    }
    if (!ctx.embeddings.allFinite())
        throw ContractError("summary embeddings contain non-finite values");
}

SummaryContext placeholder_summary(Index width)
{
    return {MatrixF::Zero(1, width), {0.0}};
}

std::vector<double> gaussian_weights(const SummaryContext& ctx, double t, double sigma)
{
    if (!(sigma > 0))
        throw ContractError("gaussian sigma must be positive");
    if (ctx.anchors.empty())
        throw ContractError("summary has no sentences");

    // Shift exponents by their maximum so far-away anchors cannot underflow every weight.
    std::vector<double> w(ctx.anchors.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double dt = t - ctx.anchors[i];
        w[i] = -dt * dt / (2.0 * sigma * sigma);
        peak = std::max(peak, w[i]);
    }
    double total = 0.0;
    for (double& v : w) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : w)
        v /= total;
    return w;
}

Eigen::VectorXd gaussian_summary_context(const SummaryContext& ctx, double t, double sigma)
{
    const auto w = gaussian_weights(ctx, t, sigma);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(ctx.width());
    for (Index i = 0; i < ctx.sentences(); ++i)
        out += w[static_cast<std::size_t>(i)] * ctx.embeddings.row(i).transpose().cast<double>();
    return out;
}

}  // namespace neuroseq::data
