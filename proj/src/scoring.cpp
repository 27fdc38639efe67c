#include "neuroseq/eval/scoring.hpp"

#include "neuroseq/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace neuroseq::eval {

namespace {

// Centered sum of squares at or below this (per sample) counts as constant.
constexpr double kConstantFloor = 1e-12;

}  // namespace

std::vector<bool> Reconstruction::mask() const
{
    std::vector<bool> m(coverage.size());
    for (std::size_t i = 0; i < coverage.size(); ++i)
        m[i] = coverage[i] > 0;
    return m;
}

Reconstruction aggregate_overlaps(std::span<const WindowPrediction> windows, Index length)
{
    if (length < 1)
        throw ContractError("aggregate_overlaps: length must be positive");
    Index parcels = -1;
    for (const auto& w : windows) {
        if (parcels < 0)
            parcels = w.values.cols();
        if (w.values.cols() != parcels)
            throw ContractError("aggregate_overlaps: windows disagree on parcel count");
        if (w.target_begin < 0 || w.target_begin + w.values.rows() > length)
            throw ContractError("aggregate_overlaps: window [" + std::to_string(w.target_begin) + ", " +
                                std::to_string(w.target_begin + w.values.rows()) + ") outside [0, " +
                                std::to_string(length) + ")");
    }
    Reconstruction rec;
    rec.values = MatrixD::Zero(length, std::max<Index>(parcels, 0));
    rec.coverage.assign(static_cast<std::size_t>(length), 0);
    for (const auto& w : windows) {
        rec.values.middleRows(w.target_begin, w.values.rows()) += w.values;
        for (Index r = 0; r < w.values.rows(); ++r)
            ++rec.coverage[static_cast<std::size_t>(w.target_begin + r)];
    }
    for (Index t = 0; t < length; ++t)
        if (const int n = rec.coverage[static_cast<std::size_t>(t)]; n > 1)
            rec.values.row(t) /= static_cast<double>(n);
    return rec;
}

Index ParcelScores::defined_count() const
{
    Index n = 0;
    for (bool d : defined)
        n += d ? 1 : 0;
    return n;
}

double ParcelScores::mean() const
{
    double total = 0.0;
    Index n = 0;
    for (std::size_t i = 0; i < correlation.size(); ++i)
        if (defined[i]) {
            total += correlation[i];
            ++n;
        }
    return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

ParcelScores per_parcel_correlation(const MatrixD& pred, const MatrixD& truth, const std::vector<bool>& mask)
{
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw ContractError("per_parcel_correlation: prediction is " + std::to_string(pred.rows()) + "x" +
                            std::to_string(pred.cols()) + ", truth is " + std::to_string(truth.rows()) + "x" +
                            std::to_string(truth.cols()));
    if (static_cast<Index>(mask.size()) != pred.rows())
        throw ContractError("per_parcel_correlation: mask length differs from T");
    std::vector<Index> rows;
    for (Index t = 0; t < pred.rows(); ++t)
        if (mask[static_cast<std::size_t>(t)])
            rows.push_back(t);
    if (rows.size() < 2)
        throw ContractError("per_parcel_correlation: need at least 2 covered TRs, have " + std::to_string(rows.size()));

    const double n = static_cast<double>(rows.size());
    ParcelScores out;
    out.correlation.resize(static_cast<std::size_t>(pred.cols()));
    out.defined.resize(static_cast<std::size_t>(pred.cols()));
    for (Index p = 0; p < pred.cols(); ++p) {
        double mp = 0.0, mt = 0.0;
        for (Index t : rows) {
            mp += pred(t, p);
            mt += truth(t, p);
        }
        mp /= n;
        mt /= n;
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (Index t : rows) {
            const double a = pred(t, p) - mp;
            const double b = truth(t, p) - mt;
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        const auto i = static_cast<std::size_t>(p);
        if (sxx <= kConstantFloor * n || syy <= kConstantFloor * n) {
            out.defined[i] = false;
            out.correlation[i] = std::numeric_limits<double>::quiet_NaN();
        } else {
            out.defined[i] = true;
            out.correlation[i] = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
        }
    }
    return out;
}

double ScoreReport::subject_mean(const std::string& subject) const
{
    double total = 0.0;
    Index n = 0;
    for (const auto& e : entries)
        if (e.subject == subject)
            for (std::size_t i = 0; i < e.scores.correlation.size(); ++i)
                if (e.scores.defined[i]) {
                    total += e.scores.correlation[i];
                    ++n;
                }
    return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double challenge_score(std::span<const ScoreReport> reports)
{
    if (reports.empty())
        throw ContractError("challenge_score: no reports");
    std::vector<double> values;
    for (const auto& report : reports)
        for (const auto& e : report.entries)
            for (std::size_t i = 0; i < e.scores.correlation.size(); ++i)
                if (e.scores.defined[i])
                    values.push_back(e.scores.correlation[i]);
    if (values.empty())
        throw UndefinedScoreError("challenge_score: every parcel correlation is undefined");
    // Summing in sorted order makes the result independent of report order.
    std::sort(values.begin(), values.end());
    double total = 0.0;
    for (double v : values)
        total += v;
    return total / static_cast<double>(values.size());
}

double challenge_score(const ScoreReport& report)
{
    return challenge_score(std::span<const ScoreReport>(&report, 1));
}

}  // namespace neuroseq::eval
