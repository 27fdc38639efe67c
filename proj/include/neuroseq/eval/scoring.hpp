#pragma once

#include "neuroseq/core/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace neuroseq::eval {

/// Predictions of one window for target rows [target_begin, target_begin + rows).
struct WindowPrediction {
    Index target_begin = 0;
    MatrixD values;  // W_out x P
};

/// Full-length reconstruction from overlapping windows.
struct Reconstruction {
    MatrixD values;              // T x P; uncovered rows are zero
    std::vector<int> coverage;   // number of windows covering each TR

    bool covered(Index t) const { return coverage[static_cast<std::size_t>(t)] > 0; }
    std::vector<bool> mask() const;
};

/// Per-TR arithmetic mean over every window that covers it.
Reconstruction aggregate_overlaps(std::span<const WindowPrediction> windows, Index length);

struct ParcelScores {
    std::vector<double> correlation;  // NaN where undefined
    std::vector<bool> defined;

    Index defined_count() const;
    double mean() const;  // over defined parcels; NaN when none
};

/// Pearson correlation across covered TRs, independently per parcel. A parcel
/// whose predicted or true series is constant is flagged undefined.
ParcelScores per_parcel_correlation(const MatrixD& pred, const MatrixD& truth, const std::vector<bool>& mask);

/// Scores of one (subject, session) pair.
struct ScoreEntry {
    std::string subject;
    std::string session;
    ParcelScores scores;
};

struct ScoreReport {
    std::vector<ScoreEntry> entries;

    /// Mean over defined parcels of every entry belonging to `subject`.
    double subject_mean(const std::string& subject) const;
};

/// Unweighted mean over all defined (subject, session, parcel) correlations.
/// Throws UndefinedScoreError when nothing is defined.
double challenge_score(std::span<const ScoreReport> reports);
double challenge_score(const ScoreReport& report);

/// Writes scores_<subject>__<session>.csv per entry (header parcel,correlation,defined)
/// and summary.json with per-entry and per-subject means, grand mean, and `config_hash`.
void emit_report(const ScoreReport& report, const std::filesystem::path& dir, const std::string& config_hash = {});

/// Reads back what emit_report wrote.
ScoreReport read_report(const std::filesystem::path& dir);

}  // namespace neuroseq::eval
