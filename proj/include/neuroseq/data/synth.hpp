#pragma once

#include "neuroseq/core/types.hpp"
#include "neuroseq/data/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace neuroseq::data {

struct SynthConfig {
    Index t_len = 600;
    std::vector<Index> dims = {12, 8};
    Index parcels = 20;
    Index subjects = 2;
    double noise_sd = 0.1;
    std::uint64_t seed = 13;
    Index delay = 5;
    Index smooth_width = 4;
    double tr_seconds = 1.5;
    Index summary_sentences = 6;
    Index summary_width = 8;
    double subject_perturbation = 0.3;
    std::string session_id = "synth-000";
};

/// Ground truth persisted next to the manifest so tests can score the
/// generator's own readout.
struct SynthTruth {
    Index delay = 0;
    Index smooth_width = 0;
    std::map<std::string, std::filesystem::path> readouts;  // subject -> (sum D) x P
};

/// Writes features/, fmri/, summary/, oracle/ and manifest.json under `out_dir`.
/// Response for subject s: y[t] = smooth(x)[max(0, t - delay)] * R_s + noise,
/// where smooth is a causal moving average and R_s = R + per-subject perturbation.
Manifest synth_session(const SynthConfig& config, const std::filesystem::path& out_dir);

SynthTruth read_synth_truth(const Manifest& manifest, const std::filesystem::path& manifest_dir);

/// Causal moving average over the last `width` rows (fewer at the start).
MatrixD causal_smooth(const MatrixD& x, Index width);

/// Applies the generator's noise-free readout to concatenated features.
MatrixD synth_readout(const MatrixD& features, const MatrixD& readout, Index delay, Index smooth_width);

std::string fmri_file_stem(const std::string& session_id, const std::string& subject_id);

}  // namespace neuroseq::data
