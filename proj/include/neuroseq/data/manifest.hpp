#pragma once

#include "neuroseq/data/fsb.hpp"
#include "neuroseq/data/summary.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace neuroseq::data {

enum class Split { train, val, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct FeatureRef {
    std::string modality;
    std::filesystem::path path;
};

struct SummaryRef {
    std::filesystem::path embeddings;
    std::vector<double> anchors;
};

/// One stimulus session: its feature streams, the subjects' responses, and an
/// optional narrative summary. Paths are resolved against the manifest file.
struct SessionManifest {
    std::string session_id;
    Split split = Split::train;
    std::vector<FeatureRef> features;
    std::map<std::string, std::filesystem::path> fmri;
    std::optional<SummaryRef> summary;
};

struct Manifest {
    double tr_seconds = 1.5;
    std::vector<SessionManifest> sessions;
    // Opaque block written by the synthetic generator (ground-truth readouts).
    std::string synthetic_json;
};

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// A session with every file parsed and every stream truncated to a common length.
struct SessionData {
    std::string session_id;
    Split split = Split::train;
    double tr_seconds = 1.5;
    std::vector<FeatureSequence> features;
    std::map<std::string, FmriSequence> fmri;
    std::optional<SummaryContext> summary;

    Index length() const;
    Index feature_width() const;
    std::vector<std::string> subjects() const;
};

/// Loads and validates one session. Unequal lengths are truncated to the
/// shortest stream with a warning.
SessionData load_session(const SessionManifest& session, double tr_seconds);

std::vector<SessionData> load_sessions(const Manifest& manifest);

}  // namespace neuroseq::data
