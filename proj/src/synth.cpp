#include "neuroseq/data/synth.hpp"

#include "neuroseq/core/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <random>

namespace neuroseq::data {

using nlohmann::json;

namespace {

constexpr double kFeatureAutocorrelation = 0.9;

MatrixD gaussian(std::mt19937_64& rng, Index rows, Index cols, double sd)
{
    std::normal_distribution<double> normal(0.0, sd);
    MatrixD m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
            m(r, c) = normal(rng);
    return m;
}

// Stationary AR(1) with unit marginal variance per column.
MatrixD smooth_features(std::mt19937_64& rng, Index t_len, Index width)
{
    const double a = kFeatureAutocorrelation;
    const double innovation = std::sqrt(1.0 - a * a);
    MatrixD eps = gaussian(rng, t_len, width, 1.0);
    MatrixD f(t_len, width);
    f.row(0) = eps.row(0);
    for (Index t = 1; t < t_len; ++t)
        f.row(t) = a * f.row(t - 1) + innovation * eps.row(t);
    return f;
}

MatrixD float_rounded(const MatrixD& m) { return m.cast<float>().cast<double>(); }

}  // namespace

std::string fmri_file_stem(const std::string& session_id, const std::string& subject_id)
{
    return session_id + "__" + subject_id;
}

MatrixD causal_smooth(const MatrixD& x, Index width)
{
    if (width < 1)
        throw ContractError("smoothing width must be at least 1");
    MatrixD out(x.rows(), x.cols());
    for (Index t = 0; t < x.rows(); ++t) {
        const Index first = std::max<Index>(0, t - width + 1);
        out.row(t) = x.middleRows(first, t - first + 1).colwise().mean();
    }
    return out;
}

MatrixD synth_readout(const MatrixD& features, const MatrixD& readout, Index delay, Index smooth_width)
{
    if (features.cols() != readout.rows())
        throw ContractError("readout expects " + std::to_string(readout.rows()) +
                            " feature columns, got " + std::to_string(features.cols()));
    const MatrixD smoothed = causal_smooth(features, smooth_width);
    MatrixD shifted(features.rows(), features.cols());
    for (Index t = 0; t < features.rows(); ++t)
        shifted.row(t) = smoothed.row(std::max<Index>(0, t - delay));
    return shifted * readout;
}

Manifest synth_session(const SynthConfig& config, const std::filesystem::path& out_dir)
{
    if (config.t_len < 1 || config.parcels < 1 || config.subjects < 1 || config.dims.empty())
        throw ConfigError("synth: t_len, parcels, subjects and dims must all be at least 1");
    for (Index d : config.dims)
        if (d < 1)
            throw ConfigError("synth: every modality width must be at least 1");
    if (!(config.noise_sd >= 0))
        throw ConfigError("synth: noise_sd must be non-negative");
    if (config.delay < 0 || config.smooth_width < 1 || !(config.tr_seconds > 0))
        throw ConfigError("synth: invalid delay, smoothing width or TR");

    std::mt19937_64 rng(config.seed);
    std::filesystem::create_directories(out_dir);

    SessionManifest session;
    session.session_id = config.session_id;
    session.split = Split::train;

    Index total_width = 0;
    for (Index d : config.dims)
        total_width += d;
    MatrixD features(config.t_len, total_width);
    Index column = 0;
    for (std::size_t m = 0; m < config.dims.size(); ++m) {
        const Index d = config.dims[m];
        const MatrixD f = float_rounded(smooth_features(rng, config.t_len, d));
        features.middleCols(column, d) = f;
        column += d;

        const std::string modality = "m" + std::to_string(m);
        const auto rel = std::filesystem::path("features") / (config.session_id + "__" + modality + ".fsb");
        write_fsb(out_dir / rel, f.cast<float>());
        session.features.push_back({modality, rel});
    }

    const double scale = 1.0 / std::sqrt(static_cast<double>(total_width));
    const MatrixD shared = gaussian(rng, total_width, config.parcels, scale);

    json truth;
    truth["delay"] = config.delay;
    truth["smooth_width"] = config.smooth_width;
    truth["noise_sd"] = config.noise_sd;
    truth["seed"] = config.seed;
    truth["readouts"] = json::object();

    for (Index s = 0; s < config.subjects; ++s) {
        char id[32];
        std::snprintf(id, sizeof id, "sub-%02d", static_cast<int>(s + 1));
        const std::string subject(id);

        const MatrixD readout = float_rounded(
            shared + gaussian(rng, total_width, config.parcels, config.subject_perturbation * scale));
        MatrixD response = synth_readout(features, readout, config.delay, config.smooth_width);
        if (config.noise_sd > 0)
            response += gaussian(rng, config.t_len, config.parcels, config.noise_sd);

        const auto fmri_rel = std::filesystem::path("fmri") / (fmri_file_stem(config.session_id, subject) + ".fsb");
        const auto truth_rel = std::filesystem::path("oracle") / ("readout_" + subject + ".fsb");
        write_fsb(out_dir / fmri_rel, response.cast<float>());
        write_fsb(out_dir / truth_rel, readout.cast<float>());
        session.fmri.emplace(subject, fmri_rel);
        truth["readouts"][subject] = truth_rel.generic_string();
    }

    if (config.summary_sentences > 0) {
        const Index sentences = config.summary_sentences;
        const MatrixD embeddings = gaussian(rng, sentences, config.summary_width, 1.0);
        const double duration = static_cast<double>(config.t_len) * config.tr_seconds;
        SummaryRef ref;
        ref.embeddings = std::filesystem::path("summary") / (config.session_id + ".fsb");
        for (Index i = 0; i < sentences; ++i)
            ref.anchors.push_back((static_cast<double>(i) + 0.5) * duration / static_cast<double>(sentences));
        write_fsb(out_dir / ref.embeddings, embeddings.cast<float>());
        session.summary = std::move(ref);
    }

    Manifest manifest;
    manifest.tr_seconds = config.tr_seconds;
    manifest.sessions.push_back(std::move(session));
    manifest.synthetic_json = truth.dump();
    save_manifest(manifest, out_dir / "manifest.json");

    // Hand back the manifest with resolved paths, as load_manifest would.
    return load_manifest(out_dir / "manifest.json");
}

SynthTruth read_synth_truth(const Manifest& manifest, const std::filesystem::path& manifest_dir)
{
    if (manifest.synthetic_json.empty())
        throw LookupError("manifest carries no synthetic ground truth");
    const json truth = json::parse(manifest.synthetic_json);
    SynthTruth out;
    out.delay = truth.at("delay").get<Index>();
    out.smooth_width = truth.at("smooth_width").get<Index>();
    for (const auto& [subject, rel] : truth.at("readouts").items())
        out.readouts.emplace(subject, manifest_dir / rel.get<std::string>());
    return out;
}

}  // namespace neuroseq::data
