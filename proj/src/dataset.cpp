#include "neuroseq/train/dataset.hpp"

#include "neuroseq/core/error.hpp"
#include "neuroseq/data/summary.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

namespace neuroseq::train {

using model::NarrativeMode;

void infer_model_dims(model::ModelConfig& config, const std::vector<data::SessionData>& sessions)
{
    if (sessions.empty())
        throw ContractError("no sessions to infer model dimensions from");
    const auto& first = sessions.front();
    if (config.modality_dims.empty())
        for (const auto& f : first.features)
            config.modality_dims.push_back(f.width());
    if (config.parcels == 0) {
        for (const auto& s : sessions)
            if (!s.fmri.empty()) {
                config.parcels = s.fmri.begin()->second.parcels();
                break;
            }
    }
    if (config.summary_dim == 0) {
        for (const auto& s : sessions)
            if (s.summary) {
                config.summary_dim = s.summary->width();
                break;
            }
        if (config.summary_dim == 0)
            config.summary_dim = 1;
    }

    for (const auto& s : sessions) {
        if (s.features.size() != config.modality_dims.size())
            throw ConfigError("session " + s.session_id + " has " + std::to_string(s.features.size()) +
                              " modalities; model expects " + std::to_string(config.modality_dims.size()));
        for (std::size_t m = 0; m < s.features.size(); ++m)
            if (s.features[m].width() != config.modality_dims[m])
                throw ConfigError("session " + s.session_id + " modality " + s.features[m].modality_id + " is " +
                                  std::to_string(s.features[m].width()) + " wide; model expects " +
                                  std::to_string(config.modality_dims[m]));
        for (const auto& [subject, f] : s.fmri)
            if (f.parcels() != config.parcels)
                throw ConfigError("session " + s.session_id + " subject " + subject + " has " +
                                  std::to_string(f.parcels()) + " parcels; model expects " +
                                  std::to_string(config.parcels));
        if (s.summary && config.narrative != NarrativeMode::none && s.summary->width() != config.summary_dim)
            throw ConfigError("session " + s.session_id + " summary width " + std::to_string(s.summary->width()) +
                              " != summary_dim " + std::to_string(config.summary_dim));
    }
    config.validate();
}

MatrixD build_stimulus(const data::SessionData& session, const model::ModelConfig& config)
{
    const Index length = session.length();
    MatrixD x(length, config.input_width());
    Index c = 0;
    for (const auto& f : session.features) {
        x.middleCols(c, f.width()) = f.data.topRows(length).cast<double>();
        c += f.width();
    }
    if (config.narrative == NarrativeMode::gaussian) {
        const data::SummaryContext ctx =
            session.summary ? *session.summary : data::placeholder_summary(config.summary_dim);
        for (Index t = 0; t < length; ++t)
            x.row(t).segment(c, config.summary_dim) =
                data::gaussian_summary_context(ctx, static_cast<double>(t) * session.tr_seconds,
                                               config.gaussian_sigma)
                    .transpose();
    }
    return x;
}

std::vector<PreparedSession> prepare_sessions(const std::vector<data::SessionData>& sessions,
                                              const model::ModelConfig& model_config,
                                              const TrainConfig& train_config)
{
    const bool tagged_val = std::any_of(sessions.begin(), sessions.end(),
                                        [](const auto& s) { return s.split == data::Split::val; });
    std::vector<PreparedSession> out;
    for (const auto& s : sessions) {
        PreparedSession p;
        p.session_id = s.session_id;
        p.split = s.split;
        p.tr_seconds = s.tr_seconds;
        p.stimulus = build_stimulus(s, model_config);
        p.normalized = p.stimulus;
        if (model_config.narrative == NarrativeMode::cross_attention)
            p.summary = s.summary ? s.summary->embeddings.cast<double>()
                                  : MatrixD(MatrixD::Zero(1, model_config.summary_dim));
        for (const auto& [subject, f] : s.fmri)
            p.responses.emplace(subject, f.data.topRows(s.length()).cast<double>());

        const Index length = s.length();
        switch (s.split) {
        case data::Split::train:
            if (tagged_val) {
                p.train_end = length;
            } else {
                const auto held = static_cast<Index>(std::floor(train_config.val_fraction * static_cast<double>(length)));
                p.train_end = length - held;
                p.val_begin = p.train_end;
                p.val_end = length;
            }
            break;
        case data::Split::val:
            p.val_end = length;
            break;
        case data::Split::test:
            break;
        }
        out.push_back(std::move(p));
    }
    return out;
}

NormStats training_norm_stats(const std::vector<PreparedSession>& sessions)
{
    std::vector<RowBlock> blocks;
    for (const auto& s : sessions)
        if (s.train_end > s.train_begin)
            blocks.push_back({&s.stimulus, s.train_begin, s.train_end});
    if (blocks.empty())
        throw ContractError("no training rows to compute feature statistics from");
    return compute_norm_stats(blocks);
}

void apply_norm(std::vector<PreparedSession>& sessions, const NormStats& stats)
{
    for (auto& s : sessions)
        s.normalized = stats.apply(s.stimulus);
}

namespace {

std::vector<WindowRef> windows_in(const std::vector<PreparedSession>& sessions, const data::WindowGeometry& geometry,
                                  const std::vector<std::string>& subjects, bool validation)
{
    std::vector<WindowRef> out;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const auto& s = sessions[i];
        const Index begin = validation ? s.val_begin : s.train_begin;
        const Index end = validation ? s.val_end : s.train_end;
        if (end <= begin)
            continue;
        std::vector<std::string> present;
        for (const auto& subject : subjects)
            if (s.responses.count(subject))
                present.push_back(subject);
        if (present.empty())
            continue;
        for (auto& w : data::build_windows(s.session_id, present, begin, end, geometry))
            out.push_back({i, std::move(w)});
    }
    return out;
}

}  // namespace

std::vector<WindowRef> training_windows(const std::vector<PreparedSession>& sessions,
                                        const data::WindowGeometry& geometry,
                                        const std::vector<std::string>& subjects)
{
    return windows_in(sessions, geometry, subjects, false);
}

std::vector<WindowRef> validation_windows(const std::vector<PreparedSession>& sessions,
                                          const data::WindowGeometry& geometry,
                                          const std::vector<std::string>& subjects)
{
    return windows_in(sessions, geometry, subjects, true);
}

}  // namespace neuroseq::train
