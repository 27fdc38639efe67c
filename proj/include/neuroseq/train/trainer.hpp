#pragma once

#include "neuroseq/eval/scoring.hpp"
#include "neuroseq/model/checkpoint.hpp"
#include "neuroseq/model/incremental_decoder.hpp"
#include "neuroseq/train/adam.hpp"
#include "neuroseq/train/dataset.hpp"
#include "neuroseq/train/loss.hpp"
#include "neuroseq/train/schedule.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <set>

namespace neuroseq::train {

struct EpochRecord {
    Index epoch = 0;
    double gamma = 1.0;
    double loss = 0.0;
    double mse = 0.0;
    double corr = 0.0;
    double val_score = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

/// Where a run writes metrics.jsonl, timing.jsonl, best.ckpt and last.ckpt.
/// An empty directory keeps everything in memory.
struct TrainOutputs {
    std::filesystem::path dir;
    // Called after every epoch; returning true ends training early.
    std::function<bool(const EpochRecord&)> stop_after = {};
};

struct TrainResult {
    model::ModelCheckpoint best;
    model::ModelCheckpoint last;
    std::vector<EpochRecord> history;
    Index best_epoch = -1;
    double best_val = std::numeric_limits<double>::quiet_NaN();
    std::string metrics_log;
};

void store_norm(model::ModelCheckpoint& ckpt, const NormStats& stats);

/// Feature statistics saved with a checkpoint; identity when none were saved.
NormStats load_norm(const model::ModelCheckpoint& ckpt, Index width);

/// Generator for one (seed, epoch, window, stream) tuple.
std::mt19937_64 window_rng(std::uint64_t seed, Index epoch, std::size_t window, std::uint32_t stream);

/// Predicts rows [first, last) of `session` for `subject` from overlapping
/// windows spaced `geometry.stride` apart and averages the overlaps. `exact`
/// uses EncodingModel::generate; otherwise the cached incremental decoder.
template <typename S>
eval::Reconstruction reconstruct(const model::EncodingModel<S>& model, const PreparedSession& session,
                                 const std::string& subject, Index first, Index last,
                                 const data::WindowGeometry& geometry, bool exact)
{
    using Mat = Matrix<S>;
    const std::string ids[] = {subject};
    const auto windows = data::build_windows(session.session_id, ids, first, last, geometry);
    const Mat summary = session.summary.template cast<S>();
    std::vector<eval::WindowPrediction> preds;
    preds.reserve(windows.size());
    for (const auto& w : windows) {
        const Mat x = session.normalized.middleRows(w.input_begin(), w.w_in).template cast<S>();
        const Mat h = model.encode_stimulus(x);
        Mat y;
        if (exact) {
            y = model.generate(h, summary, subject, w.w_out);
        } else {
            model::IncrementalDecoder<S> dec(model, h, summary, subject, w.w_out);
            y.resize(w.w_out, model.config().parcels);
            RowVector<S> prev = dec.bos();
            for (Index t = 0; t < w.w_out; ++t) {
                prev = dec.next(prev);
                y.row(t) = prev;
            }
        }
        preds.push_back({w.target_begin(), y.template cast<double>()});
    }
    return eval::aggregate_overlaps(preds, session.length());
}

template <typename S>
class Trainer {
public:
    using Mat = Matrix<S>;

    Trainer(model::EncodingModel<S> model, std::vector<PreparedSession> sessions, NormStats norm, TrainConfig config,
            std::vector<std::string> subjects, TrainOutputs outputs)
        : model_(std::move(model)), sessions_(std::move(sessions)), norm_(std::move(norm)),
          config_(std::move(config)), subjects_(std::move(subjects)), outputs_(std::move(outputs)),
          adam_(model_.params(), {config_.learning_rate, config_.beta1, config_.beta2, config_.adam_eps,
                                  config_.weight_decay})
    {
        config_.validate();
        const auto& mc = model_.config();
        if (config_.window.w_in > mc.max_len || config_.window.w_out > mc.max_len)
            throw ConfigError("window lengths must not exceed model max_len " + std::to_string(mc.max_len));
        train_windows_ = training_windows(sessions_, config_.window, subjects_);
        data::WindowGeometry vg = config_.window;
        vg.stride = config_.val_stride;
        val_geometry_ = vg;
        if (train_windows_.empty() && config_.epochs > 0)
            throw ConfigError("no training windows: every training session is shorter than one window");
    }

    /// Optimizer state to resume from.
    void resume(const model::ModelCheckpoint& ckpt) { adam_.load(ckpt, model_.params()); }

    const model::EncodingModel<S>& model() const { return model_; }
    std::size_t window_count() const { return train_windows_.size(); }

    TrainResult run()
    {
        TrainResult result;
        if (!outputs_.dir.empty()) {
            std::filesystem::create_directories(outputs_.dir);
            open(metrics_, "metrics.jsonl");
            open(timing_, "timing.jsonl");
        }
        std::optional<model::ModelCheckpoint> best;
        Index last_epoch = -1;
        for (Index epoch = 0; epoch < config_.epochs; ++epoch) {
            last_epoch = epoch;
            const auto t0 = std::chrono::steady_clock::now();
            EpochRecord rec = train_epoch(epoch);
            rec.val_score = validate();
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            log_epoch(rec, result.metrics_log);
            result.history.push_back(rec);

            const bool improved = std::isfinite(rec.val_score) &&
                                  (!std::isfinite(result.best_val) || rec.val_score > result.best_val);
            if (improved || !has_validation()) {
                result.best_val = rec.val_score;
                result.best_epoch = epoch;
                best = snapshot(epoch, rec.gamma, result.best_val, result.best_epoch);
                save(*best, "best.ckpt");
            }
            spdlog::info("epoch {} gamma {:.3f} loss {:.5f} mse {:.5f} corr {:.4f} val {:.4f} ({:.1f}s)", epoch,
                         rec.gamma, rec.loss, rec.mse, rec.corr, rec.val_score, rec.seconds);
            if (outputs_.stop_after && outputs_.stop_after(rec))
                break;
        }
        result.last = snapshot(last_epoch, last_epoch >= 0 ? anneal_gamma(last_epoch, config_.gamma) : config_.gamma.start,
                               result.best_val, result.best_epoch);
        save(result.last, "last.ckpt");
        result.best = best ? *best : result.last;
        if (!best)
            save(result.best, "best.ckpt");
        return result;
    }

    /// Mean held-out challenge score under free-running decoding, NaN when
    /// nothing is held out or no parcel is defined.
    double validate() const
    {
        eval::ScoreReport report;
        for (const auto& s : sessions_) {
            if (s.val_end - s.val_begin < val_geometry_.w_in)
                continue;
            for (const auto& subject : subjects_) {
                auto it = s.responses.find(subject);
                if (it == s.responses.end())
                    continue;
                const auto rec = reconstruct(model_, s, subject, s.val_begin, s.val_end, val_geometry_, false);
                std::vector<bool> mask = rec.mask();
                Index covered = std::count(mask.begin(), mask.end(), true);
                if (covered < 2)
                    continue;
                report.entries.push_back({subject, s.session_id, eval::per_parcel_correlation(rec.values, it->second, mask)});
            }
        }
        try {
            return report.entries.empty() ? std::numeric_limits<double>::quiet_NaN() : eval::challenge_score(report);
        } catch (const UndefinedScoreError&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    }

private:
    bool has_validation() const
    {
        return std::any_of(sessions_.begin(), sessions_.end(),
                           [&](const auto& s) { return s.val_end - s.val_begin >= val_geometry_.w_in; });
    }

    EpochRecord train_epoch(Index epoch)
    {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.gamma = anneal_gamma(epoch, config_.gamma);
        const auto order = data::shuffle_epoch(train_windows_.size(), config_.seed, static_cast<std::uint64_t>(epoch));
        nn::Gradients<S> grads(model_.params());
        const auto batch = static_cast<std::size_t>(config_.batch_size);
        for (std::size_t b = 0; b < order.size(); b += batch) {
            const std::size_t end = std::min(order.size(), b + batch);
            grads.zero();
            for (std::size_t i = b; i < end; ++i) {
                const LossValue terms =
                    window_step(order[i], epoch, rec.gamma, grads, S(1) / static_cast<S>(end - b));
                if (!std::isfinite(terms.total))
                    diverged(epoch, order[i]);
                rec.loss += terms.total;
                rec.mse += terms.mse;
                rec.corr += terms.corr;
            }
            adam_.step(model_.params(), grads);
        }
        const double n = static_cast<double>(std::max<std::size_t>(1, order.size()));
        rec.loss /= n;
        rec.mse /= n;
        rec.corr /= n;
        return rec;
    }

    LossValue window_step(std::size_t index, Index epoch, double gamma, nn::Gradients<S>& grads, S weight)
    {
        const WindowRef& ref = train_windows_[index];
        const PreparedSession& s = sessions_[ref.session];
        const auto& w = ref.window;
        std::mt19937_64 drop_rng = window_rng(config_.seed, epoch, index, 1);
        std::mt19937_64 mix_rng = window_rng(config_.seed, epoch, index, 2);

        nn::Tape<S> tape(&grads);
        model::Pass<S> pass{tape, model_.config().dropout > 0 ? &drop_rng : nullptr};
        const Mat x = s.normalized.middleRows(w.input_begin(), w.w_in).template cast<S>();
        const Mat summary = s.summary.template cast<S>();
        const Mat target = s.responses.at(w.subject_id).middleRows(w.target_begin(), w.w_out).template cast<S>();

        nn::Var<S> h = model_.encode(pass, model_.fuse(pass, tape.constant(x)));
        const auto mem = model_.memory(pass, h, summary);
        const Mat previous = decoder_inputs(h.value(), summary, target, w.subject_id, gamma, mix_rng);
        nn::Var<S> pred = model_.decode(pass, mem, previous, w.subject_id);
        LossValue terms;
        nn::Var<S> loss = combined_loss(pred, target, config_.lambda_corr, &terms);
        if (std::isfinite(terms.total))
            tape.backward(nn::scale(loss, weight));
        return terms;
    }

    /// Rows fed at decoder steps 1..w_out-1. Each is the whole ground-truth
    /// vector with probability gamma, else the model's own detached
    /// free-running prediction for the previous step.
    Mat decoder_inputs(const Mat& h_enc, const Mat& summary, const Mat& target, const std::string& subject, double gamma,
                       std::mt19937_64& rng) const
    {
        const Index k = target.rows() - 1;
        Mat previous = target.topRows(k);
        if (gamma >= 1.0 || k == 0)
            return previous;
        std::vector<char> truth(static_cast<std::size_t>(k));
        Index last_model = -1;
        for (Index t = 0; t < k; ++t) {
            truth[t] = use_ground_truth(gamma, rng);
            if (!truth[t])
                last_model = t;
        }
        if (last_model < 0)
            return previous;
        model::IncrementalDecoder<S> dec(model_, h_enc, summary, subject, target.rows());
        RowVector<S> in = dec.bos();
        for (Index t = 0; t <= last_model; ++t) {
            const RowVector<S> out = dec.next(in);
            if (!truth[t])
                previous.row(t) = out;
            in = previous.row(t);
        }
        return previous;
    }

    [[noreturn]] void diverged(Index epoch, std::size_t window)
    {
        const auto& w = train_windows_[window].window;
        const std::string where = "non-finite loss at epoch " + std::to_string(epoch) + ", window " + w.session_id +
                                  "/" + w.subject_id + "@" + std::to_string(w.start);
        if (!outputs_.dir.empty()) {
            save(snapshot(epoch, anneal_gamma(epoch, config_.gamma), std::numeric_limits<double>::quiet_NaN(), -1),
                 "last_good.ckpt");
            throw TrainingDiverged(where + "; last good parameters saved to " +
                                   (outputs_.dir / "last_good.ckpt").string());
        }
        throw TrainingDiverged(where);
    }

    model::ModelCheckpoint snapshot(Index epoch, double gamma, double best_val, Index best_epoch) const
    {
        model::ModelCheckpoint ckpt = model::make_checkpoint(model_);
        store_norm(ckpt, norm_);
        if (adam_.steps() > 0)
            adam_.save(ckpt, model_.params());
        ckpt.metadata["epoch"] = epoch;
        ckpt.metadata["gamma"] = gamma;
        ckpt.metadata["best_epoch"] = best_epoch;
        ckpt.metadata["best_val"] = std::isfinite(best_val) ? nlohmann::json(best_val) : nlohmann::json(nullptr);
        ckpt.metadata["train_config"] = to_json(config_);
        return ckpt;
    }

    void save(const model::ModelCheckpoint& ckpt, const char* name) const
    {
        if (!outputs_.dir.empty())
            model::save_checkpoint(ckpt, outputs_.dir / name);
    }

    void open(std::ofstream& f, const char* name)
    {
        f.open(outputs_.dir / name, std::ios::binary | std::ios::trunc);
        if (!f)
            throw IoError("cannot write " + (outputs_.dir / name).string());
    }

    void log_epoch(const EpochRecord& rec, std::string& log)
    {
        nlohmann::json line = {{"epoch", rec.epoch}, {"gamma", rec.gamma}, {"loss", rec.loss},
                               {"mse", rec.mse},     {"corr", rec.corr}};
        line["val_score"] = std::isfinite(rec.val_score) ? nlohmann::json(rec.val_score) : nlohmann::json(nullptr);
        const std::string text = line.dump() + "\n";
        log += text;
        if (metrics_.is_open())
            metrics_ << text << std::flush;
        if (timing_.is_open())
            timing_ << nlohmann::json{{"epoch", rec.epoch}, {"seconds", rec.seconds}}.dump() << "\n" << std::flush;
    }

    model::EncodingModel<S> model_;
    std::vector<PreparedSession> sessions_;
    NormStats norm_;
    TrainConfig config_;
    std::vector<std::string> subjects_;
    TrainOutputs outputs_;
    Adam<S> adam_;
    std::vector<WindowRef> train_windows_;
    data::WindowGeometry val_geometry_;
    std::ofstream metrics_, timing_;
};

/// Subjects with responses in any session that contributes training rows.
std::vector<std::string> training_subjects(const std::vector<PreparedSession>& sessions);

/// Trains a fresh model. Dimensions left unset in `config.model` are inferred.
template <typename S>
TrainResult train(const std::vector<data::SessionData>& sessions, RunConfig config, const TrainOutputs& outputs = {})
{
    infer_model_dims(config.model, sessions);
    config.train.validate();
    auto prepared = prepare_sessions(sessions, config.model, config.train);
    const auto subjects = training_subjects(prepared);
    if (subjects.empty())
        throw ConfigError("no training session has fMRI responses");
    const NormStats norm = config.train.normalize ? training_norm_stats(prepared)
                                                  : NormStats::identity(config.model.input_width());
    apply_norm(prepared, norm);
    model::EncodingModel<S> model(config.model, subjects, config.train.seed);
    Trainer<S> trainer(std::move(model), std::move(prepared), norm, config.train, subjects, outputs);
    return trainer.run();
}

/// Adds `subject` to a trained checkpoint and fits only its embedding and
/// readout; every shared tensor stays bit-identical.
template <typename S>
TrainResult finetune_subject(const model::ModelCheckpoint& base, const std::vector<data::SessionData>& sessions,
                             const std::string& subject, TrainConfig config, const TrainOutputs& outputs = {})
{
    const auto trained = model::restore_model<S>(base);
    auto adapted = model::adapt_new_subject(trained, subject, config.seed);
    auto model_config = adapted.config();
    infer_model_dims(model_config, sessions);
    auto prepared = prepare_sessions(sessions, model_config, config);
    if (std::none_of(prepared.begin(), prepared.end(), [&](const auto& s) { return s.responses.count(subject); }))
        throw ConfigError("no session has responses for subject '" + subject + "'");
    const NormStats norm = load_norm(base, model_config.input_width());
    apply_norm(prepared, norm);
    Trainer<S> trainer(std::move(adapted), std::move(prepared), norm, config, {subject}, outputs);
    return trainer.run();
}

}  // namespace neuroseq::train
