#pragma once

#include "neuroseq/data/manifest.hpp"
#include "neuroseq/data/windows.hpp"
#include "neuroseq/model/config.hpp"
#include "neuroseq/train/config.hpp"
#include "neuroseq/train/normalize.hpp"

#include <map>
#include <string>
#include <vector>

namespace neuroseq::train {

/// Model-ready view of one session: concatenated stimulus columns (plus the
/// Gaussian summary columns in gaussian mode), the summary sentences for
/// cross-attention, responses per subject, and which rows feed training and
/// which feed validation.
struct PreparedSession {
    std::string session_id;
    data::Split split = data::Split::train;
    double tr_seconds = 1.5;
    MatrixD stimulus;    // T x input_width, raw
    MatrixD normalized;  // stimulus after NormStats
    MatrixD summary;     // S x summary_dim for cross-attention, else empty
    std::map<std::string, MatrixD> responses;
    Index train_begin = 0, train_end = 0;
    Index val_begin = 0, val_end = 0;

    Index length() const { return stimulus.rows(); }
};

/// Fills modality_dims, parcels and summary_dim left unset in `config` from the
/// data, then checks every session agrees with it.
void infer_model_dims(model::ModelConfig& config, const std::vector<data::SessionData>& sessions);

/// Concatenated per-TR features; in gaussian mode the Gaussian-weighted summary
/// vector at t = row * tr_seconds is appended.
MatrixD build_stimulus(const data::SessionData& session, const model::ModelConfig& config);

/// Assigns train/validation rows. Sessions tagged val are held out whole. When
/// none are tagged val, the trailing val_fraction of every train session is held out.
std::vector<PreparedSession> prepare_sessions(const std::vector<data::SessionData>& sessions,
                                              const model::ModelConfig& model_config,
                                              const TrainConfig& train_config);

NormStats training_norm_stats(const std::vector<PreparedSession>& sessions);

void apply_norm(std::vector<PreparedSession>& sessions, const NormStats& stats);

/// One window tied to the index of its prepared session.
struct WindowRef {
    std::size_t session = 0;
    data::TrainingWindow window;
};

std::vector<WindowRef> training_windows(const std::vector<PreparedSession>& sessions,
                                        const data::WindowGeometry& geometry,
                                        const std::vector<std::string>& subjects);

std::vector<WindowRef> validation_windows(const std::vector<PreparedSession>& sessions,
                                          const data::WindowGeometry& geometry,
                                          const std::vector<std::string>& subjects);

}  // namespace neuroseq::train
