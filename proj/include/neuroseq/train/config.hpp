#pragma once

#include "neuroseq/data/windows.hpp"
#include "neuroseq/model/config.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace neuroseq::train {

/// Linear anneal of the teacher-forcing ratio from `start` to `end`.
struct GammaSchedule {
    double start = 1.0;
    double end = 0.2;
    Index anneal_epochs = 10;
};

struct TrainConfig {
    double lambda_corr = 1.0;
    GammaSchedule gamma;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    Index batch_size = 16;
    Index epochs = 50;
    std::uint64_t seed = 0;
    bool normalize = true;
    data::WindowGeometry window;
    // Validation windows are decoded free-running, so a coarser stride keeps
    // per-epoch scoring affordable.
    Index val_stride = 5;
    // When no session is tagged val, the trailing fraction of every training
    // session is held out instead.
    double val_fraction = 0.2;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// The full run configuration: {"model": {...}, "train": {...}}.
struct RunConfig {
    model::ModelConfig model;
    TrainConfig train;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Reads a config file; unknown keys anywhere are rejected.
RunConfig load_run_config(const std::string& path);

/// Applies "section.key=value" overrides. The value is parsed as JSON when
/// possible, otherwise taken as a string. Unknown keys are rejected.
nlohmann::json apply_overrides(nlohmann::json config, const std::vector<std::string>& overrides);

}  // namespace neuroseq::train
