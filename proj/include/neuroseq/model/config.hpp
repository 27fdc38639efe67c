#pragma once

#include "neuroseq/core/types.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace neuroseq::model {

/// How narrative-summary sentences reach the model.
enum class NarrativeMode {
    cross_attention,  // decoder attends to projected sentence embeddings
    gaussian,         // Gaussian-weighted summary vector appended to encoder input
    none,
};

/// How the subject embedding enters the decoder input.
enum class SubjectConditioning {
    add,     // z0 = y_prev W_dec + b_dec + e_s + pos
    concat,  // z0 = [y_prev, e_s] W_dec + b_dec + pos
};

struct ModelConfig {
    Index d = 64;
    Index enc_layers = 2;
    Index dec_layers = 2;
    Index heads = 4;
    // parcels, modality_dims and summary_dim left at 0/empty are filled in
    // from the training data before validation.
    Index parcels = 0;
    std::vector<Index> modality_dims;
    Index summary_dim = 0;
    double dropout = 0.1;
    Index max_len = 64;
    Index ffn_mult = 4;
    double ln_eps = 1e-5;
    NarrativeMode narrative = NarrativeMode::cross_attention;
    double gaussian_sigma = 30.0;
    SubjectConditioning subject_conditioning = SubjectConditioning::add;

    /// Width of the concatenated encoder input (summary columns included in gaussian mode).
    Index input_width() const;

    /// Throws ConfigError on any inconsistent field.
    void validate() const;
};

std::string to_string(NarrativeMode mode);
std::string to_string(SubjectConditioning mode);

nlohmann::json to_json(const ModelConfig& config);

/// Unknown keys are rejected with ConfigError; missing keys keep defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace neuroseq::model
