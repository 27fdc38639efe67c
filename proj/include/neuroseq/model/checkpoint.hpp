#pragma once

#include "neuroseq/model/encoding_model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace neuroseq::model {

struct NamedTensor {
    std::string name;
    MatrixD value;
    bool trainable = true;
};

/// Everything needed to resume or deploy a model: configuration, subject
/// table, parameters (canonical order), auxiliary state tensors such as
/// optimizer moments and feature statistics, and free-form metadata.
struct ModelCheckpoint {
    ModelConfig config;
    std::vector<std::string> subjects;
    std::vector<NamedTensor> parameters;
    std::vector<NamedTensor> state;
    nlohmann::json metadata = nlohmann::json::object();

    const NamedTensor* find_state(const std::string& name) const;
    void set_state(const std::string& name, MatrixD value);
    const NamedTensor& parameter(const std::string& name) const;
};

// Container: "ALGC" | u32 version | u64 header bytes | JSON header |
// float64 little-endian payloads in header order.
inline constexpr char kCheckpointMagic[4] = {'A', 'L', 'G', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<unsigned char> serialize(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize(const std::vector<unsigned char>& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

template <typename S>
ModelCheckpoint make_checkpoint(const EncodingModel<S>& model)
{
    ModelCheckpoint ckpt;
    ckpt.config = model.config();
    ckpt.subjects = model.subjects();
    for (const auto& p : model.params())
        ckpt.parameters.push_back({p.name, p.value.template cast<double>(), p.trainable});
    return ckpt;
}

/// Rebuilds a model from a checkpoint. Parameter names and shapes must match
/// the architecture implied by the stored config exactly.
template <typename S>
EncodingModel<S> restore_model(const ModelCheckpoint& ckpt)
{
    EncodingModel<S> model(ckpt.config, ckpt.subjects, 0);
    auto& params = model.params();
    if (params.size() != ckpt.parameters.size())
        throw FormatError("checkpoint holds " + std::to_string(ckpt.parameters.size()) +
                          " parameters; architecture expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& stored = ckpt.parameters[i];
        auto& p = params[i];
        if (p.name != stored.name)
            throw FormatError("checkpoint parameter " + std::to_string(i) + " is '" + stored.name + "', expected '" +
                              p.name + "'");
        if (p.value.rows() != stored.value.rows() || p.value.cols() != stored.value.cols())
            throw FormatError("checkpoint parameter '" + stored.name + "' has the wrong shape");
        p.value = stored.value.template cast<S>();
        p.trainable = stored.trainable;
    }
    return model;
}

}  // namespace neuroseq::model
