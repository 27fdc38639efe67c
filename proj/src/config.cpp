#include "neuroseq/core/error.hpp"
#include "neuroseq/model/config.hpp"
#include "neuroseq/train/config.hpp"

#include <fstream>
#include <set>

namespace neuroseq {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section)
{
    if (!j.is_object())
        throw ConfigError(section + ": expected an object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ConfigError(section + ": unknown key '" + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section)
{
    if (!j.contains(key))
        return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(section + "." + key + ": wrong type (" + j.at(key).dump() + ")");
    }
}

}  // namespace

namespace model {

Index ModelConfig::input_width() const
{
    Index width = 0;
    for (Index d : modality_dims)
        width += d;
    if (narrative == NarrativeMode::gaussian)
        width += summary_dim;
    return width;
}

void ModelConfig::validate() const
{
    if (d < 1 || enc_layers < 1 || dec_layers < 1 || heads < 1 || max_len < 1 || ffn_mult < 1)
        throw ConfigError("model: d, layer counts, heads, max_len and ffn_mult must all be at least 1");
    if (d % heads != 0)
        throw ConfigError("model: d = " + std::to_string(d) + " is not divisible by heads = " + std::to_string(heads));
    if (parcels < 1)
        throw ConfigError("model: parcels must be at least 1");
    if (modality_dims.empty())
        throw ConfigError("model: modality_dims is empty");
    for (Index m : modality_dims)
        if (m < 1)
            throw ConfigError("model: every modality width must be at least 1");
    if (narrative != NarrativeMode::none && summary_dim < 1)
        throw ConfigError("model: summary_dim must be at least 1 when narrative context is used");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw ConfigError("model: dropout must be in [0, 1)");
    if (!(ln_eps > 0.0))
        throw ConfigError("model: ln_eps must be positive");
    if (!(gaussian_sigma > 0.0))
        throw ConfigError("model: gaussian_sigma must be positive");
}

std::string to_string(NarrativeMode mode)
{
    switch (mode) {
    case NarrativeMode::cross_attention: return "cross_attention";
    case NarrativeMode::gaussian: return "gaussian";
    case NarrativeMode::none: return "none";
    }
    return "none";
}

std::string to_string(SubjectConditioning mode)
{
    return mode == SubjectConditioning::concat ? "concat" : "add";
}

json to_json(const ModelConfig& c)
{
    return {{"d", c.d},
            {"enc_layers", c.enc_layers},
            {"dec_layers", c.dec_layers},
            {"heads", c.heads},
            {"parcels", c.parcels},
            {"modality_dims", c.modality_dims},
            {"summary_dim", c.summary_dim},
            {"dropout", c.dropout},
            {"max_len", c.max_len},
            {"ffn_mult", c.ffn_mult},
            {"ln_eps", c.ln_eps},
            {"narrative", to_string(c.narrative)},
            {"gaussian_sigma", c.gaussian_sigma},
            {"subject_conditioning", to_string(c.subject_conditioning)}};
}

ModelConfig model_config_from_json(const json& j)
{
    const std::string section = "model";
    reject_unknown(j,
                   {"d", "enc_layers", "dec_layers", "heads", "parcels", "modality_dims", "summary_dim", "dropout",
                    "max_len", "ffn_mult", "ln_eps", "narrative", "gaussian_sigma", "subject_conditioning"},
                   section);
    ModelConfig c;
    read(j, "d", c.d, section);
    read(j, "enc_layers", c.enc_layers, section);
    read(j, "dec_layers", c.dec_layers, section);
    read(j, "heads", c.heads, section);
    read(j, "parcels", c.parcels, section);
    read(j, "modality_dims", c.modality_dims, section);
    read(j, "summary_dim", c.summary_dim, section);
    read(j, "dropout", c.dropout, section);
    read(j, "max_len", c.max_len, section);
    read(j, "ffn_mult", c.ffn_mult, section);
    read(j, "ln_eps", c.ln_eps, section);
    read(j, "gaussian_sigma", c.gaussian_sigma, section);
    std::string narrative = to_string(c.narrative);
    read(j, "narrative", narrative, section);
    if (narrative == "cross_attention")
        c.narrative = NarrativeMode::cross_attention;
    else if (narrative == "gaussian")
        c.narrative = NarrativeMode::gaussian;
    else if (narrative == "none")
        c.narrative = NarrativeMode::none;
    else
        throw ConfigError("model.narrative: expected cross_attention, gaussian or none, got '" + narrative + "'");
    std::string conditioning = to_string(c.subject_conditioning);
    read(j, "subject_conditioning", conditioning, section);
    if (conditioning == "add")
        c.subject_conditioning = SubjectConditioning::add;
    else if (conditioning == "concat")
        c.subject_conditioning = SubjectConditioning::concat;
    else
        throw ConfigError("model.subject_conditioning: expected add or concat, got '" + conditioning + "'");
    return c;
}

}  // namespace model

namespace train {

void TrainConfig::validate() const
{
    if (!(lambda_corr >= 0.0))
        throw ConfigError("train.lambda_corr must be non-negative");
    if (!(gamma.start >= 0.0 && gamma.start <= 1.0 && gamma.end >= 0.0 && gamma.end <= 1.0))
        throw ConfigError("train: gamma_start and gamma_end must be in [0, 1]");
    if (gamma.start < gamma.end)
        throw ConfigError("train: gamma_start must be >= gamma_end (the ratio anneals downwards)");
    if (gamma.anneal_epochs < 0)
        throw ConfigError("train.gamma_anneal_epochs must be non-negative");
    if (!(learning_rate > 0.0))
        throw ConfigError("train.learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0))
        throw ConfigError("train: invalid Adam moment settings");
    if (!(weight_decay >= 0.0))
        throw ConfigError("train.weight_decay must be non-negative");
    if (batch_size < 1)
        throw ConfigError("train.batch_size must be at least 1");
    if (epochs < 0)
        throw ConfigError("train.epochs must be non-negative");
    if (val_stride < 1)
        throw ConfigError("train.val_stride must be at least 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw ConfigError("train.val_fraction must be in [0, 1)");
    data::validate(window);
}

json to_json(const TrainConfig& c)
{
    return {{"lambda_corr", c.lambda_corr},
            {"gamma_start", c.gamma.start},
            {"gamma_end", c.gamma.end},
            {"gamma_anneal_epochs", c.gamma.anneal_epochs},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"normalize", c.normalize},
            {"w_in", c.window.w_in},
            {"w_out", c.window.w_out},
            {"delay", c.window.delay},
            {"stride", c.window.stride},
            {"val_stride", c.val_stride},
            {"val_fraction", c.val_fraction}};
}

TrainConfig train_config_from_json(const json& j)
{
    const std::string section = "train";
    reject_unknown(j,
                   {"lambda_corr", "gamma_start", "gamma_end", "gamma_anneal_epochs", "learning_rate", "beta1", "beta2",
                    "adam_eps", "weight_decay", "batch_size", "epochs", "seed", "normalize", "w_in", "w_out", "delay",
                    "stride", "val_stride", "val_fraction"},
                   section);
    TrainConfig c;
    read(j, "lambda_corr", c.lambda_corr, section);
    read(j, "gamma_start", c.gamma.start, section);
    read(j, "gamma_end", c.gamma.end, section);
    read(j, "gamma_anneal_epochs", c.gamma.anneal_epochs, section);
    read(j, "learning_rate", c.learning_rate, section);
    read(j, "beta1", c.beta1, section);
    read(j, "beta2", c.beta2, section);
    read(j, "adam_eps", c.adam_eps, section);
    read(j, "weight_decay", c.weight_decay, section);
    read(j, "batch_size", c.batch_size, section);
    read(j, "epochs", c.epochs, section);
    read(j, "seed", c.seed, section);
    read(j, "normalize", c.normalize, section);
    read(j, "w_in", c.window.w_in, section);
    read(j, "w_out", c.window.w_out, section);
    read(j, "delay", c.window.delay, section);
    read(j, "stride", c.window.stride, section);
    read(j, "val_stride", c.val_stride, section);
    read(j, "val_fraction", c.val_fraction, section);
    return c;
}

json to_json(const RunConfig& c)
{
    return {{"model", model::to_json(c.model)}, {"train", to_json(c.train)}};
}

RunConfig run_config_from_json(const json& j)
{
    reject_unknown(j, {"model", "train"}, "config");
    RunConfig c;
    if (j.contains("model"))
        c.model = model::model_config_from_json(j.at("model"));
    if (j.contains("train"))
        c.train = train_config_from_json(j.at("train"));
    return c;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    try {
        return run_config_from_json(j);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

json apply_overrides(json config, const std::vector<std::string>& overrides)
{
    const json defaults = to_json(RunConfig{});
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + item + "' is not of the form section.key=value");
        const std::string key = item.substr(0, eq);
        const std::string text = item.substr(eq + 1);
        const auto dot = key.find('.');
        if (dot == std::string::npos)
            throw ConfigError("override key '" + key + "' must be section.key");
        const std::string section = key.substr(0, dot);
        const std::string field = key.substr(dot + 1);
        if (!defaults.contains(section) || !defaults.at(section).contains(field))
            throw ConfigError("override references unknown key '" + key + "'");
        json value;
        try {
            value = json::parse(text);
        } catch (const json::exception&) {
            value = text;
        }
        config[section][field] = value;
    }
    return config;
}

}  // namespace train

}  // namespace neuroseq
