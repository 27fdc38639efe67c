#pragma once

#include "neuroseq/model/config.hpp"
#include "neuroseq/nn/attention.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace neuroseq::model {

using nn::Tape;
using nn::Var;

/// One forward pass: the tape to record on and, in training mode, the dropout
/// generator. A null generator means evaluation mode (dropout off).
template <typename S>
struct Pass {
    Tape<S>& tape;
    std::mt19937_64* dropout_rng = nullptr;
};

/// Per-layer projected keys/values of the stimulus encoding and of the
/// summary sentences, computed once per window.
template <typename S>
struct DecoderMemory {
    std::vector<nn::KeyValue<S>> stimulus;
    std::vector<nn::KeyValue<S>> narrative;
};

struct SubjectParams {
    std::size_t embed, w_out, b_out;
};

/// Shared causal encoder plus autoregressive decoder with self-attention,
/// cross-attention to the stimulus encoding, cross-attention to narrative
/// sentences, and per-subject embeddings and readouts.
template <typename S>
class EncodingModel {
public:
    using Mat = Matrix<S>;

    EncodingModel(ModelConfig config, const std::vector<std::string>& subjects, std::uint64_t seed)
        : config_(std::move(config))
    {
        config_.validate();
        if (subjects.empty())
            throw ConfigError("model needs at least one subject");
        std::mt19937_64 rng(seed);
        register_shared(rng);
        for (const auto& s : subjects)
            register_subject(s, rng);
    }

    const ModelConfig& config() const { return config_; }
    nn::ParameterSet<S>& params() { return params_; }
    const nn::ParameterSet<S>& params() const { return params_; }

    const std::vector<std::string>& subjects() const { return subject_order_; }
    bool has_subject(const std::string& id) const { return subjects_.count(id) != 0; }

    const SubjectParams& subject(const std::string& id) const
    {
        auto it = subjects_.find(id);
        if (it == subjects_.end())
            throw LookupError("unknown subject '" + id + "'");
        return it->second;
    }

    /// Adds fresh e_s, W_out^(s), b_out^(s). Throws ConflictError for a known subject.
    void add_subject(const std::string& id, std::mt19937_64& rng)
    {
        if (has_subject(id))
            throw ConflictError("subject '" + id + "' already exists");
        register_subject(id, rng);
    }

    /// Names of the tensors that belong to subject `id`.
    std::vector<std::string> subject_tensor_names(const std::string& id) const
    {
        const auto& sp = subject(id);
        return {params_[sp.embed].name, params_[sp.w_out].name, params_[sp.b_out].name};
    }

    // ---- tape-level building blocks -------------------------------------

    /// Concatenates per-TR features across modalities, then one affine map to d.
    Var<S> fuse_modalities(Pass<S>& pass, std::span<const Mat> slices) const
    {
        if (slices.empty())
            throw ConfigError("fuse_modalities: no feature slices");
        Index width = 0;
        for (const auto& s : slices) {
            if (s.rows() != slices.front().rows())
                throw ContractError("fuse_modalities: slices disagree on T");
            width += s.cols();
        }
        if (width != config_.input_width())
            throw ConfigError("fuse_modalities: got " + std::to_string(width) + " feature columns, model expects " +
                              std::to_string(config_.input_width()));
        Mat x(slices.front().rows(), width);
        Index c = 0;
        for (const auto& s : slices) {
            x.middleCols(c, s.cols()) = s;
            c += s.cols();
        }
        return fuse(pass, pass.tape.constant(std::move(x)));
    }

    /// Affine projection of already-concatenated features.
    Var<S> fuse(Pass<S>& pass, Var<S> features) const
    {
        if (features.cols() != config_.input_width())
            throw ConfigError("fuse: got " + std::to_string(features.cols()) + " feature columns, model expects " +
                              std::to_string(config_.input_width()));
        return nn::affine(features, bind(pass, fuse_w_), bind(pass, fuse_b_));
    }

    /// Causal encoder: per layer, positional table re-added, causal
    /// self-attention then MLP, each followed by residual + LayerNorm.
    Var<S> encode(Pass<S>& pass, Var<S> x) const
    {
        if (x.rows() > config_.max_len)
            throw ConfigError("encoder input has " + std::to_string(x.rows()) + " steps; max_len is " +
                              std::to_string(config_.max_len));
        const S eps = static_cast<S>(config_.ln_eps);
        Var<S> z = x;
        for (const auto& layer : encoder_) {
            z = nn::add_rel_pos(z, bind(pass, enc_pos_), 0);
            Var<S> a = nn::multi_head_attention(pass.tape, params_, layer.attn, z, z, nn::MaskKind::causal,
                                                config_.heads, config_.dropout, pass.dropout_rng);
            z = nn::apply_norm(pass.tape, params_, layer.ln1, nn::add(z, a), eps);
            Var<S> m = nn::apply_mlp(pass.tape, params_, layer.mlp, z, config_.dropout, pass.dropout_rng);
            z = nn::apply_norm(pass.tape, params_, layer.ln2, nn::add(z, m), eps);
        }
        return z;
    }

    /// Projects the stimulus encoding and the summary sentences into per-layer keys/values.
    DecoderMemory<S> memory(Pass<S>& pass, Var<S> h_enc, const Mat& summary) const
    {
        DecoderMemory<S> mem;
        for (const auto& layer : decoder_)
            mem.stimulus.push_back(nn::project_kv(pass.tape, params_, layer.stim, h_enc));
        if (config_.narrative == NarrativeMode::cross_attention) {
            if (summary.rows() < 1)
                throw ConfigError("narrative cross-attention needs at least one summary sentence "
                                  "(supply a zero placeholder)");
            if (summary.cols() != config_.summary_dim)
                throw ConfigError("summary width " + std::to_string(summary.cols()) + " != summary_dim " +
                                  std::to_string(config_.summary_dim));
            Var<S> e = nn::affine(pass.tape.constant(summary), bind(pass, sum_w_), bind(pass, sum_b_));
            for (const auto& layer : decoder_)
                mem.narrative.push_back(nn::project_kv(pass.tape, params_, layer.desc, e));
        }
        return mem;
    }

    /// Teacher-forced decoder. `previous` holds the k = steps - 1 previous
    /// outputs fed at steps 1..k; step 0 is fed the learnable BOS vector.
    /// Returns steps x P predictions for `subject`.
    Var<S> decode(Pass<S>& pass, const DecoderMemory<S>& mem, const Mat& previous, const std::string& subject_id) const
    {
        const SubjectParams& sp = subject(subject_id);
        if (previous.rows() > 0 && previous.cols() != config_.parcels)
            throw ContractError("decoder inputs have " + std::to_string(previous.cols()) + " parcels, model has " +
                                std::to_string(config_.parcels));
        const Index steps = previous.rows() + 1;
        if (steps > config_.max_len)
            throw ConfigError("decoder window of " + std::to_string(steps) + " steps exceeds max_len " +
                              std::to_string(config_.max_len));

        Tape<S>& tape = pass.tape;
        Var<S> y_in = bind(pass, bos_);
        if (previous.rows() > 0)
            y_in = nn::concat_rows<S>({y_in, tape.constant(previous)});

        Var<S> z;
        if (config_.subject_conditioning == SubjectConditioning::concat) {
            Var<S> e = nn::repeat_rows(bind(pass, sp.embed), steps);
            z = nn::affine(nn::concat_cols<S>({y_in, e}), bind(pass, dec_in_w_), bind(pass, dec_in_b_));
        } else {
            z = nn::affine(y_in, bind(pass, dec_in_w_), bind(pass, dec_in_b_));
            z = nn::add_row(z, bind(pass, sp.embed));
        }
        z = nn::add_rel_pos(z, bind(pass, dec_pos_), 0);

        const S eps = static_cast<S>(config_.ln_eps);
        for (std::size_t l = 0; l < decoder_.size(); ++l) {
            const auto& layer = decoder_[l];
            Var<S> a = nn::multi_head_attention(tape, params_, layer.self, z, z, nn::MaskKind::causal, config_.heads,
                                                config_.dropout, pass.dropout_rng);
            z = nn::apply_norm(tape, params_, layer.ln_self, nn::add(z, a), eps);
            a = nn::attend(tape, params_, layer.stim, z, mem.stimulus[l], nn::MaskKind::full, config_.heads,
                           config_.dropout, pass.dropout_rng);
            z = nn::apply_norm(tape, params_, layer.ln_stim, nn::add(z, a), eps);
            if (config_.narrative == NarrativeMode::cross_attention) {
                a = nn::attend(tape, params_, layer.desc, z, mem.narrative[l], nn::MaskKind::full, config_.heads,
                               config_.dropout, pass.dropout_rng);
                z = nn::apply_norm(tape, params_, layer.ln_desc, nn::add(z, a), eps);
            }
            Var<S> m = nn::apply_mlp(tape, params_, layer.mlp, z, config_.dropout, pass.dropout_rng);
            z = nn::apply_norm(tape, params_, layer.ln_mlp, nn::add(z, m), eps);
        }
        return nn::affine(z, bind(pass, sp.w_out), bind(pass, sp.b_out));
    }

    // ---- value-level entry points (evaluation mode) -----------------------

    Mat encode_stimulus(const Mat& features) const
    {
        Tape<S> tape;
        Pass<S> pass{tape};
        return encode(pass, fuse(pass, tape.constant(features))).value();
    }

    /// Teacher-forced predictions given the stimulus encoding (dropout off).
    Mat decoder_forward_tf(const Mat& h_enc, const Mat& summary, const std::string& subject_id,
                           const Mat& previous) const
    {
        Tape<S> tape;
        Pass<S> pass{tape};
        const DecoderMemory<S> mem = memory(pass, tape.constant(h_enc), summary);
        return decode(pass, mem, previous, subject_id).value();
    }

    /// Free-running decoding: BOS first, then each prediction is fed back.
    /// Every step reruns the full-length decoder with not-yet-generated inputs
    /// zeroed; causality makes row t independent of them, so the result is
    /// bit-identical to decoder_forward_tf on the model's own outputs.
    Mat generate(const Mat& h_enc, const Mat& summary, const std::string& subject_id, Index steps) const
    {
        if (steps < 1)
            throw ContractError("generate: steps must be at least 1");
        (void)subject(subject_id);
        Tape<S> mem_tape;
        Pass<S> mem_pass{mem_tape};
        const DecoderMemory<S> mem = memory(mem_pass, mem_tape.constant(h_enc), summary);

        Mat previous = Mat::Zero(steps - 1, config_.parcels);
        Mat out(steps, config_.parcels);
        for (Index t = 0; t < steps; ++t) {
            Tape<S> tape;
            Pass<S> pass{tape};
            const DecoderMemory<S> local = rebind(tape, mem);
            const Mat pred = decode(pass, local, previous, subject_id).value();
            out.row(t) = pred.row(t);
            if (t + 1 < steps)
                previous.row(t) = pred.row(t);
        }
        return out;
    }

    /// fuse + encode + generate for one window of concatenated features.
    Mat predict_window(const Mat& features, const Mat& summary, const std::string& subject_id, Index steps) const
    {
        return generate(encode_stimulus(features), summary, subject_id, steps);
    }

    // Parameter handles used by the incremental decoder.
    struct EncoderLayer {
        nn::AttentionParams attn;
        nn::NormParams ln1;
        nn::MlpParams mlp;
        nn::NormParams ln2;
    };
    struct DecoderLayer {
        nn::AttentionParams self, stim, desc;
        nn::NormParams ln_self, ln_stim, ln_desc, ln_mlp;
        nn::MlpParams mlp;
    };
    const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }
    std::size_t bos_index() const { return bos_; }
    std::size_t decoder_input_w() const { return dec_in_w_; }
    std::size_t decoder_input_b() const { return dec_in_b_; }
    std::size_t decoder_pos() const { return dec_pos_; }
    std::size_t summary_w() const { return sum_w_; }
    std::size_t summary_b() const { return sum_b_; }

private:
    Var<S> bind(Pass<S>& pass, std::size_t index) const { return pass.tape.parameter(params_, index); }

    static DecoderMemory<S> rebind(Tape<S>& tape, const DecoderMemory<S>& mem)
    {
        DecoderMemory<S> out;
        for (const auto& kv : mem.stimulus)
            out.stimulus.push_back({tape.view(kv.k.value()), tape.view(kv.v.value())});
        for (const auto& kv : mem.narrative)
            out.narrative.push_back({tape.view(kv.k.value()), tape.view(kv.v.value())});
        return out;
    }

    void register_shared(std::mt19937_64& rng)
    {
        const Index d = config_.d;
        const Index p = config_.parcels;
        const Index hidden = config_.ffn_mult * d;
        fuse_w_ = params_.add("fuse.weight", nn::uniform_init<S>(config_.input_width(), d, rng));
        fuse_b_ = params_.add("fuse.bias", Mat::Zero(1, d));
        enc_pos_ = params_.add("encoder.pos", Mat::Zero(config_.max_len, d));
        for (Index l = 0; l < config_.enc_layers; ++l) {
            const std::string prefix = "encoder." + std::to_string(l);
            EncoderLayer layer;
            layer.attn = nn::register_attention(params_, prefix + ".self_attn", d, rng);
            layer.ln1 = nn::register_norm(params_, prefix + ".norm1", d);
            layer.mlp = nn::register_mlp(params_, prefix + ".mlp", d, hidden, rng);
            layer.ln2 = nn::register_norm(params_, prefix + ".norm2", d);
            encoder_.push_back(layer);
        }

        const Index in_width = config_.subject_conditioning == SubjectConditioning::concat ? p + d : p;
        bos_ = params_.add("decoder.bos", Mat::Zero(1, p));
        dec_in_w_ = params_.add("decoder.input.weight", nn::uniform_init<S>(in_width, d, rng));
        dec_in_b_ = params_.add("decoder.input.bias", Mat::Zero(1, d));
        dec_pos_ = params_.add("decoder.pos", Mat::Zero(config_.max_len, d));
        if (config_.narrative == NarrativeMode::cross_attention) {
            sum_w_ = params_.add("summary.weight", nn::uniform_init<S>(config_.summary_dim, d, rng));
            sum_b_ = params_.add("summary.bias", Mat::Zero(1, d));
        }
        for (Index l = 0; l < config_.dec_layers; ++l) {
            const std::string prefix = "decoder." + std::to_string(l);
            DecoderLayer layer{};
            layer.self = nn::register_attention(params_, prefix + ".self_attn", d, rng);
            layer.ln_self = nn::register_norm(params_, prefix + ".norm_self", d);
            layer.stim = nn::register_attention(params_, prefix + ".stim_attn", d, rng);
            layer.ln_stim = nn::register_norm(params_, prefix + ".norm_stim", d);
            if (config_.narrative == NarrativeMode::cross_attention) {
                layer.desc = nn::register_attention(params_, prefix + ".desc_attn", d, rng);
                layer.ln_desc = nn::register_norm(params_, prefix + ".norm_desc", d);
            }
            layer.mlp = nn::register_mlp(params_, prefix + ".mlp", d, hidden, rng);
            layer.ln_mlp = nn::register_norm(params_, prefix + ".norm_mlp", d);
            decoder_.push_back(layer);
        }
    }

    void register_subject(const std::string& id, std::mt19937_64& rng)
    {
        if (id.empty())
            throw ConfigError("subject id must be non-empty");
        const Index d = config_.d;
        const Index p = config_.parcels;
        const std::string prefix = "subject." + id;
        SubjectParams sp{};
        // Small random embedding so two fresh subjects are distinguishable.
        sp.embed = params_.add(prefix + ".embed", nn::uniform_init<S>(d, d, rng).row(0) * S(0.1));
        sp.w_out = params_.add(prefix + ".w_out", nn::uniform_init<S>(d, p, rng));
        sp.b_out = params_.add(prefix + ".b_out", Mat::Zero(1, p));
        subjects_.emplace(id, sp);
        subject_order_.push_back(id);
    }

    ModelConfig config_;
    nn::ParameterSet<S> params_;
    std::size_t fuse_w_ = 0, fuse_b_ = 0, enc_pos_ = 0;
    std::size_t bos_ = 0, dec_in_w_ = 0, dec_in_b_ = 0, dec_pos_ = 0, sum_w_ = 0, sum_b_ = 0;
    std::vector<EncoderLayer> encoder_;
    std::vector<DecoderLayer> decoder_;
    std::map<std::string, SubjectParams> subjects_;
    std::vector<std::string> subject_order_;
};

/// Copy of `model` with a new subject whose embedding and readout are the
/// only trainable tensors; every shared tensor is frozen.
template <typename S>
EncodingModel<S> adapt_new_subject(const EncodingModel<S>& model, const std::string& subject_id, std::uint64_t seed)
{
    if (model.has_subject(subject_id))
        throw ConflictError("subject '" + subject_id + "' is already in the checkpoint");
    EncodingModel<S> adapted = model;
    std::mt19937_64 rng(seed);
    adapted.add_subject(subject_id, rng);
    adapted.params().set_all_trainable(false);
    for (const auto& name : adapted.subject_tensor_names(subject_id))
        adapted.params().at(name).trainable = true;
    return adapted;
}

}  // namespace neuroseq::model
