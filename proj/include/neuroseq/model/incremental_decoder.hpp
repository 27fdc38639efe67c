#pragma once

#include "neuroseq/model/encoding_model.hpp"

namespace neuroseq::model {

/// Step-at-a-time decoder in evaluation mode with cached self-attention keys
/// and values. Computes the same function as EncodingModel::decode, one row
/// per call, without a tape. Results agree with the full pass to rounding;
/// they are not bit-identical because the products run at different shapes.
template <typename S>
class IncrementalDecoder {
public:
    using Mat = Matrix<S>;
    using Row = RowVector<S>;

    IncrementalDecoder(const EncodingModel<S>& model, const Mat& h_enc, const Mat& summary,
                       const std::string& subject_id, Index max_steps)
        : model_(model), cfg_(model.config()), subject_(model.subject(subject_id)), max_steps_(max_steps)
    {
        if (max_steps < 1 || max_steps > cfg_.max_len)
            throw ConfigError("incremental decoder: steps must be in [1, max_len]");
        const auto& layers = model.decoder_layers();
        Mat narrative;
        if (cfg_.narrative == NarrativeMode::cross_attention) {
            if (summary.rows() < 1 || summary.cols() != cfg_.summary_dim)
                throw ConfigError("incremental decoder: summary must be S x summary_dim with S >= 1");
            narrative = affine(summary, model.summary_w(), model.summary_b());
        }
        for (const auto& layer : layers) {
            LayerCache cache;
            cache.self_k = Mat::Zero(max_steps, cfg_.d);
            cache.self_v = Mat::Zero(max_steps, cfg_.d);
            cache.stim_k = h_enc * p(layer.stim.wk);
            cache.stim_v = affine(h_enc, layer.stim.wv, layer.stim.bv);
            if (cfg_.narrative == NarrativeMode::cross_attention) {
                cache.desc_k = narrative * p(layer.desc.wk);
                cache.desc_v = affine(narrative, layer.desc.wv, layer.desc.bv);
            }
            caches_.push_back(std::move(cache));
        }
    }

    Row bos() const { return p(model_.bos_index()).row(0); }

    Index position() const { return step_; }

    /// Consumes the previous output (BOS at step 0) and returns this step's prediction.
    Row next(const Row& previous)
    {
        if (step_ >= max_steps_)
            throw ContractError("incremental decoder: all steps consumed");
        const S eps = static_cast<S>(cfg_.ln_eps);
        Row z;
        if (cfg_.subject_conditioning == SubjectConditioning::concat) {
            Row in(cfg_.parcels + cfg_.d);
            in << previous, p(subject_.embed).row(0);
            z = affine(in, model_.decoder_input_w(), model_.decoder_input_b());
        } else {
            z = affine(previous, model_.decoder_input_w(), model_.decoder_input_b());
            z += p(subject_.embed).row(0);
        }
        z += p(model_.decoder_pos()).row(step_);

        const auto& layers = model_.decoder_layers();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& layer = layers[l];
            LayerCache& cache = caches_[l];
            cache.self_k.row(step_) = z * p(layer.self.wk);
            cache.self_v.row(step_) = affine(z, layer.self.wv, layer.self.bv);
            Row a = attend_row(layer.self, z, cache.self_k.topRows(step_ + 1), cache.self_v.topRows(step_ + 1));
            z = norm(z + a, layer.ln_self, eps);
            a = attend_row(layer.stim, z, cache.stim_k, cache.stim_v);
            z = norm(z + a, layer.ln_stim, eps);
            if (cfg_.narrative == NarrativeMode::cross_attention) {
                a = attend_row(layer.desc, z, cache.desc_k, cache.desc_v);
                z = norm(z + a, layer.ln_desc, eps);
            }
            Row h = affine(z, layer.mlp.w1, layer.mlp.b1);
            for (Index i = 0; i < h.size(); ++i)
                h(i) = S(0.5) * h(i) * (S(1) + std::erf(h(i) / std::numbers::sqrt2_v<S>));
            z = norm(z + affine(h, layer.mlp.w2, layer.mlp.b2), layer.ln_mlp, eps);
        }
        ++step_;
        return affine(z, subject_.w_out, subject_.b_out);
    }

private:
    struct LayerCache {
        Mat self_k, self_v, stim_k, stim_v, desc_k, desc_v;
    };

    const Mat& p(std::size_t index) const { return model_.params()[index].value; }

    template <typename Derived>
    Mat affine(const Eigen::MatrixBase<Derived>& x, std::size_t w, std::size_t b) const
    {
        Mat out = x * p(w);
        out.rowwise() += p(b).row(0);
        return out;
    }

    Row norm(const Row& x, const nn::NormParams& np, S eps) const
    {
        const S mean = x.mean();
        const S var = (x.array() - mean).square().mean();
        Row y = (x.array() - mean) / std::sqrt(var + eps);
        return y.cwiseProduct(p(np.gain).row(0)) + p(np.bias).row(0);
    }

    template <typename KD, typename VD>
    Row attend_row(const nn::AttentionParams& ap, const Row& query, const Eigen::MatrixBase<KD>& keys,
                   const Eigen::MatrixBase<VD>& values) const
    {
        const Index dh = cfg_.d / cfg_.heads;
        const S c = S(1) / std::sqrt(static_cast<S>(dh));
        const Row q = affine(query, ap.wq, ap.bq);
        Row mixed(cfg_.d);
        for (Index h = 0; h < cfg_.heads; ++h) {
            RowVector<S> scores = q.segment(h * dh, dh) * keys.middleCols(h * dh, dh).transpose();
            scores = ((scores.array() - scores.maxCoeff()) * c).exp();
            scores /= scores.sum();
            mixed.segment(h * dh, dh) = scores * values.middleCols(h * dh, dh);
        }
        return affine(mixed, ap.wo, ap.bo);
    }

    const EncodingModel<S>& model_;
    const ModelConfig& cfg_;
    SubjectParams subject_;
    Index max_steps_;
    Index step_ = 0;
    std::vector<LayerCache> caches_;
};

}  // namespace neuroseq::model
