#pragma once

#include "neuroseq/model/encoding_model.hpp"
#include "neuroseq/train/loss.hpp"

#include <random>

namespace fixture {

using namespace neuroseq;

/// d=8, one encoder and one decoder layer, two heads, P=4, dropout off.
inline model::ModelConfig tiny_config()
{
    model::ModelConfig c;
    c.d = 8;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.heads = 2;
    c.parcels = 4;
    c.modality_dims = {3, 2};
    c.summary_dim = 3;
    c.dropout = 0.0;
    c.max_len = 8;
    return c;
}

inline MatrixD gaussian_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    MatrixD m(r, c);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = n(rng);
    return m;
}

/// Inputs of one window: features (T x input width), summary (S x d_sum),
/// teacher-forced previous outputs ((T-1) x P) and targets (T x P).
struct WindowData {
    MatrixD features, summary, previous, target;
};

inline WindowData random_window(const model::ModelConfig& c, Index steps, Index sentences, std::mt19937_64& rng)
{
    WindowData w;
    w.features = gaussian_matrix(steps, c.input_width(), rng);
    w.summary = gaussian_matrix(sentences, c.summary_dim, rng);
    w.target = gaussian_matrix(steps, c.parcels, rng);
    w.previous = w.target.topRows(steps - 1);
    return w;
}

/// Randomizes every parameter so zero-initialized tables and biases are exercised too.
inline void perturb(nn::ParameterSet<double>& params, std::mt19937_64& rng, double scale = 0.3)
{
    for (auto& p : params)
        p.value += gaussian_matrix(p.value.rows(), p.value.cols(), rng, scale);
}

/// Full forward pass plus the combined loss, as a tape objective.
inline nn::Var<double> window_loss(const model::EncodingModel<double>& m, nn::Tape<double>& tape, const WindowData& w,
                                   const std::string& subject, double lambda = 1.0)
{
    model::Pass<double> pass{tape};
    nn::Var<double> h = m.encode(pass, m.fuse(pass, tape.constant(w.features)));
    const auto mem = m.memory(pass, h, w.summary);
    return train::combined_loss(m.decode(pass, mem, w.previous, subject), w.target, lambda);
}

}  // namespace fixture
