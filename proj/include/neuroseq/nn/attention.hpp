#pragma once

#include "neuroseq/nn/ops.hpp"

#include <limits>
#include <string>

namespace neuroseq::nn {

enum class MaskKind { causal, full };

/// Which (query, key) pairs may interact. Causal allows j <= i and needs T_q == T_k.
struct AttentionMask {
    MaskKind kind = MaskKind::full;
    Index t_q = 0;
    Index t_k = 0;

    bool allows(Index i, Index j) const { return kind == MaskKind::full || j <= i; }

    /// Number of keys row i may attend to.
    Index allowed(Index i) const { return kind == MaskKind::full ? t_k : std::min(i + 1, t_k); }

    void validate() const
    {
        if (t_q < 1 || t_k < 1)
            throw ConfigError("attention needs at least one query and one key");
        if (kind == MaskKind::causal && t_q != t_k)
            throw ConfigError("causal mask requires equal query and key lengths (" +
                              std::to_string(t_q) + " vs " + std::to_string(t_k) + ")");
    }
};

/// Scaled dot-product attention over already-projected q, k, v, split into
/// `heads` column groups. Masked keys are excluded from the softmax entirely,
/// so row i never reads keys the mask forbids. Dropout acts on the attention
/// weights when a generator is given.
template <typename S>
Var<S> attention_core(Var<S> q, Var<S> k, Var<S> v, MaskKind kind, Index heads, double dropout_rate = 0.0,
                      std::mt19937_64* rng = nullptr)
{
    const Index d = q.cols();
    if (heads < 1 || d % heads != 0)
        throw ConfigError("hidden width " + std::to_string(d) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    detail::require(k.cols() == d && v.cols() == d && k.rows() == v.rows(), "attention_core: shapes");
    const AttentionMask mask{kind, q.rows(), k.rows()};
    mask.validate();

    const Index dh = d / heads;
    const Index tq = q.rows();
    const Index tk = k.rows();
    const S c = S(1) / std::sqrt(static_cast<S>(dh));
    const bool drop = dropout_rate > 0.0 && rng != nullptr;
    std::bernoulli_distribution keep(drop ? 1.0 - dropout_rate : 1.0);
    const S kept = drop ? static_cast<S>(1.0 / (1.0 - dropout_rate)) : S(1);

    std::vector<Matrix<S>> probs(static_cast<std::size_t>(heads));
    std::vector<Matrix<S>> dropped(drop ? static_cast<std::size_t>(heads) : 0);
    Matrix<S> out(tq, d);
    for (Index h = 0; h < heads; ++h) {
        Matrix<S> scores(tq, tk);
        scores.noalias() = q.value().middleCols(h * dh, dh) * k.value().middleCols(h * dh, dh).transpose();
        Matrix<S>& p = probs[static_cast<std::size_t>(h)];
        p = Matrix<S>::Zero(tq, tk);
        for (Index i = 0; i < tq; ++i) {
            const Index n = mask.allowed(i);
            const S peak = scores.row(i).head(n).maxCoeff();
            S total = 0;
            for (Index j = 0; j < n; ++j) {
                p(i, j) = std::exp((scores(i, j) - peak) * c);
                total += p(i, j);
            }
            p.row(i).head(n) /= total;
        }
        if (drop) {
            Matrix<S>& pd = dropped[static_cast<std::size_t>(h)];
            pd = p;
            for (Index i = 0; i < pd.size(); ++i)
                pd.data()[i] *= keep(*rng) ? kept : S(0);
            out.middleCols(h * dh, dh).noalias() = pd * v.value().middleCols(h * dh, dh);
        } else {
            out.middleCols(h * dh, dh).noalias() = p * v.value().middleCols(h * dh, dh);
        }
    }

    const bool grad = q.needs_grad() || k.needs_grad() || v.needs_grad();
    return detail::record(
        *q.tape, std::move(out), grad,
        [q, k, v, heads, dh, c, kept, probs = std::move(probs), dropped = std::move(dropped)](
            Tape<S>& t, const Matrix<S>& g) {
            for (Index h = 0; h < heads; ++h) {
                const auto hs = static_cast<std::size_t>(h);
                const Matrix<S>& p = probs[hs];
                const Matrix<S>& pd = dropped.empty() ? p : dropped[hs];
                const auto g_h = g.middleCols(h * dh, dh);
                if (v.needs_grad())
                    t.grad_slot(v).middleCols(h * dh, dh).noalias() += pd.transpose() * g_h;
                if (!q.needs_grad() && !k.needs_grad())
                    continue;
                Matrix<S> dp(p.rows(), p.cols());
                dp.noalias() = g_h * v.value().middleCols(h * dh, dh).transpose();
                if (!dropped.empty()) {
                    // d(pd)/d(p) is the mask scaled by 1/(1 - rate); recover it from pd / p.
                    for (Index i = 0; i < dp.size(); ++i)
                        dp.data()[i] *= pd.data()[i] != S(0) ? kept : S(0);
                }
                Matrix<S> ds = p.cwiseProduct(dp);
                const Eigen::Matrix<S, Eigen::Dynamic, 1> row_dot = ds.rowwise().sum();
                ds -= p.cwiseProduct(row_dot.replicate(1, p.cols()));
                ds *= c;
                if (q.needs_grad())
                    t.grad_slot(q).middleCols(h * dh, dh).noalias() += ds * k.value().middleCols(h * dh, dh);
                if (k.needs_grad())
                    t.grad_slot(k).middleCols(h * dh, dh).noalias() += ds.transpose() * q.value().middleCols(h * dh, dh);
            }
        });
}

/// Parameter indices of one multi-head attention block. No key bias; softmax
/// is invariant to it.
struct AttentionParams {
    std::size_t wq, bq, wk, wv, bv, wo, bo;
};

template <typename S>
AttentionParams register_attention(ParameterSet<S>& params, const std::string& prefix, Index d,
                                   std::mt19937_64& rng)
{
    AttentionParams p{};
    auto weight = [&](const char* name) { return params.add(prefix + "." + name, uniform_init<S>(d, d, rng)); };
    auto bias = [&](const char* name) { return params.add(prefix + "." + name, Matrix<S>::Zero(1, d)); };
    p.wq = weight("wq");
    p.bq = bias("bq");
    p.wk = weight("wk");
    p.wv = weight("wv");
    p.bv = bias("bv");
    p.wo = weight("wo");
    p.bo = bias("bo");
    return p;
}

/// Projected keys and values of a memory sequence; reusable across queries.
template <typename S>
struct KeyValue {
    Var<S> k;
    Var<S> v;
};

template <typename S>
KeyValue<S> project_kv(Tape<S>& tape, const ParameterSet<S>& params, const AttentionParams& p, Var<S> memory)
{
    return {matmul(memory, tape.parameter(params, p.wk)),
            affine(memory, tape.parameter(params, p.wv), tape.parameter(params, p.bv))};
}

template <typename S>
Var<S> attend(Tape<S>& tape, const ParameterSet<S>& params, const AttentionParams& p, Var<S> query,
              const KeyValue<S>& kv, MaskKind kind, Index heads, double dropout_rate, std::mt19937_64* rng)
{
    Var<S> q = affine(query, tape.parameter(params, p.wq), tape.parameter(params, p.bq));
    Var<S> mixed = attention_core(q, kv.k, kv.v, kind, heads, dropout_rate, rng);
    return affine(mixed, tape.parameter(params, p.wo), tape.parameter(params, p.bo));
}

/// Full multi-head attention: project, attend per head, concatenate, project out.
template <typename S>
Var<S> multi_head_attention(Tape<S>& tape, const ParameterSet<S>& params, const AttentionParams& p,
                            Var<S> query, Var<S> memory, MaskKind kind, Index heads,
                            double dropout_rate = 0.0, std::mt19937_64* rng = nullptr)
{
    return attend(tape, params, p, query, project_kv(tape, params, p, memory), kind, heads, dropout_rate, rng);
}

struct NormParams {
    std::size_t gain, bias;
};

template <typename S>
NormParams register_norm(ParameterSet<S>& params, const std::string& prefix, Index d)
{
    return {params.add(prefix + ".gain", Matrix<S>::Ones(1, d)),
            params.add(prefix + ".bias", Matrix<S>::Zero(1, d))};
}

template <typename S>
Var<S> apply_norm(Tape<S>& tape, const ParameterSet<S>& params, const NormParams& p, Var<S> x, S eps)
{
    return layer_norm(x, tape.parameter(params, p.gain), tape.parameter(params, p.bias), eps);
}

struct MlpParams {
    std::size_t w1, b1, w2, b2;
};

template <typename S>
MlpParams register_mlp(ParameterSet<S>& params, const std::string& prefix, Index d, Index hidden,
                       std::mt19937_64& rng)
{
    MlpParams p{};
    p.w1 = params.add(prefix + ".w1", uniform_init<S>(d, hidden, rng));
    p.b1 = params.add(prefix + ".b1", Matrix<S>::Zero(1, hidden));
    p.w2 = params.add(prefix + ".w2", uniform_init<S>(hidden, d, rng));
    p.b2 = params.add(prefix + ".b2", Matrix<S>::Zero(1, d));
    return p;
}

/// Two affine maps with GELU between; dropout after the activation.
template <typename S>
Var<S> apply_mlp(Tape<S>& tape, const ParameterSet<S>& params, const MlpParams& p, Var<S> x,
                 double dropout_rate, std::mt19937_64* rng)
{
    Var<S> h = gelu(affine(x, tape.parameter(params, p.w1), tape.parameter(params, p.b1)));
    h = dropout(h, dropout_rate, rng);
    return affine(h, tape.parameter(params, p.w2), tape.parameter(params, p.b2));
}

}  // namespace neuroseq::nn
