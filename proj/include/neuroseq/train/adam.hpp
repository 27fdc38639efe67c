#pragma once

#include "neuroseq/model/checkpoint.hpp"
#include "neuroseq/nn/parameters.hpp"

#include <cmath>

namespace neuroseq::train {

struct AdamSettings {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Adaptive moment estimation over the trainable tensors of a ParameterSet.
/// Frozen tensors are never read or written.
template <typename S>
class Adam {
public:
    Adam(const nn::ParameterSet<S>& params, AdamSettings settings) : settings_(settings)
    {
        for (const auto& p : params) {
            m_.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
            v_.push_back(Matrix<S>::Zero(p.value.rows(), p.value.cols()));
        }
    }

    void step(nn::ParameterSet<S>& params, const nn::Gradients<S>& grads)
    {
        if (params.size() != m_.size() || grads.size() != m_.size())
            throw ContractError("Adam: parameter set changed size since construction");
        ++steps_;
        const double b1 = settings_.beta1;
        const double b2 = settings_.beta2;
        const S lr_t = static_cast<S>(settings_.learning_rate * std::sqrt(1.0 - std::pow(b2, steps_)) /
                                      (1.0 - std::pow(b1, steps_)));
        const S eps_t = static_cast<S>(settings_.eps * std::sqrt(1.0 - std::pow(b2, steps_)));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            if (!p.trainable)
                continue;
            const Matrix<S>& g = grads[i];
            m_[i] = static_cast<S>(b1) * m_[i] + static_cast<S>(1 - b1) * g;
            v_[i] = static_cast<S>(b2) * v_[i] + static_cast<S>(1 - b2) * g.cwiseAbs2();
            if (settings_.weight_decay > 0)
                p.value *= static_cast<S>(1 - settings_.learning_rate * settings_.weight_decay);
            p.value.array() -= lr_t * m_[i].array() / (v_[i].array().sqrt() + eps_t);
        }
    }

    long steps() const { return steps_; }

    /// Stores moments as "adam.m.<name>" / "adam.v.<name>" state tensors.
    void save(model::ModelCheckpoint& ckpt, const nn::ParameterSet<S>& params) const
    {
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].trainable)
                continue;
            ckpt.set_state("adam.m." + params[i].name, m_[i].template cast<double>());
            ckpt.set_state("adam.v." + params[i].name, v_[i].template cast<double>());
        }
        ckpt.metadata["adam_step"] = steps_;
    }

    void load(const model::ModelCheckpoint& ckpt, const nn::ParameterSet<S>& params)
    {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto* m = ckpt.find_state("adam.m." + params[i].name);
            const auto* v = ckpt.find_state("adam.v." + params[i].name);
            if (m && v) {
                m_[i] = m->value.template cast<S>();
                v_[i] = v->value.template cast<S>();
            }
        }
        steps_ = ckpt.metadata.value("adam_step", 0L);
    }

private:
    AdamSettings settings_;
    std::vector<Matrix<S>> m_;
    std::vector<Matrix<S>> v_;
    long steps_ = 0;
};

}  // namespace neuroseq::train
