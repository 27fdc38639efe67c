#pragma once

#include "neuroseq/core/error.hpp"
#include "neuroseq/core/types.hpp"

#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace neuroseq::nn {

template <typename Scalar>
struct Parameter {
    std::string name;
    Matrix<Scalar> value;
    bool trainable = true;
};

/// Named, ordered parameter storage. Insertion order is the canonical order used
/// by checkpoints and optimizers.
template <typename Scalar>
class ParameterSet {
public:
    std::size_t add(std::string name, Matrix<Scalar> value, bool trainable = true)
    {
        if (by_name_.count(name))
            throw ConflictError("parameter '" + name + "' already exists");
        by_name_.emplace(name, params_.size());
        params_.push_back({std::move(name), std::move(value), trainable});
        return params_.size() - 1;
    }

    bool contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }

    std::size_t index(std::string_view name) const
    {
        auto it = by_name_.find(name);
        if (it == by_name_.end())
            throw LookupError("no parameter named '" + std::string(name) + "'");
        return it->second;
    }

    Parameter<Scalar>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<Scalar>& operator[](std::size_t i) const { return params_[i]; }
    Parameter<Scalar>& at(std::string_view name) { return params_[index(name)]; }
    const Parameter<Scalar>& at(std::string_view name) const { return params_[index(name)]; }

    std::size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void set_all_trainable(bool trainable)
    {
        for (auto& p : params_)
            p.trainable = trainable;
    }

    Index scalar_count(bool trainable_only = false) const
    {
        Index n = 0;
        for (const auto& p : params_)
            if (!trainable_only || p.trainable)
                n += p.value.size();
        return n;
    }

private:
    std::vector<Parameter<Scalar>> params_;
    std::map<std::string, std::size_t, std::less<>> by_name_;
};

/// Gradient accumulators aligned index-for-index with a ParameterSet.
template <typename Scalar>
class Gradients {
public:
    explicit Gradients(const ParameterSet<Scalar>& params)
    {
        grads_.reserve(params.size());
        for (const auto& p : params)
            grads_.push_back(Matrix<Scalar>::Zero(p.value.rows(), p.value.cols()));
    }

    Matrix<Scalar>& operator[](std::size_t i) { return grads_[i]; }
    const Matrix<Scalar>& operator[](std::size_t i) const { return grads_[i]; }
    std::size_t size() const { return grads_.size(); }

    void zero()
    {
        for (auto& g : grads_)
            g.setZero();
    }

    void scale(Scalar s)
    {
        for (auto& g : grads_)
            g *= s;
    }

private:
    std::vector<Matrix<Scalar>> grads_;
};

/// Zero-mean uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
template <typename Scalar>
Matrix<Scalar> uniform_init(Index fan_in, Index fan_out, std::mt19937_64& rng)
{
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix<Scalar> w(fan_in, fan_out);
    for (Index r = 0; r < fan_in; ++r)
        for (Index c = 0; c < fan_out; ++c)
            w(r, c) = static_cast<Scalar>(dist(rng));
    return w;
}

}  // namespace neuroseq::nn
