#pragma once

#include "neuroseq/core/error.hpp"
#include "neuroseq/core/types.hpp"
#include "neuroseq/nn/parameters.hpp"

#include <functional>
#include <unordered_map>
#include <vector>

namespace neuroseq::nn {

template <typename Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
template <typename Scalar>
struct Var {
    Tape<Scalar>* tape = nullptr;
    std::size_t id = 0;

    const Matrix<Scalar>& value() const { return tape->value(*this); }
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    bool needs_grad() const { return tape->needs_grad(*this); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order and replayed
/// backwards. A tape built without a gradient sink records values only.
template <typename Scalar>
class Tape {
public:
    using Mat = Matrix<Scalar>;
    using Backward = std::function<void(Tape&)>;

    explicit Tape(Gradients<Scalar>* sink = nullptr) : sink_(sink) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return sink_ != nullptr; }

    Var<Scalar> constant(Mat value)
    {
        nodes_.push_back(Node{std::move(value), nullptr, Mat(), false, {}});
        return {this, nodes_.size() - 1};
    }

    /// Non-owning constant; `value` must outlive the tape.
    Var<Scalar> view(const Mat& value)
    {
        nodes_.push_back(Node{Mat(), &value, Mat(), false, {}});
        return {this, nodes_.size() - 1};
    }

    /// Binds a parameter by reference. Repeated binds of one parameter share a node.
    Var<Scalar> parameter(const ParameterSet<Scalar>& params, std::size_t index)
    {
        if (auto it = bound_.find(index); it != bound_.end())
            return {this, it->second};
        const auto& p = params[index];
        const bool grad = recording() && p.trainable;
        Backward fn;
        if (grad) {
            const std::size_t id = nodes_.size();
            fn = [id, index](Tape& t) { (*t.sink_)[index] += t.nodes_[id].grad; };
        }
        nodes_.push_back(Node{Mat(), &p.value, Mat(), grad, std::move(fn)});
        bound_.emplace(index, nodes_.size() - 1);
        return {this, nodes_.size() - 1};
    }

    /// Appends a computed node; `fn` is dropped when no input needs a gradient.
    Var<Scalar> push(Mat value, bool needs_grad, Backward fn)
    {
        needs_grad = needs_grad && recording();
        nodes_.push_back(Node{std::move(value), nullptr, Mat(), needs_grad,
                              needs_grad ? std::move(fn) : Backward{}});
        return {this, nodes_.size() - 1};
    }

    const Mat& value(Var<Scalar> v) const
    {
        const Node& n = nodes_[v.id];
        return n.ref ? *n.ref : n.value;
    }

    bool needs_grad(Var<Scalar> v) const { return nodes_[v.id].needs_grad; }

    const Mat& grad(Var<Scalar> v) const { return nodes_[v.id].grad; }

    /// Gradient slot of `v`, zero-initialized on first use.
    Mat& grad_slot(Var<Scalar> v)
    {
        Node& n = nodes_[v.id];
        if (n.grad.size() == 0) {
            const Mat& val = n.ref ? *n.ref : n.value;
            n.grad = Mat::Zero(val.rows(), val.cols());
        }
        return n.grad;
    }

    /// Seeds d(output)/d(output) = 1 for a 1x1 node and runs the tape backwards.
    void backward(Var<Scalar> output)
    {
        if (!recording())
            throw ContractError("backward() on a tape without a gradient sink");
        if (value(output).size() != 1)
            throw ContractError("backward() needs a scalar output");
        grad_slot(output).setConstant(Scalar(1));
        for (std::size_t i = output.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.backward && n.grad.size() != 0)
                n.backward(*this);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        const Mat* ref;
        Mat grad;
        bool needs_grad;
        Backward backward;
    };

    Gradients<Scalar>* sink_;
    std::vector<Node> nodes_;
    std::unordered_map<std::size_t, std::size_t> bound_;
};

}  // namespace neuroseq::nn
