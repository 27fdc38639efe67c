#pragma once

#include "neuroseq/nn/tape.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace neuroseq::nn {

namespace detail {

template <typename S, typename Fn>
Var<S> record(Tape<S>& tape, Matrix<S> value, bool needs_grad, Fn&& fn)
{
    const Var<S> out{&tape, tape.size()};
    return tape.push(std::move(value), needs_grad,
                     [out, fn = std::forward<Fn>(fn)](Tape<S>& t) { fn(t, t.grad(out)); });
}

inline void require(bool ok, const std::string& what)
{
    if (!ok)
        throw ContractError(what);
}

template <typename S>
std::string shape(Var<S> v)
{
    return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b)
{
    detail::require(a.cols() == b.rows(), "matmul: " + detail::shape(a) + " * " + detail::shape(b));
    Matrix<S> out(a.rows(), b.cols());
    out.noalias() = a.value() * b.value();
    return detail::record(*a.tape, std::move(out), a.needs_grad() || b.needs_grad(),
                          [a, b](Tape<S>& t, const Matrix<S>& g) {
                              if (a.needs_grad())
                                  t.grad_slot(a).noalias() += g * b.value().transpose();
                              if (b.needs_grad())
                                  t.grad_slot(b).noalias() += a.value().transpose() * g;
                          });
}

/// x * w + b with b broadcast over rows.
template <typename S>
Var<S> affine(Var<S> x, Var<S> w, Var<S> b)
{
    detail::require(x.cols() == w.rows() && b.rows() == 1 && b.cols() == w.cols(),
                    "affine: " + detail::shape(x) + " * " + detail::shape(w) + " + " + detail::shape(b));
    Matrix<S> out(x.rows(), w.cols());
    out.noalias() = x.value() * w.value();
    out.rowwise() += b.value().row(0);
    return detail::record(*x.tape, std::move(out), x.needs_grad() || w.needs_grad() || b.needs_grad(),
                          [x, w, b](Tape<S>& t, const Matrix<S>& g) {
                              if (x.needs_grad())
                                  t.grad_slot(x).noalias() += g * w.value().transpose();
                              if (w.needs_grad())
                                  t.grad_slot(w).noalias() += x.value().transpose() * g;
                              if (b.needs_grad())
                                  t.grad_slot(b).row(0) += g.colwise().sum();
                          });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b)
{
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                    "add: " + detail::shape(a) + " + " + detail::shape(b));
    Matrix<S> out = a.value() + b.value();
    return detail::record(*a.tape, std::move(out), a.needs_grad() || b.needs_grad(),
                          [a, b](Tape<S>& t, const Matrix<S>& g) {
                              if (a.needs_grad())
                                  t.grad_slot(a) += g;
                              if (b.needs_grad())
                                  t.grad_slot(b) += g;
                          });
}

/// Adds a 1 x d row to every row of x.
template <typename S>
Var<S> add_row(Var<S> x, Var<S> row)
{
    detail::require(row.rows() == 1 && row.cols() == x.cols(),
                    "add_row: " + detail::shape(x) + " + " + detail::shape(row));
    Matrix<S> out = x.value();
    out.rowwise() += row.value().row(0);
    return detail::record(*x.tape, std::move(out), x.needs_grad() || row.needs_grad(),
                          [x, row](Tape<S>& t, const Matrix<S>& g) {
                              if (x.needs_grad())
                                  t.grad_slot(x) += g;
                              if (row.needs_grad())
                                  t.grad_slot(row).row(0) += g.colwise().sum();
                          });
}

/// x[t] + table[offset + t]: the learned additive positional encoding.
template <typename S>
Var<S> add_rel_pos(Var<S> x, Var<S> table, Index offset = 0)
{
    if (offset < 0 || offset + x.rows() > table.rows())
        throw ConfigError("positional table holds " + std::to_string(table.rows()) +
                          " positions; need rows [" + std::to_string(offset) + ", " +
                          std::to_string(offset + x.rows()) + ")");
    detail::require(table.cols() == x.cols(), "add_rel_pos: width mismatch");
    const Index n = x.rows();
    Matrix<S> out = x.value() + table.value().middleRows(offset, n);
    return detail::record(*x.tape, std::move(out), x.needs_grad() || table.needs_grad(),
                          [x, table, offset, n](Tape<S>& t, const Matrix<S>& g) {
                              if (x.needs_grad())
                                  t.grad_slot(x) += g;
                              if (table.needs_grad())
                                  t.grad_slot(table).middleRows(offset, n) += g;
                          });
}

template <typename S>
Var<S> scale(Var<S> x, S factor)
{
    Matrix<S> out = x.value() * factor;
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x, factor](Tape<S>& t, const Matrix<S>& g) { t.grad_slot(x) += g * factor; });
}

template <typename S>
Var<S> slice_rows(Var<S> x, Index start, Index count)
{
    detail::require(start >= 0 && count >= 0 && start + count <= x.rows(), "slice_rows: out of range");
    Matrix<S> out = x.value().middleRows(start, count);
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x, start, count](Tape<S>& t, const Matrix<S>& g) {
                              t.grad_slot(x).middleRows(start, count) += g;
                          });
}

template <typename S>
Var<S> concat_rows(const std::vector<Var<S>>& parts)
{
    detail::require(!parts.empty(), "concat_rows: nothing to concatenate");
    Index rows = 0;
    bool grad = false;
    for (const auto& p : parts) {
        detail::require(p.cols() == parts.front().cols(), "concat_rows: width mismatch");
        rows += p.rows();
        grad = grad || p.needs_grad();
    }
    Matrix<S> out(rows, parts.front().cols());
    Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return detail::record(*parts.front().tape, std::move(out), grad,
                          [parts](Tape<S>& t, const Matrix<S>& g) {
                              Index r = 0;
                              for (const auto& p : parts) {
                                  if (p.needs_grad())
                                      t.grad_slot(p) += g.middleRows(r, p.rows());
                                  r += p.rows();
                              }
                          });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts)
{
    detail::require(!parts.empty(), "concat_cols: nothing to concatenate");
    Index cols = 0;
    bool grad = false;
    for (const auto& p : parts) {
        detail::require(p.rows() == parts.front().rows(), "concat_cols: row count mismatch");
        cols += p.cols();
        grad = grad || p.needs_grad();
    }
    Matrix<S> out(parts.front().rows(), cols);
    Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return detail::record(*parts.front().tape, std::move(out), grad,
                          [parts](Tape<S>& t, const Matrix<S>& g) {
                              Index c = 0;
                              for (const auto& p : parts) {
                                  if (p.needs_grad())
                                      t.grad_slot(p) += g.middleCols(c, p.cols());
                                  c += p.cols();
                              }
                          });
}

/// Repeats a 1 x d row `count` times.
template <typename S>
Var<S> repeat_rows(Var<S> row, Index count)
{
    detail::require(row.rows() == 1, "repeat_rows: expects a single row");
    Matrix<S> out = row.value().replicate(count, 1);
    return detail::record(*row.tape, std::move(out), row.needs_grad(),
                          [row](Tape<S>& t, const Matrix<S>& g) {
                              t.grad_slot(row).row(0) += g.colwise().sum();
                          });
}

/// Exact GELU: x * Phi(x).
template <typename S>
Var<S> gelu(Var<S> x)
{
    const Matrix<S>& xv = x.value();
    Matrix<S> out(xv.rows(), xv.cols());
    const S inv_sqrt2 = S(1) / std::numbers::sqrt2_v<S>;
    for (Index i = 0; i < xv.size(); ++i) {
        const S v = xv.data()[i];
        out.data()[i] = S(0.5) * v * (S(1) + std::erf(v * inv_sqrt2));
    }
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x, inv_sqrt2](Tape<S>& t, const Matrix<S>& g) {
                              const Matrix<S>& xv = x.value();
                              Matrix<S>& gx = t.grad_slot(x);
                              const S inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<S>;
                              for (Index i = 0; i < xv.size(); ++i) {
                                  const S v = xv.data()[i];
                                  const S cdf = S(0.5) * (S(1) + std::erf(v * inv_sqrt2));
                                  const S pdf = inv_sqrt_2pi * std::exp(S(-0.5) * v * v);
                                  gx.data()[i] += g.data()[i] * (cdf + v * pdf);
                              }
                          });
}

/// Inverted dropout. Identity when `rate` is zero or no generator is supplied.
template <typename S>
Var<S> dropout(Var<S> x, double rate, std::mt19937_64* rng)
{
    if (rate <= 0.0 || rng == nullptr)
        return x;
    detail::require(rate < 1.0, "dropout rate must be below 1");
    std::bernoulli_distribution keep(1.0 - rate);
    const S kept = static_cast<S>(1.0 / (1.0 - rate));
    Matrix<S> mask(x.rows(), x.cols());
    for (Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = keep(*rng) ? kept : S(0);
    Matrix<S> out = x.value().cwiseProduct(mask);
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x, mask = std::move(mask)](Tape<S>& t, const Matrix<S>& g) {
                              t.grad_slot(x) += g.cwiseProduct(mask);
                          });
}

/// Row-wise (x - mean) / sqrt(var + eps) * gain + bias, biased variance.
template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps)
{
    detail::require(eps > 0, "layer_norm: eps must be positive");
    detail::require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 &&
                        bias.cols() == x.cols(),
                    "layer_norm: gain/bias must be 1x" + std::to_string(x.cols()));
    const Matrix<S>& xv = x.value();
    const Index n = xv.rows();
    const Index d = xv.cols();
    Matrix<S> xhat(n, d);
    Eigen::Matrix<S, Eigen::Dynamic, 1> inv_std(n);
    for (Index r = 0; r < n; ++r) {
        const S mean = xv.row(r).mean();
        const S var = (xv.row(r).array() - mean).square().mean();
        inv_std(r) = S(1) / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mean) * inv_std(r);
    }
    Matrix<S> out = xhat.array().rowwise() * gain.value().row(0).array();
    out.rowwise() += bias.value().row(0);
    const bool grad = x.needs_grad() || gain.needs_grad() || bias.needs_grad();
    return detail::record(
        *x.tape, std::move(out), grad,
        [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<S>& t,
                                                                             const Matrix<S>& g) {
            if (gain.needs_grad())
                t.grad_slot(gain).row(0) += g.cwiseProduct(xhat).colwise().sum();
            if (bias.needs_grad())
                t.grad_slot(bias).row(0) += g.colwise().sum();
            if (x.needs_grad()) {
                Matrix<S>& gx = t.grad_slot(x);
                const Matrix<S> gxhat = g.array().rowwise() * gain.value().row(0).array();
                for (Index r = 0; r < gxhat.rows(); ++r) {
                    const S m1 = gxhat.row(r).mean();
                    const S m2 = gxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                    gx.row(r).array() +=
                        inv_std(r) * (gxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                }
            }
        });
}

/// Sum of all entries (1x1).
template <typename S>
Var<S> sum(Var<S> x)
{
    Matrix<S> out(1, 1);
    out(0, 0) = x.value().sum();
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x](Tape<S>& t, const Matrix<S>& g) { t.grad_slot(x).array() += g(0, 0); });
}

/// Sum of squared entries (1x1).
template <typename S>
Var<S> sum_squares(Var<S> x)
{
    Matrix<S> out(1, 1);
    out(0, 0) = x.value().squaredNorm();
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x](Tape<S>& t, const Matrix<S>& g) {
                              t.grad_slot(x) += (S(2) * g(0, 0)) * x.value();
                          });
}

/// Elementwise product with a constant weight matrix, summed (1x1). Handy for
/// turning a matrix-valued op into a scalar test objective.
template <typename S>
Var<S> weighted_sum(Var<S> x, const Matrix<S>& weights)
{
    detail::require(weights.rows() == x.rows() && weights.cols() == x.cols(), "weighted_sum: shape");
    Matrix<S> out(1, 1);
    out(0, 0) = x.value().cwiseProduct(weights).sum();
    return detail::record(*x.tape, std::move(out), x.needs_grad(),
                          [x, weights](Tape<S>& t, const Matrix<S>& g) {
                              t.grad_slot(x) += g(0, 0) * weights;
                          });
}

}  // namespace neuroseq::nn
