#pragma once

#include "neuroseq/nn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace neuroseq::train {

/// Per-sample variance below which a vector counts as constant; its Pearson
/// correlation is then defined as 0 and contributes no gradient.
inline constexpr double kVarianceFloor = 1e-8;

/// Pearson correlation of two vectors (P >= 2). Returns 0 when either vector
/// is constant up to kVarianceFloor.
template <typename DA, typename DB>
double pearson_rho(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b)
{
    const Index n = a.size();
    if (n < 2 || b.size() != n)
        throw ContractError("pearson_rho needs two vectors of equal length >= 2");
    const auto ac = (a.template cast<double>().array() - a.template cast<double>().mean()).eval();
    const auto bc = (b.template cast<double>().array() - b.template cast<double>().mean()).eval();
    const double saa = ac.square().sum();
    const double sbb = bc.square().sum();
    if (saa / static_cast<double>(n) < kVarianceFloor || sbb / static_cast<double>(n) < kVarianceFloor)
        return 0.0;
    return std::clamp((ac * bc).sum() / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct LossValue {
    double total = 0.0;
    double mse = 0.0;   // (1/T) sum_t ||pred_t - target_t||^2
    double corr = 0.0;  // -(1/T) sum_t rho(pred_t, target_t)
};

/// L = MSE + lambda * L_corr where MSE is the time-averaged squared Euclidean
/// norm (no division by P) and L_corr is the negated time-averaged
/// cross-parcel correlation. Fills `grad` with dL/dpred when non-null.
template <typename S>
LossValue combined_loss(const Matrix<S>& pred, const Matrix<S>& target, double lambda, Matrix<S>* grad = nullptr)
{
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw ContractError("combined_loss: prediction and target shapes differ");
    const Index steps = pred.rows();
    const Index parcels = pred.cols();
    if (steps < 1 || parcels < 2)
        throw ContractError("combined_loss needs T >= 1 and P >= 2");

    const double inv_t = 1.0 / static_cast<double>(steps);
    LossValue out;
    if (grad)
        grad->resize(steps, parcels);
    for (Index t = 0; t < steps; ++t) {
        const Eigen::ArrayXd a = pred.row(t).template cast<double>().transpose().array();
        const Eigen::ArrayXd b = target.row(t).template cast<double>().transpose().array();
        const Eigen::ArrayXd diff = a - b;
        out.mse += diff.square().sum();

        const Eigen::ArrayXd ac = a - a.mean();
        const Eigen::ArrayXd bc = b - b.mean();
        const double saa = ac.square().sum();
        const double sbb = bc.square().sum();
        const bool floored = saa / static_cast<double>(parcels) < kVarianceFloor ||
                             sbb / static_cast<double>(parcels) < kVarianceFloor;
        double rho = 0.0;
        if (!floored)
            rho = (ac * bc).sum() / std::sqrt(saa * sbb);
        out.corr -= rho;

        if (grad) {
            Eigen::ArrayXd g = 2.0 * inv_t * diff;
            if (!floored && lambda != 0.0) {
                const Eigen::ArrayXd drho = bc / std::sqrt(saa * sbb) - rho * ac / saa;
                g -= lambda * inv_t * drho;
            }
            grad->row(t) = g.cast<S>().transpose();
        }
    }
    out.mse *= inv_t;
    out.corr *= inv_t;
    out.total = out.mse + lambda * out.corr;
    return out;
}

/// Tape node for combined_loss; the 1x1 result is the total loss.
template <typename S>
nn::Var<S> combined_loss(nn::Var<S> pred, const Matrix<S>& target, double lambda, LossValue* terms = nullptr)
{
    Matrix<S> grad;
    const LossValue value = combined_loss<S>(pred.value(), target, lambda, &grad);
    if (terms)
        *terms = value;
    Matrix<S> out(1, 1);
    out(0, 0) = static_cast<S>(value.total);
    return nn::detail::record(*pred.tape, std::move(out), pred.needs_grad(),
                              [pred, grad = std::move(grad)](nn::Tape<S>& t, const Matrix<S>& g) {
                                  t.grad_slot(pred) += g(0, 0) * grad;
                              });
}

}  // namespace neuroseq::train
