#pragma once

#include "neuroseq/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace neuroseq::nn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_parameter;
    Index worst_coordinate = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `objective` against fourth-order central
/// differences, (8(f(x+e) - f(x-e)) - (f(x+2e) - f(x-2e))) / 12e, over every
/// trainable coordinate of `params`. The per-coordinate error is
/// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|); the report holds the maximum.
/// `objective(tape)` must return a 1x1 Var and must be deterministic.
template <typename Objective>
GradCheckReport grad_check(ParameterSet<double>& params, Objective&& objective, double eps = 1e-3)
{
    auto evaluate = [&]() {
        Tape<double> tape;
        const double value = objective(tape).value()(0, 0);
        if (!std::isfinite(value))
            throw ContractError("grad_check: objective is not finite at the probe point");
        return value;
    };

    Gradients<double> analytic(params);
    {
        Tape<double> tape(&analytic);
        Var<double> loss = objective(tape);
        if (!std::isfinite(loss.value()(0, 0)))
            throw ContractError("grad_check: objective is not finite at the base point");
        tape.backward(loss);
    }

    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.trainable)
            continue;
        for (Index j = 0; j < p.value.size(); ++j) {
            double& x = p.value.data()[j];
            const double saved = x;
            auto at = [&](double offset) {
                x = saved + offset;
                return evaluate();
            };
            const double near = at(eps) - at(-eps);
            const double far = at(2.0 * eps) - at(-2.0 * eps);
            x = saved;

            const double numeric = (8.0 * near - far) / (12.0 * eps);
            const double exact = analytic[i].data()[j];
            const double err = std::abs(exact - numeric) / std::max(1e-8, std::abs(exact) + std::abs(numeric));
            ++report.coordinates;
            if (err > report.max_rel_error || report.worst_coordinate < 0) {
                report.max_rel_error = std::max(report.max_rel_error, err);
                report.worst_parameter = p.name;
                report.worst_coordinate = j;
                report.worst_analytic = exact;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace neuroseq::nn
