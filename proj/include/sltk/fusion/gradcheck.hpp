#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sltk/error.hpp"
#include "sltk/fusion/model.hpp"

namespace sltk::fusion {

struct GradCheckOptions {
    double eps = 1e-4;
    // Entries checked per parameter block, evenly spaced; 0 checks all.
    std::size_t max_per_block = 0;
    // Denominator floor: entries with |grad| below it are compared absolutely.
    double floor = 1e-6;
    // 2: (f(x+h) - f(x-h)) / 2h. 4: five-point stencil, error O(h^4).
    int order = 2;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    Eigen::Index worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares backprop gradients of the mean batch loss with central finite
/// differences for every parameter block. Double precision only; refuses to
/// run with dropout since the loss must be a deterministic function.
inline GradCheckResult grad_check(FusionModel<double> &model, const std::vector<Example> &batch,
                                  const GradCheckOptions &opt = {}) {
    if (model.config().dropout > 0.0)
        throw ConfigError("grad_check requires dropout = 0");
    if (opt.order != 2 && opt.order != 4)
        throw ConfigError("grad_check order must be 2 or 4");
    auto &params = model.params();
    params.zero_grad();
    model.forward(batch, true);
    for (const auto &t : params)
        if (!t.grad.allFinite())
            throw InvariantError("non-finite gradient in parameter " + t.name);
    std::vector<Matrix<double>> analytic;
    for (const auto &t : params)
        analytic.push_back(t.grad);

    auto loss = [&] { return model.forward(batch, false).loss; };
    GradCheckResult r;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor<double> &t = params[p];
        const Eigen::Index n = t.value.size();
        const Eigen::Index stride =
            opt.max_per_block == 0 ? 1 : std::max<Eigen::Index>(1, n / static_cast<Eigen::Index>(opt.max_per_block));
        for (Eigen::Index i = 0; i < n; i += stride) {
            double &x = t.value.data()[i];
            const double saved = x;
            auto at = [&](double h) {
                x = saved + h;
                const double l = loss();
                x = saved;
                return l;
            };
            const double h = opt.eps;
            const double num = opt.order == 2
                                   ? (at(h) - at(-h)) / (2.0 * h)
                                   : (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
            const double ana = analytic[p].data()[i];
            const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), opt.floor});
            ++r.checked;
            if (rel > r.max_rel_error || r.worst_param.empty()) {
                r.max_rel_error = std::max(rel, r.max_rel_error);
                if (rel >= r.max_rel_error) {
                    r.worst_param = t.name;
                    r.worst_index = i;
                    r.worst_analytic = ana;
                    r.worst_numeric = num;
                }
            }
        }
    }
    params.zero_grad();
    return r;
}

} // namespace sltk::fusion
