#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "sltk/error.hpp"
#include "sltk/fusion/model.hpp"
#include "sltk/rng.hpp"

namespace sltk::fusion {

/// Linear warmup from 0 to lr_peak over warmup_iters, then linear decay to 0
/// at total_iters.
inline double learning_rate(const FusionConfig &cfg, int iter) {
    if (iter <= 0)
        return cfg.warmup_iters == 0 ? cfg.lr_peak : 0.0;
    if (iter >= cfg.total_iters)
        return 0.0;
    if (iter <= cfg.warmup_iters)
        return cfg.lr_peak * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
    return cfg.lr_peak * static_cast<double>(cfg.total_iters - iter) /
           static_cast<double>(cfg.total_iters - cfg.warmup_iters);
}

template <class S>
class Adam {
  public:
    explicit Adam(const ParamStore<S> &params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto &t : params) {
            m_.push_back(Matrix<S>::Zero(t.value.rows(), t.value.cols()));
            v_.push_back(Matrix<S>::Zero(t.value.rows(), t.value.cols()));
        }
    }

    void step(ParamStore<S> &params, double lr) {
        ++t_;
        const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
        const S c1 = static_cast<S>(1.0 - std::pow(beta1_, t_)), c2 = static_cast<S>(1.0 - std::pow(beta2_, t_));
        const S step = static_cast<S>(lr), eps = static_cast<S>(eps_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor<S> &p = params[i];
            m_[i] = b1 * m_[i] + (S(1) - b1) * p.grad;
            v_[i] = b2 * v_[i] + (S(1) - b2) * p.grad.cwiseAbs2();
            p.value.array() -= step * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
        }
    }

    long steps() const { return t_; }

  private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix<S>> m_, v_;
};

template <class S>
void check_finite_grads(const ParamStore<S> &params) {
    for (const auto &t : params)
        if (!t.grad.allFinite())
            throw InvariantError("non-finite gradient in parameter " + t.name);
}

template <class S>
void check_finite_params(const ParamStore<S> &params) {
    for (const auto &t : params)
        if (!t.value.allFinite())
            throw InvariantError("non-finite value in parameter " + t.name);
}

struct TrainResult {
    std::vector<double> loss_curve; // one entry per iteration
};

/// Mini-batch training over epoch-wise seeded shuffles. Dropout masks and
/// batch order both come from one generator seeded by cfg.seed, so a run is
/// reproducible on a given machine.
template <class S>
TrainResult train(FusionModel<S> &model, const std::vector<Example> &data,
                  const std::function<void(int, double, double)> &on_iter = {}) {
    const FusionConfig &cfg = model.config();
    if (data.empty())
        throw InputError("train: no training examples");
    Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    Adam<S> opt(model.params());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    TrainResult result;
    const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), data.size());
    for (int iter = 1; iter <= cfg.total_iters; ++iter) {
        std::vector<Example> batch;
        while (batch.size() < bs) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(data[order[cursor++]]);
        }
        model.params().zero_grad();
        auto res = model.forward(batch, true, cfg.dropout > 0.0 ? &rng : nullptr);
        check_finite_grads(model.params());
        const double lr = learning_rate(cfg, iter);
        opt.step(model.params(), lr);
        check_finite_params(model.params());
        result.loss_curve.push_back(res.loss);
        if (on_iter)
            on_iter(iter, res.loss, lr);
    }
    return result;
}

} // namespace sltk::fusion
