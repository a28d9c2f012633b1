#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfbench/forecaster.hpp"
#include "cfbench/pipeline.hpp"
#include "cfbench/rng.hpp"

namespace cfbench {

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 64;
    std::size_t epochs = 5;
    std::uint64_t shuffle_seed = 0;

    void validate() const {
        if (lr <= 0.0) throw std::invalid_argument("lr must be > 0");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("betas must be in [0, 1)");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    }
};

struct AdamState {
    ModelParams m, v;
    std::uint64_t t = 0;

    static AdamState zeros(const ModelConfig& cfg) {
        return {ModelParams::zeros(cfg), ModelParams::zeros(cfg), 0};
    }
};

// One Adam update with decoupled weight decay:
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
inline void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
                      const TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    std::vector<std::vector<double>*> p_t, m_t, v_t;
    std::vector<const std::vector<double>*> g_t;
    params.for_each_tensor([&](const std::string&, std::vector<double>& t) { p_t.push_back(&t); });
    grads.for_each_tensor([&](const std::string&, const std::vector<double>& t) { g_t.push_back(&t); });
    state.m.for_each_tensor([&](const std::string&, std::vector<double>& t) { m_t.push_back(&t); });
    state.v.for_each_tensor([&](const std::string&, std::vector<double>& t) { v_t.push_back(&t); });

    for (std::size_t k = 0; k < p_t.size(); ++k) {
        auto& p = *p_t[k];
        const auto& g = *g_t[k];
        auto& m = *m_t[k];
        auto& v = *v_t[k];
        if (g.size() != p.size())
            throw std::invalid_argument("adam_step: gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw std::runtime_error("adam_step: non-finite gradient");
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon)
                  + cfg.lr * cfg.weight_decay * p[i];
        }
    }
}

// Epoch/batch loop. Each epoch reshuffles with SplitMix64 seeded by
// shuffle_seed ^ epoch_index and keeps the last partial batch.
// Returns per-epoch mean training loss.
inline std::vector<double> train(const ModelConfig& mcfg, ModelParams& params,
                                 const WindowSet& windows, const TrainConfig& cfg,
                                 AdamState* external_state = nullptr) {
    cfg.validate();
    if (windows.count() == 0)
        throw std::invalid_argument("train: empty window set");

    AdamState local_state = AdamState::zeros(mcfg);
    AdamState& state = external_state ? *external_state : local_state;

    std::vector<std::size_t> order(windows.count());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<double> epoch_losses;
    epoch_losses.reserve(cfg.epochs);
    Gradients grads = ModelParams::zeros(mcfg);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        SplitMix64 rng(cfg.shuffle_seed ^ static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);

        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t batch = std::min(cfg.batch_size, order.size() - start);
            grads.for_each_tensor([](const std::string&, std::vector<double>& t) {
                std::fill(t.begin(), t.end(), 0.0);
            });
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
                const std::size_t w = order[start + b];
                batch_loss += backward_accumulate(mcfg, params, windows.context(w),
                                                  windows.target(w), grads);
            }
            const double inv = 1.0 / static_cast<double>(batch);
            grads.for_each_tensor([inv](const std::string&, std::vector<double>& t) {
                for (double& v : t) v *= inv;
            });
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss at epoch "
                                         + std::to_string(epoch));
            adam_step(params, grads, state, cfg);
            loss_sum += batch_loss;
            ++n_batches;
        }
        epoch_losses.push_back(loss_sum / static_cast<double>(n_batches));
    }
    if (!params.all_finite())
        throw std::runtime_error("train: non-finite parameters after training");
    return epoch_losses;
}

} // namespace cfbench
