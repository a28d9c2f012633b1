#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfbench/forecaster.hpp"
#include "cfbench/optim.hpp"
#include "cfbench/pipeline.hpp"
#include "cfbench/synthgen.hpp"

namespace cfbench {

// A dataset after split, train-region standardization, and windowing.
struct PreparedDataset {
    std::string name;
    TimeSeries raw;
    SplitIndices split;
    Scaler scaler;
    std::vector<double> values_std;
    WindowSet train_windows;
    WindowSet val_windows;
    WindowSet test_windows;
};

inline PreparedDataset prepare_dataset(std::string name, TimeSeries series,
                                       const WindowConfig& wcfg) {
    series.validate();
    PreparedDataset ds;
    ds.name = std::move(name);
    ds.split = split_series(series, 0.7, 0.15, wcfg);
    ds.scaler = fit_scaler(series, 0, ds.split.train_end);
    ds.values_std = transform(ds.scaler, series.values);
    ds.train_windows = make_train_windows(ds.values_std, ds.split, wcfg);
    ds.val_windows = make_eval_windows(ds.values_std, ds.split, EvalRegion::Val, wcfg);
    ds.test_windows = make_eval_windows(ds.values_std, ds.split, EvalRegion::Test, wcfg);
    ds.raw = std::move(series);
    return ds;
}

// MAE over all test windows and horizon points, in the dataset's own
// standardized units.
inline double evaluate(const ModelConfig& cfg, const ModelParams& params,
                       const PreparedDataset& ds) {
    const WindowSet& ws = ds.test_windows;
    if (ws.count() == 0)
        throw std::invalid_argument("evaluate: no eval windows");
    double acc = 0.0;
    for (std::size_t w = 0; w < ws.count(); ++w) {
        const auto pred = forward(cfg, params, ws.context(w));
        const double* target = ws.target(w);
        for (std::size_t j = 0; j < ws.horizon; ++j)
            acc += std::abs(pred[j] - target[j]);
    }
    return acc / static_cast<double>(ws.count() * ws.horizon);
}

// MAE_after - MAE_before; positive means forgetting.
inline double compute_bwt(double mae_before, double mae_after) {
    if (!std::isfinite(mae_before) || !std::isfinite(mae_after))
        throw std::invalid_argument("compute_bwt: non-finite MAE");
    return mae_after - mae_before;
}

struct StageResult {
    int stage_id = 0;
    std::string trained_on;
    std::map<std::string, double> mae_by_dataset;
    std::string checkpoint_path;
    TrainConfig train_config;
    std::vector<double> epoch_losses;
    std::map<std::string, double> val_mae_by_dataset;
};

struct ProtocolReport {
    std::string dataset_a, dataset_b;
    StageResult stage1, stage2;
    double bwt_a = 0.0;
};

namespace detail {
inline double evaluate_val(const ModelConfig& cfg, const ModelParams& params,
                           const PreparedDataset& ds) {
    const WindowSet& ws = ds.val_windows;
    if (ws.count() == 0) return std::nan("");
    double acc = 0.0;
    for (std::size_t w = 0; w < ws.count(); ++w) {
        const auto pred = forward(cfg, params, ws.context(w));
        for (std::size_t j = 0; j < ws.horizon; ++j)
            acc += std::abs(pred[j] - ws.target(w)[j]);
    }
    return acc / static_cast<double>(ws.count() * ws.horizon);
}
} // namespace detail

// Two-stage sequential fine-tuning: train on A, evaluate on both, then
// continue from the stage-one parameters on B and evaluate again.
// Checkpoints are written after each stage when checkpoint_dir is set.
inline ProtocolReport run_protocol(const ModelConfig& mcfg,
                                   const PreparedDataset& dataset_a,
                                   const PreparedDataset& dataset_b,
                                   const TrainConfig& cfg,
                                   const std::optional<std::string>& initial_checkpoint = {},
                                   const std::optional<std::string>& checkpoint_dir = {}) {
    if (dataset_a.name == dataset_b.name)
        throw std::invalid_argument("run_protocol: datasets must differ");
    cfg.validate();

    ModelParams params = init_params(mcfg);
    if (initial_checkpoint) {
        auto [loaded, loaded_cfg] = load_checkpoint(*initial_checkpoint);
        if (loaded_cfg.latent_dim() != mcfg.latent_dim() ||
            loaded_cfg.horizon != mcfg.horizon ||
            loaded_cfg.context_len != mcfg.context_len ||
            loaded_cfg.hidden_dim != mcfg.hidden_dim ||
            loaded_cfg.n_blocks != mcfg.n_blocks)
            throw std::invalid_argument("initial checkpoint shape mismatch");
        params = std::move(loaded);
    }

    ProtocolReport report;
    report.dataset_a = dataset_a.name;
    report.dataset_b = dataset_b.name;

    report.stage1.stage_id = 1;
    report.stage1.trained_on = dataset_a.name;
    report.stage1.train_config = cfg;
    report.stage1.epoch_losses = train(mcfg, params, dataset_a.train_windows, cfg);
    report.stage1.mae_by_dataset[dataset_a.name] = evaluate(mcfg, params, dataset_a);
    report.stage1.mae_by_dataset[dataset_b.name] = evaluate(mcfg, params, dataset_b);
    report.stage1.val_mae_by_dataset[dataset_a.name] = detail::evaluate_val(mcfg, params, dataset_a);
    report.stage1.val_mae_by_dataset[dataset_b.name] = detail::evaluate_val(mcfg, params, dataset_b);
    if (checkpoint_dir) {
        report.stage1.checkpoint_path = *checkpoint_dir + "/stage1.ckpt";
        save_checkpoint(params, mcfg, report.stage1.checkpoint_path);
    }

    TrainConfig cfg2 = cfg;
    cfg2.shuffle_seed = cfg.shuffle_seed ^ 0x5354414745325F31ULL; // distinct stream for stage two
    report.stage2.stage_id = 2;
    report.stage2.trained_on = dataset_b.name;
    report.stage2.train_config = cfg2;
    report.stage2.epoch_losses = train(mcfg, params, dataset_b.train_windows, cfg2);
    report.stage2.mae_by_dataset[dataset_a.name] = evaluate(mcfg, params, dataset_a);
    report.stage2.mae_by_dataset[dataset_b.name] = evaluate(mcfg, params, dataset_b);
    report.stage2.val_mae_by_dataset[dataset_a.name] = detail::evaluate_val(mcfg, params, dataset_a);
    report.stage2.val_mae_by_dataset[dataset_b.name] = detail::evaluate_val(mcfg, params, dataset_b);
    if (checkpoint_dir) {
        report.stage2.checkpoint_path = *checkpoint_dir + "/stage2.ckpt";
        save_checkpoint(params, mcfg, report.stage2.checkpoint_path);
    }

    report.bwt_a = compute_bwt(report.stage1.mae_by_dataset.at(dataset_a.name),
                               report.stage2.mae_by_dataset.at(dataset_a.name));
    return report;
}

// Trains a fresh model on a mixed pool of random multi-sinusoids and writes
// the result as a reusable starting checkpoint.
inline void pretrain_generalist(const ModelConfig& mcfg, std::size_t pool_size,
                                const TrainConfig& cfg, const WindowConfig& wcfg,
                                std::uint64_t pool_seed, const std::string& out_path) {
    if (pool_size < 1)
        throw std::invalid_argument("pretrain_generalist: pool_size must be >= 1");
    SplitMix64 rng(pool_seed);
    WindowSet pool;
    pool.context_len = wcfg.context_len;
    pool.horizon = wcfg.horizon;
    for (std::size_t i = 0; i < pool_size; ++i) {
        const std::size_t n_components = 3 + rng.next_below(8); // 3..10
        std::vector<double> periods(n_components);
        for (auto& p : periods) p = 20.0 + rng.next_double() * (1400.0 - 20.0);
        const SignalSpec spec = sample_phases(periods, 12, rng.next());
        PreparedDataset ds = prepare_dataset("pool" + std::to_string(i),
                                             generate_series(spec, {}), wcfg);
        pool.contexts.insert(pool.contexts.end(), ds.train_windows.contexts.begin(),
                             ds.train_windows.contexts.end());
        pool.targets.insert(pool.targets.end(), ds.train_windows.targets.begin(),
                            ds.train_windows.targets.end());
        pool.target_start_indices.insert(pool.target_start_indices.end(),
                                         ds.train_windows.target_start_indices.begin(),
                                         ds.train_windows.target_start_indices.end());
    }
    ModelParams params = init_params(mcfg);
    train(mcfg, params, pool, cfg);
    save_checkpoint(params, mcfg, out_path);
}

} // namespace cfbench
