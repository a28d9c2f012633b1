#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfbench/continual.hpp"

namespace cfbench {

struct AblationGrid {
    std::vector<double> learning_rates;
    std::vector<std::size_t> epoch_counts;
    std::vector<std::pair<std::string, std::string>> pairs; // (dataset_a, dataset_b)
    TrainConfig base_config;
    std::uint64_t base_seed = 0;
    std::uint64_t data_seed = 42;

    void validate() const {
        if (learning_rates.empty() || epoch_counts.empty() || pairs.empty())
            throw std::invalid_argument("ablation grid: all lists must be non-empty");
        for (double lr : learning_rates)
            if (lr <= 0.0) throw std::invalid_argument("ablation grid: lr must be > 0");
        for (std::size_t e : epoch_counts)
            if (e < 1) throw std::invalid_argument("ablation grid: epochs must be >= 1");
    }
};

struct ResultRow {
    double lr = 0.0;
    std::size_t epochs = 0;
    std::string pair_id; // "d1->d2"
    std::string dataset;
    double stage1_mae = 0.0;
    double stage2_mae = 0.0;
    std::optional<double> bwt; // present only for the pair's dataset A
};

inline std::string pair_id(const std::string& a, const std::string& b) {
    return a + "->" + b;
}

// FNV-1a over the cell's identifying fields; xor'd into base_seed so every
// cell is independently reproducible.
inline std::uint64_t cell_seed(std::uint64_t base_seed, double lr, std::size_t epochs,
                               const std::string& pair) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
    };
    mix(&lr, sizeof(lr));
    mix(&epochs, sizeof(epochs));
    mix(pair.data(), pair.size());
    return base_seed ^ h;
}

inline std::string cell_dir_name(double lr, std::size_t epochs, const std::string& pair) {
    char lr_buf[32];
    std::snprintf(lr_buf, sizeof(lr_buf), "%g", lr);
    std::string p = pair;
    std::replace(p.begin(), p.end(), '>', '_');
    std::replace(p.begin(), p.end(), '-', '_');
    return std::string("lr") + lr_buf + "_ep" + std::to_string(epochs) + "_" + p;
}

inline nlohmann::ordered_json report_to_json(const ProtocolReport& r, double lr,
                                             std::size_t epochs, std::uint64_t seed) {
    nlohmann::ordered_json j;
    j["pair"] = pair_id(r.dataset_a, r.dataset_b);
    j["dataset_a"] = r.dataset_a;
    j["dataset_b"] = r.dataset_b;
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["stage1"] = {{"mae", {{r.dataset_a, r.stage1.mae_by_dataset.at(r.dataset_a)},
                            {r.dataset_b, r.stage1.mae_by_dataset.at(r.dataset_b)}}}};
    j["stage2"] = {{"mae", {{r.dataset_a, r.stage2.mae_by_dataset.at(r.dataset_a)},
                            {r.dataset_b, r.stage2.mae_by_dataset.at(r.dataset_b)}}}};
    j["bwt_a"] = r.bwt_a;
    return j;
}

inline std::vector<ResultRow> rows_from_report(const ProtocolReport& r, double lr,
                                               std::size_t epochs) {
    const std::string pid = pair_id(r.dataset_a, r.dataset_b);
    ResultRow row_a{lr, epochs, pid, r.dataset_a,
                    r.stage1.mae_by_dataset.at(r.dataset_a),
                    r.stage2.mae_by_dataset.at(r.dataset_a), r.bwt_a};
    ResultRow row_b{lr, epochs, pid, r.dataset_b,
                    r.stage1.mae_by_dataset.at(r.dataset_b),
                    r.stage2.mae_by_dataset.at(r.dataset_b), std::nullopt};
    return {row_a, row_b};
}

inline std::string render_markdown(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    out << "| Experiment | Dataset | Stage one | Stage two | BWT |\n";
    out << "|---|---|---|---|---|\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "| %s | %s | %.2f | %.2f | ",
                      r.pair_id.c_str(), r.dataset.c_str(), r.stage1_mae, r.stage2_mae);
        out << buf;
        if (r.bwt) {
            std::snprintf(buf, sizeof(buf), "%+.2f", *r.bwt);
            out << buf;
        } else {
            out << "--";
        }
        out << " |\n";
    }
    return out.str();
}

inline std::string render_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    out << "lr,epochs,pair,dataset,stage1_mae,stage2_mae,bwt\n";
    for (const auto& r : rows) {
        out << format_value(r.lr) << ',' << r.epochs << ',' << r.pair_id << ','
            << r.dataset << ',' << format_value(r.stage1_mae) << ','
            << format_value(r.stage2_mae) << ',';
        if (r.bwt) out << format_value(*r.bwt);
        out << '\n';
    }
    return out.str();
}

struct GridOutcome {
    std::vector<ResultRow> rows;
    std::vector<std::string> failed_cells; // "cell-id: error"
};

// Runs one protocol per distinct (lr, epochs, pair) cell. Cell failures are
// recorded and the remaining cells still run. Datasets are resolved by
// builtin name through `make_dataset`.
template <typename DatasetFactory> // PreparedDataset(const std::string& name)
GridOutcome run_grid(const AblationGrid& grid, const ModelConfig& mcfg,
                     const std::string& out_dir, DatasetFactory&& make_dataset) {
    grid.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "cells");

    std::set<std::tuple<double, std::size_t, std::string, std::string>> seen;
    GridOutcome outcome;
    for (double lr : grid.learning_rates) {
        for (std::size_t epochs : grid.epoch_counts) {
            for (const auto& [a, b] : grid.pairs) {
                if (!seen.insert({lr, epochs, a, b}).second) continue;
                const std::string pid = pair_id(a, b);
                const std::string cell = cell_dir_name(lr, epochs, pid);
                const fs::path cell_dir = fs::path(out_dir) / "cells" / cell;
                fs::create_directories(cell_dir);
                try {
                    const std::uint64_t seed = cell_seed(grid.base_seed, lr, epochs, pid);
                    TrainConfig cfg = grid.base_config;
                    cfg.lr = lr;
                    cfg.epochs = epochs;
                    cfg.shuffle_seed = seed;
                    ModelConfig cell_mcfg = mcfg;
                    cell_mcfg.init_seed = seed;

                    const PreparedDataset da = make_dataset(a);
                    const PreparedDataset db = make_dataset(b);
                    const ProtocolReport rep = run_protocol(cell_mcfg, da, db, cfg, {},
                                                            cell_dir.string());
                    std::ofstream(cell_dir / "report.json")
                        << report_to_json(rep, lr, epochs, seed).dump(2) << '\n';
                    const auto rows = rows_from_report(rep, lr, epochs);
                    outcome.rows.insert(outcome.rows.end(), rows.begin(), rows.end());
                } catch (const std::exception& e) {
                    outcome.failed_cells.push_back(cell + ": " + e.what());
                }
            }
        }
    }
    std::sort(outcome.rows.begin(), outcome.rows.end(), [](const ResultRow& x, const ResultRow& y) {
        return std::tie(x.lr, x.epochs, x.pair_id, x.dataset)
             < std::tie(y.lr, y.epochs, y.pair_id, y.dataset);
    });
    std::ofstream(fs::path(out_dir) / "results.csv") << render_csv(outcome.rows);
    std::ofstream(fs::path(out_dir) / "results.md") << render_markdown(outcome.rows);
    return outcome;
}

namespace detail {
inline std::string svg_polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                                const std::string& color) {
    std::ostringstream out;
    out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    char buf[64];
    for (std::size_t i = 0; i < xs.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", xs[i], ys[i]);
        out << buf;
    }
    out << "\"/>\n";
    return out.str();
}
} // namespace detail

// Writes <out_base>.csv (timestamp, actual, predicted over context+horizon)
// and <out_base>.svg (two polylines, standardized units). During the context
// the predicted column repeats the actual values the model conditions on.
inline void emit_forecast_plot(const ModelConfig& mcfg, const ModelParams& params,
                               const PreparedDataset& ds, std::size_t window_index,
                               const std::string& out_base) {
    const WindowSet& ws = ds.test_windows;
    if (window_index >= ws.count())
        throw std::invalid_argument("emit_forecast_plot: bad window index");
    const std::size_t target_start = ws.target_start_indices[window_index];
    const std::size_t ctx_start = target_start - ws.context_len;
    const std::size_t span = ws.context_len + ws.horizon;
    const auto pred = forward(mcfg, params, ws.context(window_index));

    std::vector<double> actual(span), predicted(span);
    for (std::size_t i = 0; i < span; ++i)
        actual[i] = ds.values_std[ctx_start + i];
    for (std::size_t i = 0; i < ws.context_len; ++i) predicted[i] = actual[i];
    for (std::size_t i = 0; i < ws.horizon; ++i) predicted[ws.context_len + i] = pred[i];

    std::ofstream csv(out_base + ".csv", std::ios::binary);
    if (!csv) throw std::runtime_error("cannot open for writing: " + out_base + ".csv");
    csv << "date,actual,predicted\n";
    for (std::size_t i = 0; i < span; ++i)
        csv << format_timestamp(ds.raw.timestamps[ctx_start + i]) << ','
            << format_value(actual[i]) << ',' << format_value(predicted[i]) << '\n';

    double lo = actual[0], hi = actual[0];
    for (std::size_t i = 0; i < span; ++i) {
        lo = std::min({lo, actual[i], predicted[i]});
        hi = std::max({hi, actual[i], predicted[i]});
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double width = 800, height = 400, margin = 40;
    auto px = [&](std::size_t i) {
        return margin + (width - 2 * margin) * static_cast<double>(i) / static_cast<double>(span - 1);
    };
    auto py = [&](double v) {
        return height - margin - (height - 2 * margin) * (v - lo) / (hi - lo);
    };
    std::vector<double> xs(span), ya(span), yp(span);
    for (std::size_t i = 0; i < span; ++i) {
        xs[i] = px(i);
        ya[i] = py(actual[i]);
        yp[i] = py(predicted[i]);
    }
    std::ofstream svg(out_base + ".svg", std::ios::binary);
    if (!svg) throw std::runtime_error("cannot open for writing: " + out_base + ".svg");
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "  <text x=\"" << width / 2 << "\" y=\"16\" text-anchor=\"middle\">"
        << ds.name << " forecast, window " << window_index << " (standardized units)</text>\n";
    svg << "  <line x1=\"" << px(ws.context_len - 1) << "\" y1=\"" << margin
        << "\" x2=\"" << px(ws.context_len - 1) << "\" y2=\"" << height - margin
        << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";
    svg << detail::svg_polyline(xs, ya, "#1f77b4");
    svg << detail::svg_polyline(xs, yp, "#d62728");
    svg << "</svg>\n";
}

} // namespace cfbench
