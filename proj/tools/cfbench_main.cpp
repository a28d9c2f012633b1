#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfbench/continual.hpp"
#include "cfbench/pipeline.hpp"
#include "cfbench/report.hpp"
#include "cfbench/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ResolvedConfig {
    cfbench::TrainConfig train;
    cfbench::ModelConfig model;
    cfbench::WindowConfig window;
};

// All experiment settings come from a JSON config; unknown keys are rejected
// so typos fail fast. Missing keys take the documented defaults.
ResolvedConfig parse_config(const json& j) {
    static const std::set<std::string> known = {
        "lr", "weight_decay", "batch_size", "epochs", "init_seed", "shuffle_seed",
        "context_len", "horizon", "patch_len", "embed_dim", "hidden_dim", "n_blocks",
        "train_stride", "eval_stride"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key))
            throw std::invalid_argument("unknown config key: " + key);

    ResolvedConfig c;
    c.train.lr = j.value("lr", c.train.lr);
    c.train.weight_decay = j.value("weight_decay", c.train.weight_decay);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.shuffle_seed = j.value("shuffle_seed", c.train.shuffle_seed);
    c.model.init_seed = j.value("init_seed", c.model.init_seed);
    c.model.context_len = j.value("context_len", c.model.context_len);
    c.model.horizon = j.value("horizon", c.model.horizon);
    c.model.patch_len = j.value("patch_len", c.model.patch_len);
    c.model.embed_dim = j.value("embed_dim", c.model.embed_dim);
    c.model.hidden_dim = j.value("hidden_dim", c.model.hidden_dim);
    c.model.n_blocks = j.value("n_blocks", c.model.n_blocks);
    c.window.context_len = c.model.context_len;
    c.window.horizon = c.model.horizon;
    c.window.train_stride = j.value("train_stride", c.window.train_stride);
    c.window.eval_stride = j.value("eval_stride", c.window.eval_stride);
    c.train.validate();
    c.model.validate();
    return c;
}

ordered_json config_to_json(const ResolvedConfig& c) {
    return ordered_json{
        {"lr", c.train.lr},
        {"weight_decay", c.train.weight_decay},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"init_seed", c.model.init_seed},
        {"shuffle_seed", c.train.shuffle_seed},
        {"context_len", c.model.context_len},
        {"horizon", c.model.horizon},
        {"patch_len", c.model.patch_len},
        {"embed_dim", c.model.embed_dim},
        {"hidden_dim", c.model.hidden_dim},
        {"n_blocks", c.model.n_blocks},
        {"train_stride", c.window.train_stride},
        {"eval_stride", c.window.eval_stride}};
}

void write_manifest(const fs::path& out_dir, const std::string& config_path,
                    const ordered_json& resolved) {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(
        now.time_since_epoch()).count();
    ordered_json manifest{
        {"config_file", config_path},
        {"resolved_config", resolved},
        {"tool_version", kToolVersion},
        {"timestamp", cfbench::format_timestamp(secs)}};
    std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot open: " + path);
    return json::parse(in);
}

int cmd_gen_data(const std::string& out, std::uint64_t seed,
                 const std::vector<std::string>& datasets) {
    std::error_code ec;
    fs::create_directories(out, ec);
    for (const auto& name : datasets) {
        const auto spec = cfbench::builtin_spec(name, seed);
        const auto series = cfbench::generate_series(spec, {});
        std::string lower = name;
        for (char& ch : lower) ch = char(std::tolower(ch));
        cfbench::write_csv(series, (fs::path(out) / (lower + ".csv")).string());
        std::cout << "wrote " << (fs::path(out) / (lower + ".csv")).string()
                  << " (" << series.size() << " rows)\n";
    }
    return kExitOk;
}

int cmd_protocol(const std::string& a_path, const std::string& b_path,
                 const std::string& config_path, const std::string& out,
                 const std::optional<std::string>& init_ckpt) {
    if (fs::weakly_canonical(a_path) == fs::weakly_canonical(b_path)) {
        std::cerr << "error: datasets must differ\n";
        return kExitUsage;
    }
    ResolvedConfig cfg;
    try {
        cfg = parse_config(config_path.empty() ? json::object() : load_json_file(config_path));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    }

    fs::create_directories(out);
    write_manifest(out, config_path, config_to_json(cfg));

    const auto name_of = [](const std::string& p) { return fs::path(p).stem().string(); };
    const auto da = cfbench::prepare_dataset(name_of(a_path), cfbench::read_csv(a_path), cfg.window);
    const auto db = cfbench::prepare_dataset(name_of(b_path), cfbench::read_csv(b_path), cfg.window);
    if (da.name == db.name) {
        std::cerr << "error: datasets must differ\n";
        return kExitUsage;
    }

    const auto report = cfbench::run_protocol(cfg.model, da, db, cfg.train, init_ckpt, out);
    std::ofstream(fs::path(out) / "report.json")
        << cfbench::report_to_json(report, cfg.train.lr, cfg.train.epochs,
                                   cfg.train.shuffle_seed).dump(2) << '\n';
    const auto rows = cfbench::rows_from_report(report, cfg.train.lr, cfg.train.epochs);
    const std::string md = cfbench::render_markdown(rows);
    std::ofstream(fs::path(out) / "results.md") << md;
    std::ofstream(fs::path(out) / "results.csv") << cfbench::render_csv(rows);
    std::cout << md;
    return kExitOk;
}

cfbench::AblationGrid parse_grid(const json& j, cfbench::ModelConfig& mcfg,
                                 cfbench::WindowConfig& wcfg) {
    static const std::set<std::string> known = {
        "learning_rates", "epoch_counts", "pairs", "base_config", "base_seed", "data_seed"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key))
            throw std::invalid_argument("unknown grid key: " + key);

    const ResolvedConfig base = parse_config(j.value("base_config", json::object()));
    mcfg = base.model;
    wcfg = base.window;

    cfbench::AblationGrid grid;
    grid.base_config = base.train;
    grid.base_seed = j.value("base_seed", std::uint64_t{0});
    grid.data_seed = j.value("data_seed", std::uint64_t{42});
    grid.learning_rates = j.at("learning_rates").get<std::vector<double>>();
    grid.epoch_counts = j.at("epoch_counts").get<std::vector<std::size_t>>();
    for (const auto& p : j.at("pairs")) {
        if (!p.is_array() || p.size() != 2)
            throw std::invalid_argument("each pair must be [dataset_a, dataset_b]");
        grid.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
    grid.validate();
    return grid;
}

int cmd_ablate(const std::string& grid_path, const std::string& out) {
    json grid_json;
    cfbench::AblationGrid grid;
    cfbench::ModelConfig mcfg;
    cfbench::WindowConfig wcfg;
    try {
        grid_json = load_json_file(grid_path);
        grid = parse_grid(grid_json, mcfg, wcfg);
    } catch (const std::exception& e) {
        std::cerr << "grid error: " << e.what() << '\n';
        return kExitUsage;
    }

    fs::create_directories(out);
    {
        ordered_json resolved = grid_json;
        resolved["resolved_base_seed"] = grid.base_seed;
        resolved["resolved_data_seed"] = grid.data_seed;
        write_manifest(out, grid_path, resolved);
    }

    const auto make_dataset = [&](const std::string& name) {
        const auto spec = cfbench::builtin_spec(name, grid.data_seed);
        return cfbench::prepare_dataset(name, cfbench::generate_series(spec, {}), wcfg);
    };
    const auto outcome = cfbench::run_grid(grid, mcfg, out, make_dataset);
    std::cout << cfbench::render_markdown(outcome.rows);
    if (!outcome.failed_cells.empty()) {
        std::cerr << outcome.failed_cells.size() << " cell(s) failed:\n";
        for (const auto& f : outcome.failed_cells) std::cerr << "  " << f << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_report(const std::string& in_dir, const std::optional<std::string>& plot_arg) {
    std::vector<fs::path> report_files;
    const fs::path cells = fs::path(in_dir) / "cells";
    if (fs::is_directory(cells))
        for (const auto& entry : fs::directory_iterator(cells))
            if (fs::is_regular_file(entry.path() / "report.json"))
                report_files.push_back(entry.path() / "report.json");
    if (fs::is_regular_file(fs::path(in_dir) / "report.json"))
        report_files.push_back(fs::path(in_dir) / "report.json");
    if (report_files.empty()) {
        std::cerr << "error: no report.json files under " << in_dir << '\n';
        return kExitUsage;
    }
    std::sort(report_files.begin(), report_files.end());

    std::vector<cfbench::ResultRow> rows;
    for (const auto& file : report_files) {
        const json j = load_json_file(file.string());
        const std::string a = j.at("dataset_a"), b = j.at("dataset_b");
        const double lr = j.at("lr");
        const std::size_t epochs = j.at("epochs");
        rows.push_back({lr, epochs, j.at("pair"), a,
                        j.at("stage1").at("mae").at(a), j.at("stage2").at("mae").at(a),
                        j.at("bwt_a").get<double>()});
        rows.push_back({lr, epochs, j.at("pair"), b,
                        j.at("stage1").at("mae").at(b), j.at("stage2").at("mae").at(b),
                        std::nullopt});
    }
    std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
        return std::tie(x.lr, x.epochs, x.pair_id, x.dataset)
             < std::tie(y.lr, y.epochs, y.pair_id, y.dataset);
    });
    const std::string md = cfbench::render_markdown(rows);
    std::ofstream(fs::path(in_dir) / "results.md") << md;
    std::ofstream(fs::path(in_dir) / "results.csv") << cfbench::render_csv(rows);
    std::cout << md;

    if (plot_arg) {
        const auto colon = plot_arg->find(':');
        if (colon == std::string::npos) {
            std::cerr << "error: --plot expects dataset:window\n";
            return kExitUsage;
        }
        const std::string dataset = plot_arg->substr(0, colon);
        const std::size_t window = std::stoul(plot_arg->substr(colon + 1));

        // Plot with the stage-two checkpoint of the first cell whose pair
        // includes the requested dataset; dataset regenerated from the
        // manifest's data seed and window config.
        const json manifest = load_json_file((fs::path(in_dir) / "manifest.json").string());
        const json& grid_json = manifest.at("resolved_config");
        cfbench::AblationGrid grid;
        cfbench::ModelConfig mcfg;
        cfbench::WindowConfig wcfg;
        grid = parse_grid(json{{"learning_rates", grid_json.at("learning_rates")},
                               {"epoch_counts", grid_json.at("epoch_counts")},
                               {"pairs", grid_json.at("pairs")},
                               {"base_config", grid_json.value("base_config", json::object())},
                               {"base_seed", grid_json.value("base_seed", 0)},
                               {"data_seed", grid_json.value("data_seed", 42)}},
                          mcfg, wcfg);

        std::optional<fs::path> ckpt;
        for (const auto& file : report_files) {
            const json j = load_json_file(file.string());
            if (j.at("dataset_a") == dataset || j.at("dataset_b") == dataset) {
                const fs::path candidate = file.parent_path() / "stage2.ckpt";
                if (fs::is_regular_file(candidate)) {
                    ckpt = candidate;
                    break;
                }
            }
        }
        if (!ckpt) {
            std::cerr << "error: no checkpoint found for dataset " << dataset << '\n';
            return kExitUsage;
        }
        auto [params, ckpt_cfg] = cfbench::load_checkpoint(ckpt->string());
        const auto spec = cfbench::builtin_spec(dataset, grid.data_seed);
        const auto ds = cfbench::prepare_dataset(dataset, cfbench::generate_series(spec, {}), wcfg);
        fs::create_directories(fs::path(in_dir) / "plots");
        const std::string base =
            (fs::path(in_dir) / "plots" / (dataset + "_w" + std::to_string(window))).string();
        cfbench::emit_forecast_plot(ckpt_cfg, params, ds, window, base);
        std::cout << "wrote " << base << ".csv and " << base << ".svg\n";
    }
    return kExitOk;
}

int cmd_pretrain(std::size_t pool_size, const std::string& config_path,
                 std::uint64_t pool_seed, const std::string& out_path) {
    ResolvedConfig cfg;
    try {
        cfg = parse_config(config_path.empty() ? json::object() : load_json_file(config_path));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    }
    cfbench::pretrain_generalist(cfg.model, pool_size, cfg.train, cfg.window, pool_seed, out_path);
    std::cout << "wrote " << out_path << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Catastrophic-forgetting benchmark for time-series forecasters"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    // gen-data
    std::string gen_out = "data";
    std::uint64_t gen_seed = 42;
    std::string gen_datasets = "d1,d2,d3,d4";
    auto* gen = app.add_subcommand("gen-data", "Generate the built-in datasets as CSV");
    gen->add_option("--out", gen_out, "Output directory");
    gen->add_option("--seed", gen_seed, "Phase-sampling seed");
    gen->add_option("--datasets", gen_datasets, "Comma-separated subset of d1,d2,d3,d4");

    // protocol
    std::string pa, pb, pconfig, pout = "protocol_out", pinit;
    auto* proto = app.add_subcommand("protocol", "Run the two-stage fine-tuning protocol");
    proto->add_option("--a", pa, "Dataset A CSV")->required();
    proto->add_option("--b", pb, "Dataset B CSV")->required();
    proto->add_option("--config", pconfig, "JSON training config");
    proto->add_option("--out", pout, "Output directory");
    proto->add_option("--init-checkpoint", pinit, "Starting checkpoint (optional)");

    // ablate
    std::string agrid, aout = "ablation_out";
    auto* abl = app.add_subcommand("ablate", "Run an lr/epoch ablation grid");
    abl->add_option("--grid", agrid, "JSON grid file")->required();
    abl->add_option("--out", aout, "Output directory");

    // report
    std::string rin, rplot;
    auto* rep = app.add_subcommand("report", "Re-render tables from persisted reports");
    rep->add_option("--in", rin, "Directory with report.json files")->required();
    rep->add_option("--plot", rplot, "dataset:window forecast plot to emit");

    // pretrain
    std::size_t pr_pool = 8;
    std::string pr_config, pr_out = "generalist.ckpt";
    std::uint64_t pr_seed = 7;
    auto* pre = app.add_subcommand("pretrain", "Pretrain a generalist starting checkpoint");
    pre->add_option("--pool-size", pr_pool, "Number of random pool datasets");
    pre->add_option("--config", pr_config, "JSON training config");
    pre->add_option("--seed", pr_seed, "Pool sampling seed");
    pre->add_option("--out", pr_out, "Checkpoint output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) {
            std::vector<std::string> names;
            std::stringstream ss(gen_datasets);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) names.push_back(item);
            for (const auto& n : names) cfbench::builtin_spec(n, 0); // fail fast on bad names
            return cmd_gen_data(gen_out, gen_seed, names);
        }
        if (*proto)
            return cmd_protocol(pa, pb, pconfig, pout,
                                pinit.empty() ? std::nullopt : std::optional(pinit));
        if (*abl) return cmd_ablate(agrid, aout);
        if (*rep) return cmd_report(rin, rplot.empty() ? std::nullopt : std::optional(rplot));
        if (*pre) return cmd_pretrain(pr_pool, pr_config, pr_seed, pr_out);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
