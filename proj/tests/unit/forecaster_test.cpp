#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cfbench/forecaster.hpp"
#include "cfbench/rng.hpp"

using namespace cfbench;

namespace {

ModelConfig small_config(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.context_len = 8;
    cfg.patch_len = 4;
    cfg.embed_dim = 3;
    cfg.hidden_dim = 5;
    cfg.horizon = 2;
    cfg.n_blocks = 2;
    cfg.init_seed = seed;
    return cfg;
}

std::vector<double> random_vector(std::size_t n, SplitMix64& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = (2.0 * rng.next_double() - 1.0) * scale;
    return v;
}

// Central finite differences over every parameter entry.
double max_relative_grad_error(const ModelConfig& cfg, ModelParams params,
                               const std::vector<double>& ctx,
                               const std::vector<double>& tgt) {
    const auto [loss, grads] = backward(cfg, params, ctx.data(), tgt.data());
    (void)loss;
    const double h = 1e-5;
    double worst = 0.0;

    std::vector<std::vector<double>*> tensors;
    params.for_each_tensor([&](const std::string&, std::vector<double>& t) {
        tensors.push_back(&t);
    });
    std::vector<const std::vector<double>*> grad_tensors;
    grads.for_each_tensor([&](const std::string&, const std::vector<double>& t) {
        grad_tensors.push_back(&t);
    });

    for (std::size_t k = 0; k < tensors.size(); ++k) {
        auto& t = *tensors[k];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double orig = t[i];
            t[i] = orig + h;
            const double up = loss_mse(forward(cfg, params, ctx.data()), tgt);
            t[i] = orig - h;
            const double down = loss_mse(forward(cfg, params, ctx.data()), tgt);
            t[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            const double analytic = (*grad_tensors[k])[i];
            const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("init_params is deterministic, zero biases, Xavier bounds") {
    const auto cfg = small_config(42);
    const auto a = init_params(cfg);
    const auto b = init_params(cfg);
    bool equal = true;
    a.for_each_tensor([&](const std::string& name, const std::vector<double>& t) {
        const std::vector<double>* other = nullptr;
        b.for_each_tensor([&](const std::string& n2, const std::vector<double>& t2) {
            if (n2 == name) other = &t2;
        });
        REQUIRE(other != nullptr);
        if (t != *other) equal = false;
    });
    CHECK(equal);

    for (double v : a.embed_b) CHECK(v == 0.0);
    for (const auto& blk : a.blocks) {
        for (double v : blk.b1) CHECK(v == 0.0);
        for (double v : blk.b2) CHECK(v == 0.0);
    }
    for (double v : a.out_b) CHECK(v == 0.0);

    const double d = double(cfg.latent_dim());
    const double bound_w1 = std::sqrt(6.0 / (d + double(cfg.hidden_dim)));
    for (const auto& blk : a.blocks)
        for (double v : blk.w1) CHECK(std::abs(v) <= bound_w1);
    const double bound_embed = std::sqrt(6.0 / double(cfg.patch_len + cfg.embed_dim));
    for (double v : a.embed_w) CHECK(std::abs(v) <= bound_embed);
}

TEST_CASE("forward: zero params give zero output; bias-only path is input-independent") {
    const auto cfg = small_config(0);
    auto params = ModelParams::zeros(cfg);
    SplitMix64 rng(1);
    const auto ctx = random_vector(cfg.context_len, rng);
    auto out = forward(cfg, params, ctx.data());
    for (double v : out) CHECK(v == 0.0);

    for (auto& v : params.out_b) v = 2.5;
    const auto ctx2 = random_vector(cfg.context_len, rng);
    out = forward(cfg, params, ctx.data());
    const auto out2 = forward(cfg, params, ctx2.data());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i] == 2.5);
        CHECK(out2[i] == 2.5);
    }
}

TEST_CASE("forward is pure: repeated calls agree bit-for-bit") {
    const auto cfg = small_config(9);
    const auto params = init_params(cfg);
    SplitMix64 rng(2);
    const auto ctx = random_vector(cfg.context_len, rng);
    CHECK(forward(cfg, params, ctx.data()) == forward(cfg, params, ctx.data()));
}

TEST_CASE("forward rejects non-finite input") {
    const auto cfg = small_config(1);
    const auto params = init_params(cfg);
    std::vector<double> ctx(cfg.context_len, 0.0);
    ctx[3] = std::nan("");
    CHECK_THROWS_AS(forward(cfg, params, ctx.data()), std::invalid_argument);
}

TEST_CASE("loss_mse arithmetic and shape check") {
    CHECK(loss_mse({1, 3}, {0, 1}) == doctest::Approx(2.5));
    CHECK(loss_mse({1, 2}, {1, 2}) == 0.0);
    CHECK_THROWS_AS(loss_mse({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("analytic gradients match central finite differences") {
    int checked = 0;
    std::uint64_t seed = 1000;
    while (checked < 5) {
        const auto cfg = small_config(seed);
        const auto params = init_params(cfg);
        SplitMix64 rng(seed * 31 + 7);
        const auto ctx = random_vector(cfg.context_len, rng);
        const auto tgt = random_vector(cfg.horizon, rng);
        const auto trace = forward_trace(cfg, params, ctx.data());
        ++seed;
        if (trace.min_abs_preactivation() < 1e-4) continue; // too close to a ReLU kink
        CHECK(max_relative_grad_error(cfg, params, ctx, tgt) < 1e-6);
        ++checked;
    }
}

TEST_CASE("checkpoint round-trip is bit exact") {
    const auto cfg = small_config(77);
    const auto params = init_params(cfg);
    const auto path = (std::filesystem::temp_directory_path() / "cfbench_ckpt_test.ckpt").string();
    save_checkpoint(params, cfg, path);
    const auto [loaded, loaded_cfg] = load_checkpoint(path);
    CHECK(loaded_cfg.context_len == cfg.context_len);
    CHECK(loaded_cfg.init_seed == cfg.init_seed);
    params.for_each_tensor([&, &lp = loaded](const std::string& name, const std::vector<double>& t) {
        lp.for_each_tensor([&](const std::string& n2, const std::vector<double>& t2) {
            if (n2 == name) CHECK(t == t2);
        });
    });
    std::filesystem::remove(path);
}

TEST_CASE("truncated checkpoint fails to load") {
    const auto cfg = small_config(5);
    const auto params = init_params(cfg);
    const auto path = (std::filesystem::temp_directory_path() / "cfbench_trunc.ckpt").string();
    save_checkpoint(params, cfg, path);
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 16);
    CHECK_THROWS(load_checkpoint(path));
    std::filesystem::remove(path);
}

TEST_CASE("config validation") {
    ModelConfig cfg = small_config(0);
    cfg.patch_len = 3; // does not divide context_len = 8
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = small_config(0);
    cfg.embed_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
