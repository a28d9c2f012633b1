#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfbench/optim.hpp"
#include "cfbench/rng.hpp"

using namespace cfbench;

namespace {

ModelConfig tiny_config(std::uint64_t seed) {
    ModelConfig cfg;
    cfg.context_len = 8;
    cfg.patch_len = 4;
    cfg.embed_dim = 3;
    cfg.hidden_dim = 5;
    cfg.horizon = 2;
    cfg.n_blocks = 1;
    cfg.init_seed = seed;
    return cfg;
}

// Straight-line Adam reference over flat arrays.
void reference_adam(std::vector<double>& p, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v, std::uint64_t t,
                    const TrainConfig& cfg) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * g[i] * g[i];
        const double m_hat = m[i] / (1 - std::pow(cfg.beta1, double(t)));
        const double v_hat = v[i] / (1 - std::pow(cfg.beta2, double(t)));
        p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.lr * cfg.weight_decay * p[i];
    }
}

WindowSet single_window(const ModelConfig& cfg, std::uint64_t seed) {
    WindowSet ws;
    ws.context_len = cfg.context_len;
    ws.horizon = cfg.horizon;
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < cfg.context_len; ++i)
        ws.contexts.push_back(2.0 * rng.next_double() - 1.0);
    for (std::size_t i = 0; i < cfg.horizon; ++i)
        ws.targets.push_back(2.0 * rng.next_double() - 1.0);
    ws.target_start_indices.push_back(cfg.context_len);
    return ws;
}

} // namespace

TEST_CASE("adam_step: zero gradient and zero decay is a no-op") {
    const auto cfg = tiny_config(3);
    auto params = init_params(cfg);
    const auto before = params;
    auto state = AdamState::zeros(cfg);
    TrainConfig tc;
    tc.weight_decay = 0.0;
    adam_step(params, ModelParams::zeros(cfg), state, tc);
    params.for_each_tensor([&](const std::string& name, const std::vector<double>& t) {
        before.for_each_tensor([&](const std::string& n2, const std::vector<double>& t2) {
            if (n2 == name) CHECK(t == t2);
        });
    });
    CHECK(state.t == 1);
}

TEST_CASE("adam_step: first step with unit gradient moves by about -lr") {
    const auto cfg = tiny_config(0);
    auto params = ModelParams::zeros(cfg);
    auto grads = ModelParams::zeros(cfg);
    grads.out_b[0] = 1.0;
    auto state = AdamState::zeros(cfg);
    TrainConfig tc;
    tc.lr = 0.1;
    tc.weight_decay = 0.0;
    adam_step(params, grads, state, tc);
    CHECK(std::abs(params.out_b[0] + 0.1) < 1e-8);
}

TEST_CASE("adam_step: decoupled decay shrinks params by exactly (1 - lr*wd)") {
    const auto cfg = tiny_config(0);
    auto params = ModelParams::zeros(cfg);
    params.out_b.assign(params.out_b.size(), 1.0);
    auto state = AdamState::zeros(cfg);
    TrainConfig tc;
    tc.lr = 0.1;
    tc.weight_decay = 0.01;
    adam_step(params, ModelParams::zeros(cfg), state, tc);
    for (double v : params.out_b) CHECK(v == 0.999);
}

TEST_CASE("adam_step matches a straight-line reference to 1e-15") {
    const auto cfg = tiny_config(21);
    auto params = init_params(cfg);
    auto state = AdamState::zeros(cfg);
    TrainConfig tc;
    tc.lr = 3e-3;

    // flatten reference copies
    std::vector<double> rp, rm, rv;
    params.for_each_tensor([&](const std::string&, const std::vector<double>& t) {
        rp.insert(rp.end(), t.begin(), t.end());
    });
    rm.assign(rp.size(), 0.0);
    rv.assign(rp.size(), 0.0);

    SplitMix64 rng(77);
    for (std::uint64_t step = 1; step <= 5; ++step) {
        auto grads = ModelParams::zeros(cfg);
        std::vector<double> flat_g;
        grads.for_each_tensor([&](const std::string&, std::vector<double>& t) {
            for (auto& v : t) {
                v = 2.0 * rng.next_double() - 1.0;
                flat_g.push_back(v);
            }
        });
        adam_step(params, grads, state, tc);
        reference_adam(rp, flat_g, rm, rv, step, tc);

        std::size_t idx = 0;
        params.for_each_tensor([&](const std::string&, const std::vector<double>& t) {
            for (double v : t) {
                CHECK(std::abs(v - rp[idx]) <= 1e-15);
                ++idx;
            }
        });
    }
}

TEST_CASE("adam_step rejects non-finite gradients") {
    const auto cfg = tiny_config(0);
    auto params = init_params(cfg);
    auto grads = ModelParams::zeros(cfg);
    grads.embed_w[0] = std::nan("");
    auto state = AdamState::zeros(cfg);
    CHECK_THROWS_AS(adam_step(params, grads, state, TrainConfig{}), std::runtime_error);
}

TEST_CASE("train: loss decreases on a fixed single-window task") {
    const auto cfg = tiny_config(8);
    auto params = init_params(cfg);
    const auto ws = single_window(cfg, 5);
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.weight_decay = 0.0;
    tc.batch_size = 1;
    tc.epochs = 10;
    const auto losses = train(cfg, params, ws, tc);
    REQUIRE(losses.size() == 10);
    for (std::size_t i = 1; i < losses.size(); ++i)
        CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("train is deterministic in its seeds") {
    const auto cfg = tiny_config(12);
    const auto ws = single_window(cfg, 3);
    TrainConfig tc;
    tc.epochs = 3;
    tc.shuffle_seed = 99;

    auto p1 = init_params(cfg);
    auto p2 = init_params(cfg);
    const auto l1 = train(cfg, p1, ws, tc);
    const auto l2 = train(cfg, p2, ws, tc);
    CHECK(l1 == l2);
    p1.for_each_tensor([&](const std::string& name, const std::vector<double>& t) {
        p2.for_each_tensor([&](const std::string& n2, const std::vector<double>& t2) {
            if (n2 == name) CHECK(t == t2);
        });
    });
}

TEST_CASE("train partitions 1498 windows into 24 batches of 64 (last 26)") {
    // Checked arithmetically: ceil(1498/64) = 24 and 1498 - 23*64 = 26.
    const std::size_t n = 1498, batch = 64;
    std::size_t batches = 0, last = 0;
    for (std::size_t start = 0; start < n; start += batch) {
        last = std::min(batch, n - start);
        ++batches;
    }
    CHECK(batches == 24);
    CHECK(last == 26);
}

TEST_CASE("train rejects an empty window set") {
    const auto cfg = tiny_config(0);
    auto params = init_params(cfg);
    WindowSet empty;
    empty.context_len = cfg.context_len;
    empty.horizon = cfg.horizon;
    CHECK_THROWS_AS(train(cfg, params, empty, TrainConfig{}), std::invalid_argument);
}
