#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cfbench/rng.hpp"

namespace cfbench {

struct ModelConfig {
    std::size_t context_len = 256;
    std::size_t horizon = 128;
    std::size_t patch_len = 32; // must divide context_len
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 512;
    std::size_t n_blocks = 2;
    std::uint64_t init_seed = 0;

    std::size_t n_patches() const { return context_len / patch_len; }
    std::size_t latent_dim() const { return n_patches() * embed_dim; }

    void validate() const {
        if (context_len == 0 || horizon == 0 || patch_len == 0 ||
            embed_dim == 0 || hidden_dim == 0 || n_blocks == 0)
            throw std::invalid_argument("model dimensions must be >= 1");
        if (context_len % patch_len != 0)
            throw std::invalid_argument("patch_len must divide context_len");
    }
};

// Patch embedding -> ReLU -> concat -> residual MLP blocks -> linear head.
// Matrices are row-major: W[i*cols + j] maps input i to output j.
struct ModelParams {
    struct Block {
        std::vector<double> w1, b1; // [D x hidden], [hidden]
        std::vector<double> w2, b2; // [hidden x D], [D]
    };
    std::vector<double> embed_w, embed_b; // [patch_len x embed_dim], [embed_dim]
    std::vector<Block> blocks;
    std::vector<double> out_w, out_b;     // [D x horizon], [horizon]

    static ModelParams zeros(const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        const std::size_t d = cfg.latent_dim();
        p.embed_w.assign(cfg.patch_len * cfg.embed_dim, 0.0);
        p.embed_b.assign(cfg.embed_dim, 0.0);
        p.blocks.resize(cfg.n_blocks);
        for (auto& b : p.blocks) {
            b.w1.assign(d * cfg.hidden_dim, 0.0);
            b.b1.assign(cfg.hidden_dim, 0.0);
            b.w2.assign(cfg.hidden_dim * d, 0.0);
            b.b2.assign(d, 0.0);
        }
        p.out_w.assign(d * cfg.horizon, 0.0);
        p.out_b.assign(cfg.horizon, 0.0);
        return p;
    }

    template <typename Fn> // Fn(name, vector<double>&)
    void for_each_tensor(Fn&& fn) {
        fn("embed_w", embed_w);
        fn("embed_b", embed_b);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string prefix = "block" + std::to_string(i) + ".";
            fn(prefix + "w1", blocks[i].w1);
            fn(prefix + "b1", blocks[i].b1);
            fn(prefix + "w2", blocks[i].w2);
            fn(prefix + "b2", blocks[i].b2);
        }
        fn("out_w", out_w);
        fn("out_b", out_b);
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<ModelParams*>(this)->for_each_tensor(
            [&fn](const std::string& name, std::vector<double>& t) {
                fn(name, static_cast<const std::vector<double>&>(t));
            });
    }

    bool all_finite() const {
        bool ok = true;
        for_each_tensor([&ok](const std::string&, const std::vector<double>& t) {
            for (double v : t)
                if (!std::isfinite(v)) ok = false;
        });
        return ok;
    }
};

using Gradients = ModelParams;

namespace detail {
inline void xavier_fill(std::vector<double>& w, std::size_t fan_in, std::size_t fan_out,
                        SplitMix64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : w)
        v = (2.0 * rng.next_double() - 1.0) * bound;
}
} // namespace detail

inline ModelParams init_params(const ModelConfig& cfg) {
    ModelParams p = ModelParams::zeros(cfg);
    SplitMix64 rng(cfg.init_seed);
    const std::size_t d = cfg.latent_dim();
    detail::xavier_fill(p.embed_w, cfg.patch_len, cfg.embed_dim, rng);
    for (auto& b : p.blocks) {
        detail::xavier_fill(b.w1, d, cfg.hidden_dim, rng);
        detail::xavier_fill(b.w2, cfg.hidden_dim, d, rng);
    }
    detail::xavier_fill(p.out_w, d, cfg.horizon, rng);
    return p;
}

// Intermediate activations kept for backprop and kink detection.
struct ForwardTrace {
    std::vector<double> embed_pre;               // [D] pre-ReLU patch embeddings
    std::vector<std::vector<double>> block_in;   // per block, [D]
    std::vector<std::vector<double>> block_pre;  // per block, [hidden] pre-ReLU
    std::vector<double> latent;                  // [D] final residual stream
    std::vector<double> output;                  // [horizon]

    double min_abs_preactivation() const {
        double m = std::numeric_limits<double>::infinity();
        for (double v : embed_pre) m = std::min(m, std::abs(v));
        for (const auto& pre : block_pre)
            for (double v : pre) m = std::min(m, std::abs(v));
        return m;
    }
};

inline ForwardTrace forward_trace(const ModelConfig& cfg, const ModelParams& p,
                                  const double* context) {
    for (std::size_t i = 0; i < cfg.context_len; ++i)
        if (!std::isfinite(context[i]))
            throw std::invalid_argument("non-finite context value");
    const std::size_t d = cfg.latent_dim();
    ForwardTrace tr;
    tr.embed_pre.assign(d, 0.0);
    for (std::size_t patch = 0; patch < cfg.n_patches(); ++patch) {
        double* z = tr.embed_pre.data() + patch * cfg.embed_dim;
        const double* x = context + patch * cfg.patch_len;
        for (std::size_t j = 0; j < cfg.embed_dim; ++j) z[j] = p.embed_b[j];
        for (std::size_t i = 0; i < cfg.patch_len; ++i) {
            const double xi = x[i];
            const double* wrow = p.embed_w.data() + i * cfg.embed_dim;
            for (std::size_t j = 0; j < cfg.embed_dim; ++j) z[j] += xi * wrow[j];
        }
    }
    std::vector<double> h(d);
    for (std::size_t i = 0; i < d; ++i) h[i] = std::max(0.0, tr.embed_pre[i]);

    tr.block_in.reserve(cfg.n_blocks);
    tr.block_pre.reserve(cfg.n_blocks);
    std::vector<double> u(cfg.hidden_dim);
    for (const auto& blk : p.blocks) {
        tr.block_in.push_back(h);
        for (std::size_t m = 0; m < cfg.hidden_dim; ++m) u[m] = blk.b1[m];
        for (std::size_t i = 0; i < d; ++i) {
            const double hi = h[i];
            if (hi == 0.0) continue;
            const double* wrow = blk.w1.data() + i * cfg.hidden_dim;
            for (std::size_t m = 0; m < cfg.hidden_dim; ++m) u[m] += hi * wrow[m];
        }
        tr.block_pre.push_back(u);
        for (std::size_t i = 0; i < d; ++i) h[i] += blk.b2[i];
        for (std::size_t m = 0; m < cfg.hidden_dim; ++m) {
            const double rm = std::max(0.0, u[m]);
            if (rm == 0.0) continue;
            const double* wrow = blk.w2.data() + m * d;
            for (std::size_t i = 0; i < d; ++i) h[i] += rm * wrow[i];
        }
    }
    tr.latent = h;
    tr.output.assign(cfg.horizon, 0.0);
    for (std::size_t j = 0; j < cfg.horizon; ++j) tr.output[j] = p.out_b[j];
    for (std::size_t i = 0; i < d; ++i) {
        const double hi = h[i];
        if (hi == 0.0) continue;
        const double* wrow = p.out_w.data() + i * cfg.horizon;
        for (std::size_t j = 0; j < cfg.horizon; ++j) tr.output[j] += hi * wrow[j];
    }
    return tr;
}

inline std::vector<double> forward(const ModelConfig& cfg, const ModelParams& p,
                                   const double* context) {
    return forward_trace(cfg, p, context).output;
}

inline double loss_mse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size())
        throw std::invalid_argument("loss_mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

// Accumulates exact gradients of the MSE loss into `grads`; returns the loss.
// Call on a zeroed Gradients for a single sample, or repeatedly and divide
// by the batch size for a batch mean.
inline double backward_accumulate(const ModelConfig& cfg, const ModelParams& p,
                                  const double* context, const double* target,
                                  Gradients& grads) {
    const std::size_t d = cfg.latent_dim();
    const ForwardTrace tr = forward_trace(cfg, p, context);

    double loss = 0.0;
    std::vector<double> dy(cfg.horizon);
    for (std::size_t j = 0; j < cfg.horizon; ++j) {
        const double r = tr.output[j] - target[j];
        loss += r * r;
        dy[j] = 2.0 * r / static_cast<double>(cfg.horizon);
    }
    loss /= static_cast<double>(cfg.horizon);

    std::vector<double> dh(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double hi = tr.latent[i];
        double* gw = grads.out_w.data() + i * cfg.horizon;
        const double* wrow = p.out_w.data() + i * cfg.horizon;
        double acc = 0.0;
        for (std::size_t j = 0; j < cfg.horizon; ++j) {
            gw[j] += hi * dy[j];
            acc += wrow[j] * dy[j];
        }
        dh[i] = acc;
    }
    for (std::size_t j = 0; j < cfg.horizon; ++j) grads.out_b[j] += dy[j];

    std::vector<double> dr(cfg.hidden_dim);
    for (std::size_t k = cfg.n_blocks; k-- > 0;) {
        const auto& blk = p.blocks[k];
        auto& gblk = grads.blocks[k];
        const auto& h_in = tr.block_in[k];
        const auto& pre = tr.block_pre[k];
        for (std::size_t i = 0; i < d; ++i) gblk.b2[i] += dh[i];
        for (std::size_t m = 0; m < cfg.hidden_dim; ++m) {
            const double rm = std::max(0.0, pre[m]);
            const double* wrow = blk.w2.data() + m * d;
            double* gw = gblk.w2.data() + m * d;
            double acc = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                gw[i] += rm * dh[i];
                acc += wrow[i] * dh[i];
            }
            dr[m] = pre[m] > 0.0 ? acc : 0.0; // du
        }
        for (std::size_t m = 0; m < cfg.hidden_dim; ++m) gblk.b1[m] += dr[m];
        for (std::size_t i = 0; i < d; ++i) {
            const double hi = h_in[i];
            const double* wrow = blk.w1.data() + i * cfg.hidden_dim;
            double* gw = gblk.w1.data() + i * cfg.hidden_dim;
            double acc = 0.0;
            for (std::size_t m = 0; m < cfg.hidden_dim; ++m) {
                gw[m] += hi * dr[m];
                acc += wrow[m] * dr[m];
            }
            dh[i] += acc; // residual path keeps the incoming dh
        }
    }

    for (std::size_t patch = 0; patch < cfg.n_patches(); ++patch) {
        const double* z = tr.embed_pre.data() + patch * cfg.embed_dim;
        const double* dh_patch = dh.data() + patch * cfg.embed_dim;
        const double* x = context + patch * cfg.patch_len;
        std::vector<double> dz(cfg.embed_dim);
        for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
            dz[j] = z[j] > 0.0 ? dh_patch[j] : 0.0;
            grads.embed_b[j] += dz[j];
        }
        for (std::size_t i = 0; i < cfg.patch_len; ++i) {
            const double xi = x[i];
            double* gw = grads.embed_w.data() + i * cfg.embed_dim;
            for (std::size_t j = 0; j < cfg.embed_dim; ++j) gw[j] += xi * dz[j];
        }
    }
    return loss;
}

inline std::pair<double, Gradients> backward(const ModelConfig& cfg, const ModelParams& p,
                                             const double* context, const double* target) {
    Gradients g = ModelParams::zeros(cfg);
    const double loss = backward_accumulate(cfg, p, context, target, g);
    return {loss, std::move(g)};
}

// Checkpoint layout: one JSON manifest line (config + tensor names/shapes),
// then raw little-endian float64 payload in manifest order.
inline void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                            const std::string& path) {
    nlohmann::ordered_json manifest;
    manifest["format"] = "cfbench-ckpt-v1";
    manifest["config"] = {
        {"context_len", cfg.context_len}, {"horizon", cfg.horizon},
        {"patch_len", cfg.patch_len}, {"embed_dim", cfg.embed_dim},
        {"hidden_dim", cfg.hidden_dim}, {"n_blocks", cfg.n_blocks},
        {"init_seed", cfg.init_seed}};
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    params.for_each_tensor([&tensors](const std::string& name, const std::vector<double>& t) {
        tensors.push_back({{"name", name}, {"size", t.size()}});
    });
    manifest["tensors"] = std::move(tensors);

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << manifest.dump() << '\n';
    params.for_each_tensor([&out](const std::string&, const std::vector<double>& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    });
    if (!out)
        throw std::runtime_error("checkpoint write failed: " + path);
}

inline std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("truncated checkpoint: " + path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(line);
    } catch (const std::exception&) {
        throw std::runtime_error("corrupt checkpoint manifest: " + path);
    }
    if (manifest.value("format", "") != "cfbench-ckpt-v1")
        throw std::runtime_error("unknown checkpoint format: " + path);
    const auto& jc = manifest.at("config");
    ModelConfig cfg;
    cfg.context_len = jc.at("context_len").get<std::size_t>();
    cfg.horizon = jc.at("horizon").get<std::size_t>();
    cfg.patch_len = jc.at("patch_len").get<std::size_t>();
    cfg.embed_dim = jc.at("embed_dim").get<std::size_t>();
    cfg.hidden_dim = jc.at("hidden_dim").get<std::size_t>();
    cfg.n_blocks = jc.at("n_blocks").get<std::size_t>();
    cfg.init_seed = jc.at("init_seed").get<std::uint64_t>();
    cfg.validate();

    ModelParams params = ModelParams::zeros(cfg);
    std::size_t tensor_index = 0;
    const auto& tensors = manifest.at("tensors");
    params.for_each_tensor([&](const std::string& name, std::vector<double>& t) {
        if (tensor_index >= tensors.size())
            throw std::runtime_error("checkpoint manifest missing tensor " + name);
        const auto& entry = tensors.at(tensor_index++);
        if (entry.at("name").get<std::string>() != name ||
            entry.at("size").get<std::size_t>() != t.size())
            throw std::runtime_error("checkpoint shape mismatch for tensor " + name);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(double)))
            throw std::runtime_error("truncated checkpoint payload: " + path);
    });
    if (tensor_index != tensors.size())
        throw std::runtime_error("checkpoint has extra tensors: " + path);
    return {std::move(params), cfg};
}

} // namespace cfbench
