#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfbench/rng.hpp"
#include "cfbench/timeseries.hpp"

namespace cfbench {

struct SineComponent {
    double period; // time-steps, > 0
    double phase;  // radians in [0, 2*pi)
};

struct SignalSpec {
    std::vector<SineComponent> components;
    int phase_div = 12;
    std::uint64_t seed = 0;
};

struct GenerationConfig {
    std::size_t n_steps = 2688;
    EpochSeconds start_timestamp = make_timestamp(2000, 1, 1);
    int step_minutes = 30;
};

// Draws one phase per period from the grid {2*pi*k/phase_div : 0 <= k < phase_div}.
inline SignalSpec sample_phases(const std::vector<double>& periods, int phase_div,
                                std::uint64_t seed) {
    if (periods.empty())
        throw std::invalid_argument("sample_phases: empty period list");
    if (phase_div < 1)
        throw std::invalid_argument("sample_phases: phase_div must be >= 1");
    SignalSpec spec;
    spec.phase_div = phase_div;
    spec.seed = seed;
    SplitMix64 rng(seed);
    spec.components.reserve(periods.size());
    for (double period : periods) {
        if (period <= 0.0)
            throw std::invalid_argument("sample_phases: non-positive period");
        const auto k = rng.next_below(static_cast<std::uint64_t>(phase_div));
        spec.components.push_back({period,
            2.0 * std::numbers::pi * static_cast<double>(k) / phase_div});
    }
    return spec;
}

// Sum of unit sines at time-step index x.
inline double eval_signal(const SignalSpec& spec, double x) {
    double acc = 0.0;
    for (const auto& c : spec.components)
        acc += std::sin(2.0 * std::numbers::pi * x / c.period + c.phase);
    return acc;
}

inline TimeSeries generate_series(const SignalSpec& spec, const GenerationConfig& cfg) {
    if (cfg.n_steps < 1)
        throw std::invalid_argument("generate_series: n_steps must be >= 1");
    TimeSeries ts;
    ts.step_minutes = cfg.step_minutes;
    ts.timestamps.reserve(cfg.n_steps);
    ts.values.reserve(cfg.n_steps);
    for (std::size_t i = 0; i < cfg.n_steps; ++i) {
        ts.timestamps.push_back(cfg.start_timestamp
            + static_cast<EpochSeconds>(i) * cfg.step_minutes * 60);
        ts.values.push_back(eval_signal(spec, static_cast<double>(i)));
    }
    return ts;
}

// Built-in dataset definitions. Phases depend on the caller's seed; the
// published series used an unseeded RNG, so absolute values differ.
inline SignalSpec builtin_spec(const std::string& name, std::uint64_t seed) {
    static const std::vector<double> d1 = {21, 84, 336, 2688};
    static const std::vector<double> d2 = {42, 168, 1344};
    static const std::vector<double> d3 = {1260, 296, 1114, 1120, 325, 458, 105, 67, 911, 522};
    static const std::vector<double> d4 = {674, 570, 71, 726, 709, 1127, 226, 1198, 1282, 358};
    const std::vector<double>* periods = nullptr;
    if (name == "d1" || name == "D1") periods = &d1;
    else if (name == "d2" || name == "D2") periods = &d2;
    else if (name == "d3" || name == "D3") periods = &d3;
    else if (name == "d4" || name == "D4") periods = &d4;
    else throw std::invalid_argument("unknown dataset: " + name);
    return sample_phases(*periods, 12, seed);
}

} // namespace cfbench
