#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfbench/timeseries.hpp"

namespace cfbench {

struct SplitIndices {
    std::size_t train_end = 0; // train = [0, train_end)
    std::size_t val_end = 0;   // val = [train_end, val_end), test = [val_end, N)
};

struct Scaler {
    double mean = 0.0;
    double std = 1.0; // population standard deviation
};

struct WindowConfig {
    std::size_t context_len = 256;
    std::size_t horizon = 128;
    std::size_t train_stride = 1;
    std::size_t eval_stride = 0; // 0 means "use horizon"

    std::size_t effective_eval_stride() const {
        return eval_stride == 0 ? horizon : eval_stride;
    }
};

struct WindowSet {
    std::size_t context_len = 0;
    std::size_t horizon = 0;
    std::vector<double> contexts; // [n_windows x context_len], row-major
    std::vector<double> targets;  // [n_windows x horizon], row-major
    std::vector<std::size_t> target_start_indices;

    std::size_t count() const { return target_start_indices.size(); }
    const double* context(std::size_t w) const { return contexts.data() + w * context_len; }
    const double* target(std::size_t w) const { return targets.data() + w * horizon; }
};

// Serializes a double with enough digits to round-trip exactly.
inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_csv(const TimeSeries& series, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << "date,values\n";
    for (std::size_t i = 0; i < series.size(); ++i)
        out << format_timestamp(series.timestamps[i]) << ','
            << format_value(series.values[i]) << '\n';
    if (!out)
        throw std::runtime_error("write failed: " + path);
}

inline TimeSeries read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "date,values")
        throw std::runtime_error("bad CSV header (expected 'date,values'): " + line);
    TimeSeries ts;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("malformed row: " + line);
        ts.timestamps.push_back(parse_timestamp(line.substr(0, comma)));
        const std::string value_text = line.substr(comma + 1);
        std::size_t consumed = 0;
        double v;
        try {
            v = std::stod(value_text, &consumed);
        } catch (const std::exception&) {
            throw std::runtime_error("unparseable value: " + value_text);
        }
        if (consumed != value_text.size())
            throw std::runtime_error("unparseable value: " + value_text);
        ts.values.push_back(v);
    }
    if (ts.size() < 2)
        throw std::runtime_error("series too short: " + path);
    const EpochSeconds step = ts.timestamps[1] - ts.timestamps[0];
    if (step <= 0 || step % 60 != 0)
        throw std::runtime_error("invalid timestamp spacing in " + path);
    ts.step_minutes = static_cast<int>(step / 60);
    ts.validate();
    return ts;
}

// 70/15/15 chronological split, floor rounding, remainder to test.
inline SplitIndices split_series(const TimeSeries& series,
                                 double train_frac = 0.7, double val_frac = 0.15,
                                 const WindowConfig& wcfg = {}) {
    const std::size_t n = series.size();
    if (n < wcfg.context_len + wcfg.horizon + 2)
        throw std::invalid_argument("series too short for the configured windows");
    SplitIndices s;
    s.train_end = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n)));
    s.val_end = s.train_end + static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
    if (s.train_end == 0 || s.train_end >= s.val_end || s.val_end >= n)
        throw std::invalid_argument("degenerate split");
    return s;
}

inline Scaler fit_scaler(const TimeSeries& series, std::size_t begin, std::size_t end) {
    if (begin >= end || end > series.size())
        throw std::invalid_argument("fit_scaler: empty or invalid range");
    const std::size_t n = end - begin;
    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += series.values[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
        const double d = series.values[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    if (var <= 0.0)
        throw std::invalid_argument("fit_scaler: constant series over range");
    return {mean, std::sqrt(var)};
}

inline std::vector<double> transform(const Scaler& s, const std::vector<double>& values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = (values[i] - s.mean) / s.std;
    return out;
}

inline std::vector<double> inverse_transform(const Scaler& s, const std::vector<double>& values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        out[i] = values[i] * s.std + s.mean;
    return out;
}

namespace detail {
inline void append_window(WindowSet& ws, const std::vector<double>& values,
                          std::size_t target_start) {
    const std::size_t ctx_start = target_start - ws.context_len;
    ws.contexts.insert(ws.contexts.end(),
                       values.begin() + ctx_start, values.begin() + target_start);
    ws.targets.insert(ws.targets.end(),
                      values.begin() + target_start, values.begin() + target_start + ws.horizon);
    ws.target_start_indices.push_back(target_start);
}
} // namespace detail

// Training windows: context and target both inside [0, train_end).
inline WindowSet make_train_windows(const std::vector<double>& values_std,
                                    const SplitIndices& split, const WindowConfig& wcfg) {
    WindowSet ws;
    ws.context_len = wcfg.context_len;
    ws.horizon = wcfg.horizon;
    const std::size_t span = wcfg.context_len + wcfg.horizon;
    if (split.train_end < span)
        throw std::invalid_argument("train region too short for one window");
    for (std::size_t t = wcfg.context_len; t + wcfg.horizon <= split.train_end;
         t += wcfg.train_stride)
        detail::append_window(ws, values_std, t);
    return ws;
}

enum class EvalRegion { Val, Test };

// Eval windows: target fully inside the region, context may reach back into
// earlier regions. First target starts at the region's first index.
inline WindowSet make_eval_windows(const std::vector<double>& values_std,
                                   const SplitIndices& split, EvalRegion region,
                                   const WindowConfig& wcfg) {
    WindowSet ws;
    ws.context_len = wcfg.context_len;
    ws.horizon = wcfg.horizon;
    const std::size_t begin = region == EvalRegion::Val ? split.train_end : split.val_end;
    const std::size_t end = region == EvalRegion::Val ? split.val_end : values_std.size();
    if (begin < wcfg.context_len || begin + wcfg.horizon > end)
        throw std::invalid_argument("region too short for one eval window");
    for (std::size_t t = begin; t + wcfg.horizon <= end; t += wcfg.effective_eval_stride())
        detail::append_window(ws, values_std, t);
    return ws;
}

} // namespace cfbench
