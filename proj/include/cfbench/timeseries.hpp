#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfbench {

// Seconds since the Unix epoch, UTC. All series in this project are
// uniformly spaced, so we keep explicit timestamps only for I/O fidelity.
using EpochSeconds = std::int64_t;

inline EpochSeconds make_timestamp(int year, int month, int day,
                                   int hour = 0, int minute = 0, int second = 0) {
    using namespace std::chrono;
    const sys_days d = year_month_day{std::chrono::year{year}, std::chrono::month{unsigned(month)},
                                      std::chrono::day{unsigned(day)}};
    return duration_cast<seconds>(d.time_since_epoch()).count()
         + hour * 3600 + minute * 60 + second;
}

// Formats as "YYYY-MM-DD HH:MM:SS".
inline std::string format_timestamp(EpochSeconds ts) {
    using namespace std::chrono;
    const auto days_part = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
    const auto sec_of_day = ts - days_part * 86400;
    const year_month_day ymd{sys_days{days{days_part}}};
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u %02d:%02d:%02d",
                  int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()),
                  int(sec_of_day / 3600), int((sec_of_day / 60) % 60), int(sec_of_day % 60));
    return buf;
}

inline EpochSeconds parse_timestamp(const std::string& text) {
    int y, mo, d, h, mi, s;
    if (std::sscanf(text.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6)
        throw std::invalid_argument("unparseable timestamp: " + text);
    return make_timestamp(y, mo, d, h, mi, s);
}

// A uniformly sampled univariate series.
struct TimeSeries {
    std::vector<EpochSeconds> timestamps;
    std::vector<double> values;
    int step_minutes = 30;

    std::size_t size() const { return values.size(); }

    void validate() const {
        if (timestamps.size() != values.size())
            throw std::invalid_argument("timestamps and values length mismatch");
        if (values.empty())
            throw std::invalid_argument("empty series");
        if (step_minutes <= 0)
            throw std::invalid_argument("step_minutes must be positive");
        const EpochSeconds step = EpochSeconds(step_minutes) * 60;
        for (std::size_t i = 1; i < timestamps.size(); ++i)
            if (timestamps[i] - timestamps[i - 1] != step)
                throw std::invalid_argument("non-uniform timestamp spacing at row " + std::to_string(i));
    }
};

} // namespace cfbench
