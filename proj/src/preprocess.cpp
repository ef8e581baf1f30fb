#include "turbidspike/preprocess.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <vector>

namespace turbidspike::preprocess {

using events::Event;
using events::EventStream;
using events::SpikeTensor;

EventStream crop_roi(const EventStream& stream, const RoiRect& roi) {
    if (roi.w == 0 || roi.h == 0) throw ConfigError("ROI must have positive extent");
    if (roi.x0 + roi.w > stream.width || roi.y0 + roi.h > stream.height)
        throw ConfigError("ROI exceeds sensor dimensions");
    EventStream out;
    out.width = roi.w;
    out.height = roi.h;
    out.triggers = stream.triggers;
    for (const Event& e : stream.events) {
        if (e.x < roi.x0 || e.x >= roi.x0 + roi.w) continue;
        if (e.y < roi.y0 || e.y >= roi.y0 + roi.h) continue;
        out.events.push_back({e.t, static_cast<uint16_t>(e.x - roi.x0),
                              static_cast<uint16_t>(e.y - roi.y0), e.p});
    }
    return out;
}

EventStream activity_noise_filter(const EventStream& stream, uint64_t dt_us,
                                  int radius) {
    if (dt_us == 0) throw ConfigError("activity filter window must be positive");
    if (radius < 0) throw ConfigError("activity filter radius must be non-negative");
    constexpr uint64_t kNever = std::numeric_limits<uint64_t>::max();
    std::vector<uint64_t> last(static_cast<size_t>(stream.width) * stream.height,
                               kNever);
    EventStream out;
    out.width = stream.width;
    out.height = stream.height;
    out.triggers = stream.triggers;
    for (const Event& e : stream.events) {
        bool supported = false;
        const int x_lo = std::max(0, e.x - radius);
        const int x_hi = std::min<int>(stream.width - 1, e.x + radius);
        const int y_lo = std::max(0, e.y - radius);
        const int y_hi = std::min<int>(stream.height - 1, e.y + radius);
        for (int y = y_lo; y <= y_hi && !supported; ++y)
            for (int x = x_lo; x <= x_hi; ++x) {
                uint64_t lt = last[static_cast<size_t>(y) * stream.width + x];
                if (lt != kNever && e.t - lt <= dt_us) {
                    supported = true;
                    break;
                }
            }
        if (supported) out.events.push_back(e);
        last[static_cast<size_t>(e.y) * stream.width + e.x] = e.t;
    }
    return out;
}

EventStream stc_filter(const EventStream& stream, uint64_t dt_us, int k) {
    if (dt_us == 0) throw ConfigError("STC filter window must be positive");
    if (k < 0) throw ConfigError("STC support count must be non-negative");
    EventStream out;
    out.width = stream.width;
    out.height = stream.height;
    out.triggers = stream.triggers;
    if (k == 0) {
        out.events = stream.events;
        return out;
    }
    std::vector<std::deque<uint64_t>> history(static_cast<size_t>(stream.width) *
                                              stream.height);
    for (const Event& e : stream.events) {
        auto& h = history[static_cast<size_t>(e.y) * stream.width + e.x];
        while (!h.empty() && e.t - h.front() > dt_us) h.pop_front();
        if (h.size() >= static_cast<size_t>(k)) out.events.push_back(e);
        h.push_back(e.t);
    }
    return out;
}

EventStream antiflicker_filter(const EventStream& stream, double f_min_hz,
                               double f_max_hz, int min_cycles) {
    if (!(f_min_hz > 0.0) || !(f_max_hz > f_min_hz))
        throw ConfigError("antiflicker band requires 0 < f_min < f_max");
    if (min_cycles < 1) throw ConfigError("antiflicker min_cycles must be >= 1");
    const double period_lo = 1e6 / f_max_hz;  // microseconds
    const double period_hi = 1e6 / f_min_hz;

    // Per-pixel event indices, in stream order.
    std::vector<std::vector<size_t>> per_pixel(static_cast<size_t>(stream.width) *
                                               stream.height);
    for (size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        per_pixel[static_cast<size_t>(e.y) * stream.width + e.x].push_back(i);
    }

    std::vector<char> drop(stream.events.size(), 0);
    auto scan_run = [&](const std::vector<size_t>& idx, size_t begin, size_t end) {
        // idx[begin, end) is one alternating-polarity run on this pixel.
        const size_t n = end - begin;
        size_t pairs = n / 2;
        int best = pairs >= 1 ? 1 : 0;
        int streak = 1;
        for (size_t j = 0; j + 1 < pairs; ++j) {
            double gap =
                static_cast<double>(stream.events[idx[begin + 2 * (j + 1)]].t -
                                    stream.events[idx[begin + 2 * j]].t);
            if (gap >= period_lo && gap <= period_hi) {
                ++streak;
                best = std::max(best, streak);
            } else {
                streak = 1;
            }
        }
        if (best >= min_cycles)
            for (size_t j = begin; j < end; ++j) drop[idx[j]] = 1;
    };

    for (const auto& idx : per_pixel) {
        size_t run_start = 0;
        for (size_t j = 1; j <= idx.size(); ++j) {
            bool breaks = j == idx.size() ||
                          stream.events[idx[j]].p == stream.events[idx[j - 1]].p;
            if (breaks) {
                scan_run(idx, run_start, j);
                run_start = j;
            }
        }
    }

    EventStream out;
    out.width = stream.width;
    out.height = stream.height;
    out.triggers = stream.triggers;
    for (size_t i = 0; i < stream.events.size(); ++i)
        if (!drop[i]) out.events.push_back(stream.events[i]);
    return out;
}

SpikeTensor bin_events(const EventStream& stream, uint32_t out_h, uint32_t out_w,
                       uint32_t steps, SpikeTensor::Mode mode, uint64_t duration_us) {
    if (out_h == 0 || out_w == 0 || steps == 0)
        throw ConfigError("bin geometry must be positive");
    if (stream.width % out_w != 0 || stream.height % out_h != 0)
        throw ConfigError("sensor dimensions not divisible by bin grid");
    uint64_t duration = duration_us ? duration_us : stream.duration_us();
    if (duration == 0) throw DataError("cannot bin a stream with zero duration");

    const uint32_t cell_w = stream.width / out_w;
    const uint32_t cell_h = stream.height / out_h;

    SpikeTensor t;
    t.mode = mode;
    t.steps = steps;
    t.height = out_h;
    t.width = out_w;
    t.duration_us = duration;
    t.data.assign(static_cast<size_t>(2) * steps * out_h * out_w, 0);

    for (const Event& e : stream.events) {
        uint32_t step = static_cast<uint32_t>(
            std::min<uint64_t>(e.t * steps / duration, steps - 1));
        uint32_t bx = e.x / cell_w;
        uint32_t by = e.y / cell_h;
        uint32_t c = e.p > 0 ? 0 : 1;
        uint16_t& cell = t.data[t.index(c, step, by, bx)];
        if (mode == SpikeTensor::Mode::binary)
            cell = 1;
        else if (cell != std::numeric_limits<uint16_t>::max())
            ++cell;
    }
    return t;
}

}  // namespace turbidspike::preprocess
