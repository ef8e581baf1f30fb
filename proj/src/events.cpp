#include "turbidspike/events.hpp"

#include <algorithm>

namespace turbidspike::events {

void EventStream::sort_events() {
    std::stable_sort(events.begin(), events.end(), event_less);
}

void EventStream::validate() const {
    uint64_t prev = 0;
    for (const Event& e : events) {
        if (e.p != 1 && e.p != -1)
            throw DataError("event polarity must be +1 or -1");
        if (e.x >= width || e.y >= height)
            throw DataError("event coordinates outside sensor dimensions");
        if (e.t < prev) throw DataError("event timestamps not sorted");
        prev = e.t;
    }
    uint64_t tprev = 0;
    for (const Trigger& tr : triggers) {
        if (tr.t < tprev) throw DataError("trigger timestamps not sorted");
        tprev = tr.t;
    }
}

uint64_t EventStream::duration_us() const {
    if (!triggers.empty()) return triggers.back().t;
    if (!events.empty()) return events.back().t + 1;
    return 0;
}

uint64_t SpikeTensor::sum() const {
    uint64_t s = 0;
    for (uint16_t v : data) s += v;
    return s;
}

std::vector<EventStream> segment_by_triggers(const EventStream& stream, bool lenient) {
    std::vector<std::pair<uint64_t, uint64_t>> windows;
    bool open = false;
    uint64_t rise_t = 0;
    for (const Trigger& tr : stream.triggers) {
        if (tr.edge == Edge::rising) {
            if (open) {
                if (!lenient)
                    throw DataError("two consecutive rising trigger edges");
                // lenient: close the previous segment at this rising edge
                windows.emplace_back(rise_t, tr.t);
            }
            open = true;
            rise_t = tr.t;
        } else {
            if (!open) {
                if (!lenient) throw DataError("falling trigger edge without rising edge");
                continue;
            }
            windows.emplace_back(rise_t, tr.t);
            open = false;
        }
    }
    // unmatched trailing rising edge: dropped

    std::vector<EventStream> out;
    out.reserve(windows.size());
    for (auto [t0, t1] : windows) {
        EventStream seg;
        seg.width = stream.width;
        seg.height = stream.height;
        seg.triggers = {{0, Edge::rising}, {t1 - t0, Edge::falling}};
        for (const Event& e : stream.events) {
            if (e.t < t0) continue;
            if (e.t > t1) break;
            seg.events.push_back({e.t - t0, e.x, e.y, e.p});
        }
        out.push_back(std::move(seg));
    }
    return out;
}

EventStream events_from_tensor(const SpikeTensor& tensor) {
    EventStream out;
    out.width = static_cast<uint16_t>(tensor.width);
    out.height = static_cast<uint16_t>(tensor.height);
    const uint64_t dur = tensor.duration_us;
    const uint64_t steps = tensor.steps;
    for (uint32_t step = 0; step < tensor.steps; ++step) {
        // Integer midpoint of the timestamps that bin() maps to this step,
        // so the round trip is exact for any (duration, T) with T <= duration.
        uint64_t lo = (static_cast<uint64_t>(step) * dur + steps - 1) / steps;
        uint64_t hi = ((static_cast<uint64_t>(step) + 1) * dur + steps - 1) / steps;
        uint64_t t = lo + (hi > lo ? (hi - 1 - lo) / 2 : 0);
        for (uint32_t c = 0; c < 2; ++c) {
            int8_t p = (c == 0) ? int8_t{1} : int8_t{-1};
            for (uint32_t y = 0; y < tensor.height; ++y)
                for (uint32_t x = 0; x < tensor.width; ++x) {
                    uint16_t n = tensor.at(c, step, y, x);
                    for (uint16_t i = 0; i < n; ++i)
                        out.events.push_back({t, static_cast<uint16_t>(x),
                                              static_cast<uint16_t>(y), p});
                }
        }
    }
    out.sort_events();
    return out;
}

}  // namespace turbidspike::events
