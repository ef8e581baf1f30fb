#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turbidspike/common.hpp"

namespace turbidspike::events {

// One polarity event. Timestamps are unsigned microseconds end to end;
// there is no floating-point time anywhere in the event paths.
struct Event {
    uint64_t t = 0;  // microseconds
    uint16_t x = 0;  // column
    uint16_t y = 0;  // row
    int8_t p = 0;    // +1 or -1; 0 is invalid
};

inline bool operator==(const Event& a, const Event& b) {
    return a.t == b.t && a.x == b.x && a.y == b.y && a.p == b.p;
}

// Canonical order: time, then (y, x, p) so equal-timestamp runs are stable
// and every downstream pass is deterministic.
inline bool event_less(const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.p < b.p;
}

enum class Edge : uint8_t { rising = 0, falling = 1 };

struct Trigger {
    uint64_t t = 0;
    Edge edge = Edge::rising;
};

inline bool operator==(const Trigger& a, const Trigger& b) {
    return a.t == b.t && a.edge == b.edge;
}

// Time-ordered event sequence with sensor geometry and sync markers.
// Treated as an immutable value once built; all pipeline stages are pure
// functions from stream to stream.
struct EventStream {
    std::vector<Event> events;
    uint16_t width = 0;
    uint16_t height = 0;
    std::vector<Trigger> triggers;

    void sort_events();
    // Throws DataError on invalid polarity, out-of-bounds coordinates or
    // unordered timestamps.
    void validate() const;

    // Time span covered by the recording: last trigger if present,
    // otherwise last event time + 1. Zero for an empty stream.
    uint64_t duration_us() const;
};

inline bool operator==(const EventStream& a, const EventStream& b) {
    return a.width == b.width && a.height == b.height && a.events == b.events &&
           a.triggers == b.triggers;
}

// Dense binned representation [2, T, H, W]; channel 0 holds p=+1, channel 1
// holds p=-1. Counts saturate at u16; binary mode clamps every cell to 1.
struct SpikeTensor {
    enum class Mode : uint8_t { count = 0, binary = 1 };

    Mode mode = Mode::binary;
    uint32_t steps = 0;
    uint32_t height = 0;
    uint32_t width = 0;
    uint64_t duration_us = 0;  // time span the T steps cover
    std::vector<uint16_t> data;

    size_t index(uint32_t channel, uint32_t step, uint32_t y, uint32_t x) const {
        return ((static_cast<size_t>(channel) * steps + step) * height + y) * width + x;
    }
    uint16_t at(uint32_t channel, uint32_t step, uint32_t y, uint32_t x) const {
        return data[index(channel, step, y, x)];
    }
    size_t cells() const { return data.size(); }
    uint64_t sum() const;

    // Step width in microseconds.
    double dt_us() const { return steps ? static_cast<double>(duration_us) / steps : 0.0; }
};

inline bool operator==(const SpikeTensor& a, const SpikeTensor& b) {
    return a.mode == b.mode && a.steps == b.steps && a.height == b.height &&
           a.width == b.width && a.duration_us == b.duration_us && a.data == b.data;
}

// Intensity image set as loaded from IDX files; pixel values in [0,1].
struct LabeledImageSet {
    std::vector<float> pixels;  // [N, H, W] row-major
    std::vector<uint32_t> labels;
    uint32_t count = 0;
    uint32_t height = 0;
    uint32_t width = 0;
    std::string source_name;

    const float* image(uint32_t i) const {
        return pixels.data() + static_cast<size_t>(i) * height * width;
    }
};

// Splits a recording at its rising/falling trigger pairs. Each sub-stream
// holds the events with t_rise <= t <= t_fall, re-based to t - t_rise, and
// carries its own re-based trigger pair (so duration survives).
//
// Strict mode (default) rejects consecutive rising edges or a leading
// falling edge; lenient mode closes the open segment at a second rising
// edge and skips stray falling edges. An unmatched trailing rising edge is
// dropped in both modes.
std::vector<EventStream> segment_by_triggers(const EventStream& stream,
                                             bool lenient = false);

// Inverse of binning: one event per nonzero count, placed mid-bin so that
// re-binning with the same geometry reproduces the tensor in count mode.
EventStream events_from_tensor(const SpikeTensor& tensor);

}  // namespace turbidspike::events
