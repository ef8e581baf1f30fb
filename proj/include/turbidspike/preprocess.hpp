#pragma once

#include <cstdint>

#include "turbidspike/events.hpp"

namespace turbidspike::preprocess {

struct RoiRect {
    uint16_t x0 = 0;
    uint16_t y0 = 0;
    uint16_t w = 0;
    uint16_t h = 0;
};

struct FilterParams {
    uint64_t activity_dt_us = 10000;
    int activity_radius = 1;  // Chebyshev neighborhood
    uint64_t stc_dt_us = 10000;
    int stc_count = 1;
    double flicker_fmin_hz = 90.0;
    double flicker_fmax_hz = 130.0;
    int flicker_min_cycles = 5;
};

// Keeps events inside the rectangle (upper bounds exclusive), re-based to
// the ROI origin; sensor dims become (w, h). Triggers pass through.
events::EventStream crop_roi(const events::EventStream& stream, const RoiRect& roi);

// An event survives iff some earlier raw-input event lies within dt in time
// and within Chebyshev radius r in space. Support comes from the raw input,
// not from already-kept events, so the filter is a pure function of its
// input; the first event of a genuine burst is sacrificed.
events::EventStream activity_noise_filter(const events::EventStream& stream,
                                          uint64_t dt_us, int radius);

// An event survives iff at least k earlier raw-input events occurred at the
// same pixel (either polarity) within dt. k = 0 is the identity.
events::EventStream stc_filter(const events::EventStream& stream, uint64_t dt_us,
                               int k);

// Per pixel, consecutive events of alternating polarity form a run; the run
// is grouped into (on, off) pairs and the gap between successive pair starts
// is the flicker period. If at least min_cycles consecutive pairs stay
// periodic inside [1/f_max, 1/f_min], the whole run is removed. Everything
// else passes.
events::EventStream antiflicker_filter(const events::EventStream& stream,
                                       double f_min_hz, double f_max_hz,
                                       int min_cycles);

// Bins into [2, T, H, W]. Spatial cell = floor(x / (w/W)); temporal cell =
// min(floor(t*T/D), T-1) with D the recording duration (pass 0 to derive it
// from the stream). Count mode accumulates (saturating u16), binary clamps
// to one.
events::SpikeTensor bin_events(const events::EventStream& stream, uint32_t out_h,
                               uint32_t out_w, uint32_t steps,
                               events::SpikeTensor::Mode mode,
                               uint64_t duration_us = 0);

}  // namespace turbidspike::preprocess
