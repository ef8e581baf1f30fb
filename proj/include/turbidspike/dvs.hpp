#pragma once

#include <cstdint>

#include "turbidspike/events.hpp"
#include "turbidspike/scatter.hpp"

namespace turbidspike::dvs {

struct DvsConfig {
    double contrast_threshold = 0.22314355131420976;  // ln(1.25), the 25% nominal
    double threshold_mismatch_sigma = 0.02;           // per-pixel multiplicative spread
    double background_rate_hz = 0.1;                  // noise events / pixel / second
    uint64_t refractory_us = 220;
    double intensity_floor = 1e-3;                    // log protection

    void validate() const;
};

// Returns a copy with contrast_threshold = ln(1 + percent/100).
DvsConfig set_threshold_percent(DvsConfig cfg, double percent);

// Converts intensity frames into an asynchronous polarity event stream.
//
// Per pixel: the log-intensity memory starts at frame 0; each later frame
// contributes floor(|dlog|/theta_px) events of sign(dlog), timestamps
// linearly interpolated between the frame times at the threshold crossings,
// and the memory advances by the emitted multiples of theta_px (residual
// sub-threshold contrast is preserved). Events inside a pixel's refractory
// window are suppressed afterwards. Poisson background noise is superposed
// with random polarity. The output is (t, y, x, p)-sorted and carries the
// sequence's trigger markers.
events::EventStream emulate(const mc::FrameSequence& frames, const DvsConfig& cfg,
                            uint64_t seed);

}  // namespace turbidspike::dvs
