#include "turbidspike/dvs.hpp"

#include <algorithm>
#include <cmath>

#include "turbidspike/rng.hpp"

namespace turbidspike::dvs {

using events::Edge;
using events::Event;
using events::EventStream;

void DvsConfig::validate() const {
    if (!(contrast_threshold > 0.0))
        throw ConfigError("contrast threshold must be positive");
    if (threshold_mismatch_sigma < 0.0)
        throw ConfigError("threshold mismatch sigma must be non-negative");
    if (background_rate_hz < 0.0)
        throw ConfigError("background rate must be non-negative");
    if (!(intensity_floor > 0.0))
        throw ConfigError("intensity floor must be positive");
}

DvsConfig set_threshold_percent(DvsConfig cfg, double percent) {
    if (!(percent > 0.0 && percent < 100.0))
        throw ConfigError("contrast threshold percent must be in (0, 100)");
    cfg.contrast_threshold = std::log1p(percent / 100.0);
    return cfg;
}

EventStream emulate(const mc::FrameSequence& frames, const DvsConfig& cfg,
                    uint64_t seed) {
    cfg.validate();
    if (frames.frames.empty()) throw DataError("DVS emulation needs at least one frame");
    const uint32_t W = frames.width;
    const uint32_t H = frames.height;
    const size_t npix = static_cast<size_t>(W) * H;
    for (size_t k = 0; k < frames.frames.size(); ++k) {
        if (frames.frames[k].pixels.size() != npix)
            throw DataError("frame pixel count does not match sensor dimensions");
        if (k > 0 && frames.frames[k].t_us <= frames.frames[k - 1].t_us)
            throw DataError("frames must be strictly time-sorted");
        for (float v : frames.frames[k].pixels)
            if (!(v >= 0.0f)) throw DataError("negative intensity in frame");
    }

    // Per-pixel threshold with multiplicative mismatch, fixed by seed.
    const uint64_t thresh_key = seed_hash(seed, "dvs_thresh");
    std::vector<double> theta(npix);
    for (size_t i = 0; i < npix; ++i) {
        CounterRng rng(thresh_key, i);
        const double f = 1.0 + cfg.threshold_mismatch_sigma * rng.gauss();
        theta[i] = cfg.contrast_threshold * std::max(f, 0.01);
    }

    EventStream out;
    out.width = static_cast<uint16_t>(W);
    out.height = static_cast<uint16_t>(H);
    out.triggers = frames.triggers;

    const auto log_i = [&](float v) {
        return std::log(static_cast<double>(v) + cfg.intensity_floor);
    };

    std::vector<double> memory(npix);
    for (size_t i = 0; i < npix; ++i) memory[i] = log_i(frames.frames[0].pixels[i]);
    std::vector<uint64_t> last_event(npix, 0);
    std::vector<uint8_t> has_fired(npix, 0);

    for (size_t k = 1; k < frames.frames.size(); ++k) {
        const auto& prev = frames.frames[k - 1];
        const auto& cur = frames.frames[k];
        const double span = static_cast<double>(cur.t_us - prev.t_us);
        for (size_t i = 0; i < npix; ++i) {
            const double delta = log_i(cur.pixels[i]) - memory[i];
            const double mag = std::abs(delta);
            // epsilon slack so exact multiples of theta survive rounding
            const uint64_t n = static_cast<uint64_t>(mag / theta[i] + 1e-9);
            if (n == 0) continue;
            const int8_t pol = delta > 0 ? int8_t{1} : int8_t{-1};
            const uint16_t ex = static_cast<uint16_t>(i % W);
            const uint16_t ey = static_cast<uint16_t>(i / W);
            for (uint64_t j = 1; j <= n; ++j) {
                // linear interpolation of the j-th threshold crossing
                const double frac = (static_cast<double>(j) * theta[i]) / mag;
                uint64_t t = prev.t_us + static_cast<uint64_t>(frac * span);
                t = std::min(t, cur.t_us);
                if (has_fired[i] && t - last_event[i] < cfg.refractory_us) continue;
                out.events.push_back({t, ex, ey, pol});
                last_event[i] = t;
                has_fired[i] = 1;
            }
            memory[i] += pol > 0 ? static_cast<double>(n) * theta[i]
                                 : -static_cast<double>(n) * theta[i];
        }
    }

    // Background noise, one stream per pixel, superposed after thresholding.
    if (cfg.background_rate_hz > 0.0) {
        const uint64_t duration =
            frames.frames.back().t_us - frames.frames.front().t_us;
        const double lambda = cfg.background_rate_hz * duration * 1e-6;
        const uint64_t noise_key = seed_hash(seed, "dvs_noise");
        for (size_t i = 0; i < npix; ++i) {
            CounterRng rng(noise_key, i);
            const uint64_t n = rng.poisson(lambda);
            for (uint64_t j = 0; j < n; ++j) {
                const uint64_t t =
                    frames.frames.front().t_us +
                    static_cast<uint64_t>(rng.uniform() * duration);
                const int8_t pol = rng.next_u32() & 1 ? int8_t{1} : int8_t{-1};
                out.events.push_back({t, static_cast<uint16_t>(i % W),
                                      static_cast<uint16_t>(i / W), pol});
            }
        }
    }

    out.sort_events();
    return out;
}

}  // namespace turbidspike::dvs
