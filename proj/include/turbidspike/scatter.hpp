#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "turbidspike/common.hpp"
#include "turbidspike/events.hpp"
#include "turbidspike/rng.hpp"

namespace turbidspike::mc {

// Slab phantom optical parameters (lengths in mm, coefficients in 1/mm).
struct PhantomSpec {
    double mu_s = 6.0;
    double mu_a = 0.01;
    double g = 0.9;
    double thickness_mm = 5.0;
    double refractive_index = 1.41;
    bool fresnel = false;  // index-matched boundaries by default

    void validate() const;
};

enum class Geometry { reflection, transmission };

struct SourceSpec {
    enum class Profile { disk, pencil };
    double wavelength_nm = 850.0;     // documentation only
    double beam_radius_mm = 15.0;
    double fluence_mw_mm2 = 0.021;    // documentation only
    Profile profile = Profile::disk;
};

// Binary target mask; true = white (reflective / transmissive),
// false = black (absorbing).
struct TargetMask {
    uint32_t width = 0;
    uint32_t height = 0;
    std::vector<uint8_t> on;

    bool at(uint32_t x, uint32_t y) const {
        return on[static_cast<size_t>(y) * width + x] != 0;
    }
};

// One target display state with its flash timing.
struct TargetFrame {
    TargetMask mask;
    uint64_t onset_us = 0;
    uint64_t duration_us = 0;
};

struct SceneSpec {
    Geometry geometry = Geometry::transmission;
    SourceSpec source;
    double target_plane_mm = 0.0;  // distance behind the rear face (0 = contact)
    uint32_t detector_w = 64;
    uint32_t detector_h = 64;
    double detector_pitch_mm = 0.5;
    double target_pitch_mm = 0.5;
    uint64_t transition_us = 200;  // display on/off switching time
    uint64_t settle_us = 1000;     // quiet margin before rise / after fall
    std::vector<TargetFrame> target_frames;

    void validate() const;
};

// Optical thickness in mean free paths; reflection doubles the geometric
// path because the light crosses the slab twice.
double mfp_count(const PhantomSpec& spec, Geometry geometry);

// Exponential free path -ln(u)/mu_t. u must be in (0,1].
double sample_step(double u, double mu_t);

// Henyey-Greenstein deflection cosine for anisotropy g in (-1,1).
double sample_hg(double g, double u);

enum class PhotonFate : uint8_t {
    exited_front = 0,
    exited_rear = 1,
    absorbed_target = 2,
    absorbed_roulette = 3,
    discarded = 4,  // non-finite state
};

struct PhotonExit {
    PhotonFate fate = PhotonFate::discarded;
    double x_mm = 0.0;
    double y_mm = 0.0;
    double dir[3] = {0.0, 0.0, 1.0};
    double weight = 0.0;
    double path_mm = 0.0;
    uint32_t scatter_count = 0;
};

// Random walk of one photon through the slab. `mask` is the current target
// state: nullptr means no target plane at all; a mask absorbs at black and,
// depending on geometry, Lambertian-reflects (reflection) or transmits
// (transmission, target at the entry face) at white.
PhotonExit propagate_photon(const PhantomSpec& phantom, const SceneSpec& scene,
                            const TargetMask* mask, CounterRng& rng);

struct IntensityFrame {
    uint64_t t_us = 0;
    std::vector<float> pixels;  // [H, W], photon weight sums
};

struct SimStats {
    uint64_t launched = 0;
    uint64_t discarded = 0;
    uint64_t absorbed_target = 0;
    uint64_t absorbed_roulette = 0;
    double exit_front_weight = 0.0;
    double exit_rear_weight = 0.0;
};

// Detector frames plus the trigger markers of the on/off protocol.
struct FrameSequence {
    uint32_t width = 0;
    uint32_t height = 0;
    std::vector<IntensityFrame> frames;
    std::vector<events::Trigger> triggers;
    SimStats stats;
};

// Simulates each distinct target state once (quasi-static: transport is
// ~ps, display dynamics ~ms) and lays the frames out on the flash timeline:
// off / on at onset+transition / on until offset / off after transition.
// Photon i of frame state f draws from the counter stream
// (seed_hash(seed, f), i) so results are independent of scheduling.
FrameSequence simulate_frames(const PhantomSpec& phantom, const SceneSpec& scene,
                              uint64_t photons_per_frame, uint64_t seed,
                              int jobs = 1);

// Detector image of a single target state; building block of
// simulate_frames, also used directly by the physics tests.
std::vector<float> simulate_state(const PhantomSpec& phantom, const SceneSpec& scene,
                                  const TargetMask* mask, uint64_t photons,
                                  uint64_t seed, int jobs, SimStats* stats = nullptr);

// Frame stack codec: magic `IFR1`, u16 H, u16 W, u32 frame count, per frame
// u64 t plus H*W little-endian f32.
void write_frames(const FrameSequence& seq, const std::filesystem::path& path);
FrameSequence read_frames(const std::filesystem::path& path);

}  // namespace turbidspike::mc
