#include "turbidspike/scatter.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace turbidspike::mc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRouletteThreshold = 1e-4;
constexpr double kRouletteSurvival = 0.1;
constexpr uint64_t kMaxSteps = 10'000'000;

}  // namespace

void PhantomSpec::validate() const {
    if (mu_s < 0.0 || mu_a < 0.0)
        throw ConfigError("scattering/absorption coefficients must be non-negative");
    // thickness 0 is the explicit no-phantom degenerate used for the clear
    // ground-truth path
    if (thickness_mm < 0.0) throw ConfigError("phantom thickness must be non-negative");
    if (!(g > -1.0 && g < 1.0)) throw ConfigError("anisotropy g must be in (-1,1)");
    if (refractive_index <= 0.0) throw ConfigError("refractive index must be positive");
}

void SceneSpec::validate() const {
    if (source.beam_radius_mm <= 0.0 && source.profile == SourceSpec::Profile::disk)
        throw ConfigError("beam radius must be positive");
    if (detector_w == 0 || detector_h == 0)
        throw ConfigError("detector grid must be non-empty");
    if (detector_pitch_mm <= 0.0 || target_pitch_mm <= 0.0)
        throw ConfigError("pixel pitches must be positive");
    if (target_plane_mm < 0.0)
        throw ConfigError("target plane distance must be non-negative");
    if (transition_us == 0) throw ConfigError("transition time must be positive");
    uint64_t prev_end = 0;
    for (const TargetFrame& f : target_frames) {
        if (f.mask.width == 0 || f.mask.height == 0)
            throw ConfigError("target mask must be non-empty");
        if (f.duration_us == 0) throw ConfigError("target flash duration must be positive");
        if (f.onset_us < prev_end)
            throw ConfigError("target flashes must not overlap");
        prev_end = f.onset_us + f.duration_us + 2 * transition_us;
    }
}

double mfp_count(const PhantomSpec& spec, Geometry geometry) {
    spec.validate();
    const double passes = geometry == Geometry::reflection ? 2.0 : 1.0;
    return spec.mu_s * spec.thickness_mm * passes;
}

double sample_step(double u, double mu_t) {
    if (mu_t <= 0.0) throw NumericError("sample_step requires mu_t > 0");
    if (!(u > 0.0 && u <= 1.0)) throw NumericError("sample_step requires u in (0,1]");
    return -std::log(u) / mu_t;
}

double sample_hg(double g, double u) {
    if (g == 0.0) return 2.0 * u - 1.0;
    const double tmp = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
    const double c = (1.0 + g * g - tmp * tmp) / (2.0 * g);
    return std::clamp(c, -1.0, 1.0);
}

namespace {

struct Vec3 {
    double x, y, z;
};

// Deflects `d` by cos(theta)=cost with uniform azimuth (MCML convention).
Vec3 rotate_direction(const Vec3& d, double cost, double phi) {
    const double sint = std::sqrt(std::max(0.0, 1.0 - cost * cost));
    const double cosp = std::cos(phi);
    const double sinp = std::sin(phi);
    Vec3 n;
    if (std::abs(d.z) > 0.99999) {
        n = {sint * cosp, sint * sinp, d.z > 0 ? cost : -cost};
    } else {
        const double tmp = std::sqrt(1.0 - d.z * d.z);
        n = {sint * (d.x * d.z * cosp - d.y * sinp) / tmp + d.x * cost,
             sint * (d.y * d.z * cosp + d.x * sinp) / tmp + d.y * cost,
             -sint * cosp * tmp + d.z * cost};
    }
    const double norm = std::sqrt(n.x * n.x + n.y * n.y + n.z * n.z);
    return {n.x / norm, n.y / norm, n.z / norm};
}

// Cosine-weighted hemisphere pointing in -z (back into the slab).
Vec3 lambertian_back(CounterRng& rng) {
    const double cost = std::sqrt(rng.uniform_open0());
    const double sint = std::sqrt(std::max(0.0, 1.0 - cost * cost));
    const double phi = 6.283185307179586476925286766559 * rng.uniform();
    return {sint * std::cos(phi), sint * std::sin(phi), -cost};
}

// true = white (pass/reflect); coordinates outside the displayed image are
// treated as black surround.
bool mask_white(const TargetMask& mask, double x_mm, double y_mm, double pitch_mm) {
    const double fx = x_mm / pitch_mm + 0.5 * mask.width;
    const double fy = y_mm / pitch_mm + 0.5 * mask.height;
    if (fx < 0.0 || fy < 0.0) return false;
    const auto ix = static_cast<uint32_t>(fx);
    const auto iy = static_cast<uint32_t>(fy);
    if (ix >= mask.width || iy >= mask.height) return false;
    return mask.at(ix, iy);
}

}  // namespace

PhotonExit propagate_photon(const PhantomSpec& phantom, const SceneSpec& scene,
                            const TargetMask* mask, CounterRng& rng) {
    const double d = phantom.thickness_mm;
    PhotonExit out;

    // Launch at the entry face.
    double x = 0.0, y = 0.0;
    if (scene.source.profile == SourceSpec::Profile::disk) {
        const double r = scene.source.beam_radius_mm * std::sqrt(rng.uniform_open0());
        const double phi = 6.283185307179586476925286766559 * rng.uniform();
        x = r * std::cos(phi);
        y = r * std::sin(phi);
    }
    double z = 0.0;
    Vec3 dir{0.0, 0.0, 1.0};
    double w = 1.0;
    double path = 0.0;
    uint32_t scatters = 0;

    // Transmission: the projected pattern gates the illumination at the
    // entry face ("transmitted unchanged through white / absorbed at black").
    if (scene.geometry == Geometry::transmission && mask != nullptr) {
        if (!mask_white(*mask, x, y, scene.target_pitch_mm)) {
            out.fate = PhotonFate::absorbed_target;
            out.x_mm = x;
            out.y_mm = y;
            out.weight = w;
            return out;
        }
    }

    auto finish = [&](PhotonFate fate) {
        out.fate = fate;
        out.x_mm = x;
        out.y_mm = y;
        out.dir[0] = dir.x;
        out.dir[1] = dir.y;
        out.dir[2] = dir.z;
        out.weight = w;
        out.path_mm = path;
        out.scatter_count = scatters;
        return out;
    };

    for (uint64_t iter = 0; iter < kMaxSteps; ++iter) {
        const double free_path =
            phantom.mu_s > 0.0 ? sample_step(rng.uniform_open0(), phantom.mu_s) : kInf;
        double boundary;
        if (dir.z > 0.0)
            boundary = (d - z) / dir.z;
        else if (dir.z < 0.0)
            boundary = -z / dir.z;
        else
            boundary = kInf;
        if (free_path == kInf && boundary == kInf)
            return finish(PhotonFate::discarded);  // parallel, non-scattering

        const bool hits_boundary = boundary <= free_path;
        const double step = hits_boundary ? boundary : free_path;
        x += step * dir.x;
        y += step * dir.y;
        z += step * dir.z;
        path += step;
        w *= std::exp(-phantom.mu_a * step);
        if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
            !std::isfinite(w))
            return finish(PhotonFate::discarded);

        if (hits_boundary) {
            if (dir.z > 0.0) {
                // rear face
                z = d;
                if (scene.geometry == Geometry::reflection && mask != nullptr) {
                    double tx = x, ty = y;
                    const double gap = scene.target_plane_mm;
                    if (gap > 0.0) {
                        tx += dir.x * gap / dir.z;
                        ty += dir.y * gap / dir.z;
                    }
                    // attenuation-free gap (air) between slab and display
                    path += gap > 0.0 ? gap / dir.z : 0.0;
                    if (!mask_white(*mask, tx, ty, scene.target_pitch_mm)) {
                        x = tx;
                        y = ty;
                        return finish(PhotonFate::absorbed_target);
                    }
                    dir = lambertian_back(rng);
                    if (gap > 0.0) {
                        const double back = gap / -dir.z;
                        x = tx + dir.x * back;
                        y = ty + dir.y * back;
                        path += back;
                    } else {
                        x = tx;
                        y = ty;
                    }
                    continue;
                }
                return finish(PhotonFate::exited_rear);
            }
            z = 0.0;
            return finish(PhotonFate::exited_front);
        }

        // scattering event
        ++scatters;
        const double cost = sample_hg(phantom.g, rng.uniform_open0());
        const double phi = 6.283185307179586476925286766559 * rng.uniform();
        dir = rotate_direction(dir, cost, phi);

        if (w < kRouletteThreshold) {
            if (rng.uniform_open0() <= kRouletteSurvival)
                w /= kRouletteSurvival;
            else
                return finish(PhotonFate::absorbed_roulette);
        }
    }
    return finish(PhotonFate::discarded);
}

namespace {

struct PhotonRecord {
    int32_t pixel = -1;
    uint8_t fate = static_cast<uint8_t>(PhotonFate::discarded);
    double weight = 0.0;
};

}  // namespace

std::vector<float> simulate_state(const PhantomSpec& phantom, const SceneSpec& scene,
                                  const TargetMask* mask, uint64_t photons,
                                  uint64_t seed, int jobs, SimStats* stats) {
    phantom.validate();
    scene.validate();
    const uint32_t W = scene.detector_w;
    const uint32_t H = scene.detector_h;
    const bool detect_rear = scene.geometry == Geometry::transmission;

    std::vector<PhotonRecord> records(photons);
    const int64_t n = static_cast<int64_t>(photons);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(jobs > 0 ? jobs : omp_get_max_threads())
#endif
    for (int64_t i = 0; i < n; ++i) {
        CounterRng rng(seed, static_cast<uint64_t>(i));
        PhotonExit e = propagate_photon(phantom, scene, mask, rng);
        PhotonRecord& rec = records[static_cast<size_t>(i)];
        rec.fate = static_cast<uint8_t>(e.fate);
        rec.weight = e.weight;
        const bool detected = (detect_rear && e.fate == PhotonFate::exited_rear) ||
                              (!detect_rear && e.fate == PhotonFate::exited_front);
        if (detected) {
            const double fx = e.x_mm / scene.detector_pitch_mm + 0.5 * W;
            const double fy = e.y_mm / scene.detector_pitch_mm + 0.5 * H;
            if (fx >= 0.0 && fy >= 0.0 && fx < W && fy < H)
                rec.pixel = static_cast<int32_t>(static_cast<uint32_t>(fy) * W +
                                                 static_cast<uint32_t>(fx));
        }
    }

    // Serial accumulation in photon order: results are bit-identical for any
    // worker count.
    std::vector<double> tally(static_cast<size_t>(W) * H, 0.0);
    SimStats s;
    s.launched = photons;
    for (const PhotonRecord& rec : records) {
        switch (static_cast<PhotonFate>(rec.fate)) {
            case PhotonFate::exited_front:
                s.exit_front_weight += rec.weight;
                break;
            case PhotonFate::exited_rear:
                s.exit_rear_weight += rec.weight;
                break;
            case PhotonFate::absorbed_target:
                ++s.absorbed_target;
                break;
            case PhotonFate::absorbed_roulette:
                ++s.absorbed_roulette;
                break;
            case PhotonFate::discarded:
                ++s.discarded;
                break;
        }
        if (rec.pixel >= 0) tally[static_cast<size_t>(rec.pixel)] += rec.weight;
    }
    if (stats) *stats = s;

    std::vector<float> pixels(tally.size());
    for (size_t i = 0; i < tally.size(); ++i) pixels[i] = static_cast<float>(tally[i]);
    return pixels;
}

FrameSequence simulate_frames(const PhantomSpec& phantom, const SceneSpec& scene,
                              uint64_t photons_per_frame, uint64_t seed, int jobs) {
    phantom.validate();
    scene.validate();
    if (photons_per_frame == 0) throw ConfigError("photons_per_frame must be >= 1");
    if (scene.target_frames.empty())
        throw ConfigError("scene has no target frames to simulate");

    FrameSequence seq;
    seq.width = scene.detector_w;
    seq.height = scene.detector_h;

    // State 0 is the dark/off state; states 1..K the distinct target images.
    std::vector<float> off_pixels;
    if (scene.geometry == Geometry::transmission) {
        off_pixels.assign(static_cast<size_t>(seq.width) * seq.height, 0.0f);
    } else {
        TargetMask black;
        black.width = scene.target_frames.front().mask.width;
        black.height = scene.target_frames.front().mask.height;
        black.on.assign(static_cast<size_t>(black.width) * black.height, 0);
        SimStats st;
        off_pixels = simulate_state(phantom, scene, &black, photons_per_frame,
                                    seed_hash(seed, uint64_t{0}), jobs, &st);
        seq.stats = st;
    }

    seq.frames.push_back({0, off_pixels});
    uint64_t last_fall = 0;
    for (size_t k = 0; k < scene.target_frames.size(); ++k) {
        const TargetFrame& tf = scene.target_frames[k];
        SimStats st;
        std::vector<float> on_pixels =
            simulate_state(phantom, scene, &tf.mask, photons_per_frame,
                           seed_hash(seed, k + 1), jobs, &st);
        seq.stats.launched += st.launched;
        seq.stats.discarded += st.discarded;
        seq.stats.absorbed_target += st.absorbed_target;
        seq.stats.absorbed_roulette += st.absorbed_roulette;
        seq.stats.exit_front_weight += st.exit_front_weight;
        seq.stats.exit_rear_weight += st.exit_rear_weight;

        const uint64_t on_t = tf.onset_us + scene.transition_us;
        const uint64_t off_t = tf.onset_us + tf.duration_us;
        seq.frames.push_back({tf.onset_us, off_pixels});
        seq.frames.push_back({on_t, on_pixels});
        seq.frames.push_back({off_t, on_pixels});
        seq.frames.push_back({off_t + scene.transition_us, off_pixels});
        seq.triggers.push_back({tf.onset_us, events::Edge::rising});
        seq.triggers.push_back({off_t + scene.transition_us, events::Edge::falling});
        last_fall = off_t + scene.transition_us;
    }
    seq.frames.push_back({last_fall + scene.settle_us, off_pixels});
    return seq;
}

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>(static_cast<uint64_t>(v) >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw DataError("frame stack truncated");
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

}  // namespace

void write_frames(const FrameSequence& seq, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open frame stack for writing: " + path.string());
    out.write("IFR1", 4);
    put_le<uint16_t>(out, static_cast<uint16_t>(seq.height));
    put_le<uint16_t>(out, static_cast<uint16_t>(seq.width));
    put_le<uint32_t>(out, static_cast<uint32_t>(seq.frames.size()));
    for (const IntensityFrame& f : seq.frames) {
        put_le<uint64_t>(out, f.t_us);
        for (float px : f.pixels) {
            uint32_t bits;
            std::memcpy(&bits, &px, 4);
            put_le<uint32_t>(out, bits);
        }
    }
}

FrameSequence read_frames(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open frame stack: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "IFR1", 4) != 0)
        throw DataError("bad frame stack magic");
    FrameSequence seq;
    seq.height = get_le<uint16_t>(in);
    seq.width = get_le<uint16_t>(in);
    uint32_t n = get_le<uint32_t>(in);
    seq.frames.resize(n);
    for (IntensityFrame& f : seq.frames) {
        f.t_us = get_le<uint64_t>(in);
        f.pixels.resize(static_cast<size_t>(seq.width) * seq.height);
        for (float& px : f.pixels) {
            uint32_t bits = get_le<uint32_t>(in);
            std::memcpy(&px, &bits, 4);
        }
    }
    return seq;
}

}  // namespace turbidspike::mc
