#include <doctest.h>

#include <cmath>
#include <map>

#include "turbidspike/dvs.hpp"

using namespace turbidspike;
using namespace turbidspike::dvs;
using mc::FrameSequence;
using mc::IntensityFrame;

namespace {

// single-pixel sensor with the given intensity trajectory
FrameSequence pixel_frames(const std::vector<std::pair<uint64_t, float>>& traj) {
    FrameSequence seq;
    seq.width = 1;
    seq.height = 1;
    for (auto [t, v] : traj) seq.frames.push_back({t, {v}});
    return seq;
}

DvsConfig quiet_config() {
    DvsConfig cfg;
    cfg.threshold_mismatch_sigma = 0.0;
    cfg.background_rate_hz = 0.0;
    cfg.refractory_us = 0;
    return cfg;
}

}  // namespace

TEST_SUITE("dvs_model") {

TEST_CASE("set_threshold_percent closed forms") {
    DvsConfig cfg;
    CHECK(set_threshold_percent(cfg, 25.0).contrast_threshold ==
          doctest::Approx(std::log(1.25)).epsilon(1e-12));
    CHECK(set_threshold_percent(cfg, 12.0).contrast_threshold ==
          doctest::Approx(std::log(1.12)).epsilon(1e-12));
    CHECK_THROWS_AS(set_threshold_percent(cfg, 0.0), ConfigError);
    CHECK_THROWS_AS(set_threshold_percent(cfg, 100.0), ConfigError);
}

TEST_CASE("constant intensity emits nothing at zero noise") {
    auto seq = pixel_frames({{0, 2.0f}, {1000, 2.0f}, {2000, 2.0f}});
    auto s = emulate(seq, quiet_config(), 1);
    CHECK(s.events.empty());
}

TEST_CASE("intensity doubling at 25% threshold emits exactly three events") {
    auto seq = pixel_frames({{0, 1.0f}, {100000, 2.0f}});
    auto s = emulate(seq, quiet_config(), 1);
    REQUIRE(s.events.size() == 3);  // floor(ln2 / ln1.25) = 3
    for (const auto& e : s.events) CHECK(e.p == 1);
    // crossings interpolated inside the frame interval, in time order
    CHECK(s.events[0].t > 0);
    CHECK(s.events[2].t <= 100000);
    CHECK(s.events[0].t < s.events[1].t);
}

TEST_CASE("step up then identical step down is antisymmetric") {
    auto seq = pixel_frames({{0, 1.0f}, {100000, 2.0f}, {200000, 1.0f}});
    auto s = emulate(seq, quiet_config(), 1);
    REQUIRE(s.events.size() == 6);
    int up = 0, down = 0;
    for (const auto& e : s.events) (e.p > 0 ? up : down)++;
    CHECK(up == 3);
    CHECK(down == 3);
}

TEST_CASE("event count invariant under uniform intensity scaling") {
    for (float scale : {0.25f, 1.0f, 7.0f, 300.0f}) {
        auto seq = pixel_frames(
            {{0, 1.0f * scale}, {100000, 2.0f * scale}, {200000, 0.5f * scale}});
        auto s = emulate(seq, quiet_config(), 1);
        auto base = emulate(
            pixel_frames({{0, 1.0f}, {100000, 2.0f}, {200000, 0.5f}}),
            quiet_config(), 1);
        CHECK(s.events.size() == base.events.size());
    }
}

TEST_CASE("monotone ramp count equals floor of total log change over theta") {
    DvsConfig cfg = quiet_config();
    std::vector<std::pair<uint64_t, float>> traj;
    float v = 0.7f;
    traj.emplace_back(0, v);
    for (int k = 1; k <= 6; ++k) traj.emplace_back(k * 50000, v *= 1.4f);
    auto s = emulate(pixel_frames(traj), cfg, 1);
    const double total = std::log((v + cfg.intensity_floor) /
                                  (0.7 + cfg.intensity_floor));
    CHECK(s.events.size() ==
          static_cast<size_t>(total / cfg.contrast_threshold));
}

TEST_CASE("refractory keeps per-pixel inter-event gaps wide") {
    DvsConfig cfg = quiet_config();
    cfg.refractory_us = 30000;
    auto seq = pixel_frames({{0, 1.0f}, {100000, 8.0f}});  // many crossings
    auto s = emulate(seq, cfg, 1);
    CHECK(!s.events.empty());
    for (size_t i = 1; i < s.events.size(); ++i)
        CHECK(s.events[i].t - s.events[i - 1].t >= cfg.refractory_us);
    auto free = emulate(seq, quiet_config(), 1);
    CHECK(free.events.size() >= s.events.size());
}

TEST_CASE("noise events obey the stream invariants and the seed") {
    FrameSequence seq;
    seq.width = 8;
    seq.height = 6;
    seq.frames.push_back({0, std::vector<float>(48, 1.0f)});
    seq.frames.push_back({2000000, std::vector<float>(48, 1.0f)});
    seq.triggers = {{100, events::Edge::rising}, {1900000, events::Edge::falling}};
    DvsConfig cfg = quiet_config();
    cfg.background_rate_hz = 40.0;  // ~80 expected per pixel over 2 s
    auto a = emulate(seq, cfg, 9);
    auto b = emulate(seq, cfg, 9);
    auto c = emulate(seq, cfg, 10);
    CHECK(a == b);
    CHECK(a.events.size() > 100);
    CHECK(!(a == c));
    a.validate();
    CHECK(a.triggers.size() == 2);
}

TEST_CASE("per-pixel threshold mismatch perturbs counts but stays seeded") {
    FrameSequence seq;
    seq.width = 16;
    seq.height = 16;
    seq.frames.push_back({0, std::vector<float>(256, 1.0f)});
    seq.frames.push_back({100000, std::vector<float>(256, 2.0f)});
    DvsConfig cfg = quiet_config();
    cfg.threshold_mismatch_sigma = 0.1;
    auto a = emulate(seq, cfg, 4);
    auto b = emulate(seq, cfg, 4);
    CHECK(a == b);
    // every pixel still fires 2..4 events around the nominal 3
    std::map<uint32_t, int> counts;
    for (const auto& e : a.events) counts[e.y * 16u + e.x]++;
    CHECK(counts.size() == 256);
    for (auto [pix, n] : counts) CHECK(std::abs(n - 3) <= 1);
}

TEST_CASE("negative intensity rejected") {
    auto seq = pixel_frames({{0, 1.0f}, {1000, -0.5f}});
    CHECK_THROWS_AS(emulate(seq, quiet_config(), 1), DataError);
}

TEST_CASE("timestamps interpolate between frame times") {
    DvsConfig cfg = quiet_config();
    auto seq = pixel_frames({{1000, 1.0f}, {2000, 2.0f}});
    auto s = emulate(seq, cfg, 1);
    REQUIRE(s.events.size() == 3);
    // crossing k sits at fraction k*theta / dlog of the frame interval
    const double dlog = std::log(2.0 + cfg.intensity_floor) -
                        std::log(1.0 + cfg.intensity_floor);
    for (size_t k = 0; k < 3; ++k) {
        const double frac = (k + 1) * cfg.contrast_threshold / dlog;
        CHECK(s.events[k].t == 1000 + static_cast<uint64_t>(frac * 1000.0));
    }
}

}  // TEST_SUITE
