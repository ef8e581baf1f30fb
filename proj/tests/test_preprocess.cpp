#include <doctest.h>

#include <algorithm>

#include "test_helpers.hpp"
#include "turbidspike/preprocess.hpp"

using namespace turbidspike;
using namespace turbidspike::events;
using namespace turbidspike::preprocess;

namespace {

bool subset_in_order(const std::vector<Event>& out, const std::vector<Event>& in) {
    size_t j = 0;
    for (const Event& e : out) {
        while (j < in.size() && !(in[j] == e)) ++j;
        if (j == in.size()) return false;
        ++j;
    }
    return true;
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("crop_roi: rebasing and exclusive upper bound") {
    EventStream s;
    s.width = 20;
    s.height = 20;
    s.events = {{1, 4, 6, 1}, {2, 11, 13, 1}, {3, 12, 7, -1}};
    auto out = crop_roi(s, RoiRect{4, 6, 8, 8});
    CHECK(out.width == 8);
    CHECK(out.height == 8);
    REQUIRE(out.events.size() == 2);
    CHECK(out.events[0].x == 0);  // (x0, y0) kept and re-based to (0,0)
    CHECK(out.events[0].y == 0);
    CHECK(out.events[1].x == 7);
    CHECK(out.events[1].y == 7);
    // the x = x0 + w = 12 event was dropped (exclusive upper bound)

    s.events.clear();
    CHECK(crop_roi(s, RoiRect{4, 6, 8, 8}).events.empty());
    CHECK_THROWS_AS(crop_roi(s, RoiRect{15, 15, 8, 8}), ConfigError);
}

TEST_CASE("crop_roi: nested crops equal the intersection crop") {
    auto s = testutil::random_stream(42, 32, 32, 120);
    RoiRect outer{4, 2, 24, 28};
    RoiRect inner{3, 5, 12, 16};  // relative to outer
    auto two = crop_roi(crop_roi(s, outer), inner);
    RoiRect both{static_cast<uint16_t>(outer.x0 + inner.x0),
                 static_cast<uint16_t>(outer.y0 + inner.y0), inner.w, inner.h};
    auto one = crop_roi(s, both);
    CHECK(two == one);
}

TEST_CASE("activity filter: isolated dropped, neighbor support kept") {
    EventStream s;
    s.width = 16;
    s.height = 16;
    s.events = {{100, 5, 5, 1}};
    CHECK(activity_noise_filter(s, 1000, 1).events.empty());

    s.events = {{0, 5, 5, 1}, {100, 5, 6, 1}};
    auto out = activity_noise_filter(s, 1000, 1);
    REQUIRE(out.events.size() == 1);
    CHECK(out.events[0].t == 100);

    s.events.clear();
    CHECK(activity_noise_filter(s, 1000, 1).events.empty());
}

TEST_CASE("activity filter: support is raw input, not kept events") {
    // e1 dropped, e2 supported by (dropped) e1, e3 supported by e2
    EventStream s;
    s.width = 16;
    s.height = 16;
    s.events = {{0, 5, 5, 1}, {100, 6, 5, 1}, {200, 7, 5, 1}};
    auto out = activity_noise_filter(s, 1000, 1);
    REQUIRE(out.events.size() == 2);
    CHECK(out.events[0].t == 100);
    CHECK(out.events[1].t == 200);
}

TEST_CASE("activity filter: window and radius limits") {
    EventStream s;
    s.width = 16;
    s.height = 16;
    s.events = {{0, 5, 5, 1}, {2000, 5, 5, 1}};  // outside dt
    CHECK(activity_noise_filter(s, 1000, 1).events.empty());
    s.events = {{0, 5, 5, 1}, {100, 8, 5, 1}};  // outside radius 1
    CHECK(activity_noise_filter(s, 1000, 1).events.empty());
    CHECK(activity_noise_filter(s, 1000, 3).events.size() == 1);  // Chebyshev <= 3
}

TEST_CASE("stc filter: burst keeps all but the first") {
    EventStream s;
    s.width = 8;
    s.height = 8;
    s.events = {{0, 3, 3, 1}, {10, 3, 3, -1}, {20, 3, 3, 1}};
    auto out = stc_filter(s, 10000, 1);
    REQUIRE(out.events.size() == 2);
    CHECK(out.events[0].t == 10);

    // distinct pixels only -> nothing passes for k >= 1
    s.events = {{0, 1, 1, 1}, {10, 2, 2, 1}, {20, 3, 3, 1}};
    CHECK(stc_filter(s, 10000, 1).events.empty());

    // k = 0 is the identity
    CHECK(stc_filter(s, 10000, 0).events == s.events);
}

TEST_CASE("antiflicker: 100 Hz run removed inside the band, kept outside") {
    EventStream s;
    s.width = 4;
    s.height = 4;
    // alternating +/- at 100 Hz: +1 at k*10000us, -1 at k*10000+5000us
    for (int k = 0; k < 10; ++k) {
        s.events.push_back({static_cast<uint64_t>(k) * 10000, 1, 1, 1});
        s.events.push_back({static_cast<uint64_t>(k) * 10000 + 5000, 1, 1, -1});
    }
    CHECK(antiflicker_filter(s, 50, 200, 3).events.empty());
    CHECK(antiflicker_filter(s, 200, 400, 3).events.size() == s.events.size());

    EventStream empty;
    empty.width = 4;
    empty.height = 4;
    CHECK(antiflicker_filter(empty, 50, 200, 3).events.empty());
}

TEST_CASE("antiflicker: aperiodic alternation and same-polarity runs pass") {
    EventStream s;
    s.width = 4;
    s.height = 4;
    // alternating polarity but wildly aperiodic pair gaps
    uint64_t ts[] = {0, 100, 30000, 30500, 31000, 90000, 90100, 200000};
    for (int i = 0; i < 8; ++i)
        s.events.push_back({ts[i], 2, 2, i % 2 ? int8_t{-1} : int8_t{1}});
    CHECK(antiflicker_filter(s, 50, 200, 3).events.size() == 8);

    // same-polarity bursts never form alternating runs
    EventStream b;
    b.width = 4;
    b.height = 4;
    for (int k = 0; k < 10; ++k)
        b.events.push_back({static_cast<uint64_t>(k) * 10000, 1, 1, 1});
    CHECK(antiflicker_filter(b, 50, 200, 3).events.size() == 10);
}

TEST_CASE("bin: conservation and clamping") {
    auto s = testutil::random_stream(5, 16, 16, 40);
    s.triggers.clear();
    if (s.events.empty()) s.events = {{3, 1, 1, 1}};
    auto t = bin_events(s, 4, 4, 10, SpikeTensor::Mode::count);
    CHECK(t.sum() == s.events.size());
    auto tb = bin_events(s, 4, 4, 10, SpikeTensor::Mode::binary);
    CHECK(tb.sum() <= s.events.size());
    for (uint16_t v : tb.data) CHECK(v <= 1);
}

TEST_CASE("bin: floor arithmetic on a 384->64 grid") {
    EventStream s;
    s.width = 384;
    s.height = 384;
    for (uint16_t c = 0; c <= 5; ++c) s.events.push_back({c, c, c, 1});
    s.events.push_back({10, 383, 0, 1});
    s.sort_events();
    auto t = bin_events(s, 64, 64, 1, SpikeTensor::Mode::count, 100);
    CHECK(t.at(0, 0, 0, 0) == 6);   // x,y in 0..5 -> cell (0,0)
    CHECK(t.at(0, 0, 0, 63) == 1);  // x=383 -> column 63
}

TEST_CASE("bin: last-step clamp at t close to the duration") {
    EventStream s;
    s.width = 4;
    s.height = 4;
    s.events = {{999, 0, 0, 1}, {1000, 1, 1, 1}};
    auto t = bin_events(s, 4, 4, 50, SpikeTensor::Mode::count, 1000);
    CHECK(t.at(0, 49, 0, 0) == 1);  // floor(999*50/1000) = 49
    CHECK(t.at(0, 49, 1, 1) == 1);  // t = duration clamps into the last step
    CHECK_THROWS_AS(bin_events(s, 3, 3, 50, SpikeTensor::Mode::count, 1000),
                    ConfigError);
}

TEST_CASE("filters are contractions that preserve order") {
    for (uint64_t seed = 50; seed < 80; ++seed) {
        auto s = testutil::random_stream(seed, 12, 12, 80);
        const auto a = activity_noise_filter(s, 800, 1);
        const auto k = stc_filter(s, 800, 1);
        const auto f = antiflicker_filter(s, 50, 5000, 2);
        for (const auto* out : {&a, &k, &f}) {
            CHECK(out->events.size() <= s.events.size());
            CHECK(subset_in_order(out->events, s.events));
        }
    }
}

}  // TEST_SUITE
