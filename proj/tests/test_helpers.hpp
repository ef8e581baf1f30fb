#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "turbidspike/events.hpp"
#include "turbidspike/rng.hpp"

namespace testutil {

// unique scratch directory per test site
inline std::filesystem::path tmp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("turbidspike_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// randomized valid stream: sorted events, in-bounds coords, optional triggers
inline turbidspike::events::EventStream random_stream(uint64_t seed, uint16_t w = 16,
                                                      uint16_t h = 12,
                                                      size_t max_events = 60) {
    using namespace turbidspike;
    CounterRng rng(seed_hash(seed, "stream"), 0);
    events::EventStream s;
    s.width = w;
    s.height = h;
    const size_t n = rng.below(max_events + 1);
    uint64_t t = 0;
    for (size_t i = 0; i < n; ++i) {
        t += rng.below(500);
        s.events.push_back({t, static_cast<uint16_t>(rng.below(w)),
                            static_cast<uint16_t>(rng.below(h)),
                            rng.next_u32() & 1 ? int8_t{1} : int8_t{-1}});
    }
    s.sort_events();
    if (rng.next_u32() & 1) {
        const uint64_t end = t + 1 + rng.below(100);
        s.triggers = {{0, events::Edge::rising}, {end, events::Edge::falling}};
    }
    return s;
}

}  // namespace testutil
