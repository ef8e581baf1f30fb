#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace turbidspike {

// SplitMix64 step; used to derive keys and sub-stream seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Mixes a master seed with an integer salt (sample index, frame index, ...).
inline uint64_t seed_hash(uint64_t master, uint64_t salt) {
    uint64_t s = master ^ (0x9e3779b97f4a7c15ull + salt * 0xd1b54a32d192ed03ull);
    return splitmix64(s);
}

// Mixes a master seed with a purpose tag so independent consumers
// ("dvs_noise", "init", "shuffle", ...) never share a stream.
inline uint64_t seed_hash(uint64_t master, std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return seed_hash(master, h);
}

// Philox4x32-10 counter-based generator (Salmon et al. reference constants).
// A (key, stream) pair selects an independent sequence; draws advance a
// 64-bit counter, so any (photon, pixel, sample) gets its own stream and
// results never depend on scheduling.
class CounterRng {
public:
    CounterRng() : CounterRng(0, 0) {}
    CounterRng(uint64_t key, uint64_t stream)
        : key0_(static_cast<uint32_t>(key)),
          key1_(static_cast<uint32_t>(key >> 32)),
          stream_lo_(static_cast<uint32_t>(stream)),
          stream_hi_(static_cast<uint32_t>(stream >> 32)) {}

    uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    uint64_t next_u64() {
        uint64_t lo = next_u32();
        uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in (0, 1]; valid input for -log(u).
    double uniform_open0() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller (pair cached).
    double gauss() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform_open0();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t below(uint64_t n) {
        if (n <= 1) return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // Knuth sampler; fine for the small rates used here.
    uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        double l = std::exp(-lambda);
        uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform_open0();
        } while (p > l);
        return k - 1;
    }

    // One Philox4x32-10 block for the given counter/key words.
    static std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr, uint32_t k0,
                                         uint32_t k1) {
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = 0xD2511F53ull * ctr[0];
            uint64_t p1 = 0xCD9E8D57ull * ctr[2];
            uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
            uint32_t lo0 = static_cast<uint32_t>(p0);
            uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
            uint32_t lo1 = static_cast<uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return ctr;
    }

private:
    void refill() {
        auto out = block({static_cast<uint32_t>(draw_), static_cast<uint32_t>(draw_ >> 32),
                          stream_lo_, stream_hi_},
                         key0_, key1_);
        for (int i = 0; i < 4; ++i) buf_[i] = out[i];
        ++draw_;
        buf_pos_ = 0;
    }

    uint32_t key0_, key1_;
    uint32_t stream_lo_, stream_hi_;
    uint64_t draw_ = 0;
    uint32_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace turbidspike
