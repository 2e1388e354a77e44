#pragma once

#include <cmath>
#include <cstdint>

namespace mmkg {

// splitmix64 finalizer; used both to seed streams and to combine tags.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL)); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b), c); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c, uint64_t d) { return mix64(mix64(a, b, c), d); }

// Deterministic xoshiro256** stream. All sampling in the project goes through
// this type so runs are bit-reproducible across platforms; <random>
// distributions are implementation-defined and deliberately not used.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : state_) {
            x = mix64(x);
            w = x;
        }
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
    }

    uint64_t next() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n); n > 0
    uint32_t uniform_u32(uint32_t n) { return static_cast<uint32_t>(uniform() * n); }

    // standard normal via Box-Muller (uncached, two uniform draws per call)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t state_[4];
};

// Stream tags for deriving independent substreams from one master seed.
// Keeping them in one place avoids accidental collisions between modules.
enum class Stream : uint64_t {
    WorldConcepts = 1,
    WorldCaptions = 2,
    WorldLatents = 3,
    WorldNoise = 4,
    EncoderInit = 10,
    InitialScorer = 11,
    TripletImage = 20,
    TripletSentence = 21,
    DropoutImage = 22,
    DropoutSentence = 23,
    UncertaintyProbe = 24,
    Pretrain = 25,
};

inline uint64_t stream_seed(uint64_t master, Stream s) { return mix64(master, static_cast<uint64_t>(s)); }
inline uint64_t stream_seed(uint64_t master, Stream s, uint64_t a) { return mix64(master, static_cast<uint64_t>(s), a); }
inline uint64_t stream_seed(uint64_t master, Stream s, uint64_t a, uint64_t b) {
    return mix64(master, static_cast<uint64_t>(s), a, b);
}

}  // namespace mmkg
