#pragma once

#include <cstdint>

namespace commutesim {

// SplitMix64 stream. Used instead of <random> engines/distributions so that
// identical seeds give bit-identical sequences on every platform and compiler.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() { return (next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). Modulo bias is negligible for the small n used here.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent per-(agent, day) stream so that the order in which agents are
// evaluated (or the thread count) cannot change any draw.
inline std::uint64_t decision_stream_seed(std::uint64_t master_seed, int agent_id, int day) {
    return mix_seed(mix_seed(mix_seed(master_seed) ^ static_cast<std::uint64_t>(agent_id)) ^
                    static_cast<std::uint64_t>(day));
}

}  // namespace commutesim
