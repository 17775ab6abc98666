#pragma once

#include <cstdint>

namespace wptmech {

// SplitMix64 (Steele, Lea, Flood 2014). Fully specified 64-bit stream, so
// seeded draws are identical across compilers and platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double prob) { return uniform() < prob; }

private:
    std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Child-stream derivation: one (tag, index) pair per sampled field, so a
// scenario field draws from its own substream regardless of draw order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                 std::uint64_t index = 0) {
    std::uint64_t s = mix64(seed + 0x9e3779b97f4a7c15ULL * (tag + 1));
    return mix64(s + 0xda942042e4dd58b5ULL * (index + 1));
}

inline SplitMix64 substream(std::uint64_t seed, std::uint64_t tag,
                            std::uint64_t index = 0) {
    return SplitMix64(derive_seed(seed, tag, index));
}

// Substream tags used by the scenario generator and the solvers.
namespace stream {
inline constexpr std::uint64_t battery = 1;
inline constexpr std::uint64_t energy_rate = 2;
inline constexpr std::uint64_t distance = 3;
inline constexpr std::uint64_t availability = 4;
inline constexpr std::uint64_t power_init = 5;
inline constexpr std::uint64_t price_init = 6;
inline constexpr std::uint64_t be_init = 7;
inline constexpr std::uint64_t experiment = 8;
}  // namespace stream

}  // namespace wptmech
