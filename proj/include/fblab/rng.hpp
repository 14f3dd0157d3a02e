#pragma once

#include <cstdint>

namespace fblab {

// Counter-based random stream: every draw is a pure function of
// (master seed, stream index, counter), so samples can be generated in any
// order or on any thread and still be reproducible.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_counter(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
    h = splitmix64(h ^ stream);
    return splitmix64(h ^ (counter * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
}

/// Stream reserved for geometry (jitter) draws; disorder samples use their
/// sample index as stream id.
inline constexpr std::uint64_t kGeometryStream = 0xffffffffffff0001ULL;

struct RngStream {
    std::uint64_t master_seed = 0;
    std::uint64_t sample_index = 0;

    std::uint64_t bits(std::uint64_t counter) const { return hash_counter(master_seed, sample_index, counter); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [lo, hi].
    int uniform_int(std::uint64_t counter, int lo, int hi) const {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<int>(bits(counter) % span);
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;
};

}  // namespace fblab
