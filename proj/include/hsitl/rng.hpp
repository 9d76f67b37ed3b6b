#pragma once

#include <cstdint>
#include <vector>

namespace hsitl {

/// SplitMix64 generator (Steele, Lea, Flood 2014). Chosen because the whole
/// algorithm fits in a dozen lines and is trivial to reimplement bit-exactly
/// in any language, so seeded splits and weight draws can be reproduced
/// outside this library.
///
/// Streams: `substream(id)` derives an independent generator as a pure
/// function of (seed, id), so callers can hand out per-class, per-tensor or
/// per-epoch streams without coupling their draw counts.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n = 0 returns 0. Uses 64-bit modulo; the
    /// bias is below 2^-32 for any n this library draws.
    uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next() % n; }

    /// Independent generator derived from (seed, id). Never advances *this.
    SplitMix64 substream(uint64_t id) const {
        SplitMix64 mixer(seed_ ^ (0xA5A5A5A5A5A5A5A5ULL + id * 0x9E3779B97F4A7C15ULL));
        return SplitMix64(mixer.next());
    }

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    uint64_t state_;
};

/// In-place Fisher-Yates shuffle with draws from `rng`.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace hsitl
