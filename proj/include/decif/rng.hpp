#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "decif/util.hpp"

namespace decif {

/// Deterministic RNG with named streams. Identical (seed, label, call
/// sequence) always produces identical outputs, independent of platform and
/// standard-library implementation -- std::uniform_*_distribution is not
/// portable across stdlibs, so the draw primitives are implemented here.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::string_view stream_label)
        : label_(stream_label), state_(mix(seed, stream_label)) {
        if (state_ == 0) state_ = 0x9e3779b97f4a7c15ull;
    }

    const std::string& label() const { return label_; }

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [lo, hi], inclusive. Debiased by rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo >= hi) return lo;
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return lo + static_cast<std::int64_t>(x % range);
    }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        if (n <= 1) return 0;
        return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
    }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[index(items.size())];
    }

    bool chance(double p) { return next_double() < p; }

private:
    static std::uint64_t mix(std::uint64_t seed, std::string_view label) {
        std::uint64_t h = fnv1a64(label);
        // one splitmix round to decorrelate seed and label hash
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (h | 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::string label_;
    std::uint64_t state_;
};

} // namespace decif
