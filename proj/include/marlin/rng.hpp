// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "marlin/common.hpp"

namespace marlin {

// Deterministic generator with a fixed algorithm (splitmix64) so that every
// seeded artifact (masks, synthetic clips, parameter inits, shuffles) is
// reproducible bit-for-bit regardless of the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased uniform integer in [0, bound).
    std::uint64_t next_below(std::uint64_t bound) {
        require_arg(bound > 0, "rng bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % bound;
    }

    // Standard normal via Box-Muller; the paired value is discarded so the
    // draw count stays a pure function of call count.
    double next_normal() {
        const double u1 = 1.0 - next_double();  // (0, 1]
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Normal(0, std) resampled until |x| <= 2*std.
    double next_trunc_normal(double std_dev) {
        double x;
        do {
            x = next_normal() * std_dev;
        } while (std::abs(x) > 2.0 * std_dev);
        return x;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // First n entries of a random permutation of [0, count), ascending cost O(count).
    std::vector<int> sample_indices(int count, int n) {
        require_arg(n >= 0 && n <= count, "sample size out of range");
        std::vector<int> pool(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < n; ++i) {
            const int j = i + static_cast<int>(next_below(static_cast<std::uint64_t>(count - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        pool.resize(static_cast<std::size_t>(n));
        return pool;
    }

private:
    std::uint64_t state_;
};

// Child seed derivation: mixes the base seed with a stream id so sub-tasks
// (per-clip plans, per-epoch shuffles) get independent deterministic streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

}  // namespace marlin
