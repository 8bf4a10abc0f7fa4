#pragma once

// Deterministic random number utilities.
//
// Everything in the library draws randomness through this header so that a
// (seed, stream, index) triple pins down every value regardless of thread
// count or evaluation order. The generator is splitmix64; normals come from
// the Box-Muller transform (no rejection step, so substreams stay in sync).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace burnsim {

// splitmix64 finalizer; also used as the mixing function for substream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Independent substream keys. Tags keep unrelated consumers of the same user
// seed (event noise, campaign embeddings, permutations, ...) decorrelated.
constexpr std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(seed ^ mix64(tag));
}
constexpr std::uint64_t substream(std::uint64_t seed, std::uint64_t tag,
                                  std::uint64_t index) noexcept {
    return mix64(substream(seed, tag) ^ mix64(index + 0x632be59bd9b4e019ull));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 usable bits.
    double next_unit() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). n must be positive.
    std::int64_t next_index(std::int64_t n) noexcept {
        return static_cast<std::int64_t>(
            (static_cast<unsigned __int128>(next_u64()) *
             static_cast<unsigned __int128>(n)) >> 64);
    }

    // Standard normal via Box-Muller. Consumes exactly two raw draws.
    double next_normal() noexcept {
        const double u1 = 1.0 - next_unit();  // (0, 1], keeps log finite
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

// m distinct indices from [0, n), ascending. Partial Fisher-Yates then sort;
// ascending order is what the replay code wants (it preserves event order).
inline std::vector<std::int64_t> sample_without_replacement(std::int64_t n,
                                                            std::int64_t m,
                                                            Rng& rng) {
    if (m < 0 || m > n) throw std::invalid_argument("sample size out of range");
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < m; ++i) {
        const std::int64_t j = i + rng.next_index(n - i);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(m));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace burnsim
