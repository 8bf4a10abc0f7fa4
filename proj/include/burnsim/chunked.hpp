#pragma once

// Deterministic chunked reduction.
//
// Every spend sum in the library is bracketed the same way: the event axis is
// cut into fixed-length pieces aligned to a global grid (piece p covers
// 1-based ordinals [p*L+1, (p+1)*L]), each piece is summed left to right, and
// piece partials are folded in piece order. Workers only pick *which* piece
// to compute, never how results combine, so totals are bit-identical for any
// thread count. The sequential replay uses the same bracketing, which is what
// makes "parallel sum over one segment" reproduce it exactly.

#include <atomic>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include "burnsim/core.hpp"

namespace burnsim {

inline constexpr std::int64_t kChunkLen = 4096;

struct ChunkPiece {
    std::int64_t first_n = 0;  // 1-based inclusive
    std::int64_t last_n = 0;
};

// Split [first_n, last_n] at global grid lines. Empty ranges give no pieces.
inline std::vector<ChunkPiece> chunk_pieces(std::int64_t first_n, std::int64_t last_n) {
    std::vector<ChunkPiece> pieces;
    std::int64_t n = first_n;
    while (n <= last_n) {
        const std::int64_t grid_end = ((n - 1) / kChunkLen + 1) * kChunkLen;
        const std::int64_t end = grid_end < last_n ? grid_end : last_n;
        pieces.push_back({n, end});
        n = end + 1;
    }
    return pieces;
}

// Run fn(piece_index) for each index in [0, n_pieces). Work is pulled from an
// atomic counter; fn must write only to its own piece's slot.
template <typename Fn>
void run_pieces(std::size_t n_pieces, int threads, Fn&& fn) {
    if (n_pieces == 0) return;
    const std::size_t workers =
        threads <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(threads), n_pieces);
    if (workers == 1) {
        for (std::size_t p = 0; p < n_pieces; ++p) fn(p);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t p = next.fetch_add(1, std::memory_order_relaxed);
            if (p >= n_pieces) return;
            fn(p);
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

// Sum of f(e_n, act) over ordinals [first_n, last_n] under a frozen
// activation. Deterministic for any thread count.
template <typename E, typename R>
    requires auction_rule_for<R, E>
std::vector<double> segment_spend_sum(std::span<const E> events, const R& rule,
                                      const ActivationVector& act, std::int64_t first_n,
                                      std::int64_t last_n, int threads = 1) {
    const std::size_t k = rule.campaign_count();
    std::vector<double> total(k, 0.0);
    if (first_n > last_n) return total;
    const auto pieces = chunk_pieces(first_n, last_n);
    std::vector<std::vector<double>> partials(pieces.size());
    run_pieces(pieces.size(), threads, [&](std::size_t p) {
        std::vector<double> acc(k, 0.0);
        for (std::int64_t n = pieces[p].first_n; n <= pieces[p].last_n; ++n) {
            rule.evaluate(events[static_cast<std::size_t>(n - 1)], act,
                          [&](std::size_t c, double amount) { acc[c] += amount; });
        }
        partials[p] = std::move(acc);
    });
    for (const auto& part : partials)
        for (std::size_t c = 0; c < k; ++c) total[c] += part[c];
    return total;
}

// Per-campaign running sums with the same bracketing as segment_spend_sum:
// close_chunk_if_boundary(n) must be called after processing ordinal n. The
// visible total (folded chunks + open partial) backs activation checks in the
// sequential replay.
class RunningChunkSums {
public:
    explicit RunningChunkSums(std::size_t k) : folded_(k, 0.0), partial_(k, 0.0) {}

    void add(std::size_t c, double amount) { partial_[c] += amount; }

    void close_chunk_if_boundary(std::int64_t n) {
        if (n % kChunkLen == 0) fold();
    }

    double total(std::size_t c) const { return folded_[c] + partial_[c]; }

    std::vector<double> totals() const {
        std::vector<double> out(folded_.size());
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = folded_[c] + partial_[c];
        return out;
    }

private:
    void fold() {
        for (std::size_t c = 0; c < folded_.size(); ++c) {
            folded_[c] += partial_[c];
            partial_[c] = 0.0;
        }
    }

    std::vector<double> folded_;
    std::vector<double> partial_;
};

}  // namespace burnsim
