#pragma once

// Segment-wise simulation: repeatedly estimate the per-event spend rate under
// the current activation, predict which active campaign exhausts its budget
// first, jump straight to that predicted capping ordinal, and sum the whole
// segment's spends in parallel under the frozen activation. One campaign is
// retired per iteration, so there are at most K segments.
//
// With full access to the event set and the exchangeable-order model, the
// conditional expectation of the next event's spend is exactly the arithmetic
// mean over the events not yet consumed; that is the default rate basis.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "burnsim/chunked.hpp"
#include "burnsim/core.hpp"
#include "burnsim/rng.hpp"

namespace burnsim {

enum class RateBasisKind {
    exact_remaining_mean,  // mean over events not yet consumed (exact)
    subsampled,            // mean over a uniform subsample of the remainder
    consumed_prefix_mean,  // mean over events already consumed (comparison basis)
};

struct RateBasis {
    RateBasisKind kind = RateBasisKind::exact_remaining_mean;
    double rate = 1.0;       // subsampled only
    std::uint64_t seed = 0;  // subsampled only

    static RateBasis exact() { return {}; }
    static RateBasis subsample(double rate, std::uint64_t seed) {
        return {RateBasisKind::subsampled, rate, seed};
    }
    static RateBasis prefix() { return {RateBasisKind::consumed_prefix_mean, 1.0, 0}; }
};

struct RateEstimate {
    std::vector<double> per_event;  // expected spend per event, per campaign
    std::int64_t sample_size = 0;   // events the mean was taken over
};

// Expected next-event spend under `act`, given that `consumed` events have
// been replayed. Inactive campaigns always get rate zero because the rule
// cannot spend for them.
template <typename E, typename R>
    requires auction_rule_for<R, E>
RateEstimate estimate_mean_rate(std::span<const E> events, std::int64_t consumed,
                                const ActivationVector& act, const R& rule,
                                const RateBasis& basis = {}, int threads = 1) {
    const auto n_events = static_cast<std::int64_t>(events.size());
    if (consumed < 0 || consumed >= n_events)
        throw std::invalid_argument("no remaining events to estimate a rate from");
    const std::size_t k = rule.campaign_count();

    RateEstimate out;
    switch (basis.kind) {
        case RateBasisKind::exact_remaining_mean: {
            out.per_event = segment_spend_sum(events, rule, act, consumed + 1, n_events, threads);
            out.sample_size = n_events - consumed;
            break;
        }
        case RateBasisKind::subsampled: {
            if (!(basis.rate > 0.0 && basis.rate <= 1.0))
                throw std::invalid_argument("subsample rate must lie in (0,1]");
            const std::int64_t remaining = n_events - consumed;
            std::int64_t m = std::llround(basis.rate * static_cast<double>(remaining));
            if (m < 1) m = 1;
            if (m > remaining) m = remaining;
            Rng rng(substream(basis.seed, /*tag=*/0x5ab5a3f1ull, static_cast<std::uint64_t>(consumed)));
            const auto picked = sample_without_replacement(remaining, m, rng);
            std::vector<double> sum(k, 0.0);
            for (std::int64_t off : picked) {
                const E& e = events[static_cast<std::size_t>(consumed + off)];
                rule.evaluate(e, act, [&](std::size_t c, double amount) { sum[c] += amount; });
            }
            out.per_event = std::move(sum);
            out.sample_size = m;
            break;
        }
        case RateBasisKind::consumed_prefix_mean: {
            // Nothing consumed yet: fall back to the mean over everything,
            // which is the exact unconditional expectation.
            const std::int64_t last = consumed == 0 ? n_events : consumed;
            out.per_event = segment_spend_sum(events, rule, act, 1, last, threads);
            out.sample_size = last;
            break;
        }
    }
    const auto denom = static_cast<double>(out.sample_size);
    for (double& v : out.per_event) v /= denom;
    return out;
}

struct ParallelSegment {
    std::int64_t first_n = 0;
    std::int64_t last_n = 0;
    ActivationVector activation;
    // Campaign predicted to cap at last_n; absent for a run-out segment where
    // no active campaign had a positive rate or the horizon ended first.
    std::optional<std::size_t> predicted_capper;
};

struct ParallelSimReport {
    Trajectory trajectory;
    std::vector<ParallelSegment> segments;
    std::int64_t iterations = 0;
};

template <typename E, typename R>
    requires auction_rule_for<R, E>
ParallelSimReport parallel_simulate(std::span<const E> events, const CampaignSet& campaigns,
                                    const R& rule, const RateBasis& basis = {},
                                    int threads = 1) {
    if (events.empty()) throw std::invalid_argument("parallel_simulate needs events");
    if (rule.campaign_count() != campaigns.size())
        throw ContractViolation("rule campaign count does not match campaign set");

    const std::size_t k = campaigns.size();
    const auto n_events = static_cast<std::int64_t>(events.size());

    ParallelSimReport report;
    report.trajectory.capping_times.assign(k, std::nullopt);
    std::vector<double> spends(k, 0.0);
    ActivationVector act = ActivationVector::all_active(k);
    std::int64_t consumed = 0;

    while (consumed < n_events && act.any_active()) {
        const RateEstimate rate = estimate_mean_rate(events, consumed, act, rule, basis, threads);

        // Predicted first capper: smallest expected events-to-budget ratio
        // among active campaigns with positive rate; ties to the lowest index.
        std::optional<std::size_t> capper;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (!act.active(c) || !(rate.per_event[c] > 0.0)) continue;
            const double ratio = (campaigns.budget(c) - spends[c]) / rate.per_event[c];
            if (!capper || ratio < best_ratio) {
                capper = c;
                best_ratio = ratio;
            }
        }

        if (!capper) {
            // No active campaign can ever cap under this activation: run the
            // remaining events in one frozen segment and stop.
            const auto seg_sum = segment_spend_sum(events, rule, act, consumed + 1, n_events, threads);
            for (std::size_t c = 0; c < k; ++c) spends[c] += seg_sum[c];
            report.segments.push_back({consumed + 1, n_events, act, std::nullopt});
            ++report.iterations;
            consumed = n_events;
            break;
        }

        // Advance by the expected number of events until the capper's budget
        // runs out; always at least one event so the loop progresses even
        // when the prediction says "already due".
        const std::int64_t remaining = n_events - consumed;
        // Accumulated rounding in the spend sums can leave an integer-valued
        // ratio a few ulps short; nudge before flooring. A one-event slip is
        // already inside the method's error budget.
        const double floored = std::floor(best_ratio * (1.0 + 1e-9) + 1e-9);
        std::int64_t steps;
        bool capped_within_horizon;
        if (floored > static_cast<double>(remaining)) {
            steps = remaining;  // horizon ends before the predicted capping
            capped_within_horizon = false;
        } else {
            steps = static_cast<std::int64_t>(floored);
            if (steps < 1) steps = 1;
            capped_within_horizon = true;
        }
        const std::int64_t next = consumed + steps;

        const auto seg_sum = segment_spend_sum(events, rule, act, consumed + 1, next, threads);
        for (std::size_t c = 0; c < k; ++c) spends[c] += seg_sum[c];
        report.segments.push_back({consumed + 1, next, act,
                                   capped_within_horizon ? capper : std::nullopt});

        if (capped_within_horizon) {
            report.trajectory.capping_times[*capper] = next;
            report.trajectory.capping_order.push_back({*capper, next});
        }
        act = deactivate(act, *capper);
        consumed = next;
        ++report.iterations;
    }

    report.trajectory.final_spends = std::move(spends);
    return report;
}

}  // namespace burnsim
