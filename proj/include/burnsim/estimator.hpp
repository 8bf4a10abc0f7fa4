#pragma once

// Stochastic estimation of scaled capping times.
//
// Each campaign gets a fraction pi_c in [0,1]: the share of the horizon it
// stays active (1 = survives to the end). The estimator runs a projected
// stochastic iteration over a fixed event subsample: each event draws one
// uniform u and activates the campaigns with pi_c > u (u is a random scaled
// time point, the active set the campaigns that would survive past it), the
// rule prices the event, and pi moves along the per-event budget surplus
//
//     pi <- clip(pi + eta * (b/N - spend), 0, 1).
//
// A solution satisfies the complementarity conditions: either a campaign
// survives (pi_c = 1) or its expected spend exactly meets its budget
// (residual zero), and the residual is never positive with slack.
//
// Residual scale convention: budget_residual returns the cumulative-scale
// residual G = F(pi) - b where F is the expected total spend over the
// horizon; per-event quantities (the update rule, traced residuals) are that
// divided by N.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "burnsim/chunked.hpp"
#include "burnsim/core.hpp"
#include "burnsim/rng.hpp"

namespace burnsim {

struct EstimatorConfig {
    double rho = 0.01;       // event sampling rate
    double eta = 0.05;       // step size
    int sweeps = 100;        // passes over the sample
    std::uint64_t seed = 0;
    int batch = 1;           // events averaged per projected step
    bool eta_decay = false;  // eta / sqrt(sweep) schedule
    std::optional<std::vector<double>> warm_start;  // default: all ones
    std::optional<double> early_stop_tol;  // stop after 3 quiet sweeps
    // Report the average of the last N sweep iterates instead of the final
    // one (0 = final iterate). Smooths the stationary oscillation of the
    // constant- or slowly-decaying-step iteration.
    int tail_average_sweeps = 0;
    int threads = 1;         // used by batch > 1 evaluation
};

struct SweepStats {
    std::vector<double> fractions;  // pi at end of sweep
    std::vector<double> residual;   // per-event-scale residual estimate, per campaign
    double mean_abs_delta = 0.0;    // mean |b/N - spend| over (event, campaign)
    double violation = 0.0;         // complementarity violation of (pi, residual)
};

struct ConvergenceTrace {
    std::vector<SweepStats> sweeps;
};

struct EstimateResult {
    std::vector<double> fractions;
    ConvergenceTrace trace;
    std::vector<std::int64_t> sample_ordinals;  // 1-based, ascending
    std::uint64_t rule_evaluations = 0;
};

// Violation of the complementarity system for fractions pi and residual G:
// feasibility of pi (pi <= 1), nonpositivity of G, and the product condition
// (1 - pi_c) * G_c = 0. Zero exactly at a solution.
inline double complementarity_violation(std::span<const double> fractions,
                                        std::span<const double> residual) {
    if (fractions.size() != residual.size())
        throw std::invalid_argument("fraction/residual size mismatch");
    double worst = 0.0;
    for (std::size_t c = 0; c < fractions.size(); ++c) {
        const double slack = 1.0 - fractions[c];
        const double g = residual[c];
        double v = std::abs(slack * g);
        if (g > v) v = g;            // positive residual is a violation
        if (-slack > v) v = -slack;  // pi above 1 is a violation
        if (v > worst) worst = v;
    }
    return worst;
}

namespace detail {

// Deterministic per-position batch: activations are drawn from substreams
// keyed by (seed, sweep, position), evaluations can run on any thread, and
// the per-position deltas are folded on a fixed 64-position grid. Identical
// output for any thread count or batch split.
inline constexpr std::int64_t kDeltaFold = 64;

}  // namespace detail

template <typename E, typename R>
    requires auction_rule_for<R, E>
EstimateResult estimate_capping_fractions(std::span<const E> events,
                                          const CampaignSet& campaigns, const R& rule,
                                          const EstimatorConfig& cfg) {
    if (!(cfg.rho > 0.0 && cfg.rho <= 1.0)) throw std::invalid_argument("rho must lie in (0,1]");
    if (!(cfg.eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (cfg.sweeps < 1) throw std::invalid_argument("sweeps must be >= 1");
    if (cfg.batch < 1) throw std::invalid_argument("batch must be >= 1");
    if (rule.campaign_count() != campaigns.size())
        throw ContractViolation("rule campaign count does not match campaign set");

    const std::size_t k = campaigns.size();
    const auto n_events = static_cast<std::int64_t>(events.size());
    std::int64_t sample_size = std::llround(cfg.rho * static_cast<double>(n_events));
    if (sample_size < 1) throw std::invalid_argument("sampling rate selects no events");
    if (sample_size > n_events) sample_size = n_events;

    // Per-event budgets.
    std::vector<double> budget_per_event(k);
    for (std::size_t c = 0; c < k; ++c)
        budget_per_event[c] = campaigns.budget(c) / static_cast<double>(n_events);

    std::vector<double> pi(k, 1.0);
    if (cfg.warm_start) {
        if (cfg.warm_start->size() != k)
            throw std::invalid_argument("warm start size does not match campaign count");
        for (double v : *cfg.warm_start)
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("warm start fractions must lie in [0,1]");
        pi = *cfg.warm_start;
    }

    Rng sample_rng(substream(cfg.seed, /*tag=*/0x7e57a11cull));
    std::vector<std::int64_t> sample = sample_without_replacement(n_events, sample_size, sample_rng);
    EstimateResult result;
    result.sample_ordinals.reserve(sample.size());
    for (std::int64_t i : sample) result.sample_ordinals.push_back(i + 1);

    // Scratch for batched evaluation.
    const auto batch = static_cast<std::int64_t>(cfg.batch);
    std::vector<std::vector<double>> deltas(static_cast<std::size_t>(batch),
                                            std::vector<double>(k, 0.0));
    std::vector<double> fold_delta(k, 0.0);
    std::vector<double> sweep_spend_fold(k, 0.0);

    int quiet_sweeps = 0;
    for (int sweep = 1; sweep <= cfg.sweeps; ++sweep) {
        const double eta =
            cfg.eta_decay ? cfg.eta / std::sqrt(static_cast<double>(sweep)) : cfg.eta;

        std::vector<double> sweep_spend_sum(k, 0.0);  // folded on the 64-grid
        for (double& v : sweep_spend_fold) v = 0.0;
        double sweep_abs_delta = 0.0;
        double fold_abs_delta = 0.0;

        for (std::int64_t pos = 0; pos < sample_size; pos += batch) {
            const std::int64_t count = std::min(batch, sample_size - pos);

            // Workers take blocks of positions; every position keeps its own
            // substream, so the block size only affects scheduling.
            const std::size_t n_blocks =
                static_cast<std::size_t>((count + detail::kDeltaFold - 1) / detail::kDeltaFold);
            run_pieces(n_blocks, cfg.threads, [&](std::size_t block) {
                const std::int64_t lo = static_cast<std::int64_t>(block) * detail::kDeltaFold;
                const std::int64_t hi = std::min<std::int64_t>(lo + detail::kDeltaFold, count);
                ActivationVector a = ActivationVector::none_active(k);
                for (std::int64_t j = lo; j < hi; ++j) {
                    const std::int64_t p = pos + j;
                    Rng rng(substream(cfg.seed, /*tag=*/0xac71f0e5ull,
                                      static_cast<std::uint64_t>(sweep) *
                                              static_cast<std::uint64_t>(sample_size) +
                                          static_cast<std::uint64_t>(p)));
                    // One shared uniform per event: the active set is the
                    // nested family of campaigns whose fraction exceeds u,
                    // the stochastic picture of time-ordered burnout. u acts
                    // as a random scaled time point.
                    const double u = rng.next_unit();
                    for (std::size_t c = 0; c < k; ++c) a.set_active(c, u < pi[c]);
                    std::vector<double>& d = deltas[static_cast<std::size_t>(j)];
                    const E& e =
                        events[static_cast<std::size_t>(sample[static_cast<std::size_t>(p)])];
                    eval_into(rule, e, a, d);
                    for (std::size_t c = 0; c < k; ++c) d[c] = budget_per_event[c] - d[c];
                }
            });
            result.rule_evaluations += static_cast<std::uint64_t>(count);

            // Deterministic fold of the batch deltas, then one projected step.
            for (double& v : fold_delta) v = 0.0;
            double fold_abs = 0.0;
            for (std::int64_t j = 0; j < count; ++j) {
                const std::vector<double>& d = deltas[static_cast<std::size_t>(j)];
                double row_abs = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    fold_delta[c] += d[c];
                    row_abs += std::abs(d[c]);
                    // Spend for the sweep residual: budget_per_event - delta.
                    sweep_spend_fold[c] += budget_per_event[c] - d[c];
                }
                fold_abs += row_abs;
                if ((pos + j + 1) % detail::kDeltaFold == 0) {
                    for (std::size_t c = 0; c < k; ++c) {
                        sweep_spend_sum[c] += sweep_spend_fold[c];
                        sweep_spend_fold[c] = 0.0;
                    }
                    sweep_abs_delta += fold_abs;
                    fold_abs = 0.0;
                }
            }
            fold_abs_delta += fold_abs;

            const double inv = 1.0 / static_cast<double>(count);
            for (std::size_t c = 0; c < k; ++c) {
                double v = pi[c] + eta * fold_delta[c] * inv;
                if (v < 0.0) v = 0.0;
                if (v > 1.0) v = 1.0;
                pi[c] = v;
            }
        }

        // Close the sweep folds.
        for (std::size_t c = 0; c < k; ++c) {
            sweep_spend_sum[c] += sweep_spend_fold[c];
        }
        sweep_abs_delta += fold_abs_delta;

        SweepStats stats;
        stats.fractions = pi;
        stats.residual.resize(k);
        for (std::size_t c = 0; c < k; ++c)
            stats.residual[c] = sweep_spend_sum[c] / static_cast<double>(sample_size) -
                                budget_per_event[c];
        stats.mean_abs_delta =
            sweep_abs_delta / (static_cast<double>(sample_size) * static_cast<double>(k));
        stats.violation = complementarity_violation(pi, stats.residual);
        result.trace.sweeps.push_back(std::move(stats));

        if (cfg.early_stop_tol) {
            if (result.trace.sweeps.back().violation < *cfg.early_stop_tol) {
                if (++quiet_sweeps >= 3) break;
            } else {
                quiet_sweeps = 0;
            }
        }
    }

    if (cfg.tail_average_sweeps > 0) {
        const std::size_t have = result.trace.sweeps.size();
        const std::size_t tail = std::min<std::size_t>(
            static_cast<std::size_t>(cfg.tail_average_sweeps), have);
        std::vector<double> avg(k, 0.0);
        for (std::size_t s = have - tail; s < have; ++s)
            for (std::size_t c = 0; c < k; ++c) avg[c] += result.trace.sweeps[s].fractions[c];
        for (double& v : avg) v /= static_cast<double>(tail);
        result.fractions = std::move(avg);
    } else {
        result.fractions = std::move(pi);
    }
    return result;
}

// Monte-Carlo estimate of the cumulative residual G = F(pi) - b, where F(pi)
// is the expected horizon spend when every campaign is independently active
// with probability pi_c on every event. Deterministic for any thread count.
template <typename E, typename R>
    requires auction_rule_for<R, E>
std::vector<double> budget_residual(std::span<const double> fractions,
                                    std::span<const E> events_sample,
                                    const CampaignSet& campaigns, const R& rule,
                                    std::int64_t horizon_events, std::int64_t mc_draws,
                                    std::uint64_t seed, int threads = 1) {
    if (mc_draws < 1) throw std::invalid_argument("mc_draws must be >= 1");
    if (events_sample.empty()) throw std::invalid_argument("budget_residual needs events");
    if (fractions.size() != campaigns.size())
        throw std::invalid_argument("fraction count does not match campaigns");
    const std::size_t k = campaigns.size();

    constexpr std::int64_t kDrawChunk = 1024;
    const std::size_t n_chunks =
        static_cast<std::size_t>((mc_draws + kDrawChunk - 1) / kDrawChunk);
    std::vector<std::vector<double>> partials(n_chunks);
    run_pieces(n_chunks, threads, [&](std::size_t chunk) {
        const std::int64_t lo = static_cast<std::int64_t>(chunk) * kDrawChunk;
        const std::int64_t hi = std::min<std::int64_t>(lo + kDrawChunk, mc_draws);
        std::vector<double> acc(k, 0.0);
        ActivationVector a = ActivationVector::none_active(k);
        for (std::int64_t j = lo; j < hi; ++j) {
            Rng rng(substream(seed, /*tag=*/0xb0d6e7a1ull, static_cast<std::uint64_t>(j)));
            const auto idx = static_cast<std::size_t>(
                rng.next_index(static_cast<std::int64_t>(events_sample.size())));
            const double u = rng.next_unit();
            for (std::size_t c = 0; c < k; ++c) a.set_active(c, u < fractions[c]);
            rule.evaluate(events_sample[idx], a,
                          [&](std::size_t c, double amount) { acc[c] += amount; });
        }
        partials[chunk] = std::move(acc);
    });

    std::vector<double> g(k, 0.0);
    for (const auto& part : partials)
        for (std::size_t c = 0; c < k; ++c) g[c] += part[c];
    const double scale = static_cast<double>(horizon_events) / static_cast<double>(mc_draws);
    for (std::size_t c = 0; c < k; ++c) g[c] = g[c] * scale - campaigns.budget(c);
    return g;
}

// Estimated capping schedule: campaigns with fraction 1 survive; everyone
// else caps at round(fraction * N), clamped into [1, N]. Sorted by time,
// ties by campaign index. survive_margin widens the survivor band: a
// stochastic iterate sitting at 1 still jitters a step below it whenever a
// single sampled event overshoots the per-event budget.
inline std::vector<CappingEntry> capping_schedule_from_fractions(
    std::span<const double> fractions, std::int64_t n_events, double survive_margin = 0.0) {
    std::vector<CappingEntry> schedule;
    for (std::size_t c = 0; c < fractions.size(); ++c) {
        const double f = fractions[c];
        if (f >= 1.0 - survive_margin) continue;
        std::int64_t t = std::llround(f * static_cast<double>(n_events));
        if (t < 1) t = 1;
        if (t > n_events) t = n_events;
        schedule.push_back({c, t});
    }
    std::sort(schedule.begin(), schedule.end(), [](const CappingEntry& a, const CappingEntry& b) {
        return a.time != b.time ? a.time < b.time : a.campaign < b.campaign;
    });
    return schedule;
}

}  // namespace burnsim
