#pragma once

// Exact event-by-event replay of the spend dynamics. This is the ground
// truth the scalable estimators are judged against: spends start at zero,
// each event adds the rule's increments under the activation derived from
// the previous state, and a campaign deactivates forever once its cumulative
// spend reaches its budget. The capping event itself spends in full, so a
// budget may be overshot by at most one increment.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "burnsim/chunked.hpp"
#include "burnsim/core.hpp"
#include "burnsim/rng.hpp"

namespace burnsim {

struct SequentialConfig {
    // Record a spend snapshot every `checkpoint_stride` events; 0 disables.
    std::int64_t checkpoint_stride = 0;
};

template <typename E, typename R>
    requires auction_rule_for<R, E>
Trajectory simulate_sequential(std::span<const E> events, const CampaignSet& campaigns,
                               const R& rule, const SequentialConfig& cfg = {}) {
    if (events.empty()) throw std::invalid_argument("simulate_sequential needs events");
    if (rule.campaign_count() != campaigns.size())
        throw ContractViolation("rule campaign count does not match campaign set");
    if (cfg.checkpoint_stride < 0) throw std::invalid_argument("checkpoint stride must be >= 0");

    const std::size_t k = campaigns.size();
    const double bound = rule.per_event_bound();
    const auto n_events = static_cast<std::int64_t>(events.size());

    RunningChunkSums spends(k);
    ActivationVector act = ActivationVector::all_active(k);

    Trajectory traj;
    traj.capping_times.assign(k, std::nullopt);

    std::vector<std::size_t> touched;
    touched.reserve(8);

    for (std::int64_t n = 1; n <= n_events; ++n) {
        touched.clear();
        rule.evaluate(events[static_cast<std::size_t>(n - 1)], act,
                      [&](std::size_t c, double amount) {
                          if (c >= k) throw ContractViolation("campaign index out of range");
                          if (amount < 0.0) throw ContractViolation("negative spend increment");
                          if (amount > bound)
                              throw ContractViolation("spend increment above declared bound");
                          if (!act.active(c) && amount != 0.0)
                              throw ContractViolation("inactive campaign spent");
                          if (amount != 0.0) {
                              spends.add(c, amount);
                              touched.push_back(c);
                          }
                      });
        if (!touched.empty()) {
            std::sort(touched.begin(), touched.end());
            for (std::size_t i = 0; i < touched.size(); ++i) {
                const std::size_t c = touched[i];
                if (i > 0 && touched[i - 1] == c) continue;
                if (act.active(c) && spends.total(c) >= campaigns.budget(c)) {
                    act.set_active(c, false);
                    traj.capping_times[c] = n;
                    traj.capping_order.push_back({c, n});
                }
            }
        }
        spends.close_chunk_if_boundary(n);
        if (cfg.checkpoint_stride > 0 && n % cfg.checkpoint_stride == 0)
            traj.checkpoints.push_back({n, spends.totals()});
    }

    traj.final_spends = spends.totals();
    return traj;
}

// Single-budget shortcut: a capped running sum depends on the inputs only
// through their (order-free) total, so min(budget, sum) reproduces the
// sequential recursion S <- min(S + x, B) exactly.
inline double trivial_capped_sum(double budget, std::span<const double> xs) {
    if (budget < 0.0) throw std::invalid_argument("budget must be >= 0");
    double sum = 0.0;
    for (double x : xs) sum += x;
    return budget < sum ? budget : sum;
}

// Baseline estimator: replay a uniform subsample of the events in their
// original order with every increment rescaled by 1/rho. Capping times are
// mapped back to the ordinals of the sampled events in the full sequence.
template <typename E, typename R>
    requires auction_rule_for<R, E>
Trajectory naive_sampled_sequential(std::span<const E> events, const CampaignSet& campaigns,
                                    const R& rule, double rho, std::uint64_t seed,
                                    const SequentialConfig& cfg = {}) {
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in (0,1]");
    const auto n_events = static_cast<std::int64_t>(events.size());
    if (n_events == 0) throw std::invalid_argument("naive_sampled_sequential needs events");

    std::int64_t m = std::llround(rho * static_cast<double>(n_events));
    if (m < 1) m = 1;
    if (m > n_events) m = n_events;

    Rng rng(substream(seed, /*tag=*/0xa1b5a3f1ull));
    const std::vector<std::int64_t> picked = sample_without_replacement(n_events, m, rng);

    std::vector<E> sub;
    sub.reserve(picked.size());
    for (std::int64_t i : picked) sub.push_back(events[static_cast<std::size_t>(i)]);

    const ScaledRule<R> scaled(rule, 1.0 / rho);
    Trajectory traj = simulate_sequential(std::span<const E>(sub), campaigns, scaled, cfg);

    // Translate subsample ordinals back to ordinals in the full sequence.
    auto to_full = [&](std::int64_t sub_n) { return picked[static_cast<std::size_t>(sub_n - 1)] + 1; };
    for (auto& t : traj.capping_times)
        if (t) t = to_full(*t);
    for (auto& entry : traj.capping_order) entry.time = to_full(entry.time);
    for (auto& cp : traj.checkpoints) cp.n = to_full(cp.n);
    return traj;
}

}  // namespace burnsim
