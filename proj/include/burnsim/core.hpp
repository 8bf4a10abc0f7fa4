#pragma once

// Core domain model: campaigns with budgets, binary activation state, the
// auction-rule contract, spend trajectories, and empirical diagnostics for
// the structural assumptions the estimators rely on (bounded per-event
// contribution, bounded cross-campaign impact).
//
// An auction rule is any type R usable as
//
//     r.campaign_count()            -> number of campaigns K
//     r.per_event_bound()           -> inclusive upper bound on any single
//                                      spend increment (the bound constant C
//                                      equals N * per_event_bound())
//     r.evaluate(event, activation, visit)
//
// where evaluate calls visit(c, amount) once per campaign that spends on the
// event. Inactive campaigns must never spend. evaluate must be a pure
// function of (event, activation) so replays can run in any order and in
// parallel.

#include <atomic>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "burnsim/rng.hpp"

namespace burnsim {

struct ContractViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ActivationVector {
public:
    ActivationVector() = default;
    explicit ActivationVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {}

    static ActivationVector all_active(std::size_t k) {
        return ActivationVector(std::vector<std::uint8_t>(k, 1));
    }
    static ActivationVector none_active(std::size_t k) {
        return ActivationVector(std::vector<std::uint8_t>(k, 0));
    }

    std::size_t size() const noexcept { return bits_.size(); }
    bool active(std::size_t c) const { return bits_[c] != 0; }

    void set_active(std::size_t c, bool on) {
        if (c >= bits_.size()) throw std::out_of_range("campaign index out of range");
        bits_[c] = on ? 1 : 0;
    }

    std::size_t active_count() const noexcept {
        std::size_t n = 0;
        for (auto b : bits_) n += b;
        return n;
    }
    bool any_active() const noexcept {
        for (auto b : bits_) if (b) return true;
        return false;
    }

    friend bool operator==(const ActivationVector&, const ActivationVector&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

// a - {c}: bit c forced off, everything else unchanged. Idempotent.
inline ActivationVector deactivate(const ActivationVector& a, std::size_t c) {
    ActivationVector out = a;
    out.set_active(c, false);
    return out;
}

class CampaignSet {
public:
    explicit CampaignSet(std::vector<double> budgets) : budgets_(std::move(budgets)) {
        if (budgets_.empty()) throw std::invalid_argument("need at least one campaign");
        for (double b : budgets_)
            if (!(b > 0.0)) throw std::invalid_argument("budgets must be positive");
    }

    std::size_t size() const noexcept { return budgets_.size(); }
    double budget(std::size_t c) const { return budgets_[c]; }
    std::span<const double> budgets() const noexcept { return budgets_; }

private:
    std::vector<double> budgets_;
};

struct SpendState {
    std::vector<double> spends;
    std::int64_t event_index = 0;  // events consumed so far
};

// Active iff cumulative spend is strictly below budget; equality means capped.
inline ActivationVector activation_from_state(const SpendState& state,
                                              const CampaignSet& campaigns) {
    if (state.spends.size() != campaigns.size())
        throw ContractViolation("spend state does not match campaign count");
    ActivationVector a = ActivationVector::none_active(campaigns.size());
    for (std::size_t c = 0; c < campaigns.size(); ++c)
        a.set_active(c, state.spends[c] < campaigns.budget(c));
    return a;
}

// Constants of the structural assumptions: per-event contribution bound C,
// cross-impact factor gamma holding with probability 1-delta up to slack
// epsilon.
struct AssumptionParams {
    double C;
    double gamma;
    double delta;
    double epsilon;

    AssumptionParams(double C_, double gamma_, double delta_, double epsilon_)
        : C(C_), gamma(gamma_), delta(delta_), epsilon(epsilon_) {
        if (!(C > 0.0) || !(gamma > 0.0) || !(epsilon > 0.0))
            throw std::invalid_argument("C, gamma, epsilon must be positive");
        if (!(delta > 0.0 && delta < 1.0))
            throw std::invalid_argument("delta must lie in (0,1)");
    }
};

// (campaign, 1-based event ordinal) pair; used for realized capping events
// and for estimated capping schedules alike.
struct CappingEntry {
    std::size_t campaign = 0;
    std::int64_t time = 0;

    friend bool operator==(const CappingEntry&, const CappingEntry&) = default;
};

struct SpendCheckpoint {
    std::int64_t n = 0;
    std::vector<double> spends;
};

struct Trajectory {
    std::vector<double> final_spends;
    // First 1-based ordinal n with cumulative spend >= budget; empty if the
    // campaign survives the whole horizon.
    std::vector<std::optional<std::int64_t>> capping_times;
    std::vector<CappingEntry> capping_order;  // sorted by time, ties by campaign
    std::vector<SpendCheckpoint> checkpoints;
};

// ---------------------------------------------------------------------------
// Auction rule contract
// ---------------------------------------------------------------------------

namespace detail {
struct NullVisitor {
    void operator()(std::size_t, double) const noexcept {}
};
}  // namespace detail

template <typename R, typename E>
concept auction_rule_for = requires(const R& r, const E& e, const ActivationVector& a) {
    { r.campaign_count() } -> std::convertible_to<std::size_t>;
    { r.per_event_bound() } -> std::convertible_to<double>;
    r.evaluate(e, a, detail::NullVisitor{});
};

// Dense evaluation: out[c] = f^c(e, a). out must have campaign_count entries.
template <typename R, typename E>
    requires auction_rule_for<R, E>
void eval_into(const R& rule, const E& e, const ActivationVector& a, std::span<double> out) {
    for (double& v : out) v = 0.0;
    rule.evaluate(e, a, [&](std::size_t c, double amount) { out[c] += amount; });
}

// Forwards evaluations while counting them; used for cost accounting.
template <typename R>
class CountingRule {
public:
    CountingRule(const R& inner, std::atomic<std::uint64_t>& counter)
        : inner_(&inner), counter_(&counter) {}

    std::size_t campaign_count() const { return inner_->campaign_count(); }
    double per_event_bound() const { return inner_->per_event_bound(); }

    template <typename E, typename Visit>
    void evaluate(const E& e, const ActivationVector& a, Visit&& visit) const {
        counter_->fetch_add(1, std::memory_order_relaxed);
        inner_->evaluate(e, a, std::forward<Visit>(visit));
    }

private:
    const R* inner_;
    std::atomic<std::uint64_t>* counter_;
};

// Multiplies every increment by a constant factor (importance rescaling for
// subsampled replays).
template <typename R>
class ScaledRule {
public:
    ScaledRule(const R& inner, double scale) : inner_(&inner), scale_(scale) {
        if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
    }

    std::size_t campaign_count() const { return inner_->campaign_count(); }
    double per_event_bound() const { return inner_->per_event_bound() * scale_; }

    template <typename E, typename Visit>
    void evaluate(const E& e, const ActivationVector& a, Visit&& visit) const {
        inner_->evaluate(e, a, [&](std::size_t c, double amount) { visit(c, amount * scale_); });
    }

private:
    const R* inner_;
    double scale_;
};

// ---------------------------------------------------------------------------
// Assumption diagnostics
// ---------------------------------------------------------------------------

// Tightest bound constant consistent with the observed increments:
// N * max f^c(e, a) over all events and the supplied activation sample.
// Any declared C below this value is provably invalid for the instance.
template <typename R, typename E>
    requires auction_rule_for<R, E>
double estimate_C(std::span<const E> events, const R& rule,
                  std::span<const ActivationVector> activations) {
    if (events.empty()) throw std::invalid_argument("estimate_C needs events");
    if (activations.empty()) throw std::invalid_argument("estimate_C needs activation samples");
    double max_increment = 0.0;
    for (const ActivationVector& a : activations) {
        if (a.size() != rule.campaign_count())
            throw ContractViolation("activation size does not match rule");
        for (const E& e : events) {
            rule.evaluate(e, a, [&](std::size_t, double amount) {
                if (amount > max_increment) max_increment = amount;
            });
        }
    }
    return static_cast<double>(events.size()) * max_increment;
}

// Monte-Carlo check of the bounded cross-impact condition: deactivating a
// campaign c over an event window should raise any other campaign c' by at
// most gamma * (what c was spending) + epsilon. Returns the fraction of
// sampled (c, c', window, activation) tuples that violate the inequality --
// an empirical estimate of the failure probability delta.
template <typename R, typename E>
    requires auction_rule_for<R, E>
double check_smoothness(std::span<const E> events, const R& rule, double gamma,
                        double epsilon, std::int64_t trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("trials must be >= 1");
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    if (epsilon < 0.0) throw std::invalid_argument("epsilon must be >= 0");
    const std::size_t k = rule.campaign_count();
    const std::int64_t n_events = static_cast<std::int64_t>(events.size());
    if (n_events == 0) throw std::invalid_argument("check_smoothness needs events");
    if (k < 2) return 0.0;  // no cross pair exists

    Rng rng(substream(seed, /*tag=*/0x500f7a6cull));
    std::int64_t violations = 0;
    for (std::int64_t t = 0; t < trials; ++t) {
        const auto c = static_cast<std::size_t>(rng.next_index(static_cast<std::int64_t>(k)));
        auto cp = static_cast<std::size_t>(rng.next_index(static_cast<std::int64_t>(k) - 1));
        if (cp >= c) ++cp;
        ActivationVector a = ActivationVector::none_active(k);
        for (std::size_t i = 0; i < k; ++i) a.set_active(i, rng.next_unit() < 0.5);
        a.set_active(c, true);  // deactivating an inactive campaign is a no-op
        const ActivationVector a_minus = deactivate(a, c);

        std::int64_t m = rng.next_index(n_events);
        std::int64_t n = rng.next_index(n_events);
        if (m > n) std::swap(m, n);

        double gain_cp = 0.0;     // sum f^c'(e, a - {c})
        double base_cp = 0.0;     // sum f^c'(e, a)
        double removed_c = 0.0;   // sum f^c(e, a)
        for (std::int64_t i = m; i <= n; ++i) {
            const E& e = events[static_cast<std::size_t>(i)];
            rule.evaluate(e, a, [&](std::size_t cc, double amount) {
                if (cc == cp) base_cp += amount;
                if (cc == c) removed_c += amount;
            });
            rule.evaluate(e, a_minus, [&](std::size_t cc, double amount) {
                if (cc == cp) gain_cp += amount;
            });
        }
        if (gain_cp - base_cp > gamma * removed_c + epsilon) ++violations;
    }
    return static_cast<double>(violations) / static_cast<double>(trials);
}

}  // namespace burnsim
