#pragma once

// Shared toy rules and an independent brute-force replay used as the oracle
// for the library's simulators. The brute replay deliberately reimplements
// the dynamics with plain dense arithmetic so it shares no code with the
// implementation it checks.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "burnsim/core.hpp"

namespace testutil {

struct IdEvent {
    std::int64_t id = 0;
};

inline std::vector<IdEvent> id_events(std::int64_t n) {
    std::vector<IdEvent> events(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) events[static_cast<std::size_t>(i)].id = i;
    return events;
}

// Single campaign, scripted per-event spends.
struct StreamRule {
    std::vector<double> xs;
    double bound = 1.0;

    std::size_t campaign_count() const { return 1; }
    double per_event_bound() const { return bound; }

    template <typename Visit>
    void evaluate(const IdEvent& e, const burnsim::ActivationVector& a, Visit&& visit) const {
        const double x = xs[static_cast<std::size_t>(e.id)];
        if (a.active(0) && x != 0.0) visit(0, x);
    }
};

// Two campaigns with a hard coupling: (0.3, 0.2) while campaign 0 is active,
// (0, 0.4) once campaign 0 is gone, nothing when both are gone.
struct CoupledPairRule {
    std::size_t campaign_count() const { return 2; }
    double per_event_bound() const { return 0.4; }

    template <typename E, typename Visit>
    void evaluate(const E&, const burnsim::ActivationVector& a, Visit&& visit) const {
        if (a.active(0)) {
            visit(0, 0.3);
            if (a.active(1)) visit(1, 0.2);
        } else if (a.active(1)) {
            visit(1, 0.4);
        }
    }
};

// K campaigns, constant independent rates, no coupling at all.
struct IndependentRule {
    std::vector<double> rates;

    std::size_t campaign_count() const { return rates.size(); }
    double per_event_bound() const {
        double m = 0.0;
        for (double r : rates)
            if (r > m) m = r;
        return m;
    }

    template <typename E, typename Visit>
    void evaluate(const E&, const burnsim::ActivationVector& a, Visit&& visit) const {
        for (std::size_t c = 0; c < rates.size(); ++c)
            if (a.active(c) && rates[c] != 0.0) visit(c, rates[c]);
    }
};

struct BruteResult {
    std::vector<double> final_spends;
    std::vector<std::optional<std::int64_t>> capping_times;
};

template <typename E, typename R>
BruteResult brute_replay(std::span<const E> events, std::span<const double> budgets,
                         const R& rule) {
    const std::size_t k = budgets.size();
    BruteResult out;
    out.final_spends.assign(k, 0.0);
    out.capping_times.assign(k, std::nullopt);
    std::vector<double> f(k, 0.0);
    std::vector<bool> active(k, true);
    for (std::int64_t n = 1; n <= static_cast<std::int64_t>(events.size()); ++n) {
        burnsim::ActivationVector a = burnsim::ActivationVector::none_active(k);
        for (std::size_t c = 0; c < k; ++c) a.set_active(c, active[c]);
        burnsim::eval_into(rule, events[static_cast<std::size_t>(n - 1)], a, f);
        for (std::size_t c = 0; c < k; ++c) out.final_spends[c] += f[c];
        for (std::size_t c = 0; c < k; ++c)
            if (active[c] && out.final_spends[c] >= budgets[c]) {
                active[c] = false;
                out.capping_times[c] = n;
            }
    }
    return out;
}

}  // namespace testutil
