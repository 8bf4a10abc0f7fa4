#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "burnsim/sequential.hpp"
#include "test_util.hpp"

using namespace burnsim;
using namespace testutil;

namespace {
struct NegativeRule {
    std::size_t campaign_count() const { return 1; }
    double per_event_bound() const { return 1.0; }
    template <typename Visit>
    void evaluate(const IdEvent&, const ActivationVector&, Visit&& visit) const {
        visit(0, -0.1);
    }
};
}  // namespace

TEST_CASE("four-step coupled replay, worked by hand") {
    // Budgets (0.5, 1.0), four identical events under CoupledPairRule:
    //   n=1: s=(0.3,0.2)   n=2: s=(0.6,0.4) -> campaign 0 caps
    //   n=3: s=(0.6,0.8)   n=4: s=(0.6,1.2) -> campaign 1 caps
    const auto events = id_events(4);
    const CampaignSet campaigns(std::vector<double>{0.5, 1.0});
    const CoupledPairRule rule;
    const Trajectory traj =
        simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});

    CHECK(traj.final_spends[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(traj.final_spends[1] == doctest::Approx(1.2).epsilon(1e-12));
    REQUIRE(traj.capping_times[0].has_value());
    REQUIRE(traj.capping_times[1].has_value());
    CHECK(*traj.capping_times[0] == 2);
    CHECK(*traj.capping_times[1] == 4);
    REQUIRE(traj.capping_order.size() == 2);
    CHECK(traj.capping_order[0] == CappingEntry{0, 2});
    CHECK(traj.capping_order[1] == CappingEntry{1, 4});
}

TEST_CASE("no campaign caps when budgets exceed total spend") {
    const auto events = id_events(50);
    const CoupledPairRule rule;
    // Total uncapped spend is (15, 10); budgets well above.
    const CampaignSet campaigns(std::vector<double>{100.0, 100.0});
    const Trajectory traj =
        simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    CHECK(traj.final_spends[0] == doctest::Approx(50 * 0.3));
    CHECK(traj.final_spends[1] == doctest::Approx(50 * 0.2));
    CHECK_FALSE(traj.capping_times[0].has_value());
    CHECK_FALSE(traj.capping_times[1].has_value());
    CHECK(traj.capping_order.empty());
}

TEST_CASE("zero-spend rule never caps") {
    const auto events = id_events(10);
    StreamRule rule{std::vector<double>(10, 0.0), 1.0};
    const CampaignSet campaigns(std::vector<double>{1.0});
    const Trajectory traj =
        simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    CHECK(traj.final_spends[0] == 0.0);
    CHECK_FALSE(traj.capping_times[0].has_value());
}

TEST_CASE("rule contract violations are rejected") {
    const auto events = id_events(4);
    const CampaignSet campaigns(std::vector<double>{1.0});

    const NegativeRule negative;
    CHECK_THROWS_AS(simulate_sequential(std::span<const IdEvent>(events), campaigns, negative, {}),
                    ContractViolation);

    StreamRule oversized{std::vector<double>(4, 0.5), 0.25};  // increment above declared bound
    CHECK_THROWS_AS(simulate_sequential(std::span<const IdEvent>(events), campaigns, oversized, {}),
                    ContractViolation);
}

TEST_CASE("trivial capped sum") {
    const std::vector<double> xs{3.0, 4.0, 5.0};
    CHECK(trivial_capped_sum(10.0, xs) == 10.0);
    CHECK(trivial_capped_sum(100.0, xs) == 12.0);
    CHECK(trivial_capped_sum(0.0, xs) == 0.0);
    CHECK_THROWS_AS(trivial_capped_sum(-1.0, xs), std::invalid_argument);
}

TEST_CASE("single-budget equivalence: replay vs capped sum") {
    Rng rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const std::int64_t n = 20 + rng.next_index(400);
        StreamRule rule;
        rule.bound = 0.2;
        double total = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double x = 0.2 * rng.next_unit();
            rule.xs.push_back(x);
            total += x;
        }
        const double budget = total * (0.1 + 1.2 * rng.next_unit());
        if (budget <= 0.0) continue;
        const auto events = id_events(n);
        const CampaignSet campaigns(std::vector<double>{budget});
        const Trajectory traj =
            simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
        const double capped = trivial_capped_sum(budget, rule.xs);
        // Replay may overshoot the budget by at most one increment.
        const double c_over_n = rule.bound;
        CHECK(std::abs(traj.final_spends[0] - capped) < c_over_n + 1e-12);
    }
}

TEST_CASE("budget monotonicity: more budget never means less own spend") {
    Rng rng(9);
    for (int trial = 0; trial < 25; ++trial) {
        const auto events = id_events(120);
        const CoupledPairRule rule;
        const double b0 = 2.0 + 20.0 * rng.next_unit();
        const double b1 = 2.0 + 20.0 * rng.next_unit();
        const Trajectory base = simulate_sequential(
            std::span<const IdEvent>(events), CampaignSet({b0, b1}), rule, {});
        const Trajectory larger = simulate_sequential(
            std::span<const IdEvent>(events), CampaignSet({b0 * 1.5, b1}), rule, {});
        CHECK(larger.final_spends[0] >= base.final_spends[0] - 1e-12);
    }
}

TEST_CASE("capping matches a brute-force dense replay") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t n = 50 + rng.next_index(200);
        const auto events = id_events(n);
        const CoupledPairRule rule;
        const std::vector<double> budgets{1.0 + 30.0 * rng.next_unit(),
                                          1.0 + 30.0 * rng.next_unit()};
        const Trajectory traj = simulate_sequential(std::span<const IdEvent>(events),
                                                    CampaignSet(budgets), rule, {});
        const BruteResult brute =
            brute_replay(std::span<const IdEvent>(events), std::span<const double>(budgets), rule);
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(traj.final_spends[c] == doctest::Approx(brute.final_spends[c]).epsilon(1e-12));
            CHECK(traj.capping_times[c] == brute.capping_times[c]);
        }
    }
}

TEST_CASE("checkpoints are recorded on the stride") {
    const auto events = id_events(10);
    const CoupledPairRule rule;
    SequentialConfig cfg;
    cfg.checkpoint_stride = 4;
    const Trajectory traj = simulate_sequential(std::span<const IdEvent>(events),
                                                CampaignSet({100.0, 100.0}), rule, cfg);
    REQUIRE(traj.checkpoints.size() == 2);
    CHECK(traj.checkpoints[0].n == 4);
    CHECK(traj.checkpoints[0].spends[0] == doctest::Approx(1.2));
    CHECK(traj.checkpoints[1].n == 8);
}

TEST_CASE("identical inputs give identical trajectories") {
    const auto events = id_events(300);
    const CoupledPairRule rule;
    const CampaignSet campaigns(std::vector<double>{7.0, 9.0});
    const Trajectory a = simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    const Trajectory b = simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    CHECK(a.final_spends == b.final_spends);
    CHECK(a.capping_times == b.capping_times);
}

TEST_CASE("naive sampling at rho = 1 is the plain replay") {
    const auto events = id_events(64);
    const CoupledPairRule rule;
    const CampaignSet campaigns(std::vector<double>{5.0, 9.0});
    const Trajectory full =
        simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    const Trajectory naive =
        naive_sampled_sequential(std::span<const IdEvent>(events), campaigns, rule, 1.0, 123, {});
    CHECK(naive.final_spends == full.final_spends);
    CHECK(naive.capping_times == full.capping_times);
}

TEST_CASE("naive sampling on a constant stream stays within one scaled increment") {
    // Constant per-event spend x; halving the events and doubling the values
    // shifts the capping overshoot by at most x / rho.
    const std::int64_t n = 1000;
    const double x = 0.03;
    StreamRule rule{std::vector<double>(static_cast<std::size_t>(n), x), 0.1};
    const auto events = id_events(n);
    const CampaignSet campaigns(std::vector<double>{10.035});
    const Trajectory full =
        simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    const Trajectory naive =
        naive_sampled_sequential(std::span<const IdEvent>(events), campaigns, rule, 0.5, 7, {});
    CHECK(std::abs(full.final_spends[0] - naive.final_spends[0]) <= x / 0.5 + 1e-12);
    CHECK_THROWS_AS(
        naive_sampled_sequential(std::span<const IdEvent>(events), campaigns, rule, 0.0, 7, {}),
        std::invalid_argument);
}

TEST_CASE("capping times mark the burnout boundary exactly") {
    // After the capping ordinal the campaign never spends again; before it,
    // it spends on every event (constant positive rates).
    const auto events = id_events(40);
    IndependentRule rule{{0.5, 0.25}};
    const CampaignSet campaigns(std::vector<double>{4.1, 30.0});
    const Trajectory traj =
        simulate_sequential(std::span<const IdEvent>(events), campaigns, rule, {});
    REQUIRE(traj.capping_times[0].has_value());
    const std::int64_t t0 = *traj.capping_times[0];
    CHECK(t0 == 9);  // ceil(4.1 / 0.5)
    CHECK(traj.final_spends[0] == doctest::Approx(0.5 * 9));
    CHECK(traj.final_spends[1] == doctest::Approx(0.25 * 40));
}
