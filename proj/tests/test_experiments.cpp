#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "burnsim/experiments.hpp"
#include "test_util.hpp"

using namespace burnsim;
using namespace testutil;

namespace {

Trajectory make_traj(std::vector<double> spends,
                     std::vector<std::optional<std::int64_t>> caps = {}) {
    Trajectory t;
    t.final_spends = std::move(spends);
    if (caps.empty())
        t.capping_times.assign(t.final_spends.size(), std::nullopt);
    else
        t.capping_times = std::move(caps);
    return t;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("identical trajectories compare to zero") {
    const Trajectory t = make_traj({1.0, 2.0, 3.0});
    const TrajectoryComparison cmp = compare_trajectories(t, t);
    CHECK(cmp.max_rel_err == 0.0);
    CHECK(cmp.weighted.weighted_relative_error == 0.0);
    CHECK(cmp.capping_presence_mismatches == 0);
}

TEST_CASE("uniform scaling gives that relative error everywhere") {
    const Trajectory truth = make_traj({1.0, 2.0, 3.0});
    const Trajectory est = make_traj({1.1, 2.2, 3.3});
    const TrajectoryComparison cmp = compare_trajectories(truth, est);
    CHECK(cmp.weighted.weighted_relative_error == doctest::Approx(0.1));
    CHECK(cmp.max_rel_err == doctest::Approx(0.1));
    CHECK(cmp.median_rel_err == doctest::Approx(0.1));
}

TEST_CASE("toy parallel-estimate errors against the exact replay") {
    // Exact (0.6, 1.2) vs segment estimate (0.3, 1.0): relative errors
    // |0.6-0.3|/0.6 = 0.5 and |1.2-1.0|/1.2 = 1/6, truth in the denominator.
    const Trajectory truth = make_traj({0.6, 1.2}, {{2}, {4}});
    const Trajectory est = make_traj({0.3, 1.0}, {{1}, {3}});
    const TrajectoryComparison cmp = compare_trajectories(truth, est);
    REQUIRE(cmp.rel_err[0].has_value());
    REQUIRE(cmp.rel_err[1].has_value());
    CHECK(*cmp.rel_err[0] == doctest::Approx(0.5));
    CHECK(*cmp.rel_err[1] == doctest::Approx(1.0 / 6.0));
    REQUIRE(cmp.capping_delta[0].has_value());
    CHECK(*cmp.capping_delta[0] == -1);
    CHECK(*cmp.capping_delta[1] == -1);
}

TEST_CASE("zero-spend campaigns are excluded and counted") {
    const Trajectory truth = make_traj({0.0, 2.0});
    const Trajectory est = make_traj({0.5, 2.0});
    const TrajectoryComparison cmp = compare_trajectories(truth, est);
    CHECK_FALSE(cmp.rel_err[0].has_value());
    CHECK(cmp.weighted.zero_spend_excluded == 1);

    const Trajectory capped = make_traj({1.0, 2.0}, {{5}, std::nullopt});
    const TrajectoryComparison mismatch = compare_trajectories(capped, est);
    CHECK(mismatch.capping_presence_mismatches == 1);
}

TEST_CASE("tail bound table on a scripted stream") {
    const std::int64_t n = 2000;
    const auto events = id_events(n);
    StreamRule rule;
    rule.bound = 1.0;
    Rng rng(13);
    for (std::int64_t i = 0; i < n; ++i) rule.xs.push_back(rng.next_unit());

    // t = 0 is vacuous: the tail is certain, the bound is 2.
    const auto zero = hoeffding_suite(std::span<const IdEvent>(events), rule,
                                      ActivationVector::all_active(1), 0, n / 2,
                                      {0.0}, 200, 3);
    CHECK(zero.rows[0].empirical_tail == 1.0);
    CHECK(zero.rows[0].bound == 2.0);

    // A deviation as large as the whole horizon never happens.
    const auto huge = hoeffding_suite(std::span<const IdEvent>(events), rule,
                                      ActivationVector::all_active(1), 0, n / 2,
                                      {static_cast<double>(n)}, 200, 3);
    CHECK(huge.rows[0].empirical_tail == 0.0);

    // Auto grid: every tail under the bound.
    const auto table = hoeffding_suite(std::span<const IdEvent>(events), rule,
                                       ActivationVector::all_active(1), std::nullopt, n / 2,
                                       {}, 1000, 3);
    CHECK(table.rows.size() == 10);
    for (const HoeffdingRow& row : table.rows) CHECK(row.empirical_tail <= row.bound);
    CHECK(table.effective_c > 0.0);

    CHECK_THROWS_AS(hoeffding_suite(std::span<const IdEvent>(events), rule,
                                    ActivationVector::all_active(1), 0, n / 2, {}, 50, 3),
                    std::invalid_argument);
}

TEST_CASE("config text parsing") {
    const auto kv = parse_config_text(
        "# comment\n"
        "experiment = s2a-vs-truth\n"
        "n= 1000 # trailing\n"
        "  rho =0.01\n"
        "bad line without equals\n"
        "\n"
        "empty_value =\n");
    CHECK(kv.at("experiment") == "s2a-vs-truth");
    CHECK(kv.at("n") == "1000");
    CHECK(kv.at("rho") == "0.01");
    CHECK(kv.at("empty_value").empty());
    CHECK(kv.count("bad line without equals") == 0);
}

TEST_CASE("unknown experiments and empty seeds are rejected") {
    ExperimentSpec spec;
    spec.name = "nope";
    spec.seeds = {1};
    spec.out_dir = fresh_dir("burnsim_exp_bad");
    CHECK_THROWS_AS(run_experiment(spec), std::invalid_argument);
    spec.name = "hoeffding";
    spec.seeds = {};
    CHECK_THROWS_AS(run_experiment(spec), std::invalid_argument);
}

TEST_CASE("sampling-error experiment writes its files") {
    ExperimentSpec spec;
    spec.name = "sampling-error";
    spec.params = {{"n", "1200"}, {"k", "4"},        {"d", "3"},
                   {"b_base", "8"}, {"rhos", "0.1,1"}, {"table_cap", "1000000"}};
    spec.seeds = {11, 12};
    spec.out_dir = fresh_dir("burnsim_exp_sampling");
    const ExperimentResult result = run_experiment(spec);
    CHECK(std::filesystem::exists(spec.out_dir / "sampling-error_rep0.csv"));
    CHECK(std::filesystem::exists(spec.out_dir / "sampling-error_rep1.csv"));
    CHECK(std::filesystem::exists(spec.out_dir / "sampling-error_curve.csv"));
    CHECK(std::filesystem::exists(spec.out_dir / "sampling-error_summary.json"));
    CHECK(result.summary["experiment"] == "sampling-error");
    // rho = 1 reproduces the replay exactly: zero headline error.
    CHECK(result.summary["results"]["median_headline_err_by_rho"]["1"] == 0.0);
}

TEST_CASE("experiment outputs are byte-identical across reruns and thread counts") {
    auto make_spec = [&](const std::string& dir, int threads) {
        ExperimentSpec spec;
        spec.name = "parallel-vs-sequential";
        spec.params = {{"n", "3000"}, {"k", "5"}, {"d", "3"}, {"b_base", "auto"},
                       {"target_capped", "0.5"}, {"target_tolerance", "0.2"}};
        spec.seeds = {42};
        spec.out_dir = fresh_dir(dir);
        spec.threads = threads;
        return spec;
    };
    const ExperimentResult a = run_experiment(make_spec("burnsim_exp_det_a", 1));
    const ExperimentResult b = run_experiment(make_spec("burnsim_exp_det_b", 4));
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t i = 0; i < a.files.size(); ++i) {
        const std::string fa = read_text_file(a.files[i]);
        const std::string fb = read_text_file(b.files[i]);
        CHECK(fa == fb);
    }
}

TEST_CASE("s2a-vs-truth experiment reports flags and counts") {
    ExperimentSpec spec;
    spec.name = "s2a-vs-truth";
    spec.params = {{"n", "4000"},  {"k", "6"},      {"d", "3"},
                   {"b_base", "auto"}, {"rho", "0.05"}, {"sweeps", "60"},
                   {"eta", "0.05"}};
    spec.seeds = {5};
    spec.out_dir = fresh_dir("burnsim_exp_s2a");
    const ExperimentResult result = run_experiment(spec);
    CHECK(std::filesystem::exists(spec.out_dir / "s2a-vs-truth_rep0_flags.csv"));
    const auto& curve = result.summary["results"];
    CHECK(curve.contains("median_weighted_err"));
}

TEST_CASE("day-shift experiment emits cumulative error curves") {
    ExperimentSpec spec;
    spec.name = "day-shift";
    spec.params = {{"n1", "2000"},  {"n2", "3000"},     {"keywords", "40"},
                   {"advertisers", "8"}, {"rho", "0.02"}, {"sweeps", "30"}};
    spec.seeds = {3};
    spec.out_dir = fresh_dir("burnsim_exp_dayshift");
    const ExperimentResult result = run_experiment(spec);
    CHECK(std::filesystem::exists(spec.out_dir / "day-shift_rep0_cumulative.csv"));
    CHECK(result.summary["results"].contains("median_err_s2a"));
}

TEST_CASE("pi-convergence trace file has the documented columns") {
    ExperimentSpec spec;
    spec.name = "pi-convergence";
    spec.params = {{"n", "2000"}, {"k", "4"}, {"d", "3"}, {"b_base", "auto"},
                   {"rho", "0.05"}, {"sweeps", "10"}};
    spec.seeds = {8};
    spec.out_dir = fresh_dir("burnsim_exp_pi");
    run_experiment(spec);
    const std::string text = read_text_file(spec.out_dir / "pi-convergence_rep0.csv");
    CHECK(text.rfind("sweep,campaign,pi,residual\n", 0) == 0);
}

TEST_CASE("hoeffding and smoothness experiments run end to end") {
    ExperimentSpec spec;
    spec.name = "hoeffding";
    spec.params = {{"n", "1500"}, {"k", "4"}, {"d", "3"}, {"b_base", "50"},
                   {"permutations", "300"}};
    spec.seeds = {2};
    spec.out_dir = fresh_dir("burnsim_exp_hoeff");
    const ExperimentResult hoeff = run_experiment(spec);
    CHECK(hoeff.summary["results"]["bound_violations"] == 0);

    ExperimentSpec smooth;
    smooth.name = "smoothness";
    smooth.params = {{"n", "800"}, {"k", "4"},   {"d", "3"},
                     {"b_base", "50"}, {"trials", "200"}, {"gammas", "1"},
                     {"epsilons", "0.5"}};
    smooth.seeds = {2};
    smooth.out_dir = fresh_dir("burnsim_exp_smooth");
    const ExperimentResult sm = run_experiment(smooth);
    CHECK(std::filesystem::exists(smooth.out_dir / "smoothness_curve.csv"));
}
