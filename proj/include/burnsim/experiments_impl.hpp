#pragma once

// run_experiment body; included at the end of experiments.hpp.

#include <filesystem>

namespace burnsim {

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

inline void write_summary(ExperimentResult& result, const ExperimentSpec& spec,
                          nlohmann::json results_block) {
    nlohmann::json j = spec_to_json(spec);
    j["results"] = std::move(results_block);
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : result.files) files.push_back(f.filename().string());
    j["files"] = files;
    const auto path = spec.out_dir / (spec.name + "_summary.json");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    result.files.push_back(path);
    result.summary = std::move(j);
}

inline std::filesystem::path rep_path(const ExperimentSpec& spec, std::size_t rep,
                                      const std::string& suffix = ".csv") {
    return spec.out_dir / (spec.name + "_rep" + std::to_string(rep) + suffix);
}

// --------------------------- sampling-error -------------------------------

inline void run_sampling_error(const ExperimentSpec& spec, ExperimentResult& result) {
    const auto rhos = spec.get_f64_list("rhos", "0.001,0.01,0.1,1");
    std::map<double, std::vector<double>> headline;  // rho -> per-rep error
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        const auto setup = make_synthetic_setup(spec, spec.seeds[rep]);
        const std::span<const SyntheticEvent> events(setup.events);
        const Trajectory truth = simulate_sequential(events, setup.campaigns, *setup.rule, {});
        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"rho", "campaign", "truth_spend", "naive_spend", "rel_err"});
        const std::size_t k = setup.campaigns.size();
        for (std::size_t ri = 0; ri < rhos.size(); ++ri) {
            const Trajectory naive =
                naive_sampled_sequential(events, setup.campaigns, *setup.rule, rhos[ri],
                                         substream(spec.seeds[rep], 0x7a17ull, ri));
            for (std::size_t c = 0; c < k; ++c) {
                std::string err;
                if (truth.final_spends[c] > 0.0) {
                    const double e = std::abs(naive.final_spends[c] - truth.final_spends[c]) /
                                     truth.final_spends[c];
                    err = fmt_double(e);
                    if (c == k - 1) headline[rhos[ri]].push_back(e);
                }
                csv.row({fmt_double(rhos[ri]), fmt_int(static_cast<std::int64_t>(c)),
                         fmt_double(truth.final_spends[c]), fmt_double(naive.final_spends[c]),
                         err});
            }
        }
    }
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    result.files.push_back(curve_path);
    curve.row({"rho", "median_headline_err", "min_headline_err", "max_headline_err"});
    nlohmann::json medians;
    for (const auto& [rho, errs] : headline) {
        auto sorted = errs;
        std::sort(sorted.begin(), sorted.end());
        curve.row({fmt_double(rho), fmt_double(median_of(errs)), fmt_double(sorted.front()),
                   fmt_double(sorted.back())});
        medians[fmt_double(rho)] = median_of(errs);
    }
    write_summary(result, spec, {{"median_headline_err_by_rho", medians}});
}

// ----------------------- parallel-vs-sequential ---------------------------

inline RateBasis basis_from_spec(const ExperimentSpec& spec, std::uint64_t seed) {
    const std::string kind = spec.get_str("basis", "exact");
    if (kind == "exact") return RateBasis::exact();
    if (kind == "prefix") return RateBasis::prefix();
    if (kind == "subsampled")
        return RateBasis::subsample(spec.get_f64("basis_rate", 0.1), substream(seed, 0xba5ull));
    throw std::invalid_argument("unknown rate basis: " + kind);
}

inline void run_parallel_vs_sequential(const ExperimentSpec& spec, ExperimentResult& result) {
    std::vector<double> max_errs, median_errs, weighted_errs;
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    curve.row({"rep", "max_rel_err", "median_rel_err", "weighted_err", "iterations"});
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        const auto setup = make_synthetic_setup(spec, spec.seeds[rep]);
        const std::span<const SyntheticEvent> events(setup.events);
        const Trajectory truth = simulate_sequential(events, setup.campaigns, *setup.rule, {});
        const ParallelSimReport par =
            parallel_simulate(events, setup.campaigns, *setup.rule,
                              basis_from_spec(spec, spec.seeds[rep]), spec.threads);
        const TrajectoryComparison cmp = compare_trajectories(truth, par.trajectory);
        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"campaign", "budget", "sequential_spend", "parallel_spend", "rel_err",
                 "sequential_cap", "parallel_cap"});
        for (std::size_t c = 0; c < setup.campaigns.size(); ++c)
            csv.row({fmt_int(static_cast<std::int64_t>(c)),
                     fmt_double(setup.campaigns.budget(c)), fmt_double(truth.final_spends[c]),
                     fmt_double(par.trajectory.final_spends[c]), opt_cell(cmp.rel_err[c]),
                     opt_cell(truth.capping_times[c]), opt_cell(par.trajectory.capping_times[c])});
        curve.row({fmt_int(static_cast<std::int64_t>(rep)), fmt_double(cmp.max_rel_err),
                   fmt_double(cmp.median_rel_err),
                   fmt_double(cmp.weighted.weighted_relative_error),
                   fmt_int(par.iterations)});
        max_errs.push_back(cmp.max_rel_err);
        median_errs.push_back(cmp.median_rel_err);
        weighted_errs.push_back(cmp.weighted.weighted_relative_error);
    }
    result.files.push_back(curve_path);
    write_summary(result, spec,
                  {{"median_max_rel_err", median_of(max_errs)},
                   {"median_median_rel_err", median_of(median_errs)},
                   {"median_weighted_err", median_of(weighted_errs)}});
}

// --------------------------- pi-convergence -------------------------------

inline void run_pi_convergence(const ExperimentSpec& spec, ExperimentResult& result) {
    std::vector<double> final_violations, final_pi_errors;
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    curve.row({"rep", "final_violation", "mean_abs_pi_error_vs_oracle"});
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        const auto setup = make_synthetic_setup(spec, spec.seeds[rep]);
        const std::span<const SyntheticEvent> events(setup.events);
        const EstimatorConfig est_cfg = estimator_from_spec(spec, spec.seeds[rep]);
        const EstimateResult est =
            estimate_capping_fractions(events, setup.campaigns, *setup.rule, est_cfg);
        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"sweep", "campaign", "pi", "residual"});
        for (std::size_t s = 0; s < est.trace.sweeps.size(); ++s) {
            const SweepStats& stats = est.trace.sweeps[s];
            for (std::size_t c = 0; c < stats.fractions.size(); ++c)
                csv.row({fmt_int(static_cast<std::int64_t>(s + 1)),
                         fmt_int(static_cast<std::int64_t>(c)), fmt_double(stats.fractions[c]),
                         fmt_double(stats.residual[c])});
        }
        const Trajectory truth = simulate_sequential(events, setup.campaigns, *setup.rule, {});
        double abs_err = 0.0;
        for (std::size_t c = 0; c < setup.campaigns.size(); ++c) {
            const double oracle =
                truth.capping_times[c]
                    ? static_cast<double>(*truth.capping_times[c]) /
                          static_cast<double>(setup.cfg().n_events)
                    : 1.0;
            abs_err += std::abs(est.fractions[c] - oracle);
        }
        abs_err /= static_cast<double>(setup.campaigns.size());
        const double violation = est.trace.sweeps.back().violation;
        curve.row({fmt_int(static_cast<std::int64_t>(rep)), fmt_double(violation),
                   fmt_double(abs_err)});
        final_violations.push_back(violation);
        final_pi_errors.push_back(abs_err);
    }
    result.files.push_back(curve_path);
    write_summary(result, spec,
                  {{"median_final_violation", median_of(final_violations)},
                   {"median_pi_error", median_of(final_pi_errors)}});
}

// ---------------------------- s2a-vs-truth --------------------------------

inline void run_s2a_vs_truth(const ExperimentSpec& spec, ExperimentResult& result) {
    std::vector<double> weighted_errs;
    std::size_t all_pass_count = 0;
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    curve.row({"rep", "weighted_err", "max_rel_err", "all_flags_pass", "evals_estimation",
               "evals_aggregation", "evals_refinement"});
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        const auto setup = make_synthetic_setup(spec, spec.seeds[rep]);
        const std::span<const SyntheticEvent> events(setup.events);
        const Trajectory truth = simulate_sequential(events, setup.campaigns, *setup.rule, {});
        S2aConfig cfg;
        cfg.estimator = estimator_from_spec(spec, spec.seeds[rep]);
        cfg.refine = spec.get_bool("refine", true);
        cfg.window_frac = spec.get_f64("window_frac", 0.05);
        cfg.survive_margin = spec.get_f64("survive_margin", 0.005);
        cfg.threads = spec.threads;
        const S2aReport report = sort2aggregate(events, setup.campaigns, *setup.rule, cfg);
        const TrajectoryComparison cmp = compare_trajectories(truth, report.trajectory);

        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"campaign", "budget", "truth_spend", "s2a_spend", "rel_err", "truth_cap",
                 "s2a_cap"});
        for (std::size_t c = 0; c < setup.campaigns.size(); ++c)
            csv.row({fmt_int(static_cast<std::int64_t>(c)),
                     fmt_double(setup.campaigns.budget(c)), fmt_double(truth.final_spends[c]),
                     fmt_double(report.trajectory.final_spends[c]), opt_cell(cmp.rel_err[c]),
                     opt_cell(truth.capping_times[c]),
                     opt_cell(report.trajectory.capping_times[c])});
        const auto flags_path = rep_path(spec, rep, "_flags.csv");
        CsvWriter flags(flags_path);
        result.files.push_back(flags_path);
        flags.row({"campaign", "time", "reconstructed", "budget", "discrepancy",
                   "crossing_found", "pass"});
        for (const BoundaryCheck& check : report.checks)
            flags.row({fmt_int(static_cast<std::int64_t>(check.campaign)), fmt_int(check.time),
                       fmt_double(check.reconstructed), fmt_double(check.budget),
                       fmt_double(check.discrepancy), check.crossing_found ? "1" : "0",
                       check.pass ? "1" : "0"});
        curve.row({fmt_int(static_cast<std::int64_t>(rep)),
                   fmt_double(cmp.weighted.weighted_relative_error), fmt_double(cmp.max_rel_err),
                   report.all_checks_pass ? "1" : "0",
                   fmt_int(static_cast<std::int64_t>(report.evals_estimation)),
                   fmt_int(static_cast<std::int64_t>(report.evals_aggregation)),
                   fmt_int(static_cast<std::int64_t>(report.evals_refinement))});
        weighted_errs.push_back(cmp.weighted.weighted_relative_error);
        all_pass_count += report.all_checks_pass ? 1 : 0;
    }
    result.files.push_back(curve_path);
    write_summary(result, spec,
                  {{"median_weighted_err", median_of(weighted_errs)},
                   {"reps_all_flags_pass", all_pass_count}});
}

// ------------------------------ day-shift ---------------------------------

inline void run_day_shift(const ExperimentSpec& spec, ExperimentResult& result) {
    KeywordModel model;
    const std::string log_path = spec.get_str("bidlog", "");
    const auto day = static_cast<std::int32_t>(spec.get_i64("day", 1));
    if (!log_path.empty()) {
        model = build_keyword_model(load_bid_log(log_path), day);
    } else {
        BidLogFixtureConfig fix;
        fix.n_keywords = static_cast<std::size_t>(spec.get_i64("keywords", 300));
        fix.n_advertisers = static_cast<std::size_t>(spec.get_i64("advertisers", 40));
        fix.day = day;
        fix.seed = static_cast<std::uint64_t>(spec.get_i64("fixture_seed", 90210));
        model = build_keyword_model(make_bidlog_fixture(fix), day);
    }

    DayShiftConfig base_cfg;
    base_cfg.n_day1 = spec.get_i64("n1", 20000);
    base_cfg.n_day2 = spec.get_i64("n2", 30000);
    base_cfg.refine = spec.get_bool("refine", true);
    base_cfg.threads = spec.threads;

    const std::string budget_raw = spec.get_str("budget", "auto");
    if (budget_raw == "auto") {
        // Uniform budget sized so day-two contention is real: a bit below the
        // even split of the expected day-two clearing spend.
        double expected_winner_bid = 0.0;
        for (std::size_t w = 0; w < model.frequencies.size(); ++w)
            if (!model.bids[w].empty())
                expected_winner_bid += model.frequencies[w] * model.bids[w].front().bid;
        base_cfg.budget = 0.8 * expected_winner_bid * static_cast<double>(base_cfg.n_day2) /
                          static_cast<double>(model.n_advertisers);
    } else {
        base_cfg.budget = std::stod(budget_raw);
    }

    std::vector<double> err_a, err_b, err_s;
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    curve.row({"rep", "err_as_is", "err_rescaled", "err_s2a", "s2a_flags_pass"});
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        DayShiftConfig cfg = base_cfg;
        cfg.seed = spec.seeds[rep];
        cfg.estimator = estimator_from_spec(spec, spec.seeds[rep]);
        const DayShiftReport report = day_shift_experiment(model, cfg);

        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"campaign", "budget", "day1_spend", "day2_truth", "as_is", "rescaled", "s2a",
                 "warm_start"});
        const std::size_t k = report.day2_truth.final_spends.size();
        for (std::size_t c = 0; c < k; ++c)
            csv.row({fmt_int(static_cast<std::int64_t>(c)), fmt_double(cfg.budget),
                     fmt_double(report.day1.final_spends[c]),
                     fmt_double(report.day2_truth.final_spends[c]),
                     fmt_double(report.predicted_as_is[c]),
                     fmt_double(report.predicted_rescaled[c]),
                     fmt_double(report.predicted_s2a[c]), fmt_double(report.warm_start[c])});

        // Cumulative weighted error, campaigns ordered by true day-two spend.
        std::vector<std::size_t> order(k);
        for (std::size_t c = 0; c < k; ++c) order[c] = c;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double sa = report.day2_truth.final_spends[a];
            const double sb = report.day2_truth.final_spends[b];
            return sa != sb ? sa > sb : a < b;
        });
        double total = 0.0;
        for (double s : report.day2_truth.final_spends) total += s;
        const auto cum_path = rep_path(spec, rep, "_cumulative.csv");
        CsvWriter cum(cum_path);
        result.files.push_back(cum_path);
        cum.row({"rank", "campaign", "cum_as_is", "cum_rescaled", "cum_s2a"});
        double ca = 0.0, cb = 0.0, cs = 0.0;
        std::size_t rank = 0;
        for (std::size_t c : order) {
            const double truth = report.day2_truth.final_spends[c];
            if (truth > 0.0 && total > 0.0) {
                ca += std::abs(report.predicted_as_is[c] - truth) / total;
                cb += std::abs(report.predicted_rescaled[c] - truth) / total;
                cs += std::abs(report.predicted_s2a[c] - truth) / total;
            }
            cum.row({fmt_int(static_cast<std::int64_t>(rank++)),
                     fmt_int(static_cast<std::int64_t>(c)), fmt_double(ca), fmt_double(cb),
                     fmt_double(cs)});
        }

        curve.row({fmt_int(static_cast<std::int64_t>(rep)),
                   fmt_double(report.error_as_is.weighted_relative_error),
                   fmt_double(report.error_rescaled.weighted_relative_error),
                   fmt_double(report.error_s2a.weighted_relative_error),
                   report.s2a.all_checks_pass ? "1" : "0"});
        err_a.push_back(report.error_as_is.weighted_relative_error);
        err_b.push_back(report.error_rescaled.weighted_relative_error);
        err_s.push_back(report.error_s2a.weighted_relative_error);
    }
    result.files.push_back(curve_path);
    write_summary(result, spec,
                  {{"median_err_as_is", median_of(err_a)},
                   {"median_err_rescaled", median_of(err_b)},
                   {"median_err_s2a", median_of(err_s)},
                   {"per_rep_err_as_is", err_a},
                   {"per_rep_err_rescaled", err_b},
                   {"per_rep_err_s2a", err_s},
                   {"budget", base_cfg.budget}});
}

// ------------------------------ hoeffding ---------------------------------

inline void run_hoeffding(const ExperimentSpec& spec, ExperimentResult& result) {
    std::size_t violations = 0;
    std::map<double, double> worst_tail;
    std::map<double, double> bound_at;
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        const auto setup = make_synthetic_setup(spec, spec.seeds[rep]);
        const std::span<const SyntheticEvent> events(setup.events);
        const std::int64_t prefix =
            spec.get_i64("prefix_len", setup.cfg().n_events / 2);
        const auto perms = spec.get_i64("permutations", 1000);
        const HoeffdingResult suite = hoeffding_suite(
            events, *setup.rule, ActivationVector::all_active(setup.campaigns.size()),
            std::nullopt, prefix, {}, perms, substream(spec.seeds[rep], 0x40efull));
        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"t", "empirical_tail", "bound"});
        for (const HoeffdingRow& row : suite.rows) {
            csv.row({fmt_double(row.t), fmt_double(row.empirical_tail), fmt_double(row.bound)});
            if (row.empirical_tail > row.bound) ++violations;
            auto it = worst_tail.find(row.t);
            if (it == worst_tail.end() || it->second < row.empirical_tail)
                worst_tail[row.t] = row.empirical_tail;
            bound_at[row.t] = row.bound;
        }
    }
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    result.files.push_back(curve_path);
    curve.row({"t", "max_empirical_tail", "bound"});
    for (const auto& [t, tail] : worst_tail)
        curve.row({fmt_double(t), fmt_double(tail), fmt_double(bound_at[t])});
    write_summary(result, spec, {{"bound_violations", violations}});
}

// ------------------------------ smoothness --------------------------------

inline void run_smoothness(const ExperimentSpec& spec, ExperimentResult& result) {
    const auto gammas = spec.get_f64_list("gammas", "0,0.5,1");
    const auto epsilons = spec.get_f64_list("epsilons", "0.01,0.1");
    const auto trials = spec.get_i64("trials", 500);
    std::map<std::pair<double, double>, std::vector<double>> freq;
    for (std::size_t rep = 0; rep < spec.seeds.size(); ++rep) {
        const auto setup = make_synthetic_setup(spec, spec.seeds[rep]);
        const std::span<const SyntheticEvent> events(setup.events);
        CsvWriter csv(rep_path(spec, rep));
        result.files.push_back(rep_path(spec, rep));
        csv.row({"gamma", "epsilon", "violation_frequency"});
        for (double g : gammas)
            for (double eps : epsilons) {
                const double f = check_smoothness(events, *setup.rule, g, eps, trials,
                                                  substream(spec.seeds[rep], 0x57100ull));
                csv.row({fmt_double(g), fmt_double(eps), fmt_double(f)});
                freq[{g, eps}].push_back(f);
            }
    }
    const auto curve_path = spec.out_dir / (spec.name + "_curve.csv");
    CsvWriter curve(curve_path);
    result.files.push_back(curve_path);
    curve.row({"gamma", "epsilon", "median_violation_frequency"});
    for (const auto& [key, v] : freq)
        curve.row({fmt_double(key.first), fmt_double(key.second), fmt_double(median_of(v))});
    write_summary(result, spec, {});
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), spec.name) == names.end())
        throw std::invalid_argument("unknown experiment: " + spec.name);
    if (spec.seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    std::filesystem::create_directories(spec.out_dir);

    ExperimentResult result;
    if (spec.name == "sampling-error")
        detail::run_sampling_error(spec, result);
    else if (spec.name == "parallel-vs-sequential")
        detail::run_parallel_vs_sequential(spec, result);
    else if (spec.name == "pi-convergence")
        detail::run_pi_convergence(spec, result);
    else if (spec.name == "s2a-vs-truth")
        detail::run_s2a_vs_truth(spec, result);
    else if (spec.name == "day-shift")
        detail::run_day_shift(spec, result);
    else if (spec.name == "hoeffding")
        detail::run_hoeffding(spec, result);
    else if (spec.name == "smoothness")
        detail::run_smoothness(spec, result);
    return result;
}

}  // namespace burnsim
