// Command-line front end: generate synthetic instances, replay them with any
// of the simulators, run the estimator, drive the experiment registry, and
// run the assumption diagnostics. Every failure exits nonzero with a one-line
// JSON error on stderr.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "burnsim/burnsim.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace burnsim;

namespace {

struct CommonOpts {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "RNG seed");
    cmd->add_option("--out-dir", opts.out_dir, "output directory");
    cmd->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
}

fs::path ensure_out_dir(const CommonOpts& opts) {
    fs::path dir(opts.out_dir);
    fs::create_directories(dir);
    return dir;
}

void write_trajectory_csv(const fs::path& path, const Trajectory& traj,
                          std::span<const double> budgets) {
    CsvWriter csv(path);
    csv.row({"campaign", "budget", "final_spend", "capping_time"});
    for (std::size_t c = 0; c < traj.final_spends.size(); ++c)
        csv.row({fmt_int(static_cast<std::int64_t>(c)), fmt_double(budgets[c]),
                 fmt_double(traj.final_spends[c]),
                 traj.capping_times[c] ? fmt_int(*traj.capping_times[c]) : std::string()});
}

json trajectory_json(const Trajectory& traj) {
    json caps = json::array();
    for (const auto& t : traj.capping_times)
        caps.push_back(t ? json(*t) : json(nullptr));
    json order = json::array();
    for (const CappingEntry& e : traj.capping_order)
        order.push_back({{"campaign", e.campaign}, {"time", e.time}});
    return {{"final_spends", traj.final_spends},
            {"capping_times", caps},
            {"capping_order", order}};
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    CommonOpts common;
    std::int64_t n = 100000;
    std::int64_t k = 100;
    std::int64_t d = 10;
    std::string b_base = "auto";
    double target_capped = 0.5;
    double target_tolerance = 0.1;
    double noise_scale = 3.0;
    std::string out_file = "instance.bin";
};

int run_generate(const GenerateArgs& args) {
    SyntheticConfig cfg;
    cfg.n_events = args.n;
    cfg.n_campaigns = static_cast<std::size_t>(args.k);
    cfg.dim = static_cast<std::size_t>(args.d);
    cfg.seed = args.common.seed;
    cfg.noise_scale = args.noise_scale;
    if (args.b_base == "auto") {
        cfg.auto_base_budget = true;
        cfg.target_capped_fraction = args.target_capped;
        cfg.target_tolerance = args.target_tolerance;
    } else {
        cfg.base_budget = std::stod(args.b_base);
    }
    const SyntheticInstance inst =
        make_synthetic_instance(cfg, args.common.threads, kDefaultTableCap);
    const fs::path out = ensure_out_dir(args.common) / args.out_file;
    save_instance(inst, out.string());
    json summary = {{"file", out.string()},
                    {"n_events", inst.cfg.n_events},
                    {"n_campaigns", inst.cfg.n_campaigns},
                    {"dim", inst.cfg.dim},
                    {"seed", inst.cfg.seed},
                    {"base_budget", inst.cfg.base_budget}};
    std::cout << summary.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    CommonOpts common;
    std::string instance;
    std::string method = "sequential";
    double rho = 0.01;
    double eta = 0.05;
    std::int64_t sweeps = 120;
    std::int64_t batch = 1;
    bool no_decay = false;
    bool no_refine = false;
    bool compare_oracle = false;
    std::int64_t checkpoint_stride = 0;
};

int run_simulate(const SimulateArgs& args) {
    const SyntheticInstance inst = load_instance(args.instance);
    const auto events_vec = inst.events();
    const std::span<const SyntheticEvent> events(events_vec);
    const SyntheticFirstPriceRule rule(inst, kDefaultTableCap, args.common.threads);
    const CampaignSet campaigns = inst.campaigns();
    const fs::path dir = ensure_out_dir(args.common);

    SequentialConfig seq_cfg;
    seq_cfg.checkpoint_stride = args.checkpoint_stride;

    Trajectory traj;
    json report = {{"method", args.method}, {"instance", args.instance}};
    if (args.method == "sequential") {
        traj = simulate_sequential(events, campaigns, rule, seq_cfg);
    } else if (args.method == "parallel") {
        const ParallelSimReport sim =
            parallel_simulate(events, campaigns, rule, {}, args.common.threads);
        traj = sim.trajectory;
        report["iterations"] = sim.iterations;
        json segments = json::array();
        for (const ParallelSegment& seg : sim.segments)
            segments.push_back(
                {{"first", seg.first_n},
                 {"last", seg.last_n},
                 {"capper", seg.predicted_capper ? json(*seg.predicted_capper) : json(nullptr)}});
        report["segments"] = segments;
    } else if (args.method == "naive") {
        traj = naive_sampled_sequential(events, campaigns, rule, args.rho, args.common.seed,
                                        seq_cfg);
        report["rho"] = args.rho;
    } else if (args.method == "s2a") {
        S2aConfig cfg;
        cfg.estimator.rho = args.rho;
        cfg.estimator.eta = args.eta;
        cfg.estimator.sweeps = static_cast<int>(args.sweeps);
        cfg.estimator.batch = static_cast<int>(args.batch);
        cfg.estimator.eta_decay = !args.no_decay;
        cfg.estimator.seed = args.common.seed;
        cfg.refine = !args.no_refine;
        cfg.threads = args.common.threads;
        const S2aReport s2a = sort2aggregate(events, campaigns, rule, cfg);
        traj = s2a.trajectory;
        json boundaries = json::array();
        for (const CappingEntry& b : s2a.plan.boundaries)
            boundaries.push_back({{"campaign", b.campaign}, {"time", b.time}});
        json checks = json::array();
        for (const BoundaryCheck& check : s2a.checks)
            checks.push_back({{"campaign", check.campaign},
                              {"time", check.time},
                              {"reconstructed", check.reconstructed},
                              {"budget", check.budget},
                              {"discrepancy", check.discrepancy},
                              {"crossing_found", check.crossing_found},
                              {"pass", check.pass}});
        report["boundaries"] = boundaries;
        report["consistency_checks"] = checks;
        report["all_checks_pass"] = s2a.all_checks_pass;
        report["tolerance"] = s2a.tolerance;
        report["evaluations"] = {{"estimation", s2a.evals_estimation},
                                 {"aggregation", s2a.evals_aggregation},
                                 {"refinement", s2a.evals_refinement}};
    } else {
        throw std::invalid_argument("unknown method: " + args.method);
    }

    write_trajectory_csv(dir / "trajectory.csv", traj, campaigns.budgets());
    report["trajectory"] = trajectory_json(traj);

    if (args.compare_oracle && args.method != "sequential") {
        const Trajectory oracle = simulate_sequential(events, campaigns, rule, {});
        const TrajectoryComparison cmp = compare_trajectories(oracle, traj);
        CsvWriter csv(dir / "comparison.csv");
        csv.row({"campaign", "truth_spend", "estimate_spend", "rel_err"});
        for (std::size_t c = 0; c < campaigns.size(); ++c)
            csv.row({fmt_int(static_cast<std::int64_t>(c)), fmt_double(oracle.final_spends[c]),
                     fmt_double(traj.final_spends[c]),
                     cmp.rel_err[c] ? fmt_double(*cmp.rel_err[c]) : std::string()});
        report["comparison"] = {{"max_rel_err", cmp.max_rel_err},
                                {"median_rel_err", cmp.median_rel_err},
                                {"weighted_err", cmp.weighted.weighted_relative_error}};
    }

    std::ofstream out(dir / "report.json");
    out << report.dump(2) << '\n';
    std::cout << report.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
    CommonOpts common;
    std::string instance;
    double rho = 0.01;
    double eta = 0.05;
    std::int64_t sweeps = 120;
    std::int64_t batch = 1;
    bool no_decay = false;
    std::string warm_start_file;
};

int run_estimate(const EstimateArgs& args) {
    const SyntheticInstance inst = load_instance(args.instance);
    const auto events_vec = inst.events();
    const std::span<const SyntheticEvent> events(events_vec);
    const SyntheticFirstPriceRule rule(inst, kDefaultTableCap, args.common.threads);
    const CampaignSet campaigns = inst.campaigns();
    const fs::path dir = ensure_out_dir(args.common);

    EstimatorConfig cfg;
    cfg.rho = args.rho;
    cfg.eta = args.eta;
    cfg.sweeps = static_cast<int>(args.sweeps);
    cfg.batch = static_cast<int>(args.batch);
    cfg.eta_decay = !args.no_decay;
    cfg.seed = args.common.seed;
    cfg.threads = args.common.threads;
    if (!args.warm_start_file.empty()) {
        const json j = json::parse(read_text_file(args.warm_start_file));
        cfg.warm_start = j.at("fractions").get<std::vector<double>>();
    }

    const EstimateResult est = estimate_capping_fractions(events, campaigns, rule, cfg);

    CsvWriter trace(dir / "trace.csv");
    trace.row({"sweep", "campaign", "pi", "residual"});
    for (std::size_t s = 0; s < est.trace.sweeps.size(); ++s)
        for (std::size_t c = 0; c < est.trace.sweeps[s].fractions.size(); ++c)
            trace.row({fmt_int(static_cast<std::int64_t>(s + 1)),
                       fmt_int(static_cast<std::int64_t>(c)),
                       fmt_double(est.trace.sweeps[s].fractions[c]),
                       fmt_double(est.trace.sweeps[s].residual[c])});

    const auto schedule =
        capping_schedule_from_fractions(est.fractions, inst.cfg.n_events);
    json sched = json::array();
    for (const CappingEntry& e : schedule)
        sched.push_back({{"campaign", e.campaign}, {"time", e.time}});
    json result = {{"fractions", est.fractions},
                   {"schedule", sched},
                   {"rule_evaluations", est.rule_evaluations},
                   {"sweeps_run", est.trace.sweeps.size()}};
    std::ofstream out(dir / "pi.json");
    out << result.dump(2) << '\n';
    std::cout << result.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct ExperimentArgs {
    CommonOpts common;
    std::string name;
    std::string config_file;
    std::vector<std::string> overrides;
    std::int64_t repetitions = 0;  // 0: take from config or default 1
    std::string seeds_csv;
};

int run_experiment_cmd(const ExperimentArgs& args) {
    ExperimentSpec spec;
    std::map<std::string, std::string> kv;
    if (!args.config_file.empty()) kv = parse_config_text(read_text_file(args.config_file));
    for (const std::string& override_kv : args.overrides) {
        const auto eq = override_kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + override_kv);
        kv[override_kv.substr(0, eq)] = override_kv.substr(eq + 1);
    }
    spec.name = args.name.empty() ? (kv.count("experiment") ? kv["experiment"] : "")
                                  : args.name;
    if (spec.name.empty()) throw std::invalid_argument("no experiment name given");
    kv.erase("experiment");

    std::string seeds_raw = args.seeds_csv;
    if (seeds_raw.empty() && kv.count("seeds")) seeds_raw = kv["seeds"];
    std::int64_t reps = args.repetitions;
    if (reps == 0 && kv.count("repetitions")) reps = std::stoll(kv["repetitions"]);
    kv.erase("seeds");
    kv.erase("repetitions");

    if (!seeds_raw.empty()) {
        std::string cur;
        for (char ch : seeds_raw + ",") {
            if (ch == ',') {
                if (!cur.empty()) spec.seeds.push_back(std::stoull(cur));
                cur.clear();
            } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                cur.push_back(ch);
            }
        }
    } else {
        if (reps < 1) reps = 1;
        for (std::int64_t i = 0; i < reps; ++i)
            spec.seeds.push_back(substream(args.common.seed, 0x5eedull, static_cast<std::uint64_t>(i)));
    }

    spec.params = std::move(kv);
    spec.out_dir = args.common.out_dir;
    spec.threads = args.common.threads;
    const ExperimentResult result = run_experiment(spec);
    std::cout << result.summary.dump(2) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
    CommonOpts common;
    std::string what;
    std::string instance;
    double gamma = 1.0;
    double epsilon = 0.01;
    std::int64_t trials = 1000;
    std::int64_t permutations = 1000;
    std::int64_t activation_samples = 32;
};

int run_diagnose(const DiagnoseArgs& args) {
    const SyntheticInstance inst = load_instance(args.instance);
    const auto events_vec = inst.events();
    const std::span<const SyntheticEvent> events(events_vec);
    const SyntheticFirstPriceRule rule(inst, kDefaultTableCap, args.common.threads);
    json report = {{"diagnostic", args.what}, {"instance", args.instance}};

    if (args.what == "C") {
        std::vector<ActivationVector> acts;
        acts.push_back(ActivationVector::all_active(inst.cfg.n_campaigns));
        Rng rng(substream(args.common.seed, 0xd1a6ull));
        for (std::int64_t i = 1; i < args.activation_samples; ++i) {
            ActivationVector a = ActivationVector::none_active(inst.cfg.n_campaigns);
            for (std::size_t c = 0; c < inst.cfg.n_campaigns; ++c)
                a.set_active(c, rng.next_unit() < 0.5);
            acts.push_back(a);
        }
        const double estimated =
            estimate_C(events, rule, std::span<const ActivationVector>(acts));
        const double declared =
            static_cast<double>(inst.cfg.n_events) * rule.per_event_bound();
        report["estimated_C"] = estimated;
        report["declared_C"] = declared;
        report["declared_below_empirical"] = estimated > declared;
    } else if (args.what == "smoothness") {
        const double freq = check_smoothness(events, rule, args.gamma, args.epsilon,
                                             args.trials, args.common.seed);
        report["gamma"] = args.gamma;
        report["epsilon"] = args.epsilon;
        report["trials"] = args.trials;
        report["violation_frequency"] = freq;
    } else if (args.what == "hoeffding") {
        const HoeffdingResult suite = hoeffding_suite(
            events, rule, ActivationVector::all_active(inst.cfg.n_campaigns), std::nullopt,
            inst.cfg.n_events / 2, {}, args.permutations, args.common.seed);
        const fs::path dir = ensure_out_dir(args.common);
        CsvWriter csv(dir / "hoeffding.csv");
        csv.row({"t", "empirical_tail", "bound"});
        std::size_t violations = 0;
        for (const HoeffdingRow& row : suite.rows) {
            csv.row({fmt_double(row.t), fmt_double(row.empirical_tail), fmt_double(row.bound)});
            violations += row.empirical_tail > row.bound ? 1 : 0;
        }
        report["campaign"] = suite.campaign;
        report["effective_C"] = suite.effective_c;
        report["bound_violations"] = violations;
    } else {
        throw std::invalid_argument("unknown diagnostic: " + args.what);
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"burnout-variable counterfactual simulation toolkit"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "write a synthetic instance file");
    add_common(generate, gen.common);
    generate->add_option("--n", gen.n, "event count")->check(CLI::PositiveNumber);
    generate->add_option("--k", gen.k, "campaign count")->check(CLI::PositiveNumber);
    generate->add_option("--d", gen.d, "embedding dimension")->check(CLI::PositiveNumber);
    generate->add_option("--b-base", gen.b_base, "base budget or 'auto'");
    generate->add_option("--target-capped", gen.target_capped, "auto target capped fraction");
    generate->add_option("--target-tolerance", gen.target_tolerance, "auto target tolerance");
    generate->add_option("--noise-scale", gen.noise_scale, "event noise scale");
    generate->add_option("--out", gen.out_file, "output file name");

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "replay an instance");
    add_common(simulate, sim.common);
    simulate->add_option("--instance", sim.instance, "instance file")->required();
    simulate->add_option("--method", sim.method, "sequential|parallel|s2a|naive");
    simulate->add_option("--rho", sim.rho, "sampling rate (naive, s2a)");
    simulate->add_option("--eta", sim.eta, "estimator step size (s2a)");
    simulate->add_option("--sweeps", sim.sweeps, "estimator sweeps (s2a)");
    simulate->add_option("--batch", sim.batch, "estimator batch size (s2a)");
    simulate->add_flag("--no-decay", sim.no_decay, "constant estimator step size");
    simulate->add_flag("--no-refine", sim.no_refine, "skip boundary refinement (s2a)");
    simulate->add_flag("--compare-oracle", sim.compare_oracle,
                       "also run the sequential oracle and score against it");
    simulate->add_option("--checkpoint-stride", sim.checkpoint_stride,
                         "record spends every N events");

    EstimateArgs est;
    CLI::App* estimate = app.add_subcommand("estimate-pi", "estimate capping fractions");
    add_common(estimate, est.common);
    estimate->add_option("--instance", est.instance, "instance file")->required();
    estimate->add_option("--rho", est.rho, "sampling rate");
    estimate->add_option("--eta", est.eta, "step size");
    estimate->add_option("--sweeps", est.sweeps, "sweeps");
    estimate->add_option("--batch", est.batch, "batch size");
    estimate->add_flag("--no-decay", est.no_decay, "constant step size");
    estimate->add_option("--warm-start", est.warm_start_file,
                         "JSON file with a 'fractions' array");

    ExperimentArgs exp;
    CLI::App* experiment = app.add_subcommand("experiment", "run a registered experiment");
    add_common(experiment, exp.common);
    experiment->add_option("name", exp.name, "experiment name");
    experiment->add_option("--config", exp.config_file, "key = value config file");
    experiment->add_option("--set", exp.overrides, "override: key=value (repeatable)");
    experiment->add_option("--reps", exp.repetitions, "repetition count");
    experiment->add_option("--seeds", exp.seeds_csv, "explicit comma-separated seed list");

    DiagnoseArgs diag;
    CLI::App* diagnose = app.add_subcommand("diagnose", "assumption diagnostics");
    add_common(diagnose, diag.common);
    diagnose->add_option("what", diag.what, "C|smoothness|hoeffding")->required();
    diagnose->add_option("--instance", diag.instance, "instance file")->required();
    diagnose->add_option("--gamma", diag.gamma, "smoothness gamma");
    diagnose->add_option("--epsilon", diag.epsilon, "smoothness epsilon");
    diagnose->add_option("--trials", diag.trials, "smoothness trials");
    diagnose->add_option("--permutations", diag.permutations, "hoeffding permutations");
    diagnose->add_option("--activation-samples", diag.activation_samples,
                         "activation sample count for C");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << json{{"error", e.what()}}.dump() << '\n';
        return 1;
    }

    try {
        if (generate->parsed()) return run_generate(gen);
        if (simulate->parsed()) return run_simulate(sim);
        if (estimate->parsed()) return run_estimate(est);
        if (experiment->parsed()) return run_experiment_cmd(exp);
        if (diagnose->parsed()) return run_diagnose(diag);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}}.dump() << '\n';
        return 1;
    }
    return 0;
}
