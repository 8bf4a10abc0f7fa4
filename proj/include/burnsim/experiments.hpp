#pragma once

// Experiment registry and comparison metrics. Each experiment draws one
// repetition per seed, writes one CSV per repetition plus an aggregate
// "curve" CSV shaped for plotting, and a summary JSON that embeds the full
// resolved spec. Outputs contain no timestamps, no thread counts, and only
// %.17g-formatted numbers, so a rerun with the same spec and seeds is
// byte-identical whatever the worker count.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "burnsim/bidlog.hpp"
#include "burnsim/core.hpp"
#include "burnsim/estimator.hpp"
#include "burnsim/io.hpp"
#include "burnsim/parallel_sim.hpp"
#include "burnsim/s2a.hpp"
#include "burnsim/sequential.hpp"
#include "burnsim/synthetic.hpp"

namespace burnsim {

inline constexpr std::int64_t kDefaultTableCap = std::int64_t{1} << 25;

// ---------------------------------------------------------------------------
// Trajectory comparison
// ---------------------------------------------------------------------------

struct TrajectoryComparison {
    std::vector<std::optional<double>> rel_err;  // per campaign; empty when truth is 0
    double max_rel_err = 0.0;
    double median_rel_err = 0.0;
    double mean_rel_err = 0.0;
    WeightedError weighted;
    std::vector<std::optional<std::int64_t>> capping_delta;  // est - truth where both cap
    std::size_t capping_presence_mismatches = 0;
};

inline TrajectoryComparison compare_trajectories(const Trajectory& truth,
                                                 const Trajectory& estimate) {
    const std::size_t k = truth.final_spends.size();
    if (estimate.final_spends.size() != k)
        throw std::invalid_argument("trajectories have different campaign counts");
    TrajectoryComparison cmp;
    cmp.rel_err.assign(k, std::nullopt);
    cmp.capping_delta.assign(k, std::nullopt);
    std::vector<double> defined;
    for (std::size_t c = 0; c < k; ++c) {
        if (truth.final_spends[c] > 0.0) {
            const double err = std::abs(estimate.final_spends[c] - truth.final_spends[c]) /
                               truth.final_spends[c];
            cmp.rel_err[c] = err;
            defined.push_back(err);
        }
        const bool t_cap = c < truth.capping_times.size() && truth.capping_times[c].has_value();
        const bool e_cap =
            c < estimate.capping_times.size() && estimate.capping_times[c].has_value();
        if (t_cap && e_cap)
            cmp.capping_delta[c] = *estimate.capping_times[c] - *truth.capping_times[c];
        else if (t_cap != e_cap)
            ++cmp.capping_presence_mismatches;
    }
    if (!defined.empty()) {
        std::sort(defined.begin(), defined.end());
        cmp.max_rel_err = defined.back();
        cmp.median_rel_err = defined[defined.size() / 2];
        double sum = 0.0;
        for (double e : defined) sum += e;
        cmp.mean_rel_err = sum / static_cast<double>(defined.size());
    }
    cmp.weighted = spend_weighted_error(truth.final_spends, estimate.final_spends);
    return cmp;
}

// ---------------------------------------------------------------------------
// Concentration suite
// ---------------------------------------------------------------------------

struct HoeffdingRow {
    double t = 0.0;
    double empirical_tail = 0.0;
    double bound = 0.0;
};

struct HoeffdingResult {
    std::vector<HoeffdingRow> rows;
    std::size_t campaign = 0;
    std::int64_t prefix_len = 0;
    double rate_mean = 0.0;    // exact mean of the per-event contribution
    double effective_c = 0.0;  // tightest bound constant observed
};

// Tail frequencies of |sum of a random-prefix of contributions - n * mean|
// under re-permutations of the fixed event multiset, against the sampling-
// without-replacement bound 2 exp(-2 N t^2 / C^2). Contributions are fixed per
// event (frozen activation), so each permutation is a subset sum.
template <typename E, typename R>
    requires auction_rule_for<R, E>
HoeffdingResult hoeffding_suite(std::span<const E> events, const R& rule,
                                const ActivationVector& act,
                                std::optional<std::size_t> campaign,
                                std::int64_t prefix_len, std::vector<double> t_grid,
                                std::int64_t n_permutations, std::uint64_t seed) {
    if (n_permutations < 100) throw std::invalid_argument("needs >= 100 permutations");
    const auto n_events = static_cast<std::int64_t>(events.size());
    if (prefix_len < 1 || prefix_len > n_events)
        throw std::invalid_argument("prefix length out of range");
    const std::size_t k = rule.campaign_count();

    // Per-event contributions for every campaign; pick the busiest campaign
    // when none is requested.
    std::vector<double> totals(k, 0.0);
    std::vector<std::vector<double>> contrib(k);
    for (auto& v : contrib) v.assign(static_cast<std::size_t>(n_events), 0.0);
    for (std::int64_t i = 0; i < n_events; ++i)
        rule.evaluate(events[static_cast<std::size_t>(i)], act, [&](std::size_t c, double amount) {
            contrib[c][static_cast<std::size_t>(i)] += amount;
            totals[c] += amount;
        });
    HoeffdingResult result;
    result.prefix_len = prefix_len;
    result.campaign = campaign.value_or(static_cast<std::size_t>(
        std::max_element(totals.begin(), totals.end()) - totals.begin()));
    if (result.campaign >= k) throw std::invalid_argument("campaign index out of range");
    const std::vector<double>& w = contrib[result.campaign];

    double sum = 0.0, max_increment = 0.0;
    for (std::size_t c = 0; c < k; ++c)
        for (double v : contrib[c])
            if (v > max_increment) max_increment = v;
    for (double v : w) sum += v;
    result.rate_mean = sum / static_cast<double>(n_events);
    result.effective_c = static_cast<double>(n_events) * max_increment;

    if (t_grid.empty()) {
        // Largest t where the bound still says anything (2 exp(...) = 1e-3).
        const double t_max = result.effective_c *
                             std::sqrt(std::log(2.0 / 1e-3) / (2.0 * static_cast<double>(n_events)));
        for (int j = 1; j <= 10; ++j)
            t_grid.push_back(t_max * static_cast<double>(j) / 10.0);
    }

    std::vector<std::int64_t> exceed(t_grid.size(), 0);
    std::vector<std::size_t> idx(static_cast<std::size_t>(n_events));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(substream(seed, /*tag=*/0x90e11a7eull));
    const double center = static_cast<double>(prefix_len) * result.rate_mean;
    for (std::int64_t p = 0; p < n_permutations; ++p) {
        for (std::int64_t i = n_events - 1; i > 0; --i) {
            const std::int64_t j = rng.next_index(i + 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
        double s = 0.0;
        for (std::int64_t i = 0; i < prefix_len; ++i) s += w[idx[static_cast<std::size_t>(i)]];
        const double dev = std::abs(s - center);
        for (std::size_t g = 0; g < t_grid.size(); ++g)
            if (dev >= t_grid[g]) ++exceed[g];
    }

    for (std::size_t g = 0; g < t_grid.size(); ++g) {
        HoeffdingRow row;
        row.t = t_grid[g];
        row.empirical_tail =
            static_cast<double>(exceed[g]) / static_cast<double>(n_permutations);
        row.bound = 2.0 * std::exp(-2.0 * static_cast<double>(n_events) * t_grid[g] * t_grid[g] /
                                   (result.effective_c * result.effective_c));
        result.rows.push_back(row);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Experiment specs
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = {
        "sampling-error", "parallel-vs-sequential", "pi-convergence", "s2a-vs-truth",
        "day-shift",      "hoeffding",              "smoothness"};
    return names;
}

struct ExperimentSpec {
    std::string name;
    std::map<std::string, std::string> params;
    std::vector<std::uint64_t> seeds;
    std::filesystem::path out_dir;
    int threads = 1;

    double get_f64(const std::string& key, double def) const {
        auto it = params.find(key);
        return it == params.end() ? def : std::stod(it->second);
    }
    std::int64_t get_i64(const std::string& key, std::int64_t def) const {
        auto it = params.find(key);
        return it == params.end() ? def : std::stoll(it->second);
    }
    bool get_bool(const std::string& key, bool def) const {
        auto it = params.find(key);
        if (it == params.end()) return def;
        return it->second == "1" || it->second == "true" || it->second == "yes";
    }
    std::string get_str(const std::string& key, const std::string& def) const {
        auto it = params.find(key);
        return it == params.end() ? def : it->second;
    }
    std::vector<double> get_f64_list(const std::string& key, const std::string& def) const {
        const std::string raw = get_str(key, def);
        std::vector<double> out;
        std::string cur;
        for (char ch : raw + ",") {
            if (ch == ',') {
                if (!cur.empty()) out.push_back(std::stod(cur));
                cur.clear();
            } else if (!std::isspace(static_cast<unsigned char>(ch))) {
                cur.push_back(ch);
            }
        }
        return out;
    }
};

// `key = value` lines; '#' starts a comment. "seeds" and "repetitions" and
// "experiment" are recognized alongside experiment parameters.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = text.find('\n', start);
        line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
        start = end == std::string::npos ? text.size() + 1 : end + 1;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = value;
    }
    return kv;
}

struct ExperimentResult {
    std::vector<std::filesystem::path> files;
    nlohmann::json summary;
};

namespace detail {

inline std::string opt_cell(const std::optional<std::int64_t>& v) {
    return v ? fmt_int(*v) : std::string();
}
inline std::string opt_cell(const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string();
}

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
    nlohmann::json j;
    j["experiment"] = spec.name;
    j["params"] = spec.params;  // std::map: keys serialize sorted
    j["seeds"] = spec.seeds;
    return j;
}

// The rule and the event views point into the instance, so the instance
// lives behind a stable pointer.
struct SyntheticSetup {
    std::unique_ptr<SyntheticInstance> instance;
    std::vector<SyntheticEvent> events;
    std::unique_ptr<SyntheticFirstPriceRule> rule;
    CampaignSet campaigns;

    const SyntheticConfig& cfg() const { return instance->cfg; }
};

// Instance for one repetition. base_budget may be a number or "auto";
// calibration happens per repetition so every seed sits at the target
// capping share.
inline SyntheticSetup make_synthetic_setup(const ExperimentSpec& spec, std::uint64_t seed) {
    SyntheticConfig cfg;
    cfg.n_events = spec.get_i64("n", 20000);
    cfg.n_campaigns = static_cast<std::size_t>(spec.get_i64("k", 20));
    cfg.dim = static_cast<std::size_t>(spec.get_i64("d", 10));
    cfg.seed = seed;
    cfg.noise_scale = spec.get_f64("noise_scale", 3.0);
    const std::string base = spec.get_str("b_base", "auto");
    if (base == "auto") {
        cfg.auto_base_budget = true;
        cfg.target_capped_fraction = spec.get_f64("target_capped", 0.5);
        cfg.target_tolerance = spec.get_f64("target_tolerance", 0.1);
    } else {
        cfg.base_budget = std::stod(base);
    }
    const std::int64_t table_cap = spec.get_i64("table_cap", kDefaultTableCap);
    auto inst = std::make_unique<SyntheticInstance>(
        make_synthetic_instance(cfg, spec.threads, table_cap));
    auto events = inst->events();
    auto rule = std::make_unique<SyntheticFirstPriceRule>(*inst, table_cap, spec.threads);
    CampaignSet campaigns = inst->campaigns();
    return {std::move(inst), std::move(events), std::move(rule), std::move(campaigns)};
}

inline EstimatorConfig estimator_from_spec(const ExperimentSpec& spec, std::uint64_t seed) {
    EstimatorConfig cfg;
    cfg.rho = spec.get_f64("rho", 0.01);
    cfg.eta = spec.get_f64("eta", 0.05);
    cfg.sweeps = static_cast<int>(spec.get_i64("sweeps", 120));
    cfg.batch = static_cast<int>(spec.get_i64("batch", 1));
    cfg.eta_decay = spec.get_bool("eta_decay", true);
    cfg.tail_average_sweeps = static_cast<int>(spec.get_i64("tail_average", 0));
    cfg.seed = substream(seed, /*tag=*/0xe57ull);
    cfg.threads = spec.threads;
    return cfg;
}

}  // namespace detail

ExperimentResult run_experiment(const ExperimentSpec& spec);

}  // namespace burnsim

#include "burnsim/experiments_impl.hpp"
