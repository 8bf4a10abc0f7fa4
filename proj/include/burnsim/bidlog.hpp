#pragma once

// Keyword bid-log ingestion and the day-over-day volume-shift experiment.
//
// Input is a CSV of daily advertiser bids on keywords:
//
//     day,advertiser_id,keyword_id,bid,count
//
// A per-day keyword model collapses each (keyword, advertiser) to one
// count-weighted average bid and keeps the keywords' empirical frequencies.
// Event streams are i.i.d. keyword draws from those frequencies; the auction
// is first price among the active advertisers bidding on the keyword.
//
// The day-shift experiment replays day one exactly, then predicts a larger
// day two three ways: carry day-one spends over as-is, rescale them by the
// volume ratio (clamped at budgets), or run the staged estimator warm-started
// from day one's capping times. All three are scored against the day-two
// sequential replay with spend-weighted relative error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "burnsim/core.hpp"
#include "burnsim/io.hpp"
#include "burnsim/rng.hpp"
#include "burnsim/s2a.hpp"
#include "burnsim/sequential.hpp"

namespace burnsim {

struct BidRecord {
    std::int32_t day = 0;
    std::size_t advertiser = 0;  // dense index
    std::size_t keyword = 0;     // dense index
    double bid = 0.0;
    std::int64_t count = 0;
};

struct BidLog {
    std::vector<BidRecord> records;
    std::vector<std::int64_t> advertiser_ids;  // dense index -> original id
    std::vector<std::int64_t> keyword_ids;

    std::size_t advertiser_count() const { return advertiser_ids.size(); }
    std::size_t keyword_count() const { return keyword_ids.size(); }
};

// Dense indices are assigned in ascending original-id order, so the mapping
// does not depend on record order and a saved log reloads identically.
inline BidLog load_bid_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    struct RawRecord {
        std::int32_t day;
        std::int64_t advertiser;
        std::int64_t keyword;
        double bid;
        std::int64_t count;
    };
    std::vector<RawRecord> raw;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (line_no == 1) {
            if (split_csv_line(line).size() != 5)
                fail("expected header day,advertiser_id,keyword_id,bid,count");
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != 5) fail("expected 5 fields");
        RawRecord rec{};
        try {
            rec.day = static_cast<std::int32_t>(std::stol(cells[0]));
            rec.advertiser = std::stoll(cells[1]);
            rec.keyword = std::stoll(cells[2]);
            rec.bid = std::stod(cells[3]);
            rec.count = std::stoll(cells[4]);
        } catch (const std::exception&) {
            fail("malformed field");
        }
        if (!(rec.bid > 0.0)) fail("bid must be positive");
        if (rec.count < 1) fail("count must be positive");
        raw.push_back(rec);
    }

    BidLog log;
    std::map<std::int64_t, std::size_t> adv_index, kw_index;
    for (const RawRecord& rec : raw) {
        adv_index.emplace(rec.advertiser, 0);
        kw_index.emplace(rec.keyword, 0);
    }
    for (auto& [id, dense] : adv_index) {
        dense = log.advertiser_ids.size();
        log.advertiser_ids.push_back(id);
    }
    for (auto& [id, dense] : kw_index) {
        dense = log.keyword_ids.size();
        log.keyword_ids.push_back(id);
    }
    log.records.reserve(raw.size());
    for (const RawRecord& rec : raw)
        log.records.push_back(
            {rec.day, adv_index[rec.advertiser], kw_index[rec.keyword], rec.bid, rec.count});
    return log;
}

inline void save_bid_log(const BidLog& log, const std::filesystem::path& path) {
    CsvWriter out(path);
    out.row({"day", "advertiser_id", "keyword_id", "bid", "count"});
    for (const BidRecord& rec : log.records)
        out.row({fmt_int(rec.day), fmt_int(log.advertiser_ids[rec.advertiser]),
                 fmt_int(log.keyword_ids[rec.keyword]), fmt_double(rec.bid),
                 fmt_int(rec.count)});
}

struct KeywordBid {
    std::size_t advertiser = 0;
    double bid = 0.0;

    friend bool operator==(const KeywordBid&, const KeywordBid&) = default;
};

struct KeywordModel {
    std::size_t n_advertisers = 0;
    std::vector<double> frequencies;                  // per keyword, sums to 1
    std::vector<std::vector<KeywordBid>> bids;        // per keyword, bid desc, adv asc on ties
    std::vector<double> cumulative;                   // prefix sums of frequencies

    friend bool operator==(const KeywordModel& a, const KeywordModel& b) {
        return a.n_advertisers == b.n_advertisers && a.frequencies == b.frequencies &&
               a.bids == b.bids;
    }
};

// One day's records -> keyword frequencies (proportional to counts) and one
// constant bid per (keyword, advertiser): the count-weighted average of that
// advertiser's bids on the keyword.
inline KeywordModel build_keyword_model(const BidLog& log, std::int32_t day) {
    KeywordModel model;
    model.n_advertisers = log.advertiser_count();
    const std::size_t n_kw = log.keyword_count();
    model.frequencies.assign(n_kw, 0.0);
    model.bids.assign(n_kw, {});

    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, double>> acc;  // sum, weight
    std::vector<double> counts(n_kw, 0.0);
    double total = 0.0;
    for (const BidRecord& rec : log.records) {
        if (rec.day != day) continue;
        counts[rec.keyword] += static_cast<double>(rec.count);
        total += static_cast<double>(rec.count);
        auto& slot = acc[{rec.keyword, rec.advertiser}];
        slot.first += rec.bid * static_cast<double>(rec.count);
        slot.second += static_cast<double>(rec.count);
    }
    if (total == 0.0) throw std::invalid_argument("no records for the requested day");
    for (std::size_t w = 0; w < n_kw; ++w) model.frequencies[w] = counts[w] / total;
    for (const auto& [key, sums] : acc)
        model.bids[key.first].push_back({key.second, sums.first / sums.second});
    for (auto& kw_bids : model.bids)
        std::sort(kw_bids.begin(), kw_bids.end(), [](const KeywordBid& a, const KeywordBid& b) {
            return a.bid != b.bid ? a.bid > b.bid : a.advertiser < b.advertiser;
        });

    model.cumulative.resize(n_kw);
    double run = 0.0;
    for (std::size_t w = 0; w < n_kw; ++w) {
        run += model.frequencies[w];
        model.cumulative[w] = run;
    }
    return model;
}

// Model files round-trip exactly: frequency,keyword,advertiser,bid rows with
// one line per (keyword, advertiser) and the keyword frequency repeated.
inline void save_keyword_model(const KeywordModel& model, const std::filesystem::path& path) {
    CsvWriter out(path);
    out.row({"keyword", "frequency", "advertiser", "bid"});
    out.row({fmt_int(static_cast<std::int64_t>(model.n_advertisers)), "", "", ""});
    for (std::size_t w = 0; w < model.frequencies.size(); ++w) {
        if (model.bids[w].empty()) {
            out.row({fmt_int(static_cast<std::int64_t>(w)), fmt_double(model.frequencies[w]),
                     "", ""});
            continue;
        }
        for (const KeywordBid& kb : model.bids[w])
            out.row({fmt_int(static_cast<std::int64_t>(w)), fmt_double(model.frequencies[w]),
                     fmt_int(static_cast<std::int64_t>(kb.advertiser)), fmt_double(kb.bid)});
    }
}

inline KeywordModel load_keyword_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    KeywordModel model;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        if (line_no == 1) continue;  // header
        const auto cells = split_csv_line(line);
        if (line_no == 2) {
            model.n_advertisers = static_cast<std::size_t>(std::stoull(cells[0]));
            continue;
        }
        const auto w = static_cast<std::size_t>(std::stoull(cells[0]));
        if (model.frequencies.size() <= w) {
            model.frequencies.resize(w + 1, 0.0);
            model.bids.resize(w + 1);
        }
        model.frequencies[w] = std::stod(cells[1]);
        if (!cells[2].empty())
            model.bids[w].push_back(
                {static_cast<std::size_t>(std::stoull(cells[2])), std::stod(cells[3])});
    }
    model.cumulative.resize(model.frequencies.size());
    double run = 0.0;
    for (std::size_t w = 0; w < model.frequencies.size(); ++w) {
        run += model.frequencies[w];
        model.cumulative[w] = run;
    }
    return model;
}

struct KeywordEvent {
    std::int64_t id = 0;
    std::size_t keyword = 0;
};

// N i.i.d. keyword draws from the model frequencies, one substream per
// position.
inline std::vector<KeywordEvent> sample_event_stream(const KeywordModel& model,
                                                     std::int64_t n_events,
                                                     std::uint64_t seed) {
    if (n_events < 1) throw std::invalid_argument("stream needs at least one event");
    if (model.cumulative.empty()) throw std::invalid_argument("empty keyword model");
    std::vector<KeywordEvent> events;
    events.reserve(static_cast<std::size_t>(n_events));
    for (std::int64_t i = 0; i < n_events; ++i) {
        Rng rng(substream(seed, /*tag=*/0x57e3a21bull, static_cast<std::uint64_t>(i)));
        const double u = rng.next_unit();
        const auto it = std::lower_bound(model.cumulative.begin(), model.cumulative.end(), u);
        std::size_t w = it == model.cumulative.end()
                            ? model.cumulative.size() - 1
                            : static_cast<std::size_t>(it - model.cumulative.begin());
        events.push_back({i, w});
    }
    return events;
}

// First price among the active advertisers bidding on the event's keyword;
// ties go to the lower advertiser index. Keywords nobody bids on clear with
// no spend.
class KeywordFirstPriceRule {
public:
    explicit KeywordFirstPriceRule(const KeywordModel& model) : model_(&model) {
        for (const auto& kw_bids : model.bids)
            for (const KeywordBid& kb : kw_bids)
                if (kb.bid > max_bid_) max_bid_ = kb.bid;
    }

    std::size_t campaign_count() const { return model_->n_advertisers; }
    double per_event_bound() const { return max_bid_; }

    template <typename Visit>
    void evaluate(const KeywordEvent& e, const ActivationVector& a, Visit&& visit) const {
        for (const KeywordBid& kb : model_->bids[e.keyword]) {
            if (a.active(kb.advertiser)) {
                visit(kb.advertiser, kb.bid);
                return;
            }
        }
    }

private:
    const KeywordModel* model_;
    double max_bid_ = 0.0;
};

// In-repo stand-in for restricted production logs: a log with zipf-ish
// keyword popularity and a handful of lognormal-bid advertisers per keyword.
struct BidLogFixtureConfig {
    std::size_t n_keywords = 300;
    std::size_t n_advertisers = 40;
    std::int32_t day = 1;
    std::uint64_t seed = 0;
    std::size_t min_bidders = 2;
    std::size_t max_bidders = 6;
    std::int64_t max_count = 50;
};

inline BidLog make_bidlog_fixture(const BidLogFixtureConfig& cfg) {
    if (cfg.n_keywords < 1 || cfg.n_advertisers < 1)
        throw std::invalid_argument("fixture needs keywords and advertisers");
    if (cfg.min_bidders < 1 || cfg.max_bidders < cfg.min_bidders)
        throw std::invalid_argument("bad bidder range");
    BidLog log;
    for (std::size_t a = 0; a < cfg.n_advertisers; ++a)
        log.advertiser_ids.push_back(static_cast<std::int64_t>(a + 1000));
    for (std::size_t w = 0; w < cfg.n_keywords; ++w)
        log.keyword_ids.push_back(static_cast<std::int64_t>(w + 5000));
    for (std::size_t w = 0; w < cfg.n_keywords; ++w) {
        Rng rng(substream(cfg.seed, /*tag=*/0xf1c70e11ull, w));
        const auto span = static_cast<std::int64_t>(cfg.max_bidders - cfg.min_bidders + 1);
        const auto n_bidders = cfg.min_bidders + static_cast<std::size_t>(rng.next_index(span));
        // popularity ~ 1 / (rank + 2), scaled into counts
        const double popularity = 1.0 / (static_cast<double>(w) + 2.0);
        std::vector<std::size_t> advs(cfg.n_advertisers);
        for (std::size_t a = 0; a < advs.size(); ++a) advs[a] = a;
        for (std::size_t j = 0; j < n_bidders; ++j) {
            const auto pick = j + static_cast<std::size_t>(
                                      rng.next_index(static_cast<std::int64_t>(advs.size() - j)));
            std::swap(advs[j], advs[pick]);
            BidRecord rec;
            rec.day = cfg.day;
            rec.advertiser = advs[j];
            rec.keyword = w;
            rec.bid = std::exp(0.5 * rng.next_normal());  // lognormal around 1
            rec.count = 1 + static_cast<std::int64_t>(
                                popularity * static_cast<double>(cfg.max_count) *
                                static_cast<double>(cfg.n_keywords) / 4.0);
            log.records.push_back(rec);
        }
    }
    return log;
}

// ---------------------------------------------------------------------------
// Day-shift experiment
// ---------------------------------------------------------------------------

struct WeightedError {
    double weighted_relative_error = 0.0;
    std::size_t zero_spend_excluded = 0;
};

// Sum over campaigns with positive true spend of w_c * |est - true| / true,
// with w_c the campaign's share of total true spend. Campaigns with zero true
// spend cannot be scored relatively; they are counted instead.
inline WeightedError spend_weighted_error(std::span<const double> truth,
                                          std::span<const double> estimate) {
    if (truth.size() != estimate.size()) throw std::invalid_argument("size mismatch");
    double total = 0.0;
    for (double s : truth) total += s;
    WeightedError out;
    if (total <= 0.0) {
        out.zero_spend_excluded = truth.size();
        return out;
    }
    for (std::size_t c = 0; c < truth.size(); ++c) {
        if (truth[c] <= 0.0) {
            ++out.zero_spend_excluded;
            continue;
        }
        out.weighted_relative_error += std::abs(estimate[c] - truth[c]) / total;
    }
    return out;
}

struct DayShiftConfig {
    std::int64_t n_day1 = 20000;
    std::int64_t n_day2 = 30000;
    double budget = 0.0;  // uniform across advertisers
    std::uint64_t seed = 0;
    EstimatorConfig estimator;
    bool refine = true;
    // Replay the exact day-one stream as day two (requires equal sizes and no
    // second model); with this set the as-is heuristic is exact by
    // construction.
    bool reuse_day1_stream = false;
    int threads = 1;
};

struct DayShiftReport {
    Trajectory day1;
    Trajectory day2_truth;
    std::vector<double> predicted_as_is;
    std::vector<double> predicted_rescaled;
    std::vector<double> predicted_s2a;
    WeightedError error_as_is;
    WeightedError error_rescaled;
    WeightedError error_s2a;
    std::vector<double> warm_start;
    S2aReport s2a;
};

// Replay day one, then predict a larger day two against its own replay.
// Day-two events default to fresh draws from the day-one model; pass a
// second model to shift the keyword distribution too.
inline DayShiftReport day_shift_experiment(const KeywordModel& model_day1,
                                           const DayShiftConfig& cfg,
                                           const KeywordModel* model_day2 = nullptr) {
    if (cfg.n_day1 < 1 || cfg.n_day2 < 1) throw std::invalid_argument("day sizes must be >= 1");
    if (!(cfg.budget > 0.0)) throw std::invalid_argument("budget must be positive");

    const KeywordModel& m2 = model_day2 ? *model_day2 : model_day1;
    const KeywordFirstPriceRule rule1(model_day1);
    const KeywordFirstPriceRule rule2(m2);
    const std::size_t k = rule1.campaign_count();
    if (rule2.campaign_count() != k)
        throw std::invalid_argument("day models disagree on advertiser count");
    const CampaignSet campaigns(std::vector<double>(k, cfg.budget));

    if (cfg.reuse_day1_stream && (cfg.n_day1 != cfg.n_day2 || model_day2))
        throw std::invalid_argument("stream reuse needs equal sizes and a single model");
    const auto stream1 =
        sample_event_stream(model_day1, cfg.n_day1, substream(cfg.seed, /*tag=*/0xda71ull));
    const auto stream2 =
        cfg.reuse_day1_stream
            ? stream1
            : sample_event_stream(m2, cfg.n_day2, substream(cfg.seed, /*tag=*/0xda72ull));

    DayShiftReport report;
    report.day1 =
        simulate_sequential(std::span<const KeywordEvent>(stream1), campaigns, rule1, {});
    report.day2_truth =
        simulate_sequential(std::span<const KeywordEvent>(stream2), campaigns, rule2, {});

    report.predicted_as_is = report.day1.final_spends;
    const double ratio = static_cast<double>(cfg.n_day2) / static_cast<double>(cfg.n_day1);
    report.predicted_rescaled.resize(k);
    for (std::size_t c = 0; c < k; ++c)
        report.predicted_rescaled[c] =
            std::min(cfg.budget, report.day1.final_spends[c] * ratio);

    // Warm start: a campaign that capped at ordinal t on day one is expected
    // to cap near the same ordinal on day two, i.e. at fraction t / N2.
    report.warm_start.assign(k, 1.0);
    for (std::size_t c = 0; c < k; ++c)
        if (report.day1.capping_times[c]) {
            double f = static_cast<double>(*report.day1.capping_times[c]) /
                       static_cast<double>(cfg.n_day2);
            report.warm_start[c] = f < 1.0 ? f : 1.0;
        }

    S2aConfig s2a_cfg;
    s2a_cfg.estimator = cfg.estimator;
    s2a_cfg.estimator.warm_start = report.warm_start;
    s2a_cfg.refine = cfg.refine;
    s2a_cfg.threads = cfg.threads;
    report.s2a = sort2aggregate(std::span<const KeywordEvent>(stream2), campaigns, rule2, s2a_cfg);
    report.predicted_s2a = report.s2a.trajectory.final_spends;

    report.error_as_is =
        spend_weighted_error(report.day2_truth.final_spends, report.predicted_as_is);
    report.error_rescaled =
        spend_weighted_error(report.day2_truth.final_spends, report.predicted_rescaled);
    report.error_s2a = spend_weighted_error(report.day2_truth.final_spends, report.predicted_s2a);
    return report;
}

}  // namespace burnsim
