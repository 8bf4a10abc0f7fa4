#pragma once

// Synthetic auction environment: events and campaigns live in a shared
// embedding space, a campaign's valuation of an event is a clamped
// exponential of their scaled inner product, and the highest-valuing active
// campaign wins the event at its own bid (first price, truthful bids).
// Budgets grow linearly with the campaign index; the base budget can be
// calibrated so a target share of campaigns exhausts their budget.
//
// Event embeddings are e_i = (e_base + noise_scale * xi_i) / 4 with xi_i
// standard normal and e_base a shared standard-normal draw; campaign
// embeddings are independent standard normals. Every draw comes from a
// per-index substream, so instances are reproducible bit for bit and the
// fill parallelizes without changing results.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "burnsim/chunked.hpp"
#include "burnsim/core.hpp"
#include "burnsim/rng.hpp"
#include "burnsim/sequential.hpp"

namespace burnsim {

struct SyntheticConfig {
    std::int64_t n_events = 0;
    std::size_t n_campaigns = 0;
    std::size_t dim = 0;
    double base_budget = 0.0;  // ignored when auto_base_budget is set
    bool auto_base_budget = false;
    double target_capped_fraction = 0.5;  // auto calibration target
    double target_tolerance = 0.1;
    std::uint64_t seed = 0;
    double noise_scale = 3.0;  // test hook: 0 collapses events onto e_base/4

    void validate() const {
        if (n_events < 1 || n_campaigns < 1 || dim < 1)
            throw std::invalid_argument("n_events, n_campaigns, dim must be >= 1");
        if (!auto_base_budget && !(base_budget > 0.0))
            throw std::invalid_argument("base budget must be positive");
        if (noise_scale < 0.0) throw std::invalid_argument("noise scale must be >= 0");
    }
};

struct SyntheticEvent {
    std::int64_t id = 0;  // row into the instance's embedding matrix
    std::span<const double> embedding;
};

// v = min(exp(<r, e> / (2 sqrt(d))) / 10, 1); always in (0, 1].
inline double valuation(std::span<const double> campaign_embedding,
                        std::span<const double> event_embedding) {
    if (campaign_embedding.size() != event_embedding.size())
        throw std::invalid_argument("embedding dimensions differ");
    double dot = 0.0;
    for (std::size_t i = 0; i < campaign_embedding.size(); ++i)
        dot += campaign_embedding[i] * event_embedding[i];
    const double v =
        std::exp(dot / (2.0 * std::sqrt(static_cast<double>(campaign_embedding.size())))) / 10.0;
    return v < 1.0 ? v : 1.0;
}

// b_k = k * base for k = 1..K.
inline std::vector<double> assign_budgets(std::size_t n_campaigns, double base_budget) {
    if (n_campaigns < 1) throw std::invalid_argument("need at least one campaign");
    if (!(base_budget > 0.0)) throw std::invalid_argument("base budget must be positive");
    std::vector<double> budgets(n_campaigns);
    for (std::size_t c = 0; c < n_campaigns; ++c)
        budgets[c] = static_cast<double>(c + 1) * base_budget;
    return budgets;
}

namespace detail {
inline constexpr std::uint64_t kTagEventBase = 0xe0ba5e00ull;
inline constexpr std::uint64_t kTagEventNoise = 0xe7e00150ull;
inline constexpr std::uint64_t kTagCampaign = 0xca9a1600ull;
}  // namespace detail

// Owns the embedding matrices; events hand out views into them.
struct SyntheticInstance {
    SyntheticConfig cfg;
    std::vector<double> base_embedding;      // dim
    std::vector<double> event_embeddings;    // n_events x dim, row major
    std::vector<double> campaign_embeddings; // n_campaigns x dim, row major
    std::vector<double> budgets;             // n_campaigns

    std::span<const double> event_row(std::int64_t id) const {
        return {event_embeddings.data() + static_cast<std::size_t>(id) * cfg.dim, cfg.dim};
    }
    std::span<const double> campaign_row(std::size_t c) const {
        return {campaign_embeddings.data() + c * cfg.dim, cfg.dim};
    }

    std::vector<SyntheticEvent> events() const {
        std::vector<SyntheticEvent> out;
        out.reserve(static_cast<std::size_t>(cfg.n_events));
        for (std::int64_t i = 0; i < cfg.n_events; ++i) out.push_back({i, event_row(i)});
        return out;
    }

    CampaignSet campaigns() const { return CampaignSet(budgets); }
};

inline std::vector<double> generate_event_embeddings(const SyntheticConfig& cfg,
                                                     std::span<const double> base,
                                                     int threads = 1) {
    std::vector<double> rows(static_cast<std::size_t>(cfg.n_events) * cfg.dim);
    const auto n_pieces =
        static_cast<std::size_t>((cfg.n_events + kChunkLen - 1) / kChunkLen);
    run_pieces(n_pieces, threads, [&](std::size_t p) {
        const std::int64_t lo = static_cast<std::int64_t>(p) * kChunkLen;
        const std::int64_t hi = std::min<std::int64_t>(lo + kChunkLen, cfg.n_events);
        for (std::int64_t i = lo; i < hi; ++i) {
            Rng rng(substream(cfg.seed, detail::kTagEventNoise, static_cast<std::uint64_t>(i)));
            double* row = rows.data() + static_cast<std::size_t>(i) * cfg.dim;
            for (std::size_t j = 0; j < cfg.dim; ++j)
                row[j] = (base[j] + cfg.noise_scale * rng.next_normal()) / 4.0;
        }
    });
    return rows;
}

inline std::vector<double> generate_campaign_embeddings(const SyntheticConfig& cfg) {
    std::vector<double> rows(cfg.n_campaigns * cfg.dim);
    for (std::size_t c = 0; c < cfg.n_campaigns; ++c) {
        Rng rng(substream(cfg.seed, detail::kTagCampaign, c));
        for (std::size_t j = 0; j < cfg.dim; ++j) rows[c * cfg.dim + j] = rng.next_normal();
    }
    return rows;
}

// First-price rule over the instance's valuations. When the valuation table
// fits the memory cap it is precomputed once (same arithmetic as the on-the-
// fly path, so both modes price events identically); the table makes repeated
// replays much cheaper.
class SyntheticFirstPriceRule {
public:
    SyntheticFirstPriceRule(const SyntheticInstance& instance, std::int64_t table_cap_entries,
                            int threads = 1)
        : instance_(&instance), k_(instance.cfg.n_campaigns) {
        const std::int64_t entries =
            instance.cfg.n_events * static_cast<std::int64_t>(k_);
        if (table_cap_entries > 0 && entries <= table_cap_entries) {
            table_.resize(static_cast<std::size_t>(entries));
            const auto n_pieces =
                static_cast<std::size_t>((instance.cfg.n_events + kChunkLen - 1) / kChunkLen);
            run_pieces(n_pieces, threads, [&](std::size_t p) {
                const std::int64_t lo = static_cast<std::int64_t>(p) * kChunkLen;
                const std::int64_t hi = std::min<std::int64_t>(lo + kChunkLen, instance.cfg.n_events);
                for (std::int64_t i = lo; i < hi; ++i) {
                    const auto event = instance.event_row(i);
                    double* row = table_.data() + static_cast<std::size_t>(i) * k_;
                    for (std::size_t c = 0; c < k_; ++c)
                        row[c] = valuation(instance.campaign_row(c), event);
                }
            });
        }
    }

    std::size_t campaign_count() const { return k_; }
    double per_event_bound() const { return 1.0; }
    bool has_table() const { return !table_.empty(); }

    template <typename Visit>
    void evaluate(const SyntheticEvent& e, const ActivationVector& a, Visit&& visit) const {
        std::size_t winner = k_;
        double best = 0.0;
        if (!table_.empty()) {
            const double* row = table_.data() + static_cast<std::size_t>(e.id) * k_;
            for (std::size_t c = 0; c < k_; ++c) {
                if (!a.active(c)) continue;
                if (winner == k_ || row[c] > best) {
                    winner = c;
                    best = row[c];
                }
            }
        } else {
            for (std::size_t c = 0; c < k_; ++c) {
                if (!a.active(c)) continue;
                const double v = valuation(instance_->campaign_row(c), e.embedding);
                if (winner == k_ || v > best) {
                    winner = c;
                    best = v;
                }
            }
        }
        if (winner != k_) visit(winner, best);
    }

private:
    const SyntheticInstance* instance_;
    std::size_t k_;
    std::vector<double> table_;  // n_events x k, row major; empty = on the fly
};

// Bisect the base budget until the sequential replay caps the target share of
// campaigns. The capped share only shrinks as budgets grow; the probes are
// checked against that as they accumulate.
template <typename R>
double calibrate_base_budget(std::span<const SyntheticEvent> events, const R& rule,
                             std::size_t n_campaigns, double target_fraction,
                             double tolerance, int max_iters = 60) {
    if (!(target_fraction > 0.0 && target_fraction < 1.0))
        throw std::invalid_argument("target fraction must lie in (0,1)");
    if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");

    std::vector<std::pair<double, double>> probes;  // (base, fraction), sorted by base
    auto capped_fraction = [&](double base) {
        const CampaignSet campaigns(assign_budgets(n_campaigns, base));
        const Trajectory traj = simulate_sequential(events, campaigns, rule, {});
        std::size_t capped = 0;
        for (const auto& t : traj.capping_times) capped += t.has_value();
        const double fraction = static_cast<double>(capped) / static_cast<double>(n_campaigns);
        const auto at = std::lower_bound(probes.begin(), probes.end(), std::pair{base, fraction});
        if (at != probes.begin() && std::prev(at)->second < fraction)
            throw std::runtime_error("capped fraction increased with the budget");
        if (at != probes.end() && at->second > fraction)
            throw std::runtime_error("capped fraction increased with the budget");
        probes.insert(at, {base, fraction});
        return fraction;
    };

    // Initial guess: an even split of the expected total spend across the
    // linear budget profile.
    std::vector<double> rate =
        segment_spend_sum(events, rule, ActivationVector::all_active(n_campaigns), 1,
                          static_cast<std::int64_t>(events.size()), 1);
    double total = 0.0;
    for (double v : rate) total += v;
    double guess = 2.0 * total / (static_cast<double>(n_campaigns) *
                                  static_cast<double>(n_campaigns + 1));
    if (!(guess > 0.0)) throw std::runtime_error("instance generates no spend");

    double lo = guess, hi = guess;
    double f_lo = capped_fraction(lo);
    int expand = 0;
    while (f_lo < target_fraction && expand++ < max_iters) {
        lo /= 2.0;
        f_lo = capped_fraction(lo);
    }
    if (std::abs(f_lo - target_fraction) <= tolerance) return lo;
    double f_hi = capped_fraction(hi);
    expand = 0;
    while (f_hi > target_fraction && expand++ < max_iters) {
        hi *= 2.0;
        f_hi = capped_fraction(hi);
    }
    if (std::abs(f_hi - target_fraction) <= tolerance) return hi;
    if (f_lo < target_fraction || f_hi > target_fraction)
        throw std::runtime_error("could not bracket the target capped fraction");

    for (int it = 0; it < max_iters; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f = capped_fraction(mid);
        if (std::abs(f - target_fraction) <= tolerance) return mid;
        if (f > target_fraction)
            lo = mid;
        else
            hi = mid;
    }
    throw std::runtime_error("calibration did not reach the target tolerance");
}

inline SyntheticInstance make_synthetic_instance(SyntheticConfig cfg, int threads = 1,
                                                 std::int64_t table_cap_entries = 1 << 26) {
    cfg.validate();
    SyntheticInstance inst;
    inst.cfg = cfg;
    Rng base_rng(substream(cfg.seed, detail::kTagEventBase));
    inst.base_embedding.resize(cfg.dim);
    for (std::size_t j = 0; j < cfg.dim; ++j) inst.base_embedding[j] = base_rng.next_normal();
    inst.event_embeddings = generate_event_embeddings(cfg, inst.base_embedding, threads);
    inst.campaign_embeddings = generate_campaign_embeddings(cfg);

    if (cfg.auto_base_budget) {
        const auto events = inst.events();
        const SyntheticFirstPriceRule rule(inst, table_cap_entries, threads);
        const double base =
            calibrate_base_budget(std::span<const SyntheticEvent>(events), rule, cfg.n_campaigns,
                                  cfg.target_capped_fraction, cfg.target_tolerance);
        inst.cfg.base_budget = base;
        inst.cfg.auto_base_budget = false;
    }
    inst.budgets = assign_budgets(cfg.n_campaigns, inst.cfg.base_budget);
    return inst;
}

// ---------------------------------------------------------------------------
// Instance files: little-endian binary, header then raw double arrays.
// Layout: magic "BURNSIM1", u64 n_events, u64 n_campaigns, u64 dim, u64 seed,
// f64 base_budget, f64 noise_scale, then base_embedding, event_embeddings,
// campaign_embeddings, budgets.
// ---------------------------------------------------------------------------

inline void save_instance(const SyntheticInstance& inst, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    const char magic[8] = {'B', 'U', 'R', 'N', 'S', 'I', 'M', '1'};
    out.write(magic, 8);
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_u64(static_cast<std::uint64_t>(inst.cfg.n_events));
    put_u64(inst.cfg.n_campaigns);
    put_u64(inst.cfg.dim);
    put_u64(inst.cfg.seed);
    put_f64(inst.cfg.base_budget);
    put_f64(inst.cfg.noise_scale);
    auto put_array = [&](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    put_array(inst.base_embedding);
    put_array(inst.event_embeddings);
    put_array(inst.campaign_embeddings);
    put_array(inst.budgets);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline SyntheticInstance load_instance(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "BURNSIM1", 8) != 0)
        throw std::runtime_error("not an instance file: " + path);
    auto get_u64 = [&] {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto get_f64 = [&] {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    SyntheticInstance inst;
    inst.cfg.n_events = static_cast<std::int64_t>(get_u64());
    inst.cfg.n_campaigns = static_cast<std::size_t>(get_u64());
    inst.cfg.dim = static_cast<std::size_t>(get_u64());
    inst.cfg.seed = get_u64();
    inst.cfg.base_budget = get_f64();
    inst.cfg.noise_scale = get_f64();
    inst.cfg.validate();
    auto get_array = [&](std::vector<double>& v, std::size_t count) {
        v.resize(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
    };
    get_array(inst.base_embedding, inst.cfg.dim);
    get_array(inst.event_embeddings,
              static_cast<std::size_t>(inst.cfg.n_events) * inst.cfg.dim);
    get_array(inst.campaign_embeddings, inst.cfg.n_campaigns * inst.cfg.dim);
    get_array(inst.budgets, inst.cfg.n_campaigns);
    if (!in) throw std::runtime_error("truncated instance file: " + path);
    return inst;
}

}  // namespace burnsim
