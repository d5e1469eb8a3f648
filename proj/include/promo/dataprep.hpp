#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "promo/domain.hpp"
#include "promo/gbt.hpp"
#include "promo/indicators.hpp"

namespace promo::dataprep {

// ---------------------------------------------------------------------------
// features

struct ChannelCombo {
    enum class Op { OR, AND, XOR };
    Op op;
    std::vector<int> channels; // indices into kChannelNames

    std::string name() const {
        std::string s = op == Op::OR ? "or" : op == Op::AND ? "and" : "xor";
        for (int c : channels) s += "_" + std::string(kChannelNames[c]);
        return s;
    }

    bool eval(const std::array<bool, 4>& f) const {
        switch (op) {
        case Op::OR: return std::any_of(channels.begin(), channels.end(), [&](int c) { return f[c]; });
        case Op::AND: return std::all_of(channels.begin(), channels.end(), [&](int c) { return f[c]; });
        case Op::XOR: return f[channels[0]] != f[channels[1]];
        }
        return false;
    }
};

/// OR and AND over every channel subset of size 2-4, XOR over pairs only.
/// Subsets ordered by size, then lexicographically.
inline const std::vector<ChannelCombo>& channel_combos() {
    static const std::vector<ChannelCombo> combos = [] {
        std::vector<ChannelCombo> out;
        for (int size = 2; size <= 4; ++size) {
            // lexicographic subsets of {0,1,2,3} with `size` elements
            std::vector<int> idx(size);
            for (int i = 0; i < size; ++i) idx[i] = i;
            while (true) {
                out.push_back({ChannelCombo::Op::OR, idx});
                out.push_back({ChannelCombo::Op::AND, idx});
                if (size == 2) out.push_back({ChannelCombo::Op::XOR, idx});
                int i = size - 1;
                while (i >= 0 && idx[i] == 4 - size + i) --i;
                if (i < 0) break;
                ++idx[i];
                for (int k = i + 1; k < size; ++k) idx[k] = idx[k - 1] + 1;
            }
        }
        return out;
    }();
    return combos;
}

inline constexpr std::array<std::string_view, 10> kPriceTimeFeatures{
    "promo_price", "price_change", "duration_days", "start_weekday", "year",
    "month",       "day_of_month", "week_of_year",  "day_of_year",   "season"};

inline constexpr std::array<std::string_view, 3> kConcurrencyFeatures{
    "n_promotions_store", "n_promotions_tv_radio_internet", "n_promotions_any_channel"};

/// Feature names in emission order for stores with `store`'s attribute columns.
inline std::vector<std::string> feature_names(const StoreProfile& store) {
    std::vector<std::string> names(kPriceTimeFeatures.begin(), kPriceTimeFeatures.end());
    for (auto c : kChannelNames) names.emplace_back(c);
    for (const auto& combo : channel_combos()) names.push_back(combo.name());
    for (const auto& [k, v] : store.attributes) names.push_back(k);
    for (auto c : kConcurrencyFeatures) names.emplace_back(c);
    return names;
}

struct ConcurrencyCounts {
    int all = 0;
    int broadcast = 0; // tv, radio or internet
    int any_channel = 0;
};

/// Promotions in the window's store overlapping its span. A promotion window
/// counts itself whether or not it appears in `promotions`; a period without
/// promotion counts others only.
inline ConcurrencyCounts concurrency(const PromotionWindow& window, std::span<const PromotionWindow> promotions) {
    ConcurrencyCounts c;
    auto add = [&](const PromotionWindow& p) {
        ++c.all;
        if (p.channels.broadcast()) ++c.broadcast;
        if (p.channels.any()) ++c.any_channel;
    };
    for (const auto& p : promotions) {
        if (p == window || !p.is_promotion() || p.store_id != window.store_id || !p.overlaps(window)) continue;
        add(p);
    }
    if (window.is_promotion()) add(window);
    return c;
}

inline std::vector<double> build_features(const PromotionWindow& window, const StoreProfile& store,
                                          std::span<const PromotionWindow> promotions) {
    if (store.store_id != window.store_id)
        throw InvariantViolation("store '" + store.store_id + "' does not match window store '" + window.store_id + "'");
    const Date d = window.start_date;
    std::vector<double> v{window.promo_price,
                          window.price_change,
                          static_cast<double>(window.duration_days()),
                          static_cast<double>(d.iso_weekday()),
                          static_cast<double>(d.year()),
                          static_cast<double>(d.month()),
                          static_cast<double>(d.day()),
                          static_cast<double>(d.iso_week()),
                          static_cast<double>(d.day_of_year()),
                          static_cast<double>(d.season())};
    const auto flags = window.channels.flags();
    for (bool f : flags) v.push_back(f ? 1.0 : 0.0);
    for (const auto& combo : channel_combos()) v.push_back(combo.eval(flags) ? 1.0 : 0.0);
    for (const auto& [k, value] : store.attributes) v.push_back(value);
    const auto c = concurrency(window, promotions);
    v.push_back(c.all);
    v.push_back(c.broadcast);
    v.push_back(c.any_channel);
    return v;
}

// ---------------------------------------------------------------------------
// matching periods without promotion

inline constexpr int kMinMatchWeeks = 1;
inline constexpr int kMaxMatchWeeks = 4;

/// Same product, store, duration and start weekday, starting 1 to 4 weeks
/// earlier, with the product not promoted in that store on any day of the span.
/// The closest qualifying week wins. `regular_price` defaults to the price
/// implied by the promotion's discount.
inline std::optional<PromotionWindow> find_matching_period(const PromotionWindow& window,
                                                           std::span<const PromotionWindow> promotions,
                                                           std::optional<double> regular_price = std::nullopt) {
    for (int k = kMinMatchWeeks; k <= kMaxMatchWeeks; ++k) {
        PromotionWindow candidate;
        candidate.store_id = window.store_id;
        candidate.product_id = window.product_id;
        candidate.start_date = window.start_date - 7 * k;
        candidate.end_date = window.end_date - 7 * k;
        const bool blocked = std::any_of(promotions.begin(), promotions.end(), [&](const PromotionWindow& p) {
            return p.is_promotion() && p.store_id == candidate.store_id && p.product_id == candidate.product_id &&
                   p.overlaps(candidate);
        });
        if (blocked) continue;
        candidate.price_change = 0.0;
        candidate.channels = {};
        candidate.promo_price = regular_price.value_or(window.promo_price / (1.0 - window.price_change));
        return candidate;
    }
    return std::nullopt;
}

inline std::string pair_key(std::string_view store, std::string_view product) {
    std::string k(store);
    k += '\x1f';
    k += product;
    return k;
}

/// Modal non-promotional unit price (to the cent) per (store, product), read
/// from receipt lines on days the product was not promoted in that store.
/// Ties go to the lower price.
class RegularPriceTable {
public:
    RegularPriceTable(std::span<const Receipt> receipts, std::span<const PromotionWindow> promotions) {
        std::unordered_map<std::string, std::vector<const PromotionWindow*>> promo_by_pair;
        for (const auto& p : promotions)
            if (p.is_promotion()) promo_by_pair[pair_key(p.store_id, p.product_id)].push_back(&p);
        std::unordered_map<std::string, std::map<long long, std::size_t>> counts;
        for (const auto& r : receipts) {
            for (const auto& l : r.lines) {
                const auto key = pair_key(r.store_id, l.product_id);
                if (auto it = promo_by_pair.find(key); it != promo_by_pair.end()) {
                    const bool promoted = std::any_of(it->second.begin(), it->second.end(),
                                                      [&](const PromotionWindow* p) { return p->covers(r.date); });
                    if (promoted) continue;
                }
                const auto cents = std::llround(l.line_value / l.quantity * 100.0);
                ++counts[key][cents];
            }
        }
        for (const auto& [key, hist] : counts) {
            long long best = 0;
            std::size_t best_n = 0;
            for (const auto& [cents, n] : hist)
                if (n > best_n) {
                    best = cents;
                    best_n = n;
                }
            price_[key] = static_cast<double>(best) / 100.0;
        }
    }

    std::optional<double> get(std::string_view store, std::string_view product) const {
        if (auto it = price_.find(pair_key(store, product)); it != price_.end()) return it->second;
        return std::nullopt;
    }

private:
    std::unordered_map<std::string, double> price_;
};

// ---------------------------------------------------------------------------
// feature rows and standardization

struct WindowKey {
    std::string store_id;
    std::string product_id;
    Date start_date;

    auto operator<=>(const WindowKey&) const = default;
};

struct FeatureRow {
    WindowKey key;
    std::string group;
    std::vector<double> features;
    double target = 0.0;     // model target, z-score for standardized indicators
    double raw_target = 0.0; // indicator value in its own units
    bool is_promotion = true;
};

struct MomentStats {
    double mean = 0.0;
    double sd = 0.0; // sample standard deviation (n - 1)
    std::size_t n = 0;
};

inline MomentStats moments(std::span<const double> values) {
    MomentStats m;
    m.n = values.size();
    if (m.n == 0) return m;
    double sum = 0.0;
    for (double v : values) sum += v;
    m.mean = sum / static_cast<double>(m.n);
    if (m.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - m.mean) * (v - m.mean);
        m.sd = std::sqrt(ss / static_cast<double>(m.n - 1));
    }
    return m;
}

struct StandardizerKey {
    std::string product_id;
    std::string store_id;
    std::string group;
};

/// Per-(product, store) moments of a standardized indicator with a per-group
/// fallback for pairs unseen in training or with zero spread.
struct StandardizerStats {
    std::map<std::pair<std::string, std::string>, MomentStats> pairs; // (product_id, store_id)
    std::map<std::string, MomentStats> groups;

    /// The moments used for `key`. A group fallback with zero spread only
    /// centers (sd taken as 1).
    MomentStats resolve(const StandardizerKey& key) const {
        if (auto it = pairs.find({key.product_id, key.store_id}); it != pairs.end() && it->second.sd > 0.0)
            return it->second;
        auto g = groups.find(key.group);
        if (g == groups.end())
            throw UnknownGroupNoFallback("no statistics for product '" + key.product_id + "' in store '" + key.store_id +
                                         "' and no fallback for group '" + key.group + "'");
        MomentStats m = g->second;
        if (!(m.sd > 0.0)) m.sd = 1.0;
        return m;
    }
};

inline StandardizerStats fit_standardizer(std::span<const FeatureRow> training_rows, IndicatorKind kind) {
    if (!is_standardized(kind))
        throw InvalidConfig(std::string(name_of(kind)) + " is not a standardized indicator");
    std::map<std::pair<std::string, std::string>, std::vector<double>> by_pair;
    std::map<std::string, std::vector<double>> by_group;
    for (const auto& r : training_rows) {
        by_pair[{r.key.product_id, r.key.store_id}].push_back(r.raw_target);
        by_group[r.group].push_back(r.raw_target);
    }
    StandardizerStats stats;
    for (const auto& [k, v] : by_pair) stats.pairs[k] = moments(v);
    for (const auto& [k, v] : by_group) stats.groups[k] = moments(v);
    return stats;
}

inline double standardize(double value, const StandardizerKey& key, const StandardizerStats& stats) {
    const auto m = stats.resolve(key);
    return (value - m.mean) / m.sd;
}

inline double destandardize(double z, const StandardizerKey& key, const StandardizerStats& stats) {
    const auto m = stats.resolve(key);
    return z * m.sd + m.mean;
}

inline constexpr std::string_view kStatsHeader = "product_id,store_id,mean,sd,n";

/// Pair rows first, then one row per group fallback written as "@<group>,*".
inline std::string format_stats(const StandardizerStats& s) {
    std::string out(kStatsHeader);
    out += '\n';
    auto row = [&](const std::string& a, const std::string& b, const MomentStats& m) {
        out += a + ',' + b + ',' + csv::fmt(m.mean) + ',' + csv::fmt(m.sd) + ',' + std::to_string(m.n) + '\n';
    };
    for (const auto& [k, m] : s.pairs) row(k.first, k.second, m);
    for (const auto& [g, m] : s.groups) row("@" + g, "*", m);
    return out;
}

inline StandardizerStats parse_stats(std::span<const std::string> lines) {
    if (lines.empty() || csv::trim(lines[0]) != kStatsHeader) throw MalformedRow(1, "bad statistics header");
    StandardizerStats s;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (csv::trim(lines[i]).empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() != 5) throw MalformedRow(i + 1, "expected 5 fields");
        MomentStats m;
        double n = 0.0;
        if (!csv::parse_double(f[2], m.mean) || !csv::parse_double(f[3], m.sd) || !csv::parse_double(f[4], n) || m.sd < 0)
            throw MalformedRow(i + 1, "bad number");
        m.n = static_cast<std::size_t>(n);
        const std::string a(csv::trim(f[0])), b(csv::trim(f[1]));
        if (a.starts_with("@")) s.groups[a.substr(1)] = m;
        else s.pairs[{a, b}] = m;
    }
    return s;
}

// ---------------------------------------------------------------------------
// dataset assembly

struct AssemblyConfig {
    std::vector<int> training_years{2015, 2016, 2017};
    int test_year = 2018;
    double validation_fraction = 0.2;
    std::vector<std::string> groups; // empty: every catalog group, sorted

    void validate() const {
        if (training_years.empty()) throw InvalidConfig("no training years");
        for (int y : training_years)
            if (y >= test_year) throw InvalidConfig("training years must precede the test year");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw InvalidConfig("validation fraction must be in (0, 1)");
    }
};

/// One (group, indicator) dataset. `train` is chronological; its last
/// `n_validation` rows form the validation set, the rest the fitting set.
struct DatasetSplit {
    std::string group;
    IndicatorKind kind = IndicatorKind::AVG_AMOUNT;
    std::vector<std::string> feature_names;
    std::vector<FeatureRow> train;
    std::size_t n_validation = 0;
    std::vector<FeatureRow> test;
    std::optional<StandardizerStats> stats;

    std::span<const FeatureRow> fit_rows() const { return {train.data(), train.size() - n_validation}; }
    std::span<const FeatureRow> validation_rows() const {
        return {train.data() + (train.size() - n_validation), n_validation};
    }
};

inline std::size_t validation_size(std::size_t n_train, double fraction) {
    if (n_train < 2) return 0;
    const auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n_train) * fraction + 1e-9));
    return std::clamp<std::size_t>(k, 1, n_train - 1);
}

inline bool chronological(const FeatureRow& a, const FeatureRow& b) {
    return std::tie(a.key.start_date, a.key.store_id, a.key.product_id, a.is_promotion) <
           std::tie(b.key.start_date, b.key.store_id, b.key.product_id, b.is_promotion);
}

inline gbt::Dataset to_dataset(std::span<const FeatureRow> rows, const std::vector<std::string>& names) {
    gbt::Dataset d;
    d.feature_names = names;
    d.x.reserve(rows.size() * names.size());
    for (const auto& r : rows) d.add_row(r.features, r.target);
    return d;
}

inline StandardizerKey standardizer_key(const FeatureRow& r) { return {r.key.product_id, r.key.store_id, r.group}; }

/// Feature-matrix CSV: feature names, target, is_promotion.
inline std::string format_rows(std::span<const FeatureRow> rows, const std::vector<std::string>& names) {
    std::string out;
    for (const auto& n : names) out += n + ',';
    out += "target,is_promotion\n";
    for (const auto& r : rows) {
        for (double v : r.features) out += csv::fmt(v) + ',';
        out += csv::fmt(r.target) + ',' + (r.is_promotion ? "1" : "0") + '\n';
    }
    return out;
}

struct AssemblySummary {
    std::size_t promotions_used = 0;
    std::size_t promotions_no_hit = 0;
    std::size_t matches_found = 0;
    std::size_t matches_missing = 0;
    std::size_t matches_no_hit = 0;
    std::size_t matches_outside_years = 0;
    std::size_t matches_duplicate = 0;
};

struct Assembly {
    std::vector<DatasetSplit> splits; // groups in order, the six indicators within each
    AssemblySummary summary;
    std::vector<PromotionWindow> matches; // every matched period that entered a training set
};

inline Assembly assemble_datasets(std::span<const PromotionWindow> promotions, std::span<const Receipt> receipts,
                                  std::span<const StoreProfile> stores, std::span<const ProductRef> catalog,
                                  const AssemblyConfig& config) {
    config.validate();
    if (stores.empty()) throw InvalidConfig("no stores");

    std::unordered_map<std::string, const ProductRef*> product_by_id;
    for (const auto& p : catalog) product_by_id[p.product_id] = &p;
    std::unordered_map<std::string, const StoreProfile*> store_by_id;
    for (const auto& s : stores) store_by_id[s.store_id] = &s;

    std::vector<std::string> groups = config.groups;
    if (groups.empty()) {
        std::set<std::string> all;
        for (const auto& p : catalog) all.insert(p.group);
        groups.assign(all.begin(), all.end());
    }
    const std::set<int> train_years(config.training_years.begin(), config.training_years.end());

    std::unordered_map<std::string, std::vector<PromotionWindow>> by_store, by_pair;
    for (const auto& p : promotions) {
        by_store[p.store_id].push_back(p);
        by_pair[pair_key(p.store_id, p.product_id)].push_back(p);
    }
    const ReceiptIndex index(receipts);
    const RegularPriceTable prices(receipts, promotions);
    const auto names = feature_names(stores.front());

    struct Record {
        FeatureRow row; // target unset
        IndicatorValues values;
        bool train = false;
    };
    std::map<std::string, std::vector<Record>> records;
    Assembly out;
    std::set<std::pair<std::string, std::pair<Date, Date>>> seen_matches;

    auto make_record = [&](const PromotionWindow& w, const std::string& group, bool is_train) -> std::optional<Record> {
        IndicatorValues values;
        try {
            values = compute_indicators(w, index);
        } catch (const NoHitReceipts&) {
            return std::nullopt;
        }
        const auto sit = store_by_id.find(w.store_id);
        if (sit == store_by_id.end()) throw UnknownReference("store '" + w.store_id + "'");
        Record rec;
        rec.row.key = {w.store_id, w.product_id, w.start_date};
        rec.row.group = group;
        rec.row.is_promotion = w.is_promotion();
        rec.row.features = build_features(w, *sit->second, by_store[w.store_id]);
        if (rec.row.features.size() != names.size())
            throw FeatureMismatch("store '" + w.store_id + "' has a different attribute set");
        rec.values = values;
        rec.train = is_train;
        return rec;
    };

    for (const auto& p : promotions) {
        if (!p.is_promotion()) continue;
        const auto pit = product_by_id.find(p.product_id);
        if (pit == product_by_id.end()) throw UnknownReference("product '" + p.product_id + "'");
        const auto& group = pit->second->group;
        if (std::find(groups.begin(), groups.end(), group) == groups.end()) continue;
        const int year = p.start_date.year();
        const bool is_train = train_years.contains(year);
        if (!is_train && year != config.test_year) continue;

        auto rec = make_record(p, group, is_train);
        if (!rec) {
            ++out.summary.promotions_no_hit;
            continue;
        }
        ++out.summary.promotions_used;
        records[group].push_back(std::move(*rec));
        if (!is_train) continue;

        const auto match =
            find_matching_period(p, by_pair[pair_key(p.store_id, p.product_id)], prices.get(p.store_id, p.product_id));
        if (!match) {
            ++out.summary.matches_missing;
            continue;
        }
        if (!train_years.contains(match->start_date.year())) {
            ++out.summary.matches_outside_years;
            continue;
        }
        if (!seen_matches.insert({pair_key(match->store_id, match->product_id), {match->start_date, match->end_date}})
                 .second) {
            ++out.summary.matches_duplicate;
            continue;
        }
        auto mrec = make_record(*match, group, true);
        if (!mrec) {
            ++out.summary.matches_no_hit;
            continue;
        }
        ++out.summary.matches_found;
        out.matches.push_back(*match);
        records[group].push_back(std::move(*mrec));
    }

    for (const auto& group : groups) {
        auto& recs = records[group];
        std::stable_sort(recs.begin(), recs.end(),
                         [](const Record& a, const Record& b) { return chronological(a.row, b.row); });
        const bool any_train = std::any_of(recs.begin(), recs.end(), [](const Record& r) { return r.train; });
        const bool any_test = std::any_of(recs.begin(), recs.end(), [](const Record& r) { return !r.train; });
        if (!any_train || !any_test)
            throw EmptyGroup("group '" + group + "' has no usable " + (any_train ? "test" : "training") + " rows");

        for (auto kind : kAllIndicators) {
            DatasetSplit split;
            split.group = group;
            split.kind = kind;
            split.feature_names = names;
            for (const auto& r : recs) {
                FeatureRow row = r.row;
                row.raw_target = r.values[kind];
                row.target = row.raw_target;
                (r.train ? split.train : split.test).push_back(std::move(row));
            }
            if (is_standardized(kind)) {
                split.stats = fit_standardizer(split.train, kind);
                for (auto* rows : {&split.train, &split.test})
                    for (auto& row : *rows) row.target = standardize(row.raw_target, standardizer_key(row), *split.stats);
            }
            split.n_validation = validation_size(split.train.size(), config.validation_fraction);
            out.splits.push_back(std::move(split));
        }
    }
    return out;
}

} // namespace promo::dataprep
