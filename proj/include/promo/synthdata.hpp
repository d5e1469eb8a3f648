#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "promo/csv.hpp"
#include "promo/domain.hpp"
#include "promo/indicators.hpp"
#include "promo/rng.hpp"

// Synthetic receipts, promotions, stores and catalog with planted promotion
// effects. Daily expected units of a product in a store:
//
//   base * (1 + elasticity * price_change * channel_lift) * store_size * season + noise
//
// where channel_lift = 1 + sum of the lifts of the promotion's channels, so the
// advertising channels amplify the response to the discount. Store traffic
// (receipts per day) scales with store size, season, weekday and the number
// of advertised promotions running in the store.
namespace promo::synth {

struct GenConfig {
    std::uint64_t seed = 42;
    int n_stores = 8;
    int products_per_group = 5;
    std::vector<std::string> groups{"dairy", "fruits", "vegetables"};
    int first_year = 2015;
    int last_year = 2018;
    double base_demand = 6.0;          // mean units (or kg) per product per store-day
    double promotions_per_year = 8.0;  // per (store, product)
    double elasticity = 3.0;
    std::array<double, 4> channel_lift{0.5, 0.25, 0.2, 0.1}; // tv, radio, internet, other
    std::array<double, 4> channel_probability{0.3, 0.3, 0.4, 0.5};
    double traffic_per_day = 30.0;     // receipts per store-day at size 1
    double traffic_lift = 0.03;        // per advertised promotion running in the store
    double seasonal_amplitude = 0.15;
    double noise = 0.1;                // sd of additive demand noise, as a fraction of base
    // store attribute ranges
    double min_inhabitants_500m = 500.0;
    double max_inhabitants_500m = 6000.0;

    void validate() const {
        if (n_stores < 1 || products_per_group < 1 || groups.empty())
            throw InvalidConfig("store, product and group counts must be >= 1");
        if (last_year - first_year < 1) throw InvalidConfig("date span must cover at least two calendar years");
        if (!(elasticity >= 0.0)) throw InvalidConfig("elasticity must be >= 0");
        if (!(base_demand > 0.0) || !(traffic_per_day >= 1.0)) throw InvalidConfig("demand and traffic must be positive");
        if (!(promotions_per_year > 0.0) || promotions_per_year > 40.0)
            throw InvalidConfig("promotions_per_year must be in (0, 40]");
        if (!(noise >= 0.0) || !(seasonal_amplitude >= 0.0) || seasonal_amplitude >= 1.0 || !(traffic_lift >= 0.0))
            throw InvalidConfig("noise, seasonal amplitude and traffic lift must be >= 0 (amplitude < 1)");
        for (double l : channel_lift)
            if (!(l >= 0.0)) throw InvalidConfig("channel lifts must be >= 0");
        for (double p : channel_probability)
            if (!(p >= 0.0 && p <= 1.0)) throw InvalidConfig("channel probabilities must be in [0, 1]");
        if (!(min_inhabitants_500m > 0.0 && max_inhabitants_500m >= min_inhabitants_500m))
            throw InvalidConfig("bad inhabitant range");
    }
};

struct GeneratedData {
    std::vector<ProductRef> catalog;
    std::vector<StoreProfile> stores;
    std::vector<PromotionWindow> promotions;
    std::vector<Receipt> receipts;
    /// Indicator values of each promotion tallied while composing receipts
    /// (parallel to `promotions`; n_hit_receipts 0 marks an undefined window).
    std::vector<IndicatorValues> expected;
};

namespace detail {

inline double round_cents(double v) { return std::round(v * 100.0) / 100.0; }

inline constexpr std::array<double, 7> kWeekdayTraffic{0.9, 0.9, 0.95, 1.0, 1.15, 1.25, 0.85};

struct ProductPlan {
    double base = 0.0;
    double regular_price = 0.0;
    double quantity = 1.0; // per purchase
};

struct Tally {
    std::size_t n_all = 0, n_hit = 0;
    double quantity = 0.0, basket = 0.0, basket_without = 0.0, unique = 0.0;
};

} // namespace detail

inline GeneratedData generate(const GenConfig& cfg) {
    cfg.validate();
    using detail::round_cents;
    Rng rng(derive_seed(cfg.seed, "synth"));
    GeneratedData out;

    // catalog
    std::vector<detail::ProductPlan> plan;
    for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
        for (int i = 0; i < cfg.products_per_group; ++i) {
            char id[32];
            std::snprintf(id, sizeof id, "P%02zu%02d", g + 1, i + 1);
            const bool weighed = cfg.groups[g] != "dairy" && rng.bernoulli(0.6);
            out.catalog.push_back({id, cfg.groups[g], weighed ? SoldBy::weight : SoldBy::unit});
            detail::ProductPlan p;
            p.base = cfg.base_demand * rng.uniform(0.6, 1.4);
            p.regular_price = round_cents(rng.uniform(1.0, 6.0));
            p.quantity = weighed ? 1.0 + 0.5 * static_cast<double>(rng.between(0, 2))
                                 : static_cast<double>(rng.between(1, 2));
            plan.push_back(p);
        }
    }
    const std::size_t n_products = out.catalog.size();

    // stores
    std::vector<double> store_size;
    for (int s = 0; s < cfg.n_stores; ++s) {
        char id[16];
        std::snprintf(id, sizeof id, "S%02d", s + 1);
        StoreProfile st;
        st.store_id = id;
        const double inh500 = std::round(rng.uniform(cfg.min_inhabitants_500m, cfg.max_inhabitants_500m));
        const double inh1k = std::round(inh500 * rng.uniform(2.5, 4.0));
        const double inh5 = std::round(inh1k * rng.uniform(3.0, 6.0));
        const double purchasing = round_cents(rng.uniform(0.6, 1.4));
        st.attributes = {
            {"inhabitants_1km", inh1k},
            {"inhabitants_per_km2", std::round(inh1k / std::numbers::pi)},
            {"inhabitants_5min_drive", inh5},
            {"inhabitants_10min_drive", std::round(inh5 * rng.uniform(2.0, 4.0))},
            {"inhabitants_500m", inh500},
            {"unemployment_rate", std::round(rng.uniform(2.0, 15.0) * 10.0) / 10.0},
            {"cars_per_1000", std::round(rng.uniform(300.0, 700.0))},
            {"avg_monthly_salary", std::round(rng.uniform(3000.0, 8000.0))},
            {"tourism_ratio", round_cents(rng.uniform(0.0, 1.0))},
            {"n_competitors", static_cast<double>(rng.between(0, 8))},
            {"competitor_distance", round_cents(rng.uniform(0.1, 5.0))},
            {"purchasing_rate", purchasing},
        };
        store_size.push_back((0.4 + inh500 / 5000.0) * std::sqrt(purchasing));
        out.stores.push_back(std::move(st));
    }

    // promotions, sequential per (store, product) so they never overlap themselves
    const Date first{cfg.first_year, 1, 1};
    const Date last{cfg.last_year, 12, 31};
    const double mean_gap = 365.0 / cfg.promotions_per_year - 4.0;
    const int max_gap = std::max(2, static_cast<int>(std::lround(2.0 * mean_gap)));
    for (int s = 0; s < cfg.n_stores; ++s) {
        for (std::size_t p = 0; p < n_products; ++p) {
            Date cursor = first + static_cast<int>(rng.between(0, max_gap));
            while (true) {
                const int duration = static_cast<int>(rng.between(1, kMaxPromotionDays));
                PromotionWindow w;
                w.store_id = out.stores[s].store_id;
                w.product_id = out.catalog[p].product_id;
                w.start_date = cursor;
                w.end_date = cursor + (duration - 1);
                if (w.end_date > last) break;
                w.price_change = 0.05 * static_cast<double>(rng.between(2, 10));
                w.price_change = std::round(w.price_change * 100.0) / 100.0;
                w.promo_price = round_cents(plan[p].regular_price * (1.0 - w.price_change));
                w.channels = {rng.bernoulli(cfg.channel_probability[0]), rng.bernoulli(cfg.channel_probability[1]),
                              rng.bernoulli(cfg.channel_probability[2]), rng.bernoulli(cfg.channel_probability[3])};
                out.promotions.push_back(w);
                cursor = w.end_date + 1 + static_cast<int>(rng.between(1, max_gap));
            }
        }
    }
    std::stable_sort(out.promotions.begin(), out.promotions.end(), [](const auto& a, const auto& b) {
        return std::tie(a.start_date, a.store_id, a.product_id) < std::tie(b.start_date, b.store_id, b.product_id);
    });

    // active promotion per (store, product, day offset), index into promotions or -1
    const int n_days = (last - first) + 1;
    const std::size_t stride = static_cast<std::size_t>(n_days);
    std::vector<int> active(static_cast<std::size_t>(cfg.n_stores) * n_products * stride, -1);
    std::unordered_map<std::string, int> store_index;
    for (int s = 0; s < cfg.n_stores; ++s) store_index[out.stores[s].store_id] = s;
    std::unordered_map<std::string, std::size_t> product_index;
    for (std::size_t p = 0; p < n_products; ++p) product_index[out.catalog[p].product_id] = p;
    for (std::size_t i = 0; i < out.promotions.size(); ++i) {
        const auto& w = out.promotions[i];
        const std::size_t base = (static_cast<std::size_t>(store_index[w.store_id]) * n_products +
                                  product_index[w.product_id]) * stride;
        for (Date d = w.start_date; d <= w.end_date; d += 1) active[base + static_cast<std::size_t>(d - first)] = static_cast<int>(i);
    }

    // receipts
    std::vector<detail::Tally> tally(out.promotions.size());
    std::uint64_t receipt_counter = 0;
    std::vector<std::vector<std::size_t>> lines_of; // per receipt slot: product indices
    std::vector<std::uint32_t> slots;
    std::vector<double> price_today(n_products), qty_today(n_products);
    for (int s = 0; s < cfg.n_stores; ++s) {
        const auto& store = out.stores[s];
        for (int day = 0; day < n_days; ++day) {
            const Date d = first + day;
            const double season =
                1.0 + cfg.seasonal_amplitude * std::sin(2.0 * std::numbers::pi * (d.day_of_year() - 80) / 365.25);
            int advertised = 0;
            std::vector<int> todays_promos;
            for (std::size_t p = 0; p < n_products; ++p) {
                const int a = active[(static_cast<std::size_t>(s) * n_products + p) * stride + static_cast<std::size_t>(day)];
                if (a >= 0) {
                    todays_promos.push_back(a);
                    if (out.promotions[a].channels.broadcast()) ++advertised;
                }
            }
            const double traffic = cfg.traffic_per_day * store_size[s] * season *
                                   detail::kWeekdayTraffic[d.iso_weekday() - 1] * (1.0 + cfg.traffic_lift * advertised);
            const auto n_slots = static_cast<std::size_t>(std::max(1L, std::lround(traffic)));
            lines_of.assign(n_slots, {});
            slots.resize(n_slots);

            for (std::size_t p = 0; p < n_products; ++p) {
                const int a = active[(static_cast<std::size_t>(s) * n_products + p) * stride + static_cast<std::size_t>(day)];
                double uplift = 1.0;
                price_today[p] = plan[p].regular_price;
                if (a >= 0) {
                    const auto& w = out.promotions[a];
                    double lift = 1.0;
                    const auto flags = w.channels.flags();
                    for (int c = 0; c < 4; ++c)
                        if (flags[c]) lift += cfg.channel_lift[c];
                    uplift = 1.0 + cfg.elasticity * w.price_change * lift;
                    price_today[p] = w.promo_price;
                }
                double units = plan[p].base * uplift * store_size[s] * season;
                if (cfg.noise > 0.0) units += cfg.noise * plan[p].base * rng.normal();
                units = std::max(0.0, units);
                qty_today[p] = plan[p].quantity;
                const auto k = std::min<std::size_t>(n_slots, static_cast<std::size_t>(std::lround(units / plan[p].quantity)));
                for (std::size_t i = 0; i < n_slots; ++i) slots[i] = static_cast<std::uint32_t>(i);
                for (std::size_t i = 0; i < k; ++i) {
                    const auto j = i + rng.below(n_slots - i);
                    std::swap(slots[i], slots[j]);
                    lines_of[slots[i]].push_back(p);
                }
            }

            // tally planned indicators for today's promotions from the slot plan
            std::vector<double> slot_total(n_slots, 0.0);
            std::size_t non_empty = 0;
            for (std::size_t i = 0; i < n_slots; ++i) {
                if (lines_of[i].empty()) continue;
                ++non_empty;
                std::sort(lines_of[i].begin(), lines_of[i].end());
                for (auto p : lines_of[i]) slot_total[i] += round_cents(qty_today[p] * price_today[p]);
            }
            for (int a : todays_promos) {
                auto& t = tally[a];
                const std::size_t p = product_index[out.promotions[a].product_id];
                t.n_all += non_empty;
                for (std::size_t i = 0; i < n_slots; ++i) {
                    if (std::find(lines_of[i].begin(), lines_of[i].end(), p) == lines_of[i].end()) continue;
                    ++t.n_hit;
                    t.quantity += qty_today[p];
                    t.basket += slot_total[i];
                    t.basket_without += slot_total[i] - round_cents(qty_today[p] * price_today[p]);
                    t.unique += static_cast<double>(lines_of[i].size());
                }
            }

            for (std::size_t i = 0; i < n_slots; ++i) {
                if (lines_of[i].empty()) continue;
                char rid[24];
                std::snprintf(rid, sizeof rid, "R%09llu", static_cast<unsigned long long>(++receipt_counter));
                Receipt r{rid, store.store_id, d, {}};
                for (auto p : lines_of[i])
                    r.lines.push_back({out.catalog[p].product_id, qty_today[p], round_cents(qty_today[p] * price_today[p])});
                out.receipts.push_back(std::move(r));
            }
        }
    }

    out.expected.resize(out.promotions.size());
    for (std::size_t i = 0; i < out.promotions.size(); ++i) {
        const auto& t = tally[i];
        auto& e = out.expected[i];
        e.n_days = out.promotions[i].duration_days();
        e.n_hit_receipts = t.n_hit;
        e.n_all_receipts = t.n_all;
        if (t.n_hit == 0) continue;
        const double days = e.n_days, hits = static_cast<double>(t.n_hit);
        e[IndicatorKind::AVG_AMOUNT] = t.quantity / days;
        e[IndicatorKind::AVG_NB_RECEIPTS] = hits / days;
        e[IndicatorKind::AVG_BASKET] = t.basket / hits;
        e[IndicatorKind::AVG_BASKET_WITHOUT_ITEM] = t.basket_without / hits;
        e[IndicatorKind::AVG_NB_UNIQUE_ITEMS] = t.unique / hits;
        e[IndicatorKind::AVG_NB_CLIENTS] = static_cast<double>(t.n_all) / days;
    }
    return out;
}

struct DataPaths {
    std::string catalog, receipts, promotions, stores;

    static DataPaths in(const std::filesystem::path& dir) {
        return {(dir / "catalog.csv").string(), (dir / "receipts.csv").string(), (dir / "promotions.csv").string(),
                (dir / "stores.csv").string()};
    }
};

inline void write(const GeneratedData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto paths = DataPaths::in(dir);
    csv::write_file_atomic(paths.catalog, format_catalog(data.catalog));
    csv::write_file_atomic(paths.stores, format_stores(data.stores));
    csv::write_file_atomic(paths.promotions, format_promotions(data.promotions));
    csv::write_file_atomic(paths.receipts, format_receipts(data.receipts));
}

} // namespace promo::synth
