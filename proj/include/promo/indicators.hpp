#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "promo/domain.hpp"

namespace promo {

struct IndicatorValues {
    std::array<double, kIndicatorCount> values{};
    int n_days = 0;
    std::size_t n_hit_receipts = 0;
    std::size_t n_all_receipts = 0;

    double operator[](IndicatorKind k) const { return values[index_of(k)]; }
    double& operator[](IndicatorKind k) { return values[index_of(k)]; }
};

/// Receipts bucketed by store and day, so a window only visits its own days.
class ReceiptIndex {
public:
    ReceiptIndex() = default;
    explicit ReceiptIndex(std::span<const Receipt> receipts) {
        for (const auto& r : receipts) by_store_[r.store_id][r.date].push_back(&r);
    }

    /// Receipts of `store` dated in [from, to], in input order within each day.
    template <class F>
    void for_each(const std::string& store, Date from, Date to, F&& f) const {
        auto it = by_store_.find(store);
        if (it == by_store_.end()) return;
        for (auto d = it->second.lower_bound(from); d != it->second.end() && d->first <= to; ++d)
            for (const Receipt* r : d->second) f(*r);
    }

    bool has_store(const std::string& store) const { return by_store_.contains(store); }

private:
    std::unordered_map<std::string, std::map<Date, std::vector<const Receipt*>>> by_store_;
};

namespace detail {

struct IndicatorAccumulator {
    std::size_t n_all = 0;
    std::size_t n_hit = 0;
    double quantity = 0.0;
    double basket = 0.0;
    double basket_without = 0.0;
    double unique_items = 0.0;

    void add(const Receipt& r, const std::string& product) {
        ++n_all;
        bool hit = false;
        double qty = 0.0, value = 0.0, total = 0.0;
        std::unordered_set<std::string_view> distinct;
        for (const auto& l : r.lines) {
            total += l.line_value;
            distinct.insert(l.product_id);
            if (l.product_id == product) {
                hit = true;
                qty += l.quantity;
                value += l.line_value;
            }
        }
        if (!hit) return;
        ++n_hit;
        quantity += qty;
        basket += total;
        basket_without += total - value;
        unique_items += static_cast<double>(distinct.size());
    }

    IndicatorValues finish(const PromotionWindow& w) const {
        if (n_hit == 0)
            throw NoHitReceipts("no receipt contains '" + w.product_id + "' in store '" + w.store_id + "' from " +
                                w.start_date.iso() + " to " + w.end_date.iso());
        IndicatorValues out;
        out.n_days = w.duration_days();
        out.n_hit_receipts = n_hit;
        out.n_all_receipts = n_all;
        const double days = out.n_days;
        const double hits = static_cast<double>(n_hit);
        out[IndicatorKind::AVG_AMOUNT] = quantity / days;
        out[IndicatorKind::AVG_NB_RECEIPTS] = hits / days;
        out[IndicatorKind::AVG_BASKET] = basket / hits;
        out[IndicatorKind::AVG_BASKET_WITHOUT_ITEM] = basket_without / hits;
        out[IndicatorKind::AVG_NB_UNIQUE_ITEMS] = unique_items / hits;
        out[IndicatorKind::AVG_NB_CLIENTS] = static_cast<double>(n_all) / days;
        return out;
    }
};

} // namespace detail

/// The six promotion indicators of `window`. Only receipts from the window's
/// store dated inside the window are considered; a receipt holding several
/// lines of the product counts once, with its lines summed.
/// Throws NoHitReceipts when no receipt contains the product.
inline IndicatorValues compute_indicators(const PromotionWindow& window, const ReceiptIndex& index) {
    detail::IndicatorAccumulator acc;
    index.for_each(window.store_id, window.start_date, window.end_date,
                   [&](const Receipt& r) { acc.add(r, window.product_id); });
    return acc.finish(window);
}

inline IndicatorValues compute_indicators(const PromotionWindow& window, std::span<const Receipt> receipts) {
    detail::IndicatorAccumulator acc;
    for (const auto& r : receipts)
        if (r.store_id == window.store_id && window.covers(r.date)) acc.add(r, window.product_id);
    return acc.finish(window);
}

} // namespace promo
