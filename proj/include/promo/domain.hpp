#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "promo/csv.hpp"
#include "promo/date.hpp"
#include "promo/error.hpp"

namespace promo {

inline constexpr int kMaxPromotionDays = 7;

enum class SoldBy { unit, weight };

inline std::string_view to_string(SoldBy s) { return s == SoldBy::unit ? "unit" : "weight"; }

struct ProductRef {
    std::string product_id;
    std::string group;
    SoldBy sold_by = SoldBy::unit;

    bool operator==(const ProductRef&) const = default;
};

struct ReceiptLine {
    std::string product_id;
    double quantity = 0.0; // units or kilograms
    double line_value = 0.0;

    bool operator==(const ReceiptLine&) const = default;
};

struct Receipt {
    std::string receipt_id;
    std::string store_id;
    Date date;
    std::vector<ReceiptLine> lines;

    double total_value() const {
        double sum = 0.0;
        for (const auto& l : lines) sum += l.line_value;
        return sum;
    }

    bool operator==(const Receipt&) const = default;
};

struct Channels {
    bool tv = false;
    bool radio = false;
    bool internet = false;
    bool other = false;

    bool broadcast() const { return tv || radio || internet; }
    bool any() const { return broadcast() || other; }
    std::array<bool, 4> flags() const { return {tv, radio, internet, other}; }

    bool operator==(const Channels&) const = default;
};

inline constexpr std::array<std::string_view, 4> kChannelNames{"tv", "radio", "internet", "other"};

/// One promotion of one product in one store. A window with price_change 0
/// describes a period without promotion (used for matched periods).
struct PromotionWindow {
    std::string store_id;
    std::string product_id;
    Date start_date;
    Date end_date;
    double promo_price = 0.0;
    double price_change = 0.0; // fraction of reduction, 0.20 = 20% off
    Channels channels;

    int duration_days() const { return (end_date - start_date) + 1; }
    bool is_promotion() const { return price_change > 0.0; }
    bool covers(Date d) const { return start_date <= d && d <= end_date; }
    bool overlaps(const PromotionWindow& o) const {
        return start_date <= o.end_date && o.start_date <= end_date;
    }

    bool operator==(const PromotionWindow&) const = default;
};

/// Store surroundings. Attribute order is the column order of stores.csv and
/// is the order in which they enter feature rows.
struct StoreProfile {
    std::string store_id;
    std::vector<std::pair<std::string, double>> attributes;

    std::optional<double> get(std::string_view name) const {
        for (const auto& [k, v] : attributes)
            if (k == name) return v;
        return std::nullopt;
    }

    bool operator==(const StoreProfile&) const = default;
};

inline constexpr std::array<std::string_view, 12> kRequiredStoreAttributes{
    "inhabitants_1km",    "inhabitants_per_km2", "inhabitants_5min_drive", "inhabitants_10min_drive",
    "inhabitants_500m",   "unemployment_rate",   "cars_per_1000",          "avg_monthly_salary",
    "tourism_ratio",      "n_competitors",       "competitor_distance",    "purchasing_rate"};

enum class IndicatorKind : int {
    AVG_AMOUNT = 0,
    AVG_NB_RECEIPTS,
    AVG_BASKET,
    AVG_BASKET_WITHOUT_ITEM,
    AVG_NB_UNIQUE_ITEMS,
    AVG_NB_CLIENTS,
};

inline constexpr std::size_t kIndicatorCount = 6;

inline constexpr std::array<IndicatorKind, kIndicatorCount> kAllIndicators{
    IndicatorKind::AVG_AMOUNT,          IndicatorKind::AVG_NB_RECEIPTS,
    IndicatorKind::AVG_BASKET,          IndicatorKind::AVG_BASKET_WITHOUT_ITEM,
    IndicatorKind::AVG_NB_UNIQUE_ITEMS, IndicatorKind::AVG_NB_CLIENTS};

inline constexpr std::array<std::string_view, kIndicatorCount> kIndicatorNames{
    "AVG_AMOUNT", "AVG_NB_RECEIPTS", "AVG_BASKET", "AVG_BASKET_WITHOUT_ITEM", "AVG_NB_UNIQUE_ITEMS",
    "AVG_NB_CLIENTS"};

// Labels used in the report tables.
inline constexpr std::array<std::string_view, kIndicatorCount> kIndicatorLabels{
    "AVG. AMOUNT", "AVG. NB. RECEIPTS", "AVG. BASKET", "AVG. BASKET WITHOUT ITEM", "AVG. NB. UNIQUE ITEMS",
    "AVG. NB. CLIENTS"};

constexpr std::size_t index_of(IndicatorKind k) { return static_cast<std::size_t>(k); }
constexpr std::string_view name_of(IndicatorKind k) { return kIndicatorNames[index_of(k)]; }
constexpr std::string_view label_of(IndicatorKind k) { return kIndicatorLabels[index_of(k)]; }

/// AVG_AMOUNT and AVG_NB_RECEIPTS are z-scored per (product, store).
constexpr bool is_standardized(IndicatorKind k) {
    return k == IndicatorKind::AVG_AMOUNT || k == IndicatorKind::AVG_NB_RECEIPTS;
}

inline std::optional<IndicatorKind> parse_indicator(std::string_view s) {
    for (std::size_t i = 0; i < kIndicatorCount; ++i)
        if (kIndicatorNames[i] == s) return kAllIndicators[i];
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// validation

inline void validate_receipt(const Receipt& r) {
    if (r.lines.empty()) throw InvariantViolation("receipt '" + r.receipt_id + "' has no lines");
    for (const auto& l : r.lines) {
        if (!(l.quantity > 0.0) || !std::isfinite(l.quantity))
            throw InvariantViolation("receipt '" + r.receipt_id + "': quantity must be > 0");
        if (!(l.line_value >= 0.0) || !std::isfinite(l.line_value))
            throw InvariantViolation("receipt '" + r.receipt_id + "': line_value must be >= 0");
    }
}

inline void validate_promotion(const PromotionWindow& w) {
    if (w.end_date < w.start_date) throw InvariantViolation("end_date precedes start_date");
    if (w.duration_days() > kMaxPromotionDays)
        throw InvariantViolation("promotion lasts " + std::to_string(w.duration_days()) +
                                 " days, longer than " + std::to_string(kMaxPromotionDays));
    if (!(w.price_change >= 0.0 && w.price_change < 1.0))
        throw InvariantViolation("price_change must be in [0, 1)");
    if (!(w.promo_price > 0.0)) throw InvariantViolation("promo_price must be > 0");
}

inline void validate_store(const StoreProfile& s) {
    for (auto req : kRequiredStoreAttributes)
        if (!s.get(req)) throw InvariantViolation("store '" + s.store_id + "' lacks attribute " + std::string(req));
    for (const auto& [k, v] : s.attributes)
        if (!std::isfinite(v) || v < 0.0)
            throw InvariantViolation("store '" + s.store_id + "': attribute " + k + " must be finite and >= 0");
}

// ---------------------------------------------------------------------------
// ingestion

struct Diagnostic {
    std::size_t line = 0; // 1-based, header is line 1
    std::string code;
    std::string message;
};

template <class T>
struct Loaded {
    std::vector<T> records;
    std::vector<Diagnostic> diagnostics;
};

enum class OnError { raise, collect };

namespace detail {

inline void expect_header(std::span<const std::string> lines, std::string_view header) {
    if (lines.empty() || csv::trim(lines.front()) != header)
        throw MalformedRow(1, "expected header '" + std::string(header) + "'");
}

/// Runs `parse_row` on every data row. Under OnError::collect each rejected row
/// produces exactly one diagnostic; under OnError::raise the first error escapes.
template <class F>
void for_each_row(std::span<const std::string> lines, OnError mode, std::vector<Diagnostic>& diags, F&& parse_row) {
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (csv::trim(lines[i]).empty()) continue;
        const std::size_t line_no = i + 1;
        try {
            parse_row(line_no, csv::split(lines[i]));
        } catch (const Error& e) {
            if (mode == OnError::raise) throw;
            diags.push_back({line_no, e.code(), e.what()});
        }
    }
}

inline void need_fields(std::size_t line, const std::vector<std::string_view>& f, std::size_t n) {
    if (f.size() != n)
        throw MalformedRow(line, "expected " + std::to_string(n) + " fields, got " + std::to_string(f.size()));
}

inline std::string need_id(std::size_t line, std::string_view v, std::string_view what) {
    v = csv::trim(v);
    if (v.empty()) throw MalformedRow(line, "empty " + std::string(what));
    return std::string(v);
}

inline double need_number(std::size_t line, std::string_view v, std::string_view what) {
    double d = 0.0;
    if (!csv::parse_double(v, d)) throw MalformedRow(line, "bad number for " + std::string(what));
    return d;
}

inline bool need_bool(std::size_t line, std::string_view v, std::string_view what) {
    bool b = false;
    if (!csv::parse_bool01(v, b)) throw MalformedRow(line, "expected 0/1 for " + std::string(what));
    return b;
}

inline Date need_date(std::size_t line, std::string_view v) {
    try {
        return Date::parse(csv::trim(v));
    } catch (const Error&) {
        throw MalformedRow(line, "bad date '" + std::string(v) + "'");
    }
}

} // namespace detail

inline constexpr std::string_view kCatalogHeader = "product_id,group,sold_by";
inline constexpr std::string_view kReceiptsHeader = "receipt_id,store_id,date,product_id,quantity,line_value";
inline constexpr std::string_view kPromotionsHeader =
    "store_id,product_id,start_date,end_date,promo_price,price_change,tv,radio,internet,other";

inline Loaded<ProductRef> parse_catalog(std::span<const std::string> lines, OnError mode = OnError::raise) {
    detail::expect_header(lines, kCatalogHeader);
    Loaded<ProductRef> out;
    std::unordered_set<std::string> seen;
    detail::for_each_row(lines, mode, out.diagnostics, [&](std::size_t ln, const auto& f) {
        detail::need_fields(ln, f, 3);
        ProductRef p;
        p.product_id = detail::need_id(ln, f[0], "product_id");
        p.group = detail::need_id(ln, f[1], "group");
        const auto sb = csv::trim(f[2]);
        if (sb == "unit") p.sold_by = SoldBy::unit;
        else if (sb == "weight") p.sold_by = SoldBy::weight;
        else throw MalformedRow(ln, "sold_by must be 'unit' or 'weight'");
        if (!seen.insert(p.product_id).second) throw DuplicateId(p.product_id);
        out.records.push_back(std::move(p));
    });
    return out;
}

/// Rows sharing a receipt_id form one receipt; receipts keep the order of
/// their first row. Lines referencing products absent from `catalog` (when
/// given) are rejected.
inline Loaded<Receipt> parse_receipts(std::span<const std::string> lines, OnError mode = OnError::raise,
                                      const std::vector<ProductRef>* catalog = nullptr) {
    detail::expect_header(lines, kReceiptsHeader);
    std::unordered_set<std::string> known;
    if (catalog)
        for (const auto& p : *catalog) known.insert(p.product_id);

    Loaded<Receipt> out;
    std::unordered_map<std::string, std::size_t> by_id;
    detail::for_each_row(lines, mode, out.diagnostics, [&](std::size_t ln, const auto& f) {
        detail::need_fields(ln, f, 6);
        const std::string rid = detail::need_id(ln, f[0], "receipt_id");
        const std::string sid = detail::need_id(ln, f[1], "store_id");
        const Date date = detail::need_date(ln, f[2]);
        ReceiptLine line;
        line.product_id = detail::need_id(ln, f[3], "product_id");
        line.quantity = detail::need_number(ln, f[4], "quantity");
        line.line_value = detail::need_number(ln, f[5], "line_value");
        if (!(line.quantity > 0.0)) throw InvariantViolation("line " + std::to_string(ln) + ": quantity must be > 0");
        if (line.line_value < 0.0) throw InvariantViolation("line " + std::to_string(ln) + ": line_value must be >= 0");
        if (catalog && !known.contains(line.product_id)) throw UnknownReference("product '" + line.product_id + "'");

        auto [it, inserted] = by_id.try_emplace(rid, out.records.size());
        if (inserted) {
            out.records.push_back(Receipt{rid, sid, date, {}});
        } else {
            const auto& r = out.records[it->second];
            if (r.store_id != sid || r.date != date)
                throw MalformedRow(ln, "receipt '" + rid + "' changes store or date between lines");
        }
        out.records[it->second].lines.push_back(std::move(line));
    });
    return out;
}

inline Loaded<StoreProfile> parse_stores(std::span<const std::string> lines, OnError mode = OnError::raise) {
    if (lines.empty()) throw MalformedRow(1, "missing header");
    const auto header = csv::split(lines.front());
    if (header.empty() || csv::trim(header[0]) != "store_id") throw MalformedRow(1, "first column must be store_id");
    std::vector<std::string> names;
    for (std::size_t i = 1; i < header.size(); ++i) names.emplace_back(csv::trim(header[i]));
    for (auto req : kRequiredStoreAttributes)
        if (std::find(names.begin(), names.end(), req) == names.end())
            throw MalformedRow(1, "missing store attribute column " + std::string(req));

    Loaded<StoreProfile> out;
    std::unordered_set<std::string> seen;
    detail::for_each_row(lines, mode, out.diagnostics, [&](std::size_t ln, const auto& f) {
        detail::need_fields(ln, f, names.size() + 1);
        StoreProfile s;
        s.store_id = detail::need_id(ln, f[0], "store_id");
        for (std::size_t i = 0; i < names.size(); ++i)
            s.attributes.emplace_back(names[i], detail::need_number(ln, f[i + 1], names[i]));
        validate_store(s);
        if (!seen.insert(s.store_id).second) throw DuplicateId(s.store_id);
        out.records.push_back(std::move(s));
    });
    return out;
}

/// References are checked only against non-null catalog/stores.
inline Loaded<PromotionWindow> parse_promotions(std::span<const std::string> lines, OnError mode = OnError::raise,
                                                const std::vector<ProductRef>* catalog = nullptr,
                                                const std::vector<StoreProfile>* stores = nullptr) {
    detail::expect_header(lines, kPromotionsHeader);
    std::unordered_set<std::string> products, store_ids;
    if (catalog)
        for (const auto& p : *catalog) products.insert(p.product_id);
    if (stores)
        for (const auto& s : *stores) store_ids.insert(s.store_id);

    Loaded<PromotionWindow> out;
    detail::for_each_row(lines, mode, out.diagnostics, [&](std::size_t ln, const auto& f) {
        detail::need_fields(ln, f, 10);
        PromotionWindow w;
        w.store_id = detail::need_id(ln, f[0], "store_id");
        w.product_id = detail::need_id(ln, f[1], "product_id");
        w.start_date = detail::need_date(ln, f[2]);
        w.end_date = detail::need_date(ln, f[3]);
        w.promo_price = detail::need_number(ln, f[4], "promo_price");
        w.price_change = detail::need_number(ln, f[5], "price_change");
        w.channels = {detail::need_bool(ln, f[6], "tv"), detail::need_bool(ln, f[7], "radio"),
                      detail::need_bool(ln, f[8], "internet"), detail::need_bool(ln, f[9], "other")};
        if (catalog && !products.contains(w.product_id)) throw UnknownReference("product '" + w.product_id + "'");
        if (stores && !store_ids.contains(w.store_id)) throw UnknownReference("store '" + w.store_id + "'");
        try {
            validate_promotion(w);
        } catch (const InvariantViolation& e) {
            throw InvariantViolation("line " + std::to_string(ln) + ": " + e.what());
        }
        out.records.push_back(std::move(w));
    });
    return out;
}

inline std::vector<ProductRef> load_catalog(const std::string& path) {
    return parse_catalog(csv::read_lines(path)).records;
}
inline std::vector<StoreProfile> load_stores(const std::string& path) {
    return parse_stores(csv::read_lines(path)).records;
}
inline std::vector<Receipt> load_receipts(const std::string& path, const std::vector<ProductRef>* catalog = nullptr) {
    return parse_receipts(csv::read_lines(path), OnError::raise, catalog).records;
}
inline std::vector<PromotionWindow> load_promotions(const std::string& path,
                                                    const std::vector<ProductRef>* catalog = nullptr,
                                                    const std::vector<StoreProfile>* stores = nullptr) {
    return parse_promotions(csv::read_lines(path), OnError::raise, catalog, stores).records;
}

// ---------------------------------------------------------------------------
// serialization

inline std::string format_catalog(std::span<const ProductRef> products) {
    std::string s(kCatalogHeader);
    s += '\n';
    for (const auto& p : products) s += p.product_id + ',' + p.group + ',' + std::string(to_string(p.sold_by)) + '\n';
    return s;
}

inline std::string format_receipts(std::span<const Receipt> receipts) {
    std::string s(kReceiptsHeader);
    s += '\n';
    for (const auto& r : receipts) {
        const std::string prefix = r.receipt_id + ',' + r.store_id + ',' + r.date.iso() + ',';
        for (const auto& l : r.lines)
            s += prefix + l.product_id + ',' + csv::fmt(l.quantity) + ',' + csv::fmt(l.line_value) + '\n';
    }
    return s;
}

inline std::string format_promotions(std::span<const PromotionWindow> promotions) {
    std::string s(kPromotionsHeader);
    s += '\n';
    auto b = [](bool v) { return v ? std::string("1") : std::string("0"); };
    for (const auto& w : promotions) {
        s += w.store_id + ',' + w.product_id + ',' + w.start_date.iso() + ',' + w.end_date.iso() + ',' +
             csv::fmt(w.promo_price) + ',' + csv::fmt(w.price_change) + ',' + b(w.channels.tv) + ',' +
             b(w.channels.radio) + ',' + b(w.channels.internet) + ',' + b(w.channels.other) + '\n';
    }
    return s;
}

inline std::string format_stores(std::span<const StoreProfile> stores) {
    std::string s = "store_id";
    if (!stores.empty())
        for (const auto& [k, v] : stores.front().attributes) s += ',' + k;
    s += '\n';
    for (const auto& st : stores) {
        s += st.store_id;
        for (const auto& [k, v] : st.attributes) s += ',' + csv::fmt(v);
        s += '\n';
    }
    return s;
}

} // namespace promo
