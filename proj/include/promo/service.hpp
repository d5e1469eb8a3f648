#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "promo/dataprep.hpp"
#include "promo/domain.hpp"
#include "promo/gbt.hpp"
#include "promo/pipeline.hpp"

// JSON-over-HTTP what-if service. Models are read from
// <models_dir>/<group>/<INDICATOR>.model (+ .stats.csv for the standardized
// indicators), the layout written by the train and optimize commands.
namespace promo::service {

using nlohmann::json;
namespace fs = std::filesystem;

struct Config {
    std::string models_dir;
    std::string stores_path;
    std::string catalog_path; // optional; enables product and group checks
    std::string cors_origin = "*";
};

struct Reply {
    int status = 200;
    json body;
};

inline Reply error_reply(int status, std::string_view code, const std::string& message) {
    return {status, json{{"error", code}, {"message", message}}};
}

struct LoadedModel {
    gbt::Model model;
    std::optional<dataprep::StandardizerStats> stats;
};

/// Immutable after construction; requests hold a shared_ptr to the snapshot
/// they started with, so a reload never changes a request in flight.
struct Snapshot {
    std::uint64_t version = 0;
    std::map<std::string, std::map<IndicatorKind, LoadedModel>> groups;
    std::map<std::string, StoreProfile> stores;
    std::map<std::string, std::string> product_group; // empty without a catalog

    std::size_t n_models() const {
        std::size_t n = 0;
        for (const auto& [g, m] : groups) n += m.size();
        return n;
    }
};

inline std::shared_ptr<const Snapshot> load_snapshot(const Config& cfg, std::uint64_t version) {
    auto s = std::make_shared<Snapshot>();
    s->version = version;
    for (auto& st : load_stores(cfg.stores_path)) s->stores.emplace(st.store_id, std::move(st));
    if (!cfg.catalog_path.empty())
        for (const auto& p : load_catalog(cfg.catalog_path)) s->product_group[p.product_id] = p.group;

    if (!cfg.models_dir.empty() && fs::is_directory(cfg.models_dir)) {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(cfg.models_dir))
            if (e.is_directory()) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& dir : dirs) {
            const auto group = dir.filename().string();
            for (auto kind : kAllIndicators) {
                const auto stem = dir / std::string(name_of(kind));
                if (!fs::exists(stem.string() + ".model")) continue;
                LoadedModel lm{pipeline::load_model(stem.string() + ".model"), std::nullopt};
                if (is_standardized(kind)) {
                    const auto stats = stem.string() + ".stats.csv";
                    if (!fs::exists(stats)) throw IoError("model '" + stem.string() + "' has no statistics file");
                    lm.stats = dataprep::parse_stats(csv::read_lines(stats));
                }
                s->groups[group].emplace(kind, std::move(lm));
            }
        }
    }
    return s;
}

namespace detail {

struct BadRequest {
    std::string message;
};

inline const json& field(const json& j, const char* name) {
    if (!j.contains(name)) throw BadRequest{std::string("missing field '") + name + "'"};
    return j.at(name);
}

inline std::string text(const json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_string() || v.get<std::string>().empty()) throw BadRequest{std::string("'") + name + "' must be a non-empty string"};
    return v.get<std::string>();
}

inline double number(const json& j, const char* name) {
    const auto& v = field(j, name);
    if (!v.is_number()) throw BadRequest{std::string("'") + name + "' must be a number"};
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw BadRequest{std::string("'") + name + "' must be finite"};
    return d;
}

inline bool flag(const json& j, const char* name) {
    if (!j.contains(name)) return false;
    const auto& v = j.at(name);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) return v.get<int>() == 1;
    throw BadRequest{std::string("'") + name + "' must be a boolean"};
}

inline Date start_date(const json& j) {
    const auto s = text(j, "start_date");
    try {
        return Date::parse(s);
    } catch (const Error&) {
        throw BadRequest{"'start_date' must be a valid YYYY-MM-DD date"};
    }
}

inline int duration(const json& j) {
    const auto& v = field(j, "duration_days");
    if (!v.is_number_integer()) throw BadRequest{"'duration_days' must be an integer"};
    const auto d = v.get<long long>();
    if (d < 1 || d > kMaxPromotionDays)
        throw BadRequest{"'duration_days' must be between 1 and " + std::to_string(kMaxPromotionDays)};
    return static_cast<int>(d);
}

inline Channels channels(const json& j) {
    return {flag(j, "tv"), flag(j, "radio"), flag(j, "internet"), flag(j, "other")};
}

} // namespace detail

/// A parsed what-if request.
struct ForecastRequest {
    std::string group;
    PromotionWindow window;
    bool has_product = false;
    std::vector<PromotionWindow> concurrent;

    json echo() const {
        json j{{"group", group},
               {"store_id", window.store_id},
               {"promo_price", window.promo_price},
               {"price_change", window.price_change},
               {"start_date", window.start_date.iso()},
               {"duration_days", window.duration_days()},
               {"tv", window.channels.tv},
               {"radio", window.channels.radio},
               {"internet", window.channels.internet},
               {"other", window.channels.other}};
        if (has_product) j["product_id"] = window.product_id;
        json c = json::array();
        for (const auto& w : concurrent) {
            json e{{"start_date", w.start_date.iso()}, {"duration_days", w.duration_days()}, {"tv", w.channels.tv},
                   {"radio", w.channels.radio},       {"internet", w.channels.internet},  {"other", w.channels.other}};
            if (!w.product_id.empty()) e["product_id"] = w.product_id;
            c.push_back(std::move(e));
        }
        j["concurrent"] = std::move(c);
        return j;
    }
};

/// Throws detail::BadRequest on missing or out-of-range fields.
inline ForecastRequest parse_forecast_request(const json& j) {
    using namespace detail;
    if (!j.is_object()) throw BadRequest{"body must be a JSON object"};
    ForecastRequest r;
    r.group = text(j, "group");
    auto& w = r.window;
    w.store_id = text(j, "store_id");
    if (j.contains("product_id") && !j.at("product_id").is_null()) {
        w.product_id = text(j, "product_id");
        r.has_product = true;
    }
    w.promo_price = number(j, "promo_price");
    w.price_change = number(j, "price_change");
    w.start_date = start_date(j);
    w.end_date = w.start_date + (duration(j) - 1);
    w.channels = channels(j);
    try {
        validate_promotion(w);
    } catch (const InvariantViolation& e) {
        throw BadRequest{e.what()};
    }
    if (j.contains("concurrent")) {
        const auto& list = j.at("concurrent");
        if (!list.is_array()) throw BadRequest{"'concurrent' must be an array"};
        for (const auto& item : list) {
            if (!item.is_object()) throw BadRequest{"'concurrent' entries must be objects"};
            PromotionWindow c;
            c.store_id = w.store_id;
            if (item.contains("product_id") && !item.at("product_id").is_null()) c.product_id = text(item, "product_id");
            c.start_date = start_date(item);
            c.end_date = c.start_date + (duration(item) - 1);
            c.channels = channels(item);
            // only the running span and the channels enter the concurrency counts;
            // any positive reduction marks the entry as a promotion
            c.price_change = 0.5;
            c.promo_price = 1.0;
            r.concurrent.push_back(std::move(c));
        }
    }
    return r;
}

class Service {
public:
    explicit Service(Config cfg) : cfg_(std::move(cfg)) { reload(); }

    /// Loads a fresh snapshot from disk and swaps it in. On failure the
    /// previous snapshot stays active and the error propagates.
    std::uint64_t reload() {
        std::lock_guard reload_lock(reload_mutex_);
        auto next = load_snapshot(cfg_, generation_ + 1);
        ++generation_;
        std::lock_guard lock(mutex_);
        snapshot_ = std::move(next);
        return generation_;
    }

    std::shared_ptr<const Snapshot> snapshot() const {
        std::lock_guard lock(mutex_);
        return snapshot_;
    }

    const Config& config() const { return cfg_; }

    Reply health() const {
        const auto s = snapshot();
        return {200, json{{"status", "ok"}, {"version", s->version}, {"models", s->n_models()}}};
    }

    Reply models() const {
        const auto s = snapshot();
        json list = json::array();
        for (const auto& [group, kinds] : s->groups)
            for (const auto& [kind, lm] : kinds) {
                json e{{"group", group}, {"indicator", name_of(kind)}, {"version", s->version}};
                for (const auto& [k, v] : lm.model.meta)
                    if (k != "group" && k != "indicator") e[k] = v;
                list.push_back(std::move(e));
            }
        return {200, json{{"version", s->version}, {"models", std::move(list)}}};
    }

    Reply importance(const std::string& group, const std::string& indicator, const std::string& top_k) const {
        std::size_t k = 10;
        if (!top_k.empty()) {
            long long v = 0;
            auto [p, ec] = std::from_chars(top_k.data(), top_k.data() + top_k.size(), v);
            if (ec != std::errc{} || p != top_k.data() + top_k.size() || v < 1)
                return error_reply(400, "InvalidRequest", "top_k must be a positive integer");
            k = static_cast<std::size_t>(v);
        }
        const auto s = snapshot();
        const auto kind = parse_indicator(indicator);
        if (!kind) return error_reply(404, "UnknownIndicator", "unknown indicator '" + indicator + "'");
        auto g = s->groups.find(group);
        if (g == s->groups.end()) return error_reply(404, "UnknownGroupOrStore", "no models for group '" + group + "'");
        auto m = g->second.find(*kind);
        if (m == g->second.end())
            return error_reply(404, "UnknownIndicator", "no " + indicator + " model for group '" + group + "'");
        std::vector<std::pair<std::string, double>> ranked;
        try {
            ranked = gbt::importance(m->second.model);
        } catch (const NoSplits& e) {
            return error_reply(409, "NoSplits", e.what());
        }
        if (ranked.size() > k) ranked.resize(k);
        json list = json::array();
        for (const auto& [name, v] : ranked) list.push_back(json{{"feature", name}, {"importance", v}});
        return {200, json{{"group", group}, {"indicator", indicator}, {"version", s->version}, {"features", list}}};
    }

    Reply forecast(const std::string& body) const {
        json j;
        try {
            j = json::parse(body);
        } catch (const json::exception&) {
            return error_reply(400, "InvalidRequest", "body is not valid JSON");
        }
        ForecastRequest req;
        try {
            req = parse_forecast_request(j);
        } catch (const detail::BadRequest& e) {
            return error_reply(400, "InvalidRequest", e.message);
        }

        const auto s = snapshot();
        if (s->groups.empty()) return error_reply(409, "ModelsNotLoaded", "no models are loaded");
        const bool known_group = s->groups.contains(req.group) ||
                                 std::any_of(s->product_group.begin(), s->product_group.end(),
                                             [&](const auto& pg) { return pg.second == req.group; });
        if (!known_group) return error_reply(404, "UnknownGroupOrStore", "unknown group '" + req.group + "'");
        auto g = s->groups.find(req.group);
        if (g == s->groups.end() || g->second.size() != kIndicatorCount)
            return error_reply(409, "ModelsNotLoaded", "models for group '" + req.group + "' are not all loaded");
        auto st = s->stores.find(req.window.store_id);
        if (st == s->stores.end())
            return error_reply(404, "UnknownGroupOrStore", "unknown store '" + req.window.store_id + "'");
        if (req.has_product && !s->product_group.empty()) {
            auto p = s->product_group.find(req.window.product_id);
            if (p == s->product_group.end())
                return error_reply(404, "UnknownGroupOrStore", "unknown product '" + req.window.product_id + "'");
            if (p->second != req.group)
                return error_reply(400, "InvalidRequest",
                                   "product '" + req.window.product_id + "' belongs to group '" + p->second + "'");
        }

        const auto names = dataprep::feature_names(st->second);
        const auto x = dataprep::build_features(req.window, st->second, req.concurrent);
        const auto counts = dataprep::concurrency(req.window, req.concurrent);
        const dataprep::StandardizerKey key{req.window.product_id, req.window.store_id, req.group};
        json values = json::object();
        try {
            for (auto kind : kAllIndicators) {
                const auto& lm = g->second.at(kind);
                double v = lm.model.predict(names, x);
                if (lm.stats) v = dataprep::destandardize(v, key, *lm.stats);
                if (!std::isfinite(v)) return error_reply(500, "NonFiniteInput", "non-finite forecast");
                values[std::string(name_of(kind))] = v;
            }
        } catch (const Error& e) {
            return error_reply(e.code() == "FeatureMismatch" ? 409 : 500, e.code(), e.what());
        }
        return {200, json{{"indicators", std::move(values)},
                          {"model_version", s->version},
                          {"concurrency",
                           {{"n_promotions_store", counts.all},
                            {"n_promotions_tv_radio_internet", counts.broadcast},
                            {"n_promotions_any_channel", counts.any_channel}}},
                          {"request", req.echo()}}};
    }

    Reply reload_reply() {
        try {
            const auto v = reload();
            return {200, json{{"version", v}, {"models", snapshot()->n_models()}}};
        } catch (const Error& e) {
            return error_reply(500, e.code(), e.what());
        }
    }

    /// Registers the routes and CORS handling on `svr`.
    void mount(httplib::Server& svr) {
        auto send = [](httplib::Response& res, const Reply& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json; charset=utf-8");
        };
        svr.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
        svr.Get("/models", [this, send](const httplib::Request&, httplib::Response& res) { send(res, models()); });
        svr.Get(R"(/importance/([^/]+)/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, importance(req.matches[1], req.matches[2], req.get_param_value("top_k")));
        });
        svr.Post("/forecast",
                 [this, send](const httplib::Request& req, httplib::Response& res) { send(res, forecast(req.body)); });
        svr.Post("/reload", [this, send](const httplib::Request&, httplib::Response& res) { send(res, reload_reply()); });
        svr.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        svr.set_post_routing_handler([origin = cfg_.cors_origin](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        });
        svr.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) send(res, error_reply(res.status, "NotFound", "no such endpoint"));
        });
    }

private:
    Config cfg_;
    mutable std::mutex mutex_;
    std::mutex reload_mutex_;
    std::uint64_t generation_ = 0;
    std::shared_ptr<const Snapshot> snapshot_;
};

} // namespace promo::service
