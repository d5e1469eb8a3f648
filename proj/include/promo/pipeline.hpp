#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "promo/csv.hpp"
#include "promo/dataprep.hpp"
#include "promo/domain.hpp"
#include "promo/gbt.hpp"
#include "promo/hpo.hpp"
#include "promo/indicators.hpp"
#include "promo/metrics.hpp"
#include "promo/synthdata.hpp"

// Run configuration and the pipeline stages behind the CLI subcommands.
//
// Output layout under `out`:
//   data/{catalog,receipts,promotions,stores}.csv       synth
//   datasets/<group>/<IND>.{train,test,stats}.csv        prepare
//   models/default/<group>/<IND>.model (+ .stats.csv)    train
//   models/optimized/<group>/<IND>.model (+ .stats.csv)  optimize
//   hpo/<group>/<IND>.report.txt, <IND>.log.csv          optimize
//   reports/default_report.csv                           train
//   reports/optimized_report.csv, reports/rmse_diff.csv  optimize
namespace promo::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out = "out";
    std::string data_dir; // empty: <out>/data
    std::string catalog, receipts, promotions, stores; // empty: <data_dir>/<name>.csv
    std::vector<int> training_years{2015, 2016, 2017};
    int test_year = 2018;
    double validation_fraction = 0.2;
    std::vector<std::string> groups{"dairy", "fruits", "vegetables"};
    std::size_t hpo_budget = 720;
    bool memoize = true;
    synth::GenConfig synth;

    fs::path out_dir() const { return out; }
    fs::path data() const { return data_dir.empty() ? out_dir() / "data" : fs::path(data_dir); }

    synth::DataPaths paths() const {
        auto p = synth::DataPaths::in(data());
        if (!catalog.empty()) p.catalog = catalog;
        if (!receipts.empty()) p.receipts = receipts;
        if (!promotions.empty()) p.promotions = promotions;
        if (!stores.empty()) p.stores = stores;
        return p;
    }

    synth::GenConfig gen_config() const {
        auto g = synth;
        g.seed = seed;
        if (!groups.empty()) g.groups = groups;
        return g;
    }

    dataprep::AssemblyConfig assembly() const {
        dataprep::AssemblyConfig a;
        a.training_years = training_years;
        a.test_year = test_year;
        a.validation_fraction = validation_fraction;
        a.groups = groups;
        return a;
    }

    void validate() const {
        assembly().validate();
        if (hpo_budget < 1) throw InvalidConfig("hpo_budget must be >= 1");
        if (out.empty()) throw InvalidConfig("output directory is empty");
        synth.validate();
    }
};

namespace detail {

inline std::vector<std::string> list(std::string_view v) {
    std::vector<std::string> out;
    for (auto f : csv::split(v)) {
        auto t = csv::trim(f);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

inline double number(const std::string& key, std::string_view v) {
    double d = 0.0;
    if (!csv::parse_double(csv::trim(v), d)) throw InvalidConfig(key + ": '" + std::string(v) + "' is not a number");
    return d;
}

inline long long integer(const std::string& key, std::string_view v) {
    const double d = number(key, v);
    if (d != std::floor(d) || std::abs(d) > 9e15) throw InvalidConfig(key + ": '" + std::string(v) + "' is not an integer");
    return static_cast<long long>(d);
}

inline std::uint64_t unsigned_integer(const std::string& key, std::string_view v) {
    auto t = csv::trim(v);
    std::uint64_t u = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), u);
    if (ec != std::errc{} || p != t.data() + t.size() || t.empty())
        throw InvalidConfig(key + ": '" + std::string(v) + "' is not a non-negative integer");
    return u;
}

inline bool boolean(const std::string& key, std::string_view v) {
    auto t = csv::trim(v);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw InvalidConfig(key + ": expected true or false");
}

inline std::array<double, 4> four(const std::string& key, std::string_view v) {
    auto parts = list(v);
    if (parts.size() != 4) throw InvalidConfig(key + ": expected four comma-separated values (tv,radio,internet,other)");
    std::array<double, 4> a{};
    for (int i = 0; i < 4; ++i) a[i] = number(key, parts[i]);
    return a;
}

} // namespace detail

/// Applies one `key = value` setting.
inline void apply(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    auto& s = c.synth;
    if (key == "seed") c.seed = unsigned_integer(key, value);
    else if (key == "out") c.out = std::string(csv::trim(value));
    else if (key == "data_dir") c.data_dir = std::string(csv::trim(value));
    else if (key == "catalog") c.catalog = std::string(csv::trim(value));
    else if (key == "receipts") c.receipts = std::string(csv::trim(value));
    else if (key == "promotions") c.promotions = std::string(csv::trim(value));
    else if (key == "stores") c.stores = std::string(csv::trim(value));
    else if (key == "training_years") {
        c.training_years.clear();
        for (const auto& y : list(value)) c.training_years.push_back(static_cast<int>(integer(key, y)));
    } else if (key == "test_year") c.test_year = static_cast<int>(integer(key, value));
    else if (key == "validation_fraction") c.validation_fraction = number(key, value);
    else if (key == "groups") c.groups = list(value);
    else if (key == "hpo_budget") c.hpo_budget = unsigned_integer(key, value);
    else if (key == "memoize") c.memoize = boolean(key, value);
    else if (key == "synth.n_stores") s.n_stores = static_cast<int>(integer(key, value));
    else if (key == "synth.products_per_group") s.products_per_group = static_cast<int>(integer(key, value));
    else if (key == "synth.first_year") s.first_year = static_cast<int>(integer(key, value));
    else if (key == "synth.last_year") s.last_year = static_cast<int>(integer(key, value));
    else if (key == "synth.base_demand") s.base_demand = number(key, value);
    else if (key == "synth.promotions_per_year") s.promotions_per_year = number(key, value);
    else if (key == "synth.elasticity") s.elasticity = number(key, value);
    else if (key == "synth.channel_lift") s.channel_lift = four(key, value);
    else if (key == "synth.channel_probability") s.channel_probability = four(key, value);
    else if (key == "synth.traffic_per_day") s.traffic_per_day = number(key, value);
    else if (key == "synth.traffic_lift") s.traffic_lift = number(key, value);
    else if (key == "synth.seasonal_amplitude") s.seasonal_amplitude = number(key, value);
    else if (key == "synth.noise") s.noise = number(key, value);
    else if (key == "synth.min_inhabitants_500m") s.min_inhabitants_500m = number(key, value);
    else if (key == "synth.max_inhabitants_500m") s.max_inhabitants_500m = number(key, value);
    else throw InvalidConfig("unknown config key '" + key + "'");
}

/// Flat `key = value` text; '#' starts a comment, blank lines are ignored.
inline RunConfig parse_config(std::span<const std::string> lines, RunConfig base = {}) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string_view line = lines[i];
        if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
        line = csv::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw InvalidConfig("config line " + std::to_string(i + 1) + ": expected key = value");
        apply(base, std::string(csv::trim(line.substr(0, eq))), std::string(csv::trim(line.substr(eq + 1))));
    }
    return base;
}

inline RunConfig load_config(const std::string& path) {
    std::vector<std::string> lines;
    try {
        lines = csv::read_lines(path);
    } catch (const IoError& e) {
        throw InvalidConfig(std::string("cannot read config: ") + e.what());
    }
    return parse_config(lines);
}

// ---------------------------------------------------------------------------
// inputs

struct Inputs {
    std::vector<ProductRef> catalog;
    std::vector<StoreProfile> stores;
    std::vector<PromotionWindow> promotions;
    std::vector<Receipt> receipts;
};

inline Inputs load_inputs(const RunConfig& c) {
    const auto p = c.paths();
    for (const auto* f : {&p.catalog, &p.stores, &p.promotions, &p.receipts})
        if (!fs::exists(*f)) throw IoError("input file '" + *f + "' does not exist (run synth first?)");
    Inputs in;
    in.catalog = load_catalog(p.catalog);
    in.stores = load_stores(p.stores);
    in.receipts = load_receipts(p.receipts, &in.catalog);
    in.promotions = load_promotions(p.promotions, &in.catalog, &in.stores);
    return in;
}

inline dataprep::Assembly assemble(const RunConfig& c, const Inputs& in) {
    return dataprep::assemble_datasets(in.promotions, in.receipts, in.stores, in.catalog, c.assembly());
}

inline std::string file_stem(IndicatorKind k) { return std::string(name_of(k)); }

/// Every (group, indicator) pair gets its own seed so pairs can be re-run alone.
inline std::uint64_t pair_seed(std::uint64_t seed, const std::string& group, IndicatorKind k) {
    return derive_seed(seed, group + "/" + std::string(name_of(k)));
}

// ---------------------------------------------------------------------------
// synth / prepare

inline synth::GeneratedData cmd_synth(const RunConfig& c) {
    c.validate();
    auto data = synth::generate(c.gen_config());
    synth::write(data, c.data());
    return data;
}

inline std::string format_summary(const dataprep::Assembly& a) {
    const auto& s = a.summary;
    std::string out;
    auto kv = [&](std::string_view k, std::size_t v) { out += std::string(k) + " = " + std::to_string(v) + '\n'; };
    kv("promotions_used", s.promotions_used);
    kv("promotions_no_hit", s.promotions_no_hit);
    kv("matches_found", s.matches_found);
    kv("matches_missing", s.matches_missing);
    kv("matches_no_hit", s.matches_no_hit);
    kv("matches_outside_years", s.matches_outside_years);
    kv("matches_duplicate", s.matches_duplicate);
    for (const auto& sp : a.splits)
        out += sp.group + '/' + file_stem(sp.kind) + " = train " + std::to_string(sp.train.size()) + " validation " +
               std::to_string(sp.n_validation) + " test " + std::to_string(sp.test.size()) + '\n';
    return out;
}

inline dataprep::Assembly cmd_prepare(const RunConfig& c) {
    c.validate();
    const auto in = load_inputs(c);
    auto a = assemble(c, in);
    const auto root = c.out_dir() / "datasets";
    for (const auto& sp : a.splits) {
        const auto dir = root / sp.group;
        fs::create_directories(dir);
        const auto stem = (dir / file_stem(sp.kind)).string();
        csv::write_file_atomic(stem + ".train.csv", dataprep::format_rows(sp.train, sp.feature_names));
        csv::write_file_atomic(stem + ".test.csv", dataprep::format_rows(sp.test, sp.feature_names));
        if (sp.stats) csv::write_file_atomic(stem + ".stats.csv", dataprep::format_stats(*sp.stats));
    }
    csv::write_file_atomic((root / "summary.txt").string(), format_summary(a));
    return a;
}

// ---------------------------------------------------------------------------
// training and evaluation

/// Model output mapped back to the indicator's scale.
inline double to_indicator(double raw, const dataprep::DatasetSplit& sp, const dataprep::FeatureRow& row) {
    return sp.stats ? dataprep::destandardize(raw, dataprep::standardizer_key(row), *sp.stats) : raw;
}

inline hpo::Validation validation_of(const dataprep::DatasetSplit& sp) {
    const auto rows = sp.validation_rows();
    hpo::Validation v;
    v.x = dataprep::to_dataset(rows, sp.feature_names);
    for (const auto& r : rows) {
        v.actual.push_back(r.raw_target);
        if (sp.stats) {
            const auto m = sp.stats->resolve(dataprep::standardizer_key(r));
            v.scale.push_back(m.sd);
            v.shift.push_back(m.mean);
        } else {
            v.scale.push_back(1.0);
            v.shift.push_back(0.0);
        }
    }
    return v;
}

inline metrics::EvalReport evaluate_test(const gbt::Model& m, const dataprep::DatasetSplit& sp) {
    std::vector<double> actual, forecast;
    for (const auto& r : sp.test) {
        actual.push_back(r.raw_target);
        forecast.push_back(to_indicator(m.predict(r.features), sp, r));
    }
    return metrics::evaluate(actual, forecast);
}

inline gbt::Model fit_final(const dataprep::DatasetSplit& sp, const gbt::HyperParams& hp, std::uint64_t seed,
                            const RunConfig& c, std::string_view variant) {
    auto m = gbt::train(dataprep::to_dataset(sp.train, sp.feature_names), hp, hpo::training_seed(seed));
    m.meta["group"] = sp.group;
    m.meta["indicator"] = std::string(name_of(sp.kind));
    m.meta["variant"] = std::string(variant);
    std::string years;
    for (int y : c.training_years) years += (years.empty() ? "" : ",") + std::to_string(y);
    m.meta["training_years"] = years;
    m.meta["test_year"] = std::to_string(c.test_year);
    m.meta["n_train"] = std::to_string(sp.train.size());
    return m;
}

inline void save_model(const gbt::Model& m, const dataprep::DatasetSplit& sp, const fs::path& dir) {
    fs::create_directories(dir / sp.group);
    const auto stem = (dir / sp.group / file_stem(sp.kind)).string();
    csv::write_file_atomic(stem + ".model", gbt::serialize(m));
    if (sp.stats) csv::write_file_atomic(stem + ".stats.csv", dataprep::format_stats(*sp.stats));
}

struct ReportRow {
    std::string group;
    IndicatorKind kind;
    metrics::EvalReport test;
};

inline std::string format_report(std::span<const ReportRow> rows) {
    std::string s(metrics::kReportHeader);
    s += '\n';
    for (const auto& r : rows) s += metrics::report_row(r.group, name_of(r.kind), r.test) + '\n';
    return s;
}

struct DiffRow {
    std::string group;
    IndicatorKind kind;
    double default_rmse;
    double optimized_rmse;
};

inline constexpr std::string_view kDiffHeader = "category,indicator,RMSE_default,RMSE_optimized,RMSE_diff";

inline std::string format_diff(std::span<const DiffRow> rows) {
    std::string s(kDiffHeader);
    s += '\n';
    for (const auto& r : rows)
        s += r.group + ',' + std::string(name_of(r.kind)) + ',' + csv::fmt_fixed(r.default_rmse) + ',' +
             csv::fmt_fixed(r.optimized_rmse) + ',' +
             csv::fmt_fixed(metrics::rmse_improvement(r.default_rmse, r.optimized_rmse)) + '\n';
    return s;
}

inline fs::path reports_dir(const RunConfig& c) { return c.out_dir() / "reports"; }
inline fs::path models_dir(const RunConfig& c, std::string_view variant) {
    return c.out_dir() / "models" / std::string(variant);
}

/// Default hyperparameters, trained on the whole training span and scored on the test year.
inline std::vector<ReportRow> cmd_train(const RunConfig& c, const dataprep::Assembly& a) {
    std::vector<ReportRow> rows;
    for (const auto& sp : a.splits) {
        const auto y = dataprep::to_dataset(sp.train, sp.feature_names).y;
        const auto m = fit_final(sp, hpo::default_params(y), pair_seed(c.seed, sp.group, sp.kind), c, "default");
        save_model(m, sp, models_dir(c, "default"));
        rows.push_back({sp.group, sp.kind, evaluate_test(m, sp)});
    }
    fs::create_directories(reports_dir(c));
    csv::write_file_atomic((reports_dir(c) / "default_report.csv").string(), format_report(rows));
    return rows;
}

inline std::vector<ReportRow> cmd_train(const RunConfig& c) {
    c.validate();
    return cmd_train(c, assemble(c, load_inputs(c)));
}

struct OptimizeOutcome {
    std::vector<ReportRow> report;
    std::vector<DiffRow> diff;
    std::vector<hpo::HpoResult> results; // parallel to the splits
};

using Progress = std::function<void(const dataprep::DatasetSplit&, const hpo::HpoResult&)>;

/// Hyperparameter search per (group, indicator) on the validation tail of
/// the training span, then a final fit of the winner on the whole span.
inline OptimizeOutcome cmd_optimize(const RunConfig& c, const dataprep::Assembly& a, const Progress& progress = {}) {
    OptimizeOutcome out;
    const hpo::SearchConfig sc{c.hpo_budget, c.memoize};
    for (const auto& sp : a.splits) {
        const auto seed = pair_seed(c.seed, sp.group, sp.kind);
        const auto fit = dataprep::to_dataset(sp.fit_rows(), sp.feature_names);
        auto r = hpo::optimize(fit, validation_of(sp), seed, sc);

        const auto dir = c.out_dir() / "hpo" / sp.group;
        fs::create_directories(dir);
        const auto stem = (dir / file_stem(sp.kind)).string();
        csv::write_file_atomic(stem + ".report.txt", hpo::format_report(r));
        csv::write_file_atomic(stem + ".log.csv", hpo::format_log(r));

        const auto m = fit_final(sp, r.best_params, seed, c, "optimized");
        save_model(m, sp, models_dir(c, "optimized"));
        out.report.push_back({sp.group, sp.kind, evaluate_test(m, sp)});
        out.diff.push_back({sp.group, sp.kind, r.default_rmse, r.best_validation_rmse});
        if (progress) progress(sp, r);
        out.results.push_back(std::move(r));
    }
    fs::create_directories(reports_dir(c));
    csv::write_file_atomic((reports_dir(c) / "optimized_report.csv").string(), format_report(out.report));
    csv::write_file_atomic((reports_dir(c) / "rmse_diff.csv").string(), format_diff(out.diff));
    return out;
}

inline OptimizeOutcome cmd_optimize(const RunConfig& c, const Progress& progress = {}) {
    c.validate();
    return cmd_optimize(c, assemble(c, load_inputs(c)), progress);
}

// ---------------------------------------------------------------------------
// single-model commands

inline gbt::Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return gbt::deserialize(ss.str());
}

/// Forecasts for each data row of a CSV whose header names the features.
/// The header must list exactly the model's features in its order.
inline std::vector<double> cmd_forecast(const gbt::Model& m, std::span<const std::string> lines) {
    if (lines.empty()) throw MalformedRow(1, "empty feature file");
    std::vector<std::string> names;
    for (auto f : csv::split(lines[0])) names.emplace_back(csv::trim(f));
    m.check_names(names);
    std::vector<double> out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (csv::trim(lines[i]).empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() != names.size())
            throw MalformedRow(i + 1, "expected " + std::to_string(names.size()) + " values, got " + std::to_string(f.size()));
        std::vector<double> x(f.size());
        for (std::size_t j = 0; j < f.size(); ++j)
            if (!csv::parse_double(csv::trim(f[j]), x[j]) || !std::isfinite(x[j]))
                throw MalformedRow(i + 1, "bad value for '" + names[j] + "'");
        out.push_back(m.predict(names, x));
    }
    return out;
}

inline std::string cmd_importance(const gbt::Model& m, std::size_t top_k) {
    auto imp = gbt::importance(m);
    if (imp.size() > top_k) imp.resize(top_k);
    std::string s = "feature,importance\n";
    for (const auto& [name, v] : imp) s += name + ',' + csv::fmt(v) + '\n';
    return s;
}

/// One CSV row per promotion window: the six indicators, or NA without hit receipts.
inline std::string cmd_indicators(const Inputs& in) {
    const ReceiptIndex index(in.receipts);
    std::string s = "store_id,product_id,start_date,end_date,n_hit_receipts";
    for (auto k : kAllIndicators) s += ',' + std::string(name_of(k));
    s += '\n';
    for (const auto& w : in.promotions) {
        IndicatorValues v;
        try {
            v = compute_indicators(w, index);
        } catch (const NoHitReceipts&) {
        }
        s += w.store_id + ',' + w.product_id + ',' + w.start_date.iso() + ',' + w.end_date.iso() + ',' +
             std::to_string(v.n_hit_receipts);
        for (auto k : kAllIndicators) s += ',' + (v.n_hit_receipts ? csv::fmt(v[k]) : std::string("NA"));
        s += '\n';
    }
    return s;
}

} // namespace promo::pipeline
