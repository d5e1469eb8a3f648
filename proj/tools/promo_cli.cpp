#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "promo/pipeline.hpp"
#include "promo/service.hpp"

using namespace promo;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> budget;
    std::size_t top_k = 10;

    std::string model, rows, stats, store, product;
    std::string output;

    int port = 8080;
    std::string host = "0.0.0.0";
    std::string models_dir, cors_origin = "*";
};

pipeline::RunConfig run_config(const Options& o) {
    auto c = o.config.empty() ? pipeline::RunConfig{} : pipeline::load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.out = *o.out;
    if (o.budget) c.hpo_budget = *o.budget;
    c.validate();
    return c;
}

void emit(const std::string& text, const std::string& path) {
    if (path.empty()) std::cout << text;
    else csv::write_file_atomic(path, text);
}

void print_report(const std::string& path) {
    for (const auto& l : csv::read_lines(path)) std::cout << l << '\n';
}

int run_train(const pipeline::RunConfig& c) {
    pipeline::cmd_train(c);
    print_report((pipeline::reports_dir(c) / "default_report.csv").string());
    return 0;
}

int run_optimize(const pipeline::RunConfig& c) {
    std::size_t done = 0;
    pipeline::cmd_optimize(c, [&](const dataprep::DatasetSplit& sp, const hpo::HpoResult& r) {
        std::cerr << "[" << ++done << "] " << sp.group << ' ' << name_of(sp.kind) << ": validation RMSE "
                  << csv::fmt_fixed(r.default_rmse) << " -> " << csv::fmt_fixed(r.best_validation_rmse) << " ("
                  << r.trainings << " trainings)\n";
    });
    print_report((pipeline::reports_dir(c) / "optimized_report.csv").string());
    std::cout << '\n';
    print_report((pipeline::reports_dir(c) / "rmse_diff.csv").string());
    return 0;
}

int run_forecast(const Options& o) {
    const auto m = pipeline::load_model(o.model);
    auto values = pipeline::cmd_forecast(m, csv::read_lines(o.rows));
    if (!o.stats.empty()) {
        if (o.store.empty()) throw InvalidConfig("--stats needs --store");
        const auto stats = dataprep::parse_stats(csv::read_lines(o.stats));
        const auto group = m.meta.contains("group") ? m.meta.at("group") : std::string();
        for (auto& v : values) v = dataprep::destandardize(v, {o.product, o.store, group}, stats);
    }
    std::string s;
    for (double v : values) s += csv::fmt(v) + '\n';
    emit(s, o.output);
    return 0;
}

int run_serve(const Options& o) {
    const auto c = run_config(o);
    service::Config sc;
    sc.models_dir = o.models_dir;
    if (sc.models_dir.empty()) {
        const auto optimized = pipeline::models_dir(c, "optimized");
        sc.models_dir = (fs::is_directory(optimized) ? optimized : pipeline::models_dir(c, "default")).string();
    }
    const auto paths = c.paths();
    sc.stores_path = paths.stores;
    if (fs::exists(paths.catalog)) sc.catalog_path = paths.catalog;
    sc.cors_origin = o.cors_origin;
    service::Service svc(sc);
    httplib::Server svr;
    svc.mount(svr);
    std::cerr << "serving " << svc.snapshot()->n_models() << " models from " << sc.models_dir << " on " << o.host << ':'
              << o.port << '\n';
    if (!svr.listen(o.host, o.port)) throw IoError("cannot listen on " + o.host + ":" + std::to_string(o.port));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Promotion efficiency forecasting: data preparation, gradient-boosted models, "
                 "hyperparameter search and a what-if service"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "flat key = value run configuration")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "top-level seed (overrides the config)");
    app.add_option("--out", o.out, "output directory (overrides the config)");
    app.add_option("--budget", o.budget, "number of parameter orders searched (1..720)");
    app.add_option("--top-k", o.top_k, "rows printed by importance")->check(CLI::PositiveNumber);

    auto* synth = app.add_subcommand("synth", "generate synthetic catalog, stores, promotions and receipts");
    auto* prepare = app.add_subcommand("prepare", "write per (group, indicator) datasets");
    auto* train = app.add_subcommand("train", "train default models and report test errors");
    auto* optimize = app.add_subcommand("optimize", "search hyperparameters, retrain and report");
    auto* run = app.add_subcommand("run", "synth (when the data is missing), train and optimize");
    auto* forecast = app.add_subcommand("forecast", "forecast the rows of a feature CSV with one model");
    forecast->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    forecast->add_option("--rows", o.rows, "CSV whose header names the model's features")->required()->check(CLI::ExistingFile);
    forecast->add_option("--stats", o.stats, "statistics file; maps standardized outputs back")->check(CLI::ExistingFile);
    forecast->add_option("--store", o.store, "store of the rows (with --stats)");
    forecast->add_option("--product", o.product, "product of the rows (with --stats; group statistics otherwise)");
    forecast->add_option("--output", o.output, "write here instead of stdout");
    auto* importance = app.add_subcommand("importance", "gain importance relative to the top feature");
    importance->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
    auto* indicators = app.add_subcommand("indicators", "the six indicators of every promotion window as CSV");
    indicators->add_option("--output", o.output, "write here instead of stdout");
    auto* serve = app.add_subcommand("serve", "run the what-if HTTP service");
    serve->add_option("--port", o.port, "listen port")->check(CLI::Range(1, 65535));
    serve->add_option("--host", o.host, "listen address");
    serve->add_option("--models", o.models_dir, "model directory (default: <out>/models/optimized, else default)");
    serve->add_option("--cors-origin", o.cors_origin, "Access-Control-Allow-Origin value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*forecast) return run_forecast(o);
        if (*importance) {
            std::cout << pipeline::cmd_importance(pipeline::load_model(o.model), o.top_k);
            return 0;
        }
        if (*serve) return run_serve(o);

        const auto c = run_config(o);
        if (*synth) {
            const auto data = pipeline::cmd_synth(c);
            std::cout << "wrote " << data.receipts.size() << " receipts and " << data.promotions.size()
                      << " promotions to " << c.data().string() << '\n';
        } else if (*prepare) {
            const auto a = pipeline::cmd_prepare(c);
            std::cout << pipeline::format_summary(a);
        } else if (*train) {
            return run_train(c);
        } else if (*optimize) {
            return run_optimize(c);
        } else if (*run) {
            if (!fs::exists(c.paths().receipts)) pipeline::cmd_synth(c);
            run_train(c);
            std::cout << '\n';
            return run_optimize(c);
        } else if (*indicators) {
            emit(pipeline::cmd_indicators(pipeline::load_inputs(c)), o.output);
        }
        return 0;
    } catch (const InvalidConfig& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
