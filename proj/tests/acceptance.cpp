// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria (0 when everything holds).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "promo/pipeline.hpp"
#include "support/fixtures.hpp"
#include "support/gain_oracle.hpp"
#include "support/indicator_oracle.hpp"
#include "support/match_checker.hpp"

using namespace promo;
namespace fs = std::filesystem;

namespace {

// pinned tolerances and sizes
constexpr double kExact = 0.0;
constexpr double kMetricTol = 1e-12;
constexpr double kGbtTol = 1e-9;
constexpr double kRoundTripTol = 1e-9;
constexpr double kIndicatorSeconds = 5.0;
constexpr double kFullBudgetSeconds = 30.0 * 60.0;
constexpr std::size_t kPipelineBudget = 24;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int g_failed = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++g_failed;
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

void guarded(const std::string& name, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(name, false, std::string("threw ") + e.what());
    }
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string fixed(double v, int d = 3) { return csv::fmt_fixed(v, d); }

// ---------------------------------------------------------------------------

void indicator_oracle() {
    const auto t0 = Clock::now();
    int windows = 0, mismatches = 0, undefined = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto f = oracle::random_indicator_fixture(1000 + seed, 100 + 16 * seed); // 100..484 receipts
        const ReceiptIndex index(f.receipts);
        for (const auto& w : f.windows) {
            const auto want = oracle::brute_indicators(w, f.receipts);
            if (!want.defined) {
                bool threw = false;
                try {
                    compute_indicators(w, index);
                } catch (const NoHitReceipts&) {
                    threw = true;
                }
                ++undefined;
                if (!threw) ++mismatches;
                continue;
            }
            const auto got = compute_indicators(w, index);
            ++windows;
            for (std::size_t k = 0; k < kIndicatorCount; ++k)
                if (std::abs(got.values[k] - want.values[k]) > kExact) ++mismatches;
        }
    }
    const double secs = seconds_since(t0);
    report("indicator oracle", mismatches == 0 && windows > 0 && secs < kIndicatorSeconds,
           "25 fixtures, " + std::to_string(windows) + " windows (+" + std::to_string(undefined) +
               " without hits) compared exactly, " + std::to_string(mismatches) + " mismatches, " + fixed(secs) +
               " s (limit " + fixed(kIndicatorSeconds, 0) + " s)");
}

void apple_fixture() {
    const Date d1{2018, 1, 22}, d2{2018, 1, 23};
    const PromotionWindow w{"S1", "apple", d1, d2, 1.0, 0.2, {}};
    const std::vector<Receipt> rs{{"R1", "S1", d1, {{"apple", 2.0, 2.0}, {"milk", 1.0, 2.0}}},
                                  {"R2", "S1", d1, {{"bread", 1.0, 1.5}}},
                                  {"R3", "S1", d2, {{"apple", 3.0, 3.0}}}};
    const auto v = compute_indicators(w, rs);
    const std::array<double, 6> want{2.5, 1.0, 3.5, 1.0, 1.5, 1.5};
    bool ok = true;
    std::string got;
    for (std::size_t k = 0; k < kIndicatorCount; ++k) {
        ok = ok && v.values[k] == want[k];
        got += (k ? ", " : "") + csv::fmt(v.values[k]);
    }
    report("apple fixture", ok, "(" + got + ") vs (2.5, 1, 3.5, 1, 1.5, 1.5)");
}

void metrics_criterion() {
    const std::vector<double> a{1, 3}, f{2, 5};
    const auto r = metrics::evaluate(a, f);
    const bool exact = std::abs(r.mae - 1.5) <= kMetricTol && std::abs(r.rmse - std::sqrt(2.5)) <= kMetricTol &&
                       r.mape && std::abs(*r.mape - 5.0 / 6.0) <= kMetricTol && std::abs(r.wmape - 0.75) <= kMetricTol;
    Rng rng(2024);
    int violations = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto n = 1 + rng.below(40);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(0.5, 100.0);
            y[i] = rng.uniform(-50.0, 150.0);
        }
        const auto e = metrics::evaluate(x, y);
        if (e.rmse < e.mae) ++violations;
    }
    report("metrics", exact && violations == 0,
           "MAE " + csv::fmt(r.mae) + " RMSE " + csv::fmt(r.rmse) + " MAPE " + (r.mape ? csv::fmt(*r.mape) : "NA") +
               " WMAPE " + csv::fmt(r.wmape) + " (tol 1e-12); RMSE < MAE in " + std::to_string(violations) +
               " of 1000 random vectors");
}

void gbt_hand_split() {
    gbt::Dataset d;
    d.feature_names = {"x"};
    for (double x : {0.0, 0.0, 1.0, 1.0}) d.add_row(std::vector<double>{x}, x * 10.0);
    gbt::HyperParams hp;
    hp.nrounds = 1;
    hp.base_score = 5.0;
    hp.eta = 1.0;
    hp.max_depth = 1;
    const auto m = gbt::train(d, hp, 0);
    bool ok = m.trees.size() == 1 && !m.trees[0].nodes[0].is_leaf();
    double gain = NAN, wl = NAN, wr = NAN;
    if (ok) {
        const auto& t = m.trees[0];
        gain = t.nodes[0].gain;
        wl = t.nodes[t.nodes[0].left].weight;
        wr = t.nodes[t.nodes[0].right].weight;
        ok = std::abs(gain - 100.0 / 3.0) <= kGbtTol && std::abs(wl + 10.0 / 3.0) <= kGbtTol &&
             std::abs(wr - 10.0 / 3.0) <= kGbtTol;
    }
    int increases = 0;
    for (int shape = 0; shape < 3; ++shape) {
        const auto data = fixtures::regression(500 + shape, 150, 4, shape);
        gbt::HyperParams p;
        p.nrounds = 200;
        p.subsample = 1.0;
        const auto model = gbt::train(data, p, 1);
        double prev = fixtures::train_rmse(model, data, 0);
        for (std::size_t t = 1; t <= model.trees.size(); ++t) {
            const double cur = fixtures::train_rmse(model, data, t);
            if (cur > prev) ++increases;
            prev = cur;
        }
    }
    report("gbt hand-derived split", ok && increases == 0,
           "root gain " + csv::fmt(gain) + " (100/3), leaves " + csv::fmt(wl) + " / " + csv::fmt(wr) +
               " (-/+10/3), tol 1e-9; training RMSE increased in " + std::to_string(increases) +
               " of 600 rounds over 3 targets");
}

void gain_oracle() {
    int splits = 0, leaves = 0, mismatches = 0;
    double worst = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto d = fixtures::regression(700 + s, 20 + (s * 7) % 31, 3, static_cast<int>(s % 3)); // 20..50 rows
        gbt::HyperParams hp;
        hp.nrounds = 8;
        hp.max_depth = 1 + static_cast<int>(s % 4);
        hp.gamma = 0.02 * static_cast<double>(s % 5);
        hp.eta = 0.5;
        const auto m = gbt::train(d, hp, s);
        const auto rep = oracle::check_model_splits(m, d, kGbtTol);
        splits += rep.splits_checked;
        leaves += rep.leaves_checked;
        mismatches += rep.mismatches;
        worst = std::max(worst, rep.max_gain_error);
    }
    report("gain oracle", mismatches == 0 && splits > 0,
           "20 fixtures of 20..50 rows, " + std::to_string(splits) + " splits and " + std::to_string(leaves) +
               " leaves checked against an exhaustive threshold scan, " + std::to_string(mismatches) +
               " mismatches, max gain error " + csv::fmt(worst) + " (tol 1e-9)");
}

void matching(const synth::GeneratedData& data) {
    int returned = 0, bad = 0;
    std::set<int> offsets;
    std::string first;
    for (const auto& p : data.promotions) {
        const auto m = dataprep::find_matching_period(p, data.promotions);
        if (!m) continue;
        ++returned;
        offsets.insert(p.start_date - m->start_date);
        const auto why = oracle::check_match(p, *m, data.promotions);
        if (!why.empty()) {
            ++bad;
            if (first.empty()) first = " first failure: " + why;
        }
    }
    bool offsets_ok = true;
    std::string seen;
    for (int o : offsets) {
        offsets_ok = offsets_ok && (o == 7 || o == 14 || o == 21 || o == 28);
        seen += (seen.empty() ? "" : ",") + std::to_string(o);
    }
    report("matching-period checker", returned > 0 && bad == 0 && offsets_ok,
           std::to_string(returned) + " matches for " + std::to_string(data.promotions.size()) + " promotions, " +
               std::to_string(returned - bad) + " satisfy every condition; offsets seen {" + seen + "} days" + first);
}

void standardization(const dataprep::Assembly& a) {
    std::size_t checked = 0, pairs = 0;
    double worst = 0.0;
    Rng rng(99);
    for (const auto& sp : a.splits) {
        if (!sp.stats) continue;
        for (const auto& [key, m] : sp.stats->pairs) {
            if (!(m.sd > 0.0)) continue;
            ++pairs;
            const dataprep::StandardizerKey k{key.first, key.second, sp.group};
            std::vector<double> xs{m.mean, m.mean + m.sd, 0.0};
            for (int i = 0; i < 20; ++i) xs.push_back(rng.uniform(0.0, 4.0 * m.mean + 1.0));
            for (double x : xs) {
                worst = std::max(worst,
                                 std::abs(dataprep::destandardize(dataprep::standardize(x, k, *sp.stats), k, *sp.stats) - x));
                ++checked;
            }
        }
        for (const auto* rows : {&sp.train, &sp.test})
            for (const auto& r : *rows) {
                const auto k = dataprep::standardizer_key(r);
                worst = std::max(worst, std::abs(dataprep::destandardize(r.target, k, *sp.stats) - r.raw_target));
                ++checked;
            }
    }
    report("standardization round trip", pairs > 0 && worst <= kRoundTripTol,
           std::to_string(pairs) + " (product, store) pairs with sd > 0, " + std::to_string(checked) +
               " values, max |destandardize(standardize(x)) - x| = " + csv::fmt(worst) + " (tol 1e-9)");
}

struct PipelineRun {
    fs::path dir;
    pipeline::OptimizeOutcome outcome;
    double seconds = 0.0;
};

PipelineRun full_pipeline(const fs::path& dir) {
    pipeline::RunConfig c;
    c.out = dir.string();
    c.hpo_budget = kPipelineBudget;
    fs::remove_all(dir);
    const auto t0 = Clock::now();
    pipeline::cmd_synth(c);
    const auto a = pipeline::assemble(c, pipeline::load_inputs(c));
    pipeline::cmd_train(c, a);
    PipelineRun run{dir, pipeline::cmd_optimize(c, a), 0.0};
    run.seconds = seconds_since(t0);
    return run;
}

void never_worse(const PipelineRun& run, const dataprep::Assembly& a) {
    int worse = 0;
    double min_diff = INFINITY;
    for (const auto& d : run.outcome.diff) {
        const double diff = metrics::rmse_improvement(d.default_rmse, d.optimized_rmse);
        min_diff = std::min(min_diff, diff);
        if (diff < 0.0) ++worse;
    }
    const bool budget_ok = run.outcome.diff.size() == 18 && worse == 0;

    // full budget on 200 rows: the most recent 200 training rows of one split
    const auto& sp = a.splits[0];
    const std::vector<dataprep::FeatureRow> rows(sp.train.end() - 200, sp.train.end());
    dataprep::DatasetSplit small;
    small.group = sp.group;
    small.kind = sp.kind;
    small.feature_names = sp.feature_names;
    small.train = rows;
    small.stats = sp.stats;
    small.n_validation = dataprep::validation_size(rows.size(), 0.2);
    const auto t0 = Clock::now();
    const auto r = hpo::optimize(dataprep::to_dataset(small.fit_rows(), small.feature_names),
                                 pipeline::validation_of(small), 7, {720, true});
    const double secs = seconds_since(t0);
    const bool full_ok = r.permutations.size() == 720 && r.best_validation_rmse <= r.default_rmse && secs < kFullBudgetSeconds;
    report("hpo never worse than defaults", budget_ok && full_ok,
           "budget 24: " + std::to_string(run.outcome.diff.size() - worse) + " of " +
               std::to_string(run.outcome.diff.size()) + " models with RMSE_diff >= 0 (min " + fixed(min_diff, 6) +
               "); full 720-order search on 200 rows (" + std::to_string(small.fit_rows().size()) + " fit / " +
               std::to_string(small.n_validation) + " validation): " + fixed(secs, 1) + " s (limit 1800 s), " +
               std::to_string(r.trainings) + " trainings, RMSE " + fixed(r.default_rmse, 4) + " -> " +
               fixed(r.best_validation_rmse, 4));
}

void pass_arithmetic(const dataprep::Assembly& a) {
    const auto& sp = a.splits[2];
    const auto fit = dataprep::to_dataset(sp.fit_rows(), sp.feature_names);
    const auto grids = hpo::build_grids(fit.y);
    const gbt::TrainingMatrix m(fit);
    const auto v = pipeline::validation_of(sp);
    hpo::TrainingObjective objective(m, v, 1, false);
    std::size_t trained = 0;
    hpo::Evaluator eval([&](const gbt::HyperParams& hp) {
        ++trained;
        return objective(hp);
    }, false);
    hpo::sequential_pass(hpo::kParams, grids, hpo::default_params(fit.y), eval);

    const auto orders = hpo::all_orders();
    std::set<hpo::Order> distinct(orders.begin(), orders.end());
    bool permutations = true;
    for (const auto& o : orders) {
        std::set<hpo::Param> ps(o.begin(), o.end());
        permutations = permutations && ps.size() == hpo::kParamCount;
    }
    const auto chosen = hpo::choose_orders(720, 5);
    report("sequential-pass arithmetic",
           trained == 59 && grids.pass_size() == 59 && orders.size() == 720 && distinct.size() == 720 && permutations &&
               chosen.size() == 720,
           "one pass trained " + std::to_string(trained) + " models without memoization (grid sizes 11+11+11+5+11+10 = " +
               std::to_string(grids.pass_size()) + "); " + std::to_string(distinct.size()) +
               " distinct orders enumerated, " + std::to_string(chosen.size()) + " searched at full budget");
}

void paper_shape(const PipelineRun& run) {
    const auto dir = run.dir / "reports";
    const auto def = slurp(dir / "default_report.csv"), opt = slurp(dir / "optimized_report.csv"),
               diff = slurp(dir / "rmse_diff.csv");
    const std::string header(metrics::kReportHeader);
    const bool ok = count_lines(def) == 19 && count_lines(opt) == 19 && count_lines(diff) == 19 &&
                    def.starts_with(header + "\n") && opt.starts_with(header + "\n") &&
                    diff.starts_with(std::string(pipeline::kDiffHeader) + "\n");
    report("end-to-end report shape", ok,
           "default_report.csv " + std::to_string(count_lines(def) - 1) + " rows, optimized_report.csv " +
               std::to_string(count_lines(opt) - 1) + " rows, rmse_diff.csv " + std::to_string(count_lines(diff) - 1) +
               " rows (3 groups x 6 indicators); pipeline took " + fixed(run.seconds, 0) + " s");
}

void planted_effect(const PipelineRun& run) {
    int hits = 0;
    std::string ranks;
    for (const auto* group : {"dairy", "fruits", "vegetables"}) {
        const auto m = pipeline::load_model((run.dir / "models" / "optimized" / group / "AVG_AMOUNT.model").string());
        const auto imp = gbt::importance(m);
        std::size_t rank = 0;
        for (std::size_t i = 0; i < imp.size(); ++i)
            if (imp[i].first == "price_change") rank = i + 1;
        if (rank >= 1 && rank <= 3) ++hits;
        ranks += std::string(ranks.empty() ? "" : ", ") + group + " " + (rank ? "#" + std::to_string(rank) : "absent");
    }
    report("planted-effect recovery", hits >= 2,
           "price_change rank for AVG_AMOUNT (optimized models): " + ranks + "; top 3 in " + std::to_string(hits) +
               " of 3 groups (need 2)");
}

void determinism(const PipelineRun& first) {
    const auto second = full_pipeline(first.dir.parent_path() / "run_repeat");
    int differing = 0, compared = 0;
    std::string which;
    for (const auto& e : fs::recursive_directory_iterator(first.dir)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), first.dir);
        const auto top = *rel.begin();
        if (top != "reports" && top != "models" && top != "hpo") continue;
        ++compared;
        if (slurp(e.path()) != slurp(second.dir / rel)) {
            ++differing;
            if (which.empty()) which = " first difference: " + rel.string();
        }
    }
    report("determinism", compared > 0 && differing == 0,
           "second full pipeline with the same seed: " + std::to_string(compared) +
               " report, model and search files compared, " + std::to_string(differing) + " differ" + which);
}

} // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "promo_acceptance";
    fs::create_directories(root);

    guarded("indicator oracle", indicator_oracle);
    guarded("apple fixture", apple_fixture);
    guarded("metrics", metrics_criterion);
    guarded("gbt hand-derived split", gbt_hand_split);
    guarded("gain oracle", gain_oracle);

    pipeline::RunConfig base;
    const auto data = synth::generate(base.gen_config());
    guarded("matching-period checker", [&] { matching(data); });
    const auto assembly =
        dataprep::assemble_datasets(data.promotions, data.receipts, data.stores, data.catalog, base.assembly());
    guarded("standardization round trip", [&] { standardization(assembly); });
    guarded("sequential-pass arithmetic", [&] { pass_arithmetic(assembly); });

    std::optional<PipelineRun> run;
    try {
        run = full_pipeline(root / "run");
    } catch (const std::exception& e) {
        for (const auto* n : {"hpo never worse than defaults", "end-to-end report shape", "planted-effect recovery",
                              "determinism"})
            report(n, false, std::string("pipeline threw ") + e.what());
    }
    if (run) {
        guarded("hpo never worse than defaults", [&] { never_worse(*run, assembly); });
        guarded("end-to-end report shape", [&] { paper_shape(*run); });
        guarded("planted-effect recovery", [&] { planted_effect(*run); });
        guarded("determinism", [&] { determinism(*run); });
    }

    std::cout << (g_failed == 0 ? "ALL CRITERIA PASS" : std::to_string(g_failed) + " CRITERIA FAIL") << std::endl;
    return g_failed;
}
