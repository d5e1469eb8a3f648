#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "promo/csv.hpp"
#include "promo/error.hpp"
#include "promo/gbt.hpp"
#include "promo/rng.hpp"

// Permutation-ordered sequential grid search over the six boosting
// hyperparameters, scored by validation RMSE.
namespace promo::hpo {

enum class Param { eta, base_score, gamma, max_depth, nrounds, subsample };

inline constexpr std::size_t kParamCount = 6;
// Canonical order; the first enumerated permutation tunes in exactly this order.
inline constexpr std::array<Param, kParamCount> kParams{Param::eta,       Param::base_score, Param::gamma,
                                                        Param::max_depth, Param::nrounds,    Param::subsample};
inline constexpr std::array<std::string_view, kParamCount> kParamNames{"eta",       "base_score", "gamma",
                                                                        "max_depth", "nrounds",    "subsample"};

inline std::string_view name_of(Param p) { return kParamNames[static_cast<std::size_t>(p)]; }

inline double get(const gbt::HyperParams& hp, Param p) {
    switch (p) {
    case Param::eta: return hp.eta;
    case Param::base_score: return hp.base_score;
    case Param::gamma: return hp.gamma;
    case Param::max_depth: return hp.max_depth;
    case Param::nrounds: return hp.nrounds;
    case Param::subsample: return hp.subsample;
    }
    return 0.0;
}

inline void set(gbt::HyperParams& hp, Param p, double v) {
    switch (p) {
    case Param::eta: hp.eta = v; break;
    case Param::base_score: hp.base_score = v; break;
    case Param::gamma: hp.gamma = v; break;
    case Param::max_depth: hp.max_depth = static_cast<int>(std::lround(v)); break;
    case Param::nrounds: hp.nrounds = static_cast<int>(std::lround(v)); break;
    case Param::subsample: hp.subsample = v; break;
    }
}

using Key = std::array<double, kParamCount>;

inline Key key_of(const gbt::HyperParams& hp) {
    Key k{};
    for (std::size_t i = 0; i < kParamCount; ++i) k[i] = get(hp, kParams[i]);
    return k;
}

// ---------------------------------------------------------------------------
// grids

struct ParamGrid {
    std::array<std::vector<double>, kParamCount> values;

    const std::vector<double>& operator[](Param p) const { return values[static_cast<std::size_t>(p)]; }
    std::vector<double>& operator[](Param p) { return values[static_cast<std::size_t>(p)]; }

    std::size_t pass_size() const {
        std::size_t n = 0;
        for (const auto& v : values) n += v.size();
        return n;
    }
};

/// Quantile of sorted values by linear interpolation between order statistics
/// (position p * (n - 1)).
inline double quantile(std::span<const double> sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

inline ParamGrid build_grids(std::span<const double> targets) {
    if (targets.empty()) throw EmptyTargets("cannot build a base_score grid without targets");
    ParamGrid g;
    for (int i = 0; i <= 10; ++i) g[Param::nrounds].push_back(1 + 20 * i);
    for (int i = 0; i <= 10; ++i) g[Param::eta].push_back(i / 10.0);
    for (int i = 0; i <= 10; ++i) g[Param::gamma].push_back(i);
    for (int d : {1, 4, 7, 10, 13}) g[Param::max_depth].push_back(d);
    for (int i = 0; i <= 9; ++i) g[Param::subsample].push_back((1 + 1000 * i) / 10000.0);

    std::vector<double> sorted(targets.begin(), targets.end());
    std::sort(sorted.begin(), sorted.end());
    auto& bs = g[Param::base_score];
    for (int i = 0; i <= 10; ++i) bs.push_back(quantile(sorted, i / 10.0));
    bs.erase(std::unique(bs.begin(), bs.end()), bs.end());
    return g;
}

/// eta 0.3, gamma 0, max_depth 6, subsample 1, nrounds 100, base_score = mean target.
inline gbt::HyperParams default_params(std::span<const double> targets) {
    if (targets.empty()) throw EmptyTargets("no targets");
    gbt::HyperParams hp;
    hp.base_score = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
    return hp;
}

// ---------------------------------------------------------------------------
// memoized objective

struct LogEntry {
    gbt::HyperParams params;
    double rmse = 0.0;
};

using Objective = std::function<double(const gbt::HyperParams&)>;

/// Wraps an objective with a cache keyed by the exact hyperparameter vector.
class Evaluator {
public:
    explicit Evaluator(Objective f, bool memoize = true) : f_(std::move(f)), memoize_(memoize) {}

    double operator()(const gbt::HyperParams& hp) {
        ++requested_;
        const auto key = key_of(hp);
        if (memoize_) {
            if (auto it = cache_.find(key); it != cache_.end()) {
                ++cache_hits_;
                return it->second;
            }
        }
        const double rmse = f_(hp);
        ++trainings_;
        log_.push_back({hp, rmse});
        if (memoize_) cache_.emplace(key, rmse);
        return rmse;
    }

    std::size_t requested() const { return requested_; }
    std::size_t trainings() const { return trainings_; }
    std::size_t cache_hits() const { return cache_hits_; }
    const std::vector<LogEntry>& log() const { return log_; }

private:
    Objective f_;
    bool memoize_;
    std::map<Key, double> cache_;
    std::vector<LogEntry> log_;
    std::size_t requested_ = 0, trainings_ = 0, cache_hits_ = 0;
};

// ---------------------------------------------------------------------------
// sequential pass

using Order = std::array<Param, kParamCount>;

struct Step {
    Param param;
    double value;
    double rmse;
};

struct PassResult {
    gbt::HyperParams params;
    double rmse = std::numeric_limits<double>::infinity();
    std::vector<Step> steps; // one per tuned parameter
};

/// Tunes the parameters in `order` one after another, each over its
/// candidate list with the others held at the incumbents. Earlier candidates
/// win ties. `candidates(param, incumbent)` supplies the values to scan.
template <class Candidates>
PassResult coordinate_pass(std::span<const Param> order, const gbt::HyperParams& start, Evaluator& eval,
                           Candidates&& candidates) {
    PassResult out;
    out.params = start;
    for (Param p : order) {
        double best = std::numeric_limits<double>::infinity();
        double best_value = get(out.params, p);
        for (double v : candidates(p, out.params)) {
            auto hp = out.params;
            set(hp, p, v);
            const double rmse = eval(hp);
            if (rmse < best) {
                best = rmse;
                best_value = get(hp, p);
            }
        }
        set(out.params, p, best_value);
        out.rmse = best;
        out.steps.push_back({p, best_value, best});
    }
    return out;
}

/// One sweep over `order` scanning each parameter's full grid.
inline PassResult sequential_pass(std::span<const Param> order, const ParamGrid& grids, const gbt::HyperParams& start,
                                  Evaluator& eval) {
    {
        auto sorted = std::vector<Param>(order.begin(), order.end());
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw InvalidConfig("parameter order repeats a parameter");
    }
    return coordinate_pass(order, start, eval, [&](Param p, const gbt::HyperParams&) { return grids[p]; });
}

// ---------------------------------------------------------------------------
// neighbourhood refinement

inline double round_clean(double v) { return std::round(v * 1e10) / 1e10; }

/// {incumbent - h, incumbent, incumbent + h}, clipped to the legal range and
/// deduplicated. h is half the local grid spacing; base_score steps half-way
/// to the neighbouring quantiles.
inline std::vector<double> neighbourhood(Param p, double inc, const ParamGrid& grids) {
    double lo = inc, hi = inc;
    switch (p) {
    case Param::nrounds:
        lo = std::max(1.0, inc - 10);
        hi = inc + 10;
        break;
    case Param::eta:
        lo = std::max(0.0, round_clean(inc - 0.05));
        hi = std::min(1.0, round_clean(inc + 0.05));
        break;
    case Param::gamma:
        lo = std::max(0.0, round_clean(inc - 0.5));
        hi = round_clean(inc + 0.5);
        break;
    case Param::subsample:
        lo = std::max(0.0001, round_clean(inc - 0.05));
        hi = std::min(1.0, round_clean(inc + 0.05));
        break;
    case Param::max_depth:
        lo = std::max(1.0, inc - 1);
        hi = inc + 1;
        break;
    case Param::base_score: {
        const auto& g = grids[Param::base_score];
        auto below = std::lower_bound(g.begin(), g.end(), inc);
        auto above = std::upper_bound(g.begin(), g.end(), inc);
        if (below != g.begin()) lo = inc - (inc - *std::prev(below)) / 2.0;
        if (above != g.end()) hi = inc + (*above - inc) / 2.0;
        break;
    }
    }
    std::vector<double> out{lo, inc, hi};
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// permutation search

struct SearchConfig {
    std::size_t permutation_budget = 720;
    bool memoize = true;
};

struct PermutationResult {
    Order order;
    PassResult pass;
};

struct HpoResult {
    gbt::HyperParams best_params;
    Order best_permutation{};
    double best_validation_rmse = 0.0;
    double default_rmse = 0.0;
    PassResult winning_pass;
    PassResult refinement;
    std::vector<PermutationResult> permutations; // in execution order (lexicographic)
    std::vector<LogEntry> log;                   // every training, in order
    std::size_t evaluations_requested = 0;
    std::size_t trainings = 0;
    std::size_t cache_hits = 0;
};

inline std::vector<Order> all_orders() {
    std::array<std::size_t, kParamCount> idx{};
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<Order> out;
    do {
        Order o{};
        for (std::size_t i = 0; i < kParamCount; ++i) o[i] = kParams[idx[i]];
        out.push_back(o);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return out;
}

/// The orders explored under `budget`: all of them at 720 or more, otherwise a
/// seeded uniform sample, kept in lexicographic order.
inline std::vector<Order> choose_orders(std::size_t budget, std::uint64_t seed) {
    if (budget == 0) throw BudgetZero("permutation budget must be at least 1");
    auto orders = all_orders();
    if (budget >= orders.size()) return orders;
    std::vector<std::size_t> pick(orders.size());
    std::iota(pick.begin(), pick.end(), 0);
    Rng rng(seed);
    rng.shuffle(pick.begin(), pick.end());
    pick.resize(budget);
    std::sort(pick.begin(), pick.end());
    std::vector<Order> out;
    for (auto i : pick) out.push_back(orders[i]);
    return out;
}

/// Full search against an arbitrary objective: defaults, one sequential pass
/// per chosen order (each from the defaults), then one neighbourhood pass in
/// the winning order. The result is the best configuration in the whole log.
inline HpoResult search(const Objective& objective, const ParamGrid& grids, const gbt::HyperParams& defaults,
                        const SearchConfig& config, std::uint64_t seed) {
    const auto orders = choose_orders(config.permutation_budget, derive_seed(seed, "permutations"));
    Evaluator eval(objective, config.memoize);
    HpoResult r;
    r.default_rmse = eval(defaults);

    std::size_t winner = 0;
    for (std::size_t i = 0; i < orders.size(); ++i) {
        r.permutations.push_back({orders[i], sequential_pass(orders[i], grids, defaults, eval)});
        if (r.permutations[i].pass.rmse < r.permutations[winner].pass.rmse) winner = i;
    }
    r.best_permutation = orders[winner];
    r.winning_pass = r.permutations[winner].pass;
    r.refinement = coordinate_pass(r.best_permutation, r.winning_pass.params, eval, [&](Param p, const auto& hp) {
        return neighbourhood(p, get(hp, p), grids);
    });

    r.log = eval.log();
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.log.size(); ++i)
        if (r.log[i].rmse < r.log[best].rmse) best = i;
    r.best_params = r.log[best].params;
    r.best_validation_rmse = r.log[best].rmse;
    r.evaluations_requested = eval.requested();
    r.trainings = eval.trainings();
    r.cache_hits = eval.cache_hits();
    return r;
}

// ---------------------------------------------------------------------------
// model-training objective

/// Validation rows with their real-unit targets. A model output z maps to
/// real units as z * scale + shift (identity for unstandardized indicators).
struct Validation {
    gbt::Dataset x; // targets unused
    std::vector<double> actual;
    std::vector<double> scale;
    std::vector<double> shift;
};

inline double validation_rmse(const gbt::Model& m, const Validation& v,
                              std::size_t n_trees = static_cast<std::size_t>(-1)) {
    double ss = 0.0;
    const std::size_t n = v.x.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double f = m.predict(v.x.row(i), n_trees) * v.scale[i] + v.shift[i];
        ss += (f - v.actual[i]) * (f - v.actual[i]);
    }
    return std::sqrt(ss / static_cast<double>(n));
}

/// Validation RMSE of a model trained with the given hyperparameters. With
/// `resume`, a request differing from the previous one only in nrounds grows
/// or truncates the previous booster instead of starting over; the outcome is
/// bit-identical to a fresh training.
class TrainingObjective {
public:
    TrainingObjective(const gbt::TrainingMatrix& m, const Validation& v, std::uint64_t seed, bool resume)
        : m_(m), v_(v), seed_(seed), resume_(resume) {}

    double operator()(const gbt::HyperParams& hp) {
        auto shape = hp;
        shape.nrounds = 0;
        if (!resume_ || !booster_ || !(shape == last_)) {
            booster_.emplace(m_, hp, seed_);
            last_ = shape;
        }
        if (hp.nrounds > booster_->rounds()) booster_->grow_to(hp.nrounds);
        return validation_rmse(booster_->model(), v_, static_cast<std::size_t>(hp.nrounds));
    }

private:
    const gbt::TrainingMatrix& m_;
    const Validation& v_;
    std::uint64_t seed_;
    bool resume_;
    std::optional<gbt::Booster> booster_;
    gbt::HyperParams last_;
};

/// Seed of every model trained during a search seeded with `seed`.
inline std::uint64_t training_seed(std::uint64_t seed) { return derive_seed(seed, "train"); }

/// Optimizes hyperparameters of a model trained on `train` for RMSE on
/// `validation`. Every evaluation trains with the same derived seed.
inline HpoResult optimize(const gbt::Dataset& train, const Validation& validation, std::uint64_t seed,
                          const SearchConfig& config = {}) {
    if (validation.x.rows() == 0) throw EmptyDataset("empty validation set");
    if (validation.actual.size() != validation.x.rows() || validation.scale.size() != validation.x.rows() ||
        validation.shift.size() != validation.x.rows())
        throw LengthMismatch("validation targets and rows differ in length");
    if (validation.x.feature_names != train.feature_names) throw FeatureMismatch("validation features differ");
    const gbt::TrainingMatrix matrix(train);
    // resuming is a form of reuse, so it follows the memoization switch
    auto objective = std::make_shared<TrainingObjective>(matrix, validation, training_seed(seed), config.memoize);
    return search([objective](const gbt::HyperParams& hp) { return (*objective)(hp); }, build_grids(train.y),
                  default_params(train.y), config, seed);
}

// ---------------------------------------------------------------------------
// persistence

inline std::string order_string(const Order& o) {
    std::string s;
    for (Param p : o) s += (s.empty() ? "" : " ") + std::string(name_of(p));
    return s;
}

inline std::string params_string(const gbt::HyperParams& hp) {
    return "nrounds=" + std::to_string(hp.nrounds) + " base_score=" + csv::fmt(hp.base_score) +
           " eta=" + csv::fmt(hp.eta) + " gamma=" + csv::fmt(hp.gamma) + " max_depth=" + std::to_string(hp.max_depth) +
           " subsample=" + csv::fmt(hp.subsample);
}

/// key = value report: winning order, parameters, RMSE trajectory, counters.
inline std::string format_report(const HpoResult& r) {
    std::string s;
    auto kv = [&](std::string_view k, const std::string& v) { s += std::string(k) + " = " + v + '\n'; };
    kv("best_permutation", order_string(r.best_permutation));
    kv("best_params", params_string(r.best_params));
    kv("best_validation_rmse", csv::fmt(r.best_validation_rmse));
    kv("default_validation_rmse", csv::fmt(r.default_rmse));
    kv("winning_pass_rmse", csv::fmt(r.winning_pass.rmse));
    kv("refined_rmse", csv::fmt(r.refinement.rmse));
    kv("permutations", std::to_string(r.permutations.size()));
    kv("evaluations_requested", std::to_string(r.evaluations_requested));
    kv("trainings", std::to_string(r.trainings));
    kv("cache_hits", std::to_string(r.cache_hits));
    int step = 0;
    for (const auto* pass : {&r.winning_pass, &r.refinement})
        for (const auto& st : pass->steps)
            kv("step." + std::to_string(++step),
               std::string(pass == &r.winning_pass ? "grid " : "refine ") + std::string(name_of(st.param)) + ' ' +
                   csv::fmt(st.value) + ' ' + csv::fmt(st.rmse));
    return s;
}

inline std::string format_log(const HpoResult& r) {
    std::string s = "index,nrounds,base_score,eta,gamma,max_depth,subsample,rmse\n";
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        const auto& hp = r.log[i].params;
        s += std::to_string(i) + ',' + std::to_string(hp.nrounds) + ',' + csv::fmt(hp.base_score) + ',' +
             csv::fmt(hp.eta) + ',' + csv::fmt(hp.gamma) + ',' + std::to_string(hp.max_depth) + ',' +
             csv::fmt(hp.subsample) + ',' + csv::fmt(r.log[i].rmse) + '\n';
    }
    return s;
}

} // namespace promo::hpo
