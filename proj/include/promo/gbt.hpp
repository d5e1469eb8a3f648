#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "promo/csv.hpp"
#include "promo/error.hpp"
#include "promo/rng.hpp"

namespace promo::gbt {

/// The six tuned boosting parameters.
struct HyperParams {
    int nrounds = 100;
    double base_score = 0.0;
    double eta = 0.3;
    double gamma = 0.0;
    int max_depth = 6;
    double subsample = 1.0;

    void validate() const {
        if (nrounds < 0) throw InvalidConfig("nrounds must be >= 0");
        if (!std::isfinite(base_score)) throw InvalidConfig("base_score must be finite");
        if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidConfig("eta must be in [0, 1]");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidConfig("gamma must be >= 0");
        if (max_depth < 1) throw InvalidConfig("max_depth must be >= 1");
        if (!(subsample > 0.0 && subsample <= 1.0)) throw InvalidConfig("subsample must be in (0, 1]");
    }

    bool operator==(const HyperParams&) const = default;
};

struct TrainOptions {
    double lambda = 1.0;           // L2 regularization on leaf weights
    double min_child_weight = 1.0; // hessian units, i.e. rows under squared loss
};

/// Feature matrix (row-major) with one regression target per row.
struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<double> x;
    std::vector<double> y;

    std::size_t rows() const { return y.size(); }
    std::size_t cols() const { return feature_names.size(); }
    std::span<const double> row(std::size_t i) const { return {x.data() + i * cols(), cols()}; }

    void add_row(std::span<const double> features, double target) {
        if (features.size() != cols()) throw FeatureMismatch("row width differs from feature count");
        x.insert(x.end(), features.begin(), features.end());
        y.push_back(target);
    }
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    double weight = 0.0;
    double gain = 0.0;
    int left = -1;
    int right = -1;

    bool is_leaf() const { return feature < 0; }
};

/// Regression tree in a flat node array; nodes[0] is the root and the array is
/// in pre-order. Rows go left iff x[feature] < threshold.
struct Tree {
    std::vector<TreeNode> nodes;

    double predict(std::span<const double> x) const {
        int i = 0;
        while (!nodes[i].is_leaf()) i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left : nodes[i].right;
        return nodes[i].weight;
    }

    int n_splits() const {
        return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return !n.is_leaf(); }));
    }

    int depth(int node = 0) const {
        const auto& n = nodes[node];
        if (n.is_leaf()) return 0;
        return 1 + std::max(depth(n.left), depth(n.right));
    }
};

class Model {
public:
    HyperParams params;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> feature_names;
    std::vector<Tree> trees;
    std::vector<double> gain; // accumulated split gain per feature
    std::map<std::string, std::string> meta;

    /// base_score plus the first `n_trees` tree outputs (all trees by default).
    double predict(std::span<const double> x, std::size_t n_trees = static_cast<std::size_t>(-1)) const {
        if (x.size() != feature_names.size())
            throw FeatureMismatch("expected " + std::to_string(feature_names.size()) + " features, got " +
                                  std::to_string(x.size()));
        double out = params.base_score;
        const std::size_t n = std::min(n_trees, trees.size());
        for (std::size_t t = 0; t < n; ++t) out += trees[t].predict(x);
        return out;
    }

    /// Named-feature prediction; names must equal the model's, in order.
    double predict(std::span<const std::string> names, std::span<const double> x) const {
        check_names(names);
        return predict(x);
    }

    std::vector<double> predict(const Dataset& data) const {
        check_names(data.feature_names);
        std::vector<double> out(data.rows());
        for (std::size_t i = 0; i < data.rows(); ++i) out[i] = predict(data.row(i));
        return out;
    }

    void check_names(std::span<const std::string> names) const {
        if (names.size() != feature_names.size())
            throw FeatureMismatch("expected " + std::to_string(feature_names.size()) + " features, got " +
                                  std::to_string(names.size()));
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] != feature_names[i])
                throw FeatureMismatch("feature " + std::to_string(i) + " is '" + names[i] + "', model expects '" +
                                      feature_names[i] + "'");
    }

    int n_splits() const {
        int s = 0;
        for (const auto& t : trees) s += t.n_splits();
        return s;
    }
};

/// Training-side view of a Dataset: each feature's sorted distinct values and
/// every cell's rank among them. Split search over ranks is exact (candidate
/// thresholds are midpoints of consecutive distinct values). Build once and
/// reuse across many trainings on the same rows.
class TrainingMatrix {
public:
    explicit TrainingMatrix(const Dataset& data) : names_(data.feature_names), x_(data.x), y_(data.y) {
        if (data.rows() == 0) throw EmptyDataset("no training rows");
        if (data.x.size() != data.rows() * data.cols()) throw FeatureMismatch("matrix size does not match rows x cols");
        for (double v : x_)
            if (!std::isfinite(v)) throw NonFiniteInput("feature value is not finite");
        for (double v : y_)
            if (!std::isfinite(v)) throw NonFiniteInput("target value is not finite");

        const std::size_t n = rows(), f = cols();
        cuts_.resize(f);
        offset_.resize(f + 1, 0);
        codes_.resize(n * f);
        std::vector<double> column(n);
        for (std::size_t j = 0; j < f; ++j) {
            for (std::size_t i = 0; i < n; ++i) column[i] = x_[i * f + j];
            auto& cut = cuts_[j];
            cut = column;
            std::sort(cut.begin(), cut.end());
            cut.erase(std::unique(cut.begin(), cut.end()), cut.end());
            for (std::size_t i = 0; i < n; ++i)
                codes_[i * f + j] = static_cast<std::uint32_t>(
                    std::lower_bound(cut.begin(), cut.end(), column[i]) - cut.begin());
            offset_[j + 1] = offset_[j] + cut.size();
        }
        bins_.resize(n * f);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j)
                bins_[i * f + j] = static_cast<std::uint32_t>(offset_[j]) + codes_[i * f + j];
    }

    std::size_t rows() const { return y_.size(); }
    std::size_t cols() const { return names_.size(); }
    std::size_t total_bins() const { return offset_.back(); }
    const std::vector<std::string>& names() const { return names_; }
    std::span<const double> y() const { return y_; }
    std::span<const double> row(std::size_t i) const { return {x_.data() + i * cols(), cols()}; }
    double value(std::size_t i, std::size_t j) const { return x_[i * cols() + j]; }
    std::uint32_t code(std::size_t i, std::size_t j) const { return codes_[i * cols() + j]; }
    const std::uint32_t* codes(std::size_t i) const { return codes_.data() + i * cols(); }
    /// offset(j) + code(i, j) for every feature of row i
    const std::uint32_t* bins(std::size_t i) const { return bins_.data() + i * cols(); }
    std::size_t offset(std::size_t j) const { return offset_[j]; }
    double cut(std::size_t j, std::size_t b) const { return cuts_[j][b]; }
    std::size_t n_cuts(std::size_t j) const { return cuts_[j].size(); }

private:
    std::vector<std::string> names_;
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<std::vector<double>> cuts_;
    std::vector<std::size_t> offset_;
    std::vector<std::uint32_t> codes_;
    std::vector<std::uint32_t> bins_;
};

/// Gain of splitting a node with sums (G, H) into (gl, hl) and the rest,
/// squared-error objective, including the -gamma complexity charge.
inline double split_gain(double gl, double hl, double g, double h, double lambda, double gamma) {
    const double gr = g - gl, hr = h - hl;
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

inline double midpoint(double lo, double hi) {
    const double mid = lo + (hi - lo) / 2.0;
    return lo < mid ? mid : hi;
}

namespace detail {

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

class TreeBuilder {
public:
    TreeBuilder(const TrainingMatrix& m, const HyperParams& hp, const TrainOptions& opt)
        : m_(m), hp_(hp), opt_(opt) {}

    Tree build(std::span<const double> grad, std::vector<std::uint32_t>& rows) {
        grad_ = grad;
        rows_ = &rows;
        tree_ = Tree{};
        double g = 0.0;
        for (auto r : rows) g += grad[r];
        grow(0, rows.size(), 0, g, -1);
        return std::move(tree_);
    }

private:
    // Gradient sums and row counts per (feature, distinct value) bin. A child's
    // histogram is either filled from its rows or taken as parent minus sibling.
    struct Bin {
        double g = 0.0;
        double c = 0.0;
    };
    using Hist = std::vector<Bin>;

    int acquire() {
        if (free_.empty()) {
            pool_.emplace_back(m_.total_bins());
            return static_cast<int>(pool_.size()) - 1;
        }
        const int s = free_.back();
        free_.pop_back();
        return s;
    }
    void release(int slot) {
        if (slot >= 0) free_.push_back(slot);
    }

    void fill(Hist& hist, std::size_t begin, std::size_t end) const {
        const auto& rows = *rows_;
        const std::size_t nf = m_.cols();
        std::fill(hist.begin(), hist.end(), Bin{});
        Bin* out = hist.data();
        for (std::size_t k = begin; k < end; ++k) {
            const auto r = rows[k];
            const double gr = grad_[r];
            const std::uint32_t* bins = m_.bins(r);
            for (std::size_t j = 0; j < nf; ++j) {
                Bin& b = out[bins[j]];
                b.g += gr;
                b.c += 1.0;
            }
        }
    }

    bool hist_pays(std::size_t n) const {
        const double nf = static_cast<double>(m_.cols()), dn = static_cast<double>(n);
        return dn * nf + 2.0 * static_cast<double>(m_.total_bins()) <= dn * nf * (1.0 + std::log2(dn));
    }

    // `slot` holds this node's histogram or is -1; grow() takes ownership.
    int grow(std::size_t begin, std::size_t end, int depth, double g, int slot) {
        const int idx = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const std::size_t n = end - begin;
        const double h = static_cast<double>(n);

        SplitCandidate best;
        if (depth < hp_.max_depth && h >= 2.0 * opt_.min_child_weight) {
            if (slot < 0 && hist_pays(n)) {
                slot = acquire();
                fill(pool_[slot], begin, end);
            }
            best = slot >= 0 ? scan_hist(pool_[slot], g, h) : find_split_sorted(begin, end, g, h);
        }
        if (best.feature < 0) {
            release(slot);
            tree_.nodes[idx].weight = -hp_.eta * g / (h + opt_.lambda);
            return idx;
        }

        auto& rows = *rows_;
        const auto f = static_cast<std::size_t>(best.feature);
        auto mid_it = std::stable_partition(rows.begin() + begin, rows.begin() + end,
                                            [&](std::uint32_t r) { return m_.value(r, f) < best.threshold; });
        const std::size_t mid = static_cast<std::size_t>(mid_it - rows.begin());
        double gl = 0.0, gr = 0.0;
        for (std::size_t k = begin; k < mid; ++k) gl += grad_[rows[k]];
        for (std::size_t k = mid; k < end; ++k) gr += grad_[rows[k]];

        // children that may split again get histograms: the smaller one filled,
        // the larger one derived from this node's
        int left_slot = -1, right_slot = -1;
        const bool children_split = depth + 1 < hp_.max_depth;
        if (children_split && slot >= 0) {
            const bool left_small = mid - begin <= end - mid;
            const int small = acquire();
            if (left_small) fill(pool_[small], begin, mid);
            else fill(pool_[small], mid, end);
            auto& parent = pool_[slot];
            const auto& sm = pool_[small];
            for (std::size_t b = 0; b < parent.size(); ++b) {
                parent[b].g -= sm[b].g;
                parent[b].c -= sm[b].c;
            }
            (left_small ? left_slot : right_slot) = small;
            (left_small ? right_slot : left_slot) = slot;
        } else {
            release(slot);
        }

        tree_.nodes[idx].feature = best.feature;
        tree_.nodes[idx].threshold = best.threshold;
        tree_.nodes[idx].gain = best.gain;
        const int left = grow(begin, mid, depth + 1, gl, left_slot);
        const int right = grow(mid, end, depth + 1, gr, right_slot);
        tree_.nodes[idx].left = left;
        tree_.nodes[idx].right = right;
        return idx;
    }

    void consider(SplitCandidate& best, std::size_t f, double gl, double hl, double g, double h, double lo,
                  double hi) const {
        if (hl < opt_.min_child_weight || h - hl < opt_.min_child_weight) return;
        const double gain = split_gain(gl, hl, g, h, opt_.lambda, hp_.gamma);
        if (gain > best.gain) best = {static_cast<int>(f), midpoint(lo, hi), gain};
    }

    SplitCandidate scan_hist(const Hist& hist, double g, double h) const {
        SplitCandidate best;
        const std::size_t nf = m_.cols();
        for (std::size_t j = 0; j < nf; ++j) {
            const std::size_t off = m_.offset(j), nb = m_.n_cuts(j);
            double gl = 0.0, hl = 0.0;
            std::size_t prev = nb;
            for (std::size_t b = 0; b < nb; ++b) {
                const Bin& bin = hist[off + b];
                if (bin.c == 0.0) continue;
                if (prev != nb) consider(best, j, gl, hl, g, h, m_.cut(j, prev), m_.cut(j, b));
                gl += bin.g;
                hl += bin.c;
                if (hl == h) break; // every remaining bin is empty
                prev = b;
            }
        }
        return best;
    }

    SplitCandidate find_split_sorted(std::size_t begin, std::size_t end, double g, double h) {
        const auto& rows = *rows_;
        const std::size_t nf = m_.cols(), n = end - begin;
        scratch_.resize(n);
        SplitCandidate best;
        for (std::size_t j = 0; j < nf; ++j) {
            for (std::size_t k = 0; k < n; ++k) scratch_[k] = {m_.code(rows[begin + k], j), grad_[rows[begin + k]]};
            // insertion sort: only small nodes take this path, and it is stable
            for (std::size_t k = 1; k < n; ++k) {
                const auto item = scratch_[k];
                std::size_t i = k;
                for (; i > 0 && scratch_[i - 1].first > item.first; --i) scratch_[i] = scratch_[i - 1];
                scratch_[i] = item;
            }
            double gl = 0.0, hl = 0.0;
            for (std::size_t k = 0; k < n;) {
                const auto code = scratch_[k].first;
                if (k > 0) consider(best, j, gl, hl, g, h, m_.cut(j, scratch_[k - 1].first), m_.cut(j, code));
                for (; k < n && scratch_[k].first == code; ++k) {
                    gl += scratch_[k].second;
                    hl += 1.0;
                }
            }
        }
        return best;
    }

    const TrainingMatrix& m_;
    const HyperParams& hp_;
    const TrainOptions& opt_;
    std::span<const double> grad_;
    std::vector<std::uint32_t>* rows_ = nullptr;
    std::vector<Hist> pool_;
    std::vector<int> free_;
    std::vector<std::pair<std::uint32_t, double>> scratch_;
    Tree tree_;
};

} // namespace detail

/// Number of rows drawn per round: floor(subsample * n), at least 1.
inline std::size_t subsample_size(double subsample, std::size_t n) {
    const auto k = static_cast<std::size_t>(std::floor(subsample * static_cast<double>(n) + 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

/// Gradient boosting with squared-error loss (g = prediction - target, h = 1),
/// exact greedy splits, and leaf weights -eta * G / (H + lambda). A round whose
/// tree has no accepted split ends training and is not appended.
///
/// Training can be resumed: grow_to(a) then grow_to(b) yields exactly the
/// model a single grow_to(b) would, so rounds can be added incrementally.
class Booster {
public:
    Booster(const TrainingMatrix& m, const HyperParams& hp, std::uint64_t seed, const TrainOptions& opt = {})
        : m_(m), opt_(opt), rng_(seed), builder_(m, hp_, opt_) {
        hp.validate();
        hp_ = hp;
        model_.params = hp;
        model_.lambda = opt.lambda;
        model_.seed = seed;
        model_.feature_names = m.names();
        model_.gain.assign(m.cols(), 0.0);
        pred_.assign(m.rows(), hp.base_score);
        grad_.resize(m.rows());
        perm_.resize(m.rows());
        k_ = subsample_size(hp.subsample, m.rows());
    }

    void grow_to(int nrounds) {
        const std::size_t n = m_.rows();
        const auto y = m_.y();
        const double eta = hp_.eta;
        while (!stopped_ && rounds_ < nrounds) {
            ++rounds_;
            Tree tree;
            if (eta == 0.0 && k_ == n && !model_.trees.empty()) {
                tree = model_.trees.back(); // predictions never move, so every full-sample round grows this tree
            } else {
                for (std::size_t i = 0; i < n; ++i) grad_[i] = pred_[i] - y[i];
                if (k_ == n) {
                    rows_.resize(n);
                    std::iota(rows_.begin(), rows_.end(), 0u);
                } else {
                    std::iota(perm_.begin(), perm_.end(), 0u);
                    for (std::size_t i = 0; i < k_; ++i) {
                        const auto j = i + rng_.below(n - i);
                        std::swap(perm_[i], perm_[j]);
                    }
                    rows_.assign(perm_.begin(), perm_.begin() + static_cast<std::ptrdiff_t>(k_));
                    std::sort(rows_.begin(), rows_.end());
                }
                tree = builder_.build(grad_, rows_);
            }
            if (tree.nodes.front().is_leaf()) {
                stopped_ = true;
                break;
            }
            for (const auto& node : tree.nodes)
                if (!node.is_leaf()) model_.gain[node.feature] += node.gain;
            if (eta != 0.0)
                for (std::size_t i = 0; i < n; ++i) pred_[i] += tree.predict(m_.row(i));
            model_.trees.push_back(std::move(tree));
        }
        model_.params.nrounds = std::max(model_.params.nrounds, nrounds);
    }

    int rounds() const { return rounds_; }
    bool stopped() const { return stopped_; }
    const Model& model() const { return model_; }
    Model take() && { return std::move(model_); }

private:
    const TrainingMatrix& m_;
    HyperParams hp_;
    TrainOptions opt_;
    Rng rng_;
    detail::TreeBuilder builder_;
    Model model_;
    std::vector<double> pred_, grad_;
    std::vector<std::uint32_t> perm_, rows_;
    std::size_t k_ = 0;
    int rounds_ = 0;
    bool stopped_ = false;
};

inline Model train(const TrainingMatrix& m, const HyperParams& hp, std::uint64_t seed, const TrainOptions& opt = {}) {
    Booster b(m, hp, seed, opt);
    b.grow_to(hp.nrounds);
    Model model = std::move(b).take();
    model.params.nrounds = hp.nrounds;
    return model;
}

inline Model train(const Dataset& data, const HyperParams& hp, std::uint64_t seed, const TrainOptions& opt = {}) {
    return train(TrainingMatrix(data), hp, seed, opt);
}

/// Gain importance: per-feature summed split gain relative to the largest,
/// descending (ties by feature order). Features that never split are absent.
inline std::vector<std::pair<std::string, double>> importance(const Model& model) {
    const double top = model.gain.empty() ? 0.0 : *std::max_element(model.gain.begin(), model.gain.end());
    if (!(top > 0.0)) throw NoSplits("model has no accepted split");
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < model.gain.size(); ++j)
        if (model.gain[j] > 0.0) order.push_back(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return model.gain[a] > model.gain[b]; });
    std::vector<std::pair<std::string, double>> out;
    for (auto j : order) out.emplace_back(model.feature_names[j], model.gain[j] / top);
    return out;
}

// ---------------------------------------------------------------------------
// text serialization

inline constexpr std::string_view kModelMagic = "promo-gbt-model 1";

inline std::string serialize(const Model& model) {
    using csv::fmt;
    std::ostringstream os;
    const auto& p = model.params;
    os << kModelMagic << '\n';
    os << "nrounds " << p.nrounds << '\n'
       << "base_score " << fmt(p.base_score) << '\n'
       << "eta " << fmt(p.eta) << '\n'
       << "gamma " << fmt(p.gamma) << '\n'
       << "max_depth " << p.max_depth << '\n'
       << "subsample " << fmt(p.subsample) << '\n'
       << "lambda " << fmt(model.lambda) << '\n'
       << "seed " << model.seed << '\n';
    for (const auto& [k, v] : model.meta) os << "meta " << k << ' ' << v << '\n';
    os << "features " << model.feature_names.size() << '\n';
    for (std::size_t j = 0; j < model.feature_names.size(); ++j)
        os << "feature " << model.feature_names[j] << ' ' << fmt(model.gain[j]) << '\n';
    os << "trees " << model.trees.size() << '\n';
    for (const auto& tree : model.trees) {
        os << "tree " << tree.nodes.size() << '\n';
        for (const auto& node : tree.nodes) {
            if (node.is_leaf()) os << "leaf " << fmt(node.weight) << '\n';
            else os << "split " << node.feature << ' ' << fmt(node.threshold) << '\n';
        }
    }
    os << "end\n";
    return os.str();
}

namespace detail {

class ModelReader {
public:
    explicit ModelReader(const std::string& text) : in_(text) {}

    std::vector<std::string> next(std::string_view expected_key) {
        std::string line;
        if (!std::getline(in_, line)) throw ModelFormatError("unexpected end, wanted '" + std::string(expected_key) + "'");
        ++line_no_;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        for (std::string t; ls >> t;) tok.push_back(t);
        if (tok.empty() || (!expected_key.empty() && tok[0] != expected_key))
            throw ModelFormatError("line " + std::to_string(line_no_) + ": expected '" + std::string(expected_key) + "'");
        return tok;
    }

    std::string peek_key() {
        const auto pos = in_.tellg();
        std::string line;
        std::getline(in_, line);
        in_.seekg(pos);
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        return key;
    }

    static double num(const std::string& s) {
        double v = 0.0;
        if (!csv::parse_double(s, v)) throw ModelFormatError("bad number '" + s + "'");
        return v;
    }

    static long long integer(const std::string& s) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(s, &used);
            if (used != s.size()) throw ModelFormatError("bad integer '" + s + "'");
            return v;
        } catch (const std::logic_error&) {
            throw ModelFormatError("bad integer '" + s + "'");
        }
    }

private:
    std::istringstream in_;
    std::size_t line_no_ = 0;
};

inline int read_subtree(std::vector<TreeNode>& nodes, const std::vector<TreeNode>& flat, std::size_t& pos,
                        std::size_t n_features) {
    if (pos >= flat.size()) throw ModelFormatError("truncated tree");
    const int idx = static_cast<int>(nodes.size());
    nodes.push_back(flat[pos++]);
    if (!nodes[idx].is_leaf()) {
        if (static_cast<std::size_t>(nodes[idx].feature) >= n_features) throw ModelFormatError("feature index out of range");
        const int l = read_subtree(nodes, flat, pos, n_features);
        const int r = read_subtree(nodes, flat, pos, n_features);
        nodes[idx].left = l;
        nodes[idx].right = r;
    }
    return idx;
}

} // namespace detail

inline Model deserialize(const std::string& text) {
    detail::ModelReader rd(text);
    using R = detail::ModelReader;
    {
        std::istringstream first(text);
        std::string line;
        std::getline(first, line);
        if (line != kModelMagic) throw ModelFormatError("not a model file (bad header)");
        rd.next("");
    }
    Model m;
    m.params.nrounds = static_cast<int>(R::integer(rd.next("nrounds").at(1)));
    m.params.base_score = R::num(rd.next("base_score").at(1));
    m.params.eta = R::num(rd.next("eta").at(1));
    m.params.gamma = R::num(rd.next("gamma").at(1));
    m.params.max_depth = static_cast<int>(R::integer(rd.next("max_depth").at(1)));
    m.params.subsample = R::num(rd.next("subsample").at(1));
    m.lambda = R::num(rd.next("lambda").at(1));
    m.seed = std::stoull(rd.next("seed").at(1));
    while (rd.peek_key() == "meta") {
        auto tok = rd.next("meta");
        if (tok.size() < 2) throw ModelFormatError("meta line without key");
        std::string value;
        for (std::size_t i = 2; i < tok.size(); ++i) value += (i > 2 ? " " : "") + tok[i];
        m.meta[tok[1]] = value;
    }
    const auto n_features = static_cast<std::size_t>(R::integer(rd.next("features").at(1)));
    for (std::size_t j = 0; j < n_features; ++j) {
        auto tok = rd.next("feature");
        if (tok.size() != 3) throw ModelFormatError("feature line needs name and gain");
        m.feature_names.push_back(tok[1]);
        m.gain.push_back(R::num(tok[2]));
    }
    const auto n_trees = static_cast<std::size_t>(R::integer(rd.next("trees").at(1)));
    for (std::size_t t = 0; t < n_trees; ++t) {
        const auto n_nodes = static_cast<std::size_t>(R::integer(rd.next("tree").at(1)));
        std::vector<TreeNode> flat(n_nodes);
        for (auto& node : flat) {
            auto tok = rd.next("");
            if (tok[0] == "leaf" && tok.size() == 2) {
                node.weight = R::num(tok[1]);
            } else if (tok[0] == "split" && tok.size() == 3) {
                node.feature = static_cast<int>(R::integer(tok[1]));
                node.threshold = R::num(tok[2]);
                if (node.feature < 0) throw ModelFormatError("negative feature index");
            } else {
                throw ModelFormatError("bad node record '" + tok[0] + "'");
            }
        }
        Tree tree;
        std::size_t pos = 0;
        detail::read_subtree(tree.nodes, flat, pos, n_features);
        if (pos != flat.size()) throw ModelFormatError("tree node count mismatch");
        m.trees.push_back(std::move(tree));
    }
    rd.next("end");
    return m;
}

} // namespace promo::gbt
