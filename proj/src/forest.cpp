#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "llmdetect/classifiers.hpp"
#include "llmdetect/errors.hpp"
#include "llmdetect/rng.hpp"

namespace llmdetect {

namespace {

double gini(const Probabilities& w) {
    const double total = w[0] + w[1] + w[2];
    if (total <= 0) return 0.0;
    double s = 0;
    for (double v : w) s += (v / total) * (v / total);
    return 1.0 - s;
}

double mass(const Probabilities& w) { return w[0] + w[1] + w[2]; }

Label majority(const Probabilities& w) { return argmax_label(w); }

struct Split {
    int feature = -1;
    double threshold = 0;
    double gain = 0;
};

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& x, std::span<const Label> y, std::span<const double> w,
                const TrainConfig& config, std::uint64_t seed)
        : x_(x), y_(y), w_(w), config_(config), rng_(seed), dim_(x.front().size()),
          mtry_(features_per_split(dim_)) {}

    DecisionTree build(std::vector<std::size_t> rows) {
        tree_.nodes.clear();
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    Probabilities class_mass(std::span<const std::size_t> rows) const {
        Probabilities m{};
        for (auto r : rows) m[class_index(y_[r])] += w_[r];
        return m;
    }

    int grow(std::vector<std::size_t>& rows, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const Probabilities m = class_mass(rows);
        {
            auto& node = tree_.nodes.back();
            node.prediction = majority(m);
            node.samples = rows.size();
        }
        const auto msl = static_cast<std::size_t>(config_.min_samples_leaf);
        const bool pure = std::count_if(m.begin(), m.end(), [](double v) { return v > 0; }) <= 1;
        if (depth >= config_.max_depth || pure || rows.size() < 2 * msl) return id;

        const Split best = find_split(rows, m);
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows)
            (x_[r][static_cast<std::size_t>(best.feature)] <= best.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    Split find_split(std::span<const std::size_t> rows, const Probabilities& parent) {
        std::vector<std::size_t> features(dim_);
        std::iota(features.begin(), features.end(), 0);
        // Partial Fisher-Yates: the first mtry_ entries are the sampled subset.
        for (std::size_t i = 0; i < mtry_; ++i) {
            const auto j = i + static_cast<std::size_t>(rng_.below(dim_ - i));
            std::swap(features[i], features[j]);
        }

        const auto msl = static_cast<std::size_t>(config_.min_samples_leaf);
        Split best;
        std::vector<std::size_t> order(rows.begin(), rows.end());
        for (std::size_t fi = 0; fi < mtry_; ++fi) {
            const std::size_t f = features[fi];
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
            Probabilities left{};
            for (std::size_t i = 0; i + 1 < order.size(); ++i) {
                left[class_index(y_[order[i]])] += w_[order[i]];
                const double lo = x_[order[i]][f];
                const double hi = x_[order[i + 1]][f];
                if (!(lo < hi)) continue;
                const std::size_t n_left = i + 1;
                if (n_left < msl || order.size() - n_left < msl) continue;
                const double gain = gini_decrease(parent, left);
                if (gain > best.gain + 1e-12) {
                    double t = lo + (hi - lo) / 2.0;
                    if (!(t < hi)) t = lo;
                    best = {static_cast<int>(f), t, gain};
                }
            }
        }
        return best;
    }

    const FeatureMatrix& x_;
    std::span<const Label> y_;
    std::span<const double> w_;
    const TrainConfig& config_;
    Rng rng_;
    std::size_t dim_;
    std::size_t mtry_;
    DecisionTree tree_;
};

}  // namespace

std::size_t features_per_split(std::size_t dim) {
    auto m = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));
    return std::clamp<std::size_t>(m, 1, std::max<std::size_t>(dim, 1));
}

double gini_decrease(const Probabilities& parent, const Probabilities& left) {
    Probabilities right{};
    for (std::size_t c = 0; c < kNumClasses; ++c) right[c] = std::max(0.0, parent[c] - left[c]);
    return mass(parent) * gini(parent) - mass(left) * gini(left) - mass(right) * gini(right);
}

Label DecisionTree::predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes[i].prediction;
}

int DecisionTree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, d[i]);
        if (nodes[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return deepest;
}

std::size_t DecisionTree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

Probabilities ForestModel::predict_proba(std::span<const double> x) const {
    if (x.size() != dim)
        throw std::invalid_argument("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                                    std::to_string(dim));
    Probabilities votes{};
    for (const auto& t : trees) votes[class_index(t.predict(x))] += 1.0;
    for (auto& v : votes) v /= static_cast<double>(trees.size());
    return votes;
}

Label ForestModel::predict(std::span<const double> x) const { return argmax_label(predict_proba(x)); }

ForestModel train_forest(const FeatureMatrix& x, std::span<const Label> y, const TrainConfig& config) {
    config.validate();
    if (x.empty()) throw DataError("cannot train a forest on an empty training set");
    if (x.size() != y.size()) throw std::invalid_argument("feature rows and labels differ in count");
    const std::size_t d = x.front().size();
    for (const auto& row : x) {
        if (row.size() != d) throw std::invalid_argument("ragged feature matrix");
        for (double v : row)
            if (!std::isfinite(v)) throw DataError("non-finite feature value in training data");
    }

    ForestModel forest;
    forest.dim = d;
    forest.max_depth = config.max_depth;
    forest.min_samples_leaf = config.min_samples_leaf;
    forest.seed = config.seed;
    const auto n_trees = static_cast<std::size_t>(config.trees_count);
    forest.trees.resize(n_trees);
    const std::vector<double> weights = sample_weights(y, config.class_weighting);

    auto build_tree = [&](std::size_t t) {
        const std::uint64_t tree_seed = mix_seed(config.seed ^ mix_seed(t + 1));
        Rng boot(tree_seed);
        std::vector<std::size_t> rows(x.size());
        if (config.bootstrap)
            for (auto& r : rows) r = static_cast<std::size_t>(boot.below(x.size()));
        else
            std::iota(rows.begin(), rows.end(), 0);
        std::sort(rows.begin(), rows.end());
        TreeBuilder builder(x, y, weights, config, mix_seed(tree_seed));
        forest.trees[t] = builder.build(std::move(rows));
    };

    // Each tree owns its seed, so the result does not depend on scheduling.
    const std::size_t workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), n_trees);
    if (workers <= 1) {
        for (std::size_t t = 0; t < n_trees; ++t) build_tree(t);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t t = w; t < n_trees; t += workers) build_tree(t);
            });
    }
    return forest;
}

}  // namespace llmdetect
