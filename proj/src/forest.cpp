#include "stabgen/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "stabgen/rng.hpp"

namespace stabgen {

namespace {

double gini(std::size_t ones, std::size_t n) {
    if (n == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(ones) / static_cast<double>(n);
    return 2.0 * p * (1.0 - p);
}

struct Builder {
    const LabeledDataset& data;
    std::size_t max_features;
    int max_depth;
    std::size_t min_split;
    double root_n;
    RngStream& rng;
    Tree tree;

    int leaf(std::size_t ones, std::size_t n) {
        TreeNode node;
        node.label = 2 * ones >= n ? 1 : 0;
        tree.nodes.push_back(node);
        return static_cast<int>(tree.nodes.size()) - 1;
    }

    int build(std::vector<std::size_t>& rows, int depth) {
        const std::size_t n = rows.size();
        std::size_t ones = 0;
        for (const auto r : rows) {
            ones += static_cast<std::size_t>(data.y[r]);
        }
        if ((max_depth > 0 && depth >= max_depth) || n < min_split || ones == 0 || ones == n) {
            return leaf(ones, n);
        }
        const std::size_t d = data.feature_count();
        std::vector<std::size_t> features(d);
        std::iota(features.begin(), features.end(), 0);
        const std::size_t m = std::min(max_features, d);
        for (std::size_t i = 0; i < m; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.next() % (d - i));
            std::swap(features[i], features[j]);
        }
        const double parent = gini(ones, n);
        double best = 0.0;
        int best_feature = -1;
        double best_threshold = 0.0;
        std::vector<std::size_t> order = rows;
        for (std::size_t fi = 0; fi < m; ++fi) {
            const auto f = features[fi];
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double va = data.x[a][f];
                const double vb = data.x[b][f];
                return va < vb || (va == vb && a < b);
            });
            std::size_t left_ones = 0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left_ones += static_cast<std::size_t>(data.y[order[i]]);
                const double lo = data.x[order[i]][f];
                const double hi = data.x[order[i + 1]][f];
                if (!(lo < hi)) {
                    continue;
                }
                const std::size_t nl = i + 1;
                const std::size_t nr = n - nl;
                const double child = (static_cast<double>(nl) * gini(left_ones, nl) +
                                      static_cast<double>(nr) * gini(ones - left_ones, nr)) /
                                     static_cast<double>(n);
                const double gain = parent - child;
                if (gain > best + 1e-15) {
                    best = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = 0.5 * (lo + hi);
                    if (!(best_threshold < hi)) {
                        best_threshold = lo;
                    }
                }
            }
        }
        if (best_feature < 0) {
            return leaf(ones, n);
        }
        tree.gini_decrease[static_cast<std::size_t>(best_feature)] += best * static_cast<double>(n) / root_n;
        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        for (const auto r : rows) {
            (data.x[r][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        const int index = leaf(ones, n);
        tree.nodes[static_cast<std::size_t>(index)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(index)].threshold = best_threshold;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        tree.nodes[static_cast<std::size_t>(index)].left = l;
        tree.nodes[static_cast<std::size_t>(index)].right = r;
        return index;
    }
};

Tree train_tree(const LabeledDataset& data, const ForestParams& params, std::uint64_t seed, std::size_t index) {
    RngStream rng(seed, "forest", index, 0, StreamPurpose::Forest);
    const std::size_t n = data.size();
    const std::size_t draws = params.bootstrap_size > 0 ? params.bootstrap_size : n;
    std::vector<std::size_t> rows(draws);
    for (auto& r : rows) {
        r = static_cast<std::size_t>(rng.next() % n);
    }
    const std::size_t d = data.feature_count();
    std::size_t m = params.max_features;
    if (m == 0) {
        m = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
    }
    Builder b{data, m, params.max_tree_depth, std::max<std::size_t>(2, params.min_samples_split),
              static_cast<double>(draws), rng, {}};
    b.tree.gini_decrease.assign(d, 0.0);
    b.tree.nodes.reserve(64);
    b.build(rows, 0);
    return std::move(b.tree);
}

void validate(const LabeledDataset& data) {
    if (data.x.size() != data.y.size()) {
        throw SensitivityUnavailable("dataset rows and labels differ in length");
    }
    const std::size_t d = data.feature_count();
    for (const auto& row : data.x) {
        if (row.size() != d) {
            throw SensitivityUnavailable("dataset rows differ in width");
        }
        for (const double v : row) {
            if (!std::isfinite(v)) {
                throw SensitivityUnavailable("dataset has non-finite features");
            }
        }
    }
    for (const int label : data.y) {
        if (label != 0 && label != 1) {
            throw SensitivityUnavailable("labels must be 0 or 1");
        }
    }
}

}  // namespace

bool LabeledDataset::has_both_classes() const {
    bool zero = false;
    bool one = false;
    for (const int label : y) {
        zero = zero || label == 0;
        one = one || label == 1;
    }
    return zero && one;
}

int Tree::predict(const std::vector<double>& row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& node = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                   : node.right);
    }
    return nodes[i].label;
}

double ForestModel::vote_share(const std::vector<double>& row) const {
    if (trees.empty()) {
        return 0.0;
    }
    std::size_t votes = 0;
    for (const auto& t : trees) {
        votes += static_cast<std::size_t>(t.predict(row));
    }
    return static_cast<double>(votes) / static_cast<double>(trees.size());
}

int ForestModel::predict(const std::vector<double>& row) const { return vote_share(row) >= 0.5 ? 1 : 0; }

ForestModel train_forest(const LabeledDataset& data, const ForestParams& params, std::uint64_t seed) {
    validate(data);
    if (params.n_trees < 1) {
        throw SensitivityUnavailable("forest needs at least one tree");
    }
    if (!data.has_both_classes()) {
        throw SensitivityUnavailable("sensitivity unavailable: single-class data");
    }
    ForestModel forest;
    forest.feature_count = data.feature_count();
    forest.seed = seed;
    const auto n_trees = static_cast<std::size_t>(params.n_trees);
    forest.trees.resize(n_trees);
    const auto workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, params.workers)), 1, n_trees);
    if (workers == 1) {
        for (std::size_t t = 0; t < n_trees; ++t) {
            forest.trees[t] = train_tree(data, params, seed, t);
        }
        return forest;
    }
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&, w] {
            for (std::size_t t = w; t < n_trees; t += workers) {
                forest.trees[t] = train_tree(data, params, seed, t);
            }
        });
    }
    for (auto& th : threads) {
        th.join();
    }
    return forest;
}

std::vector<double> feature_importance(const ForestModel& forest) {
    const std::size_t d = forest.feature_count;
    std::vector<double> imp(d, 0.0);
    for (const auto& t : forest.trees) {
        for (std::size_t f = 0; f < d; ++f) {
            imp[f] += t.gini_decrease[f];
        }
    }
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (!(total > 0.0)) {
        std::fill(imp.begin(), imp.end(), d > 0 ? 1.0 / static_cast<double>(d) : 0.0);
        return imp;
    }
    for (auto& v : imp) {
        v /= total;
    }
    return imp;
}

double accuracy(const ForestModel& forest, const LabeledDataset& data) {
    if (data.size() == 0) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        hit += forest.predict(data.x[i]) == data.y[i] ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

CvResult kfold_accuracy(const LabeledDataset& data, int k, const ForestParams& params, std::uint64_t seed) {
    validate(data);
    if (k < 2) {
        throw SensitivityUnavailable("k-fold needs k >= 2");
    }
    const auto kk = static_cast<std::size_t>(k);
    std::vector<std::vector<std::size_t>> by_class(2);
    for (std::size_t i = 0; i < data.size(); ++i) {
        by_class[static_cast<std::size_t>(data.y[i])].push_back(i);
    }
    for (const auto& members : by_class) {
        if (members.size() < kk) {
            throw SensitivityUnavailable("class too small to stratify");
        }
    }
    RngStream rng(seed, "kfold", kk, 0, StreamPurpose::Forest);
    std::vector<std::size_t> fold(data.size());
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng.engine());
        for (std::size_t i = 0; i < members.size(); ++i) {
            fold[members[i]] = i % kk;
        }
    }
    CvResult out;
    for (std::size_t f = 0; f < kk; ++f) {
        LabeledDataset train;
        LabeledDataset test;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto& target = fold[i] == f ? test : train;
            target.x.push_back(data.x[i]);
            target.y.push_back(data.y[i]);
        }
        const auto forest = train_forest(train, params, RngStream::mix(seed, f + 1));
        out.fold_accuracy.push_back(accuracy(forest, test));
    }
    out.mean = std::accumulate(out.fold_accuracy.begin(), out.fold_accuracy.end(), 0.0) / static_cast<double>(kk);
    double ss = 0.0;
    for (const double a : out.fold_accuracy) {
        ss += (a - out.mean) * (a - out.mean);
    }
    out.std = std::sqrt(ss / static_cast<double>(kk - 1));
    return out;
}

}  // namespace stabgen
