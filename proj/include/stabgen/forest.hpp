#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stabgen {

/// Rows are samples, columns are features; labels are 0 or 1.
struct LabeledDataset {
    std::vector<std::vector<double>> x;
    std::vector<int> y;

    [[nodiscard]] std::size_t size() const noexcept { return y.size(); }
    [[nodiscard]] std::size_t feature_count() const noexcept { return x.empty() ? 0 : x.front().size(); }
    [[nodiscard]] bool has_both_classes() const;
};

/// Raised when a forest cannot be trained, e.g. on single-class data.
class SensitivityUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ForestParams {
    int n_trees = 100;
    /// 0 grows every tree until its leaves are pure.
    int max_tree_depth = 0;
    /// Features tried per node; 0 means floor(sqrt(d)), at least 1.
    std::size_t max_features = 0;
    /// Bootstrap draws per tree; 0 means the dataset size.
    std::size_t bootstrap_size = 0;
    std::size_t min_samples_split = 2;
    int workers = 1;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
};

/// Axis-aligned CART tree: rows with x[feature] <= threshold go left.
struct Tree {
    std::vector<TreeNode> nodes;
    /// Weighted Gini decrease per feature, as a fraction of the bootstrap sample.
    std::vector<double> gini_decrease;

    [[nodiscard]] int predict(const std::vector<double>& row) const;
};

struct ForestModel {
    std::vector<Tree> trees;
    std::size_t feature_count = 0;
    std::uint64_t seed = 0;

    /// Majority vote; ties go to class 1.
    [[nodiscard]] int predict(const std::vector<double>& row) const;
    [[nodiscard]] double vote_share(const std::vector<double>& row) const;
};

[[nodiscard]] ForestModel train_forest(const LabeledDataset& data, const ForestParams& params, std::uint64_t seed);

/// Mean Gini decrease per feature over the trees, normalized to sum to 1.
/// A forest of stumps without any split yields uniform importances.
[[nodiscard]] std::vector<double> feature_importance(const ForestModel& forest);

[[nodiscard]] double accuracy(const ForestModel& forest, const LabeledDataset& data);

struct CvResult {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation over folds
    std::vector<double> fold_accuracy;
};

/// Stratified k-fold cross-validation; every class needs at least k members.
[[nodiscard]] CvResult kfold_accuracy(const LabeledDataset& data, int k, const ForestParams& params,
                                      std::uint64_t seed);

}  // namespace stabgen
