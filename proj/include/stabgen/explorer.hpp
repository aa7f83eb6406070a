#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stabgen/feasibility.hpp"
#include "stabgen/forest.hpp"
#include "stabgen/grid.hpp"
#include "stabgen/sampling.hpp"
#include "stabgen/smallsignal.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

struct ExplorationConfig {
    std::size_t n_samples = 333;
    std::size_t n_cases = 3;
    int max_depth = 4;
    double min_feasible_rate = 0.05;
    double entropy_decrease_threshold = 0.01;  // nats
    double min_tolerance_frac = 0.01;
    bool use_sensitivity = true;
    std::vector<std::string> fixed_split_dims{"P_SG", "P_IBR"};
    /// 0 selects the mode default: 1 with sensitivity, 2 without.
    int split_dims_per_node = 0;
    double loss_factor = 0.97;
    double eps_margin = kDefaultEpsMargin;
    std::uint64_t seed = 0;
    int workers = 1;
    double dev_bound = 0.02;
    LoadMode load_mode = LoadMode::Participation;
    double load_spread = 0.2;
    int max_tries = kDefaultMaxTries;
    /// Wall-clock assessment time is nondeterministic, so it is only measured on request.
    bool record_timing = false;
    ForestParams forest;
    FeasibilityOptions feasibility;
    ModelParams model;

    [[nodiscard]] int split_count() const noexcept {
        return split_dims_per_node > 0 ? split_dims_per_node : (use_sensitivity ? 1 : 2);
    }
    [[nodiscard]] SamplingOptions sampling() const;
};

/// Throws std::invalid_argument on out-of-range fields.
void validate(const ExplorationConfig& config);

struct LabeledRecord {
    /// The point as sampled; dimension values locate it in the cell tree.
    OperatingPoint point;
    /// Variable values after redispatch (equal to the sampled ones when no adjustment happened).
    std::vector<double> adjusted_vars;
    FeasibilityVerdict verdict;
    std::optional<StabilityVerdict> stability;
    std::string cell_path;
    int depth = 0;
    int pf_iterations = 0;
    double assess_ms = 0.0;  // NaN unless timing was requested
};

enum class StopReason { ZeroEntropy, EntropyDecrease, MinFeasibleRate, ToleranceFloor, MaxDepth };

[[nodiscard]] std::string to_string(StopReason reason);
[[nodiscard]] std::optional<StopReason> stop_reason_from_string(const std::string& text);

struct NodeStats {
    std::size_t feasible = 0;
    std::size_t infeasible = 0;
    std::size_t discarded = 0;
    std::size_t stable = 0;
    double entropy = 0.0;

    [[nodiscard]] std::size_t total() const noexcept { return feasible + infeasible + discarded; }
    [[nodiscard]] double feasible_rate() const noexcept;
};

struct ExplorationNode {
    Subregion cell;
    /// Indices into the run's record list: inherited first, then newly assessed.
    std::vector<std::size_t> records;
    std::size_t inherited = 0;
    NodeStats stats;
    std::optional<StopReason> stop_reason;
    /// Dimensions bisected to create the children, and the importances behind the choice.
    std::vector<std::size_t> split_dims;
    std::vector<double> importance;
    std::vector<std::unique_ptr<ExplorationNode>> children;
};

/// Binary entropy in nats of the stable fraction; 0 for empty input.
[[nodiscard]] double entropy(const std::vector<int>& labels);
[[nodiscard]] double entropy(std::size_t stable, std::size_t total);

[[nodiscard]] NodeStats node_stats(const std::vector<LabeledRecord>& records, const std::vector<std::size_t>& indices);

/// Split candidates: the fixed dimensions in fixed mode, every independent dimension otherwise.
[[nodiscard]] std::vector<std::size_t> candidate_dims(const OperatingSpace& space, const ExplorationConfig& config);

/// Cutoffs in fixed order. The entropy cutoffs only apply once the node holds a feasible record;
/// the entropy-decrease cutoff compares |parent - child| to the threshold.
[[nodiscard]] std::optional<StopReason> should_stop(const NodeStats& stats, const Subregion& cell, const OperatingSpace& space,
                                                    std::optional<double> parent_entropy,
                                                    const ExplorationConfig& config);

/// Feasible records as a forest dataset over the independent dimensions; label 1 = stable.
[[nodiscard]] LabeledDataset stability_dataset(const OperatingSpace& space, const std::vector<LabeledRecord>& records,
                                               const std::vector<std::size_t>& indices);

struct SplitChoice {
    std::vector<std::size_t> dims;
    std::vector<double> importance;  // empty when no forest was trained
};

/// With sensitivity, ranks splittable dimensions by forest importance (ties by declaration
/// order); otherwise, or when no forest can be trained, uses the fixed dimensions. Falls back to
/// declaration order when the fixed dimensions are all at their floor.
[[nodiscard]] SplitChoice choose_split_dims(const OperatingSpace& space, const Subregion& cell,
                                            const LabeledDataset& data, const ExplorationConfig& config);

/// Redispatch, classification and, for feasible points, the eigenvalue verdict.
[[nodiscard]] LabeledRecord assess(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& point,
                                   const Subregion& cell, const ExplorationConfig& config);

struct ExplorationResult {
    std::unique_ptr<ExplorationNode> root;
    /// Newly assessed records of each node, nodes taken depth-first.
    std::vector<LabeledRecord> records;
};

using ProgressSink = std::function<void(const std::string&)>;

[[nodiscard]] ExplorationResult explore(const GridModel& grid, const OperatingSpace& space,
                                        const ExplorationConfig& config, const ProgressSink& progress = {});

/// Visits every node depth-first, parents before children.
void visit(const ExplorationNode& node, const std::function<void(const ExplorationNode&)>& f);

}  // namespace stabgen
