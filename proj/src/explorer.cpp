#include "stabgen/explorer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <unordered_map>

#include "stabgen/task_pool.hpp"

namespace stabgen {

namespace {

constexpr std::size_t kAssessBatch = 4;

/// Node under construction. Owns its newly assessed records; the inherited ones are borrowed
/// from ancestors, which outlive the node.
struct WorkNode {
    Subregion cell;
    std::vector<const LabeledRecord*> all;
    std::size_t inherited = 0;
    std::vector<LabeledRecord> fresh;
    NodeStats stats;
    std::optional<StopReason> stop_reason;
    SplitChoice split;
    std::vector<std::unique_ptr<WorkNode>> children;
};

NodeStats stats_of(const std::vector<const LabeledRecord*>& records) {
    NodeStats s;
    for (const auto* r : records) {
        switch (r->verdict.verdict) {
            case Verdict::Feasible:
                ++s.feasible;
                if (r->stability && r->stability->stable) {
                    ++s.stable;
                }
                break;
            case Verdict::Infeasible:
                ++s.infeasible;
                break;
            case Verdict::Discarded:
                ++s.discarded;
                break;
        }
    }
    s.entropy = entropy(s.stable, s.feasible);
    return s;
}

LabeledDataset dataset_of(const OperatingSpace& space, const std::vector<const LabeledRecord*>& records) {
    LabeledDataset d;
    const auto k = space.independent_count();
    for (const auto* r : records) {
        if (r->verdict.verdict != Verdict::Feasible || !r->stability) {
            continue;
        }
        d.x.emplace_back(r->point.dim_values.begin(), r->point.dim_values.begin() + static_cast<long>(k));
        d.y.push_back(r->stability->stable ? 1 : 0);
    }
    return d;
}

class Explorer {
public:
    Explorer(const GridModel& grid, const OperatingSpace& space, const ExplorationConfig& config,
             const ProgressSink& progress)
        : grid_(grid),
          space_(space),
          config_(config),
          progress_(progress),
          pool_(static_cast<std::size_t>(std::max(1, config.workers))),
          cells_at_depth_(static_cast<std::size_t>(config.max_depth) + 1) {
        for (auto& c : cells_at_depth_) {
            c.store(0);
        }
    }

    void run(WorkNode& node, std::optional<double> parent_entropy) {
        sample_and_assess(node);
        node.all.reserve(node.inherited + node.fresh.size());
        for (const auto& r : node.fresh) {
            node.all.push_back(&r);
        }
        node.stats = stats_of(node.all);
        report(node);
        node.stop_reason = should_stop(node.stats, node.cell, space_, parent_entropy, config_);
        if (node.stop_reason) {
            return;
        }
        node.split = choose_split_dims(space_, node.cell, dataset_of(space_, node.all), config_);
        const auto cells = split_product(space_, node.cell, node.split.dims);
        for (const auto& cell : cells) {
            auto child = std::make_unique<WorkNode>();
            child->cell = cell;
            for (const auto* r : node.all) {
                if (contains(cell, r->point)) {
                    child->all.push_back(r);
                }
            }
            child->inherited = child->all.size();
            node.children.push_back(std::move(child));
        }
        TaskGroup group;
        const double h = node.stats.entropy;
        for (auto& child : node.children) {
            WorkNode* c = child.get();
            pool_.submit(group, [this, c, h] { run(*c, h); });
        }
        pool_.wait(group);
    }

private:
    void sample_and_assess(WorkNode& node) {
        const auto points = hierarchical_sample(node.cell, grid_, space_, config_.sampling());
        node.fresh.resize(points.size());
        TaskGroup group;
        for (std::size_t start = 0; start < points.size(); start += kAssessBatch) {
            const std::size_t stop = std::min(points.size(), start + kAssessBatch);
            pool_.submit(group, [this, &node, &points, start, stop] {
                for (std::size_t i = start; i < stop; ++i) {
                    node.fresh[i] = assess(grid_, space_, points[i], node.cell, config_);
                }
            });
        }
        pool_.wait(group);
    }

    void report(const WorkNode& node) {
        const auto d = static_cast<std::size_t>(std::clamp(node.cell.depth, 0, config_.max_depth));
        const auto cells = cells_at_depth_[d].fetch_add(1) + 1;
        if (!progress_) {
            return;
        }
        char line[160];
        std::snprintf(line, sizeof line, "depth=%d cells=%zu feasible=%.2f%% entropy=%.4f", node.cell.depth, cells,
                      100.0 * node.stats.feasible_rate(), node.stats.entropy);
        std::lock_guard lock(progress_mutex_);
        progress_(line);
    }

    const GridModel& grid_;
    const OperatingSpace& space_;
    const ExplorationConfig& config_;
    const ProgressSink& progress_;
    TaskPool pool_;
    std::vector<std::atomic<std::size_t>> cells_at_depth_;
    std::mutex progress_mutex_;
};

std::unique_ptr<ExplorationNode> flatten(WorkNode& work, std::vector<LabeledRecord>& out,
                                         std::unordered_map<const LabeledRecord*, std::size_t>& index) {
    auto node = std::make_unique<ExplorationNode>();
    for (auto& r : work.fresh) {
        index[&r] = out.size();
        out.push_back(r);
    }
    for (const auto* r : work.all) {
        node->records.push_back(index.at(r));
    }
    node->cell = work.cell;
    node->inherited = work.inherited;
    node->stats = work.stats;
    node->stop_reason = work.stop_reason;
    node->split_dims = work.split.dims;
    node->importance = work.split.importance;
    for (auto& child : work.children) {
        node->children.push_back(flatten(*child, out, index));
    }
    return node;
}

}  // namespace

SamplingOptions ExplorationConfig::sampling() const {
    SamplingOptions s;
    s.n_samples = n_samples;
    s.n_cases = n_cases;
    s.loss_factor = loss_factor;
    s.dev_bound = dev_bound;
    s.load_mode = load_mode;
    s.load_spread = load_spread;
    s.max_tries = max_tries;
    s.seed = seed;
    return s;
}

void validate(const ExplorationConfig& c) {
    auto fraction = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument(std::string(name) + " must lie in [0, 1]");
        }
    };
    fraction(c.min_feasible_rate, "min_feasible_rate");
    fraction(c.min_tolerance_frac, "min_tolerance_frac");
    fraction(c.loss_factor, "loss_factor");
    if (c.max_depth < 0) {
        throw std::invalid_argument("max_depth must be >= 0");
    }
    if (c.n_samples < 1 || c.n_cases < 1) {
        throw std::invalid_argument("n_samples and n_cases must be >= 1");
    }
    if (!(c.entropy_decrease_threshold >= 0.0)) {
        throw std::invalid_argument("entropy_decrease_threshold must be >= 0");
    }
    if (!(c.eps_margin >= 0.0)) {
        throw std::invalid_argument("eps_margin must be >= 0");
    }
    if (c.workers < 1) {
        throw std::invalid_argument("workers must be >= 1");
    }
    if (c.split_dims_per_node < 0) {
        throw std::invalid_argument("split_dims_per_node must be >= 0");
    }
    if (c.forest.n_trees < 1 || c.forest.max_tree_depth < 0) {
        throw std::invalid_argument("forest needs n_trees >= 1 and max_tree_depth >= 0");
    }
    try {
        validate(c.model);
    } catch (const ModelError& e) {
        throw std::invalid_argument(e.what());
    }
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::ZeroEntropy:
            return "zero_entropy";
        case StopReason::EntropyDecrease:
            return "entropy_decrease";
        case StopReason::MinFeasibleRate:
            return "min_feasible_rate";
        case StopReason::ToleranceFloor:
            return "tolerance_floor";
        case StopReason::MaxDepth:
            return "max_depth";
    }
    return "max_depth";
}

std::optional<StopReason> stop_reason_from_string(const std::string& text) {
    for (const auto r : {StopReason::ZeroEntropy, StopReason::EntropyDecrease, StopReason::MinFeasibleRate,
                         StopReason::ToleranceFloor, StopReason::MaxDepth}) {
        if (to_string(r) == text) {
            return r;
        }
    }
    return std::nullopt;
}

double NodeStats::feasible_rate() const noexcept {
    const auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(feasible) / static_cast<double>(n);
}

double entropy(std::size_t stable, std::size_t total) {
    if (total == 0 || stable == 0 || stable == total) {
        return 0.0;
    }
    const double p = static_cast<double>(stable) / static_cast<double>(total);
    return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

double entropy(const std::vector<int>& labels) {
    const auto stable = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    return entropy(stable, labels.size());
}

NodeStats node_stats(const std::vector<LabeledRecord>& records, const std::vector<std::size_t>& indices) {
    std::vector<const LabeledRecord*> ptrs;
    ptrs.reserve(indices.size());
    for (const auto i : indices) {
        ptrs.push_back(&records.at(i));
    }
    return stats_of(ptrs);
}

std::vector<std::size_t> candidate_dims(const OperatingSpace& space, const ExplorationConfig& config) {
    std::vector<std::size_t> dims;
    if (config.use_sensitivity) {
        for (std::size_t d = 0; d < space.independent_count(); ++d) {
            dims.push_back(d);
        }
        return dims;
    }
    for (const auto& name : config.fixed_split_dims) {
        const auto d = space.find_dim(name);
        if (d && *d < space.independent_count()) {
            dims.push_back(*d);
        }
    }
    if (dims.empty()) {
        for (std::size_t d = 0; d < space.independent_count(); ++d) {
            dims.push_back(d);
        }
    }
    return dims;
}

std::optional<StopReason> should_stop(const NodeStats& stats, const Subregion& cell, const OperatingSpace& space,
                                      std::optional<double> parent_entropy, const ExplorationConfig& config) {
    if (stats.feasible > 0) {
        if (stats.entropy == 0.0) {
            return StopReason::ZeroEntropy;
        }
        if (parent_entropy && std::abs(*parent_entropy - stats.entropy) < config.entropy_decrease_threshold) {
            return StopReason::EntropyDecrease;
        }
    }
    if (stats.feasible_rate() < config.min_feasible_rate) {
        return StopReason::MinFeasibleRate;
    }
    const auto candidates = candidate_dims(space, config);
    if (std::none_of(candidates.begin(), candidates.end(),
                     [&](std::size_t d) { return can_split(space, cell, d); })) {
        return StopReason::ToleranceFloor;
    }
    if (cell.depth >= config.max_depth) {
        return StopReason::MaxDepth;
    }
    return std::nullopt;
}

LabeledDataset stability_dataset(const OperatingSpace& space, const std::vector<LabeledRecord>& records,
                                 const std::vector<std::size_t>& indices) {
    std::vector<const LabeledRecord*> ptrs;
    ptrs.reserve(indices.size());
    for (const auto i : indices) {
        ptrs.push_back(&records.at(i));
    }
    return dataset_of(space, ptrs);
}

SplitChoice choose_split_dims(const OperatingSpace& space, const Subregion& cell, const LabeledDataset& data,
                              const ExplorationConfig& config) {
    const auto k = static_cast<std::size_t>(config.split_count());
    const auto n = space.independent_count();
    SplitChoice choice;
    if (config.use_sensitivity && data.has_both_classes()) {
        try {
            auto params = config.forest;
            params.workers = 1;
            const auto forest =
                train_forest(data, params, RngStream::mix(config.seed, RngStream::hash(cell.path)));
            choice.importance = feature_importance(forest);
            std::vector<std::size_t> order(n);
            for (std::size_t d = 0; d < n; ++d) {
                order[d] = d;
            }
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return choice.importance[a] > choice.importance[b];
            });
            for (const auto d : order) {
                if (choice.dims.size() < k && can_split(space, cell, d)) {
                    choice.dims.push_back(d);
                }
            }
            if (!choice.dims.empty()) {
                return choice;
            }
        } catch (const SensitivityUnavailable&) {
            choice.importance.clear();
        }
    }
    for (const auto& name : config.fixed_split_dims) {
        const auto d = space.find_dim(name);
        if (d && *d < n && choice.dims.size() < k && can_split(space, cell, *d) &&
            std::find(choice.dims.begin(), choice.dims.end(), *d) == choice.dims.end()) {
            choice.dims.push_back(*d);
        }
    }
    if (choice.dims.empty()) {
        for (std::size_t d = 0; d < n && choice.dims.size() < k; ++d) {
            if (can_split(space, cell, d)) {
                choice.dims.push_back(d);
            }
        }
    }
    return choice;
}

LabeledRecord assess(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& point,
                     const Subregion& cell, const ExplorationConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    LabeledRecord rec;
    rec.point = point;
    rec.adjusted_vars = point.var_values;
    rec.cell_path = cell.path;
    rec.depth = cell.depth;
    try {
        const auto adj = adjust_to_feasible(grid, space, point, cell, config.feasibility);
        rec.adjusted_vars = adj.adjusted.var_values;
        rec.verdict = adj.verdict;
        rec.pf_iterations = adj.solution.iterations;
        if (rec.verdict.verdict == Verdict::Feasible) {
            try {
                const auto params = params_for(space, point.dim_values, config.model);
                const auto model =
                    linearize(grid, space, adj.adjusted, adj.solution, params, config.feasibility.network);
                rec.stability = eig_stability(model, config.eps_margin);
            } catch (const std::exception&) {
                rec.verdict.verdict = Verdict::Infeasible;
                rec.verdict.violations.push_back({"analysis_failed", 0.0});
            }
        }
    } catch (const std::exception&) {
        rec.verdict = FeasibilityVerdict{};
        rec.verdict.verdict = Verdict::Infeasible;
        rec.verdict.violations.push_back({"assessment_failed", 0.0});
        rec.stability.reset();
    }
    rec.assess_ms = std::numeric_limits<double>::quiet_NaN();
    if (config.record_timing) {
        rec.assess_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
    return rec;
}

ExplorationResult explore(const GridModel& grid, const OperatingSpace& space, const ExplorationConfig& config,
                          const ProgressSink& progress) {
    validate(config);
    WorkNode root;
    root.cell = space.root();
    Explorer(grid, space, config, progress).run(root, std::nullopt);
    ExplorationResult result;
    std::unordered_map<const LabeledRecord*, std::size_t> index;
    result.root = flatten(root, result.records, index);
    return result;
}

void visit(const ExplorationNode& node, const std::function<void(const ExplorationNode&)>& f) {
    f(node);
    for (const auto& child : node.children) {
        visit(*child, f);
    }
}

}  // namespace stabgen
