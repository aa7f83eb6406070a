#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "stabgen/explorer.hpp"

using namespace stabgen;

namespace {

ExplorationConfig small_config() {
    ExplorationConfig c;
    c.n_samples = 12;
    c.n_cases = 2;
    c.max_depth = 2;
    c.seed = 3;
    c.model.gfor.t_v = 0.035;
    c.forest.n_trees = 20;
    return c;
}

struct Run {
    GridModel grid = load_fixture("3bus");
    OperatingSpace space = build_space(grid, {{"tau_u", 0.01, 1.0}, {"tau_w", 0.01, 1.0}});
    ExplorationResult result;
};

Run run(const ExplorationConfig& c) {
    Run r;
    r.result = explore(r.grid, r.space, c);
    return r;
}

bool same_record(const LabeledRecord& a, const LabeledRecord& b) {
    return a.cell_path == b.cell_path && a.point.dim_values == b.point.dim_values &&
           a.adjusted_vars == b.adjusted_vars && a.point.voltage_profile == b.point.voltage_profile &&
           a.verdict.verdict == b.verdict.verdict && a.stability.has_value() == b.stability.has_value() &&
           (!a.stability || (a.stability->max_real == b.stability->max_real &&
                             a.stability->stable == b.stability->stable)) &&
           a.pf_iterations == b.pf_iterations;
}

}  // namespace

TEST_CASE("entropy in nats") {
    CHECK(entropy(std::vector<int>{0, 1, 0, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(entropy(std::vector<int>{1, 1, 1}) == 0.0);
    CHECK(entropy(std::vector<int>{}) == 0.0);
    const double p = 0.25;
    CHECK(entropy(1, 4) == doctest::Approx(-p * std::log(p) - (1 - p) * std::log(1 - p)));
    // Symmetric in the labels.
    for (std::size_t k = 0; k <= 20; ++k) {
        CHECK(entropy(k, 20) == doctest::Approx(entropy(20 - k, 20)));
        CHECK(entropy(k, 20) <= std::log(2.0) + 1e-15);
    }
}

TEST_CASE("stop criteria apply in their fixed order") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    ExplorationConfig c;
    c.max_depth = 3;
    auto cell = space.root();
    NodeStats s;
    s.feasible = 10;
    s.infeasible = 90;
    s.stable = 10;
    s.entropy = 0.0;
    CHECK(should_stop(s, cell, space, std::nullopt, c) == StopReason::ZeroEntropy);
    s.stable = 5;
    s.entropy = entropy(5, 10);
    CHECK(should_stop(s, cell, space, s.entropy + 0.005, c) == StopReason::EntropyDecrease);
    CHECK(should_stop(s, cell, space, s.entropy - 0.005, c) == StopReason::EntropyDecrease);
    CHECK_FALSE(should_stop(s, cell, space, s.entropy + 0.2, c).has_value());
    s.feasible = 1;
    s.stable = 0;
    s.entropy = 0.0;
    s.infeasible = 99;
    CHECK(should_stop(s, cell, space, std::nullopt, c) == StopReason::ZeroEntropy);
    s.feasible = 0;
    s.infeasible = 100;
    CHECK(should_stop(s, cell, space, 0.5, c) == StopReason::MinFeasibleRate);
    s.feasible = 50;
    s.stable = 25;
    s.entropy = entropy(25, 50);
    cell.depth = 3;
    CHECK(should_stop(s, cell, space, std::nullopt, c) == StopReason::MaxDepth);
    c.min_tolerance_frac = 0.6;
    const auto coarse = build_space(grid, {}, SpaceOptions{std::nullopt, 0.6});
    CHECK_FALSE(should_stop(s, coarse.root(), coarse, std::nullopt, c).has_value());
    const auto floored = split_product(coarse, coarse.root(), {0, 1, 2, 3}).front();
    CHECK(should_stop(s, floored, coarse, std::nullopt, c) == StopReason::ToleranceFloor);
    for (const auto r : {StopReason::ZeroEntropy, StopReason::EntropyDecrease, StopReason::MinFeasibleRate,
                         StopReason::ToleranceFloor, StopReason::MaxDepth}) {
        CHECK(stop_reason_from_string(to_string(r)) == r);
    }
}

TEST_CASE("split choice ranks by importance and falls back to the fixed dimensions") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {{"tau_w", 0.01, 1.0}});
    ExplorationConfig c;
    c.forest.n_trees = 30;
    LabeledDataset data;
    RngStream rng(5);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> x;
        for (const auto& b : space.root().bounds) {
            x.push_back(rng.uniform(b.lo, b.hi));
        }
        data.y.push_back(x[4] > 0.5 ? 1 : 0);
        data.x.push_back(x);
    }
    const auto choice = choose_split_dims(space, space.root(), data, c);
    REQUIRE(choice.dims.size() == 1);
    CHECK(choice.dims[0] == 4);
    CHECK(choice.importance.size() == 5);

    LabeledDataset single = data;
    std::fill(single.y.begin(), single.y.end(), 1);
    const auto fallback = choose_split_dims(space, space.root(), single, c);
    CHECK(fallback.dims == std::vector<std::size_t>{0});
    CHECK(fallback.importance.empty());

    c.use_sensitivity = false;
    CHECK(choose_split_dims(space, space.root(), data, c).dims == std::vector<std::size_t>{0, 1});
}

TEST_CASE("records are conserved through the tree") {
    const auto r = run(small_config());
    const auto& records = r.result.records;
    std::size_t fresh_total = 0;
    std::set<std::string> paths;
    visit(*r.result.root, [&](const ExplorationNode& node) {
        paths.insert(node.cell.path);
        const auto fresh = node.records.size() - node.inherited;
        CHECK(fresh == 12 * 2);
        fresh_total += fresh;
        for (std::size_t i = 0; i < node.records.size(); ++i) {
            const auto& rec = records.at(node.records[i]);
            CHECK(contains(node.cell, rec.point));
            if (i >= node.inherited) {
                CHECK(rec.cell_path == node.cell.path);
                CHECK(rec.depth == node.cell.depth);
            } else {
                CHECK(rec.depth < node.cell.depth);
            }
        }
        const auto s = node_stats(records, node.records);
        CHECK(s.feasible == node.stats.feasible);
        CHECK(s.stable == node.stats.stable);
        CHECK(s.total() == node.records.size());
        // Children split the parent's records between them.
        if (!node.children.empty()) {
            std::multiset<std::size_t> handed;
            for (const auto& child : node.children) {
                handed.insert(child->records.begin(), child->records.begin() + static_cast<long>(child->inherited));
            }
            CHECK(handed == std::multiset<std::size_t>(node.records.begin(), node.records.end()));
        }
    });
    CHECK(fresh_total == records.size());
    for (const auto& rec : records) {
        CHECK(paths.count(rec.cell_path) == 1);
        CHECK((rec.verdict.verdict == Verdict::Feasible) == rec.stability.has_value());
        CHECK(std::isnan(rec.assess_ms));
    }
}

TEST_CASE("stopped nodes are leaves and leaves carry a stop reason") {
    auto c = small_config();
    for (const bool sensitivity : {true, false}) {
        c.use_sensitivity = sensitivity;
        const auto r = run(c);
        visit(*r.result.root, [&](const ExplorationNode& node) {
            CHECK(node.stop_reason.has_value() == node.children.empty());
            if (!node.children.empty()) {
                CHECK(node.children.size() == (sensitivity ? 2u : 4u));
                CHECK(node.split_dims.size() == (sensitivity ? 1u : 2u));
                for (const auto& child : node.children) {
                    CHECK(child->cell.depth == node.cell.depth + 1);
                }
            }
            if (node.stop_reason == StopReason::MaxDepth) {
                CHECK(node.cell.depth == c.max_depth);
            }
            CHECK(node.cell.depth <= c.max_depth);
        });
    }
}

TEST_CASE("results do not depend on the worker count") {
    auto c = small_config();
    const auto base = run(c);
    for (const int workers : {2, 8}) {
        c.workers = workers;
        const auto other = run(c);
        REQUIRE(other.result.records.size() == base.result.records.size());
        for (std::size_t i = 0; i < base.result.records.size(); ++i) {
            CHECK(same_record(base.result.records[i], other.result.records[i]));
        }
    }
}

TEST_CASE("depth zero runs assess the root only") {
    auto c = small_config();
    c.max_depth = 0;
    const auto r = run(c);
    CHECK(r.result.root->children.empty());
    CHECK(r.result.records.size() == 24);
    CHECK(r.result.root->stop_reason.has_value());
}

TEST_CASE("timing is recorded on request") {
    auto c = small_config();
    c.max_depth = 0;
    c.n_samples = 3;
    c.record_timing = true;
    for (const auto& rec : run(c).result.records) {
        CHECK(rec.assess_ms >= 0.0);
    }
}

TEST_CASE("configuration is validated") {
    auto c = small_config();
    c.min_feasible_rate = 1.5;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_config();
    c.workers = 0;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
    c = small_config();
    c.n_samples = 0;
    CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("entropy reference values") {
    std::vector<int> ten(10, 0);
    std::fill(ten.begin(), ten.begin() + 5, 1);
    CHECK(std::round(entropy(ten) * 1e4) / 1e4 == 0.6931);
    CHECK(entropy(std::vector<int>(10, 1)) == 0.0);
    CHECK(std::round(entropy(1, 4) * 1e4) / 1e4 == 0.5623);
}

TEST_CASE("stop examples") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    ExplorationConfig c;
    c.max_depth = 4;
    c.min_feasible_rate = 0.05;
    NodeStats s;
    s.feasible = 3;
    s.infeasible = 97;
    s.stable = 1;
    s.entropy = entropy(1, 3);
    CHECK(should_stop(s, space.root(), space, std::nullopt, c) == StopReason::MinFeasibleRate);
    s.feasible = 50;
    s.infeasible = 50;
    s.stable = 24;
    s.entropy = entropy(24, 50);
    CHECK(s.entropy == doctest::Approx(0.69).epsilon(0.01));
    CHECK_FALSE(should_stop(s, space.root(), space, std::nullopt, c).has_value());
    auto deep = space.root();
    deep.depth = 4;
    CHECK(should_stop(s, deep, space, std::nullopt, c) == StopReason::MaxDepth);
}

TEST_CASE("labels driven by the grid-forming share split that dimension") {
    const auto space = build_space(load_fixture("3bus"), {{"tau_u", 0.01, 1.0}, {"tau_w", 0.01, 1.0}});
    const auto pct = *space.find_dim("pct_GFM");
    ExplorationConfig c;
    c.forest.n_trees = 30;
    LabeledDataset data;
    RngStream rng(8);
    for (int i = 0; i < 300; ++i) {
        std::vector<double> x;
        for (const auto& b : space.root().bounds) {
            x.push_back(rng.uniform(b.lo, b.hi));
        }
        data.y.push_back(x[pct] < 0.4 ? 1 : 0);
        data.x.push_back(x);
    }
    const auto choice = choose_split_dims(space, space.root(), data, c);
    CHECK(choice.dims == std::vector<std::size_t>{pct});
}

TEST_CASE("a high-load cell stops on the feasible rate") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {{"tau_u", 0.01, 1.0}, {"tau_w", 0.01, 1.0}});
    auto cell = space.root();
    for (int i = 0; i < 3; ++i) {
        cell = split(space, cell, "P_SG").second;
        cell = split(space, cell, "P_IBR").second;
    }
    auto c = small_config();
    c.max_depth = 8;
    SamplingOptions so;
    so.n_samples = 30;
    so.n_cases = 1;
    so.seed = 2;
    std::vector<LabeledRecord> records;
    std::vector<std::size_t> idx;
    for (const auto& op : hierarchical_sample(cell, grid, space, so)) {
        idx.push_back(records.size());
        records.push_back(assess(grid, space, op, cell, c));
    }
    const auto stats = node_stats(records, idx);
    CHECK(stats.feasible_rate() < c.min_feasible_rate);
    CHECK(should_stop(stats, cell, space, std::nullopt, c) == StopReason::MinFeasibleRate);
}
