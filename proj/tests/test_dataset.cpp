#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "stabgen/csv.hpp"
#include "stabgen/dataset.hpp"

using namespace stabgen;

namespace {

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunConfig small_run() {
    return parse_config("n_samples = 10\nn_cases = 2\nmax_depth = 2\nseed = 11\nforest_n_trees = 20\n");
}

struct Fixture {
    RunConfig cfg = small_run();
    GridModel grid = resolve_grid(cfg.grid);
    OperatingSpace space = build_space(grid, cfg.controls);
    RunOutputs out = run_generate(cfg);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST_CASE("FNV-1a digest matches the reference vectors") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
    CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("every row round-trips byte for byte") {
    const auto& f = fixture();
    std::istringstream in(f.out.dataset_csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == csv::join(dataset_header(f.grid, f.space)));
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto rec = parse_record(f.space, f.grid.bus_count(), csv::split(line));
        CHECK(format_record(f.space, rec) == line);
        ++rows;
    }
    CHECK(rows == f.out.result.records.size());
    std::istringstream again(f.out.dataset_csv);
    const auto parsed = read_dataset(again, f.grid, f.space);
    std::ostringstream rewritten;
    write_dataset(rewritten, f.grid, f.space, parsed);
    CHECK(rewritten.str() == f.out.dataset_csv);
}

TEST_CASE("edge values survive formatting") {
    const auto& f = fixture();
    auto rec = f.out.result.records.front();
    rec.point.dim_values[0] = 0.1 + 0.2;
    rec.point.dim_values[1] = 1e-300;
    rec.assess_ms = 12.5;
    rec.verdict.verdict = Verdict::Feasible;
    rec.verdict.violations.clear();
    rec.stability = StabilityVerdict{true, -1.0 / 3.0, {}, 0.0, 1.0};
    const auto line = format_record(f.space, rec);
    const auto back = parse_record(f.space, f.grid.bus_count(), csv::split(line));
    CHECK(back.point.dim_values[0] == 0.1 + 0.2);
    CHECK(back.point.dim_values[1] == 1e-300);
    CHECK(back.stability->max_real == -1.0 / 3.0);
    CHECK(back.assess_ms == 12.5);
    CHECK(format_record(f.space, back) == line);
}

TEST_CASE("schema problems raise DatasetError") {
    const auto& f = fixture();
    std::istringstream wrong_header("cell_path,depth\n");
    CHECK_THROWS_AS(read_dataset(wrong_header, f.grid, f.space), DatasetError);
    std::istringstream empty("");
    CHECK_THROWS_AS(read_dataset(empty, f.grid, f.space), DatasetError);
    auto fields = csv::split(format_record(f.space, f.out.result.records.front()));
    auto short_row = fields;
    short_row.pop_back();
    CHECK_THROWS_AS(parse_record(f.space, f.grid.bus_count(), short_row), DatasetError);
    auto bad_verdict = fields;
    bad_verdict[bad_verdict.size() - 9] = "unsure";
    CHECK_THROWS_AS(parse_record(f.space, f.grid.bus_count(), bad_verdict), DatasetError);
    auto bad_depth = fields;
    bad_depth[1] = "1.5";
    CHECK_THROWS_AS(parse_record(f.space, f.grid.bus_count(), bad_depth), DatasetError);
}

TEST_CASE("cell membership rebuilt from rows matches the tree") {
    const auto& f = fixture();
    const auto& records = f.out.result.records;
    visit(*f.out.result.root, [&](const ExplorationNode& node) {
        auto members = cell_members(f.space, records, {node.cell.path, node.cell.depth});
        auto expected = node.records;
        std::sort(members.begin(), members.end());
        std::sort(expected.begin(), expected.end());
        CHECK(members == expected);
    });
}

TEST_CASE("metrics rows are consistent") {
    const auto& f = fixture();
    REQUIRE_FALSE(f.out.metrics.empty());
    std::size_t records = 0;
    for (const auto& row : f.out.metrics) {
        CHECK(row.feasible.mean + row.infeasible.mean + row.discarded.mean == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(row.feasible.std >= 0.0);
        CHECK(row.importance.size() == f.space.independent_count());
        records += row.records;
    }
    CHECK(records == f.out.result.records.size());
    for (std::size_t i = 1; i < f.out.metrics.size(); ++i) {
        CHECK(f.out.metrics[i].cumulative_feasible >= f.out.metrics[i - 1].cumulative_feasible);
    }
    // Per-cell rates each sum to one.
    for (const auto& cell : cells_of(f.out.result.records)) {
        const auto s = node_stats(f.out.result.records, cell_members(f.space, f.out.result.records, cell));
        const double n = static_cast<double>(s.total());
        CHECK(static_cast<double>(s.feasible) / n + static_cast<double>(s.infeasible) / n +
                  static_cast<double>(s.discarded) / n ==
              doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("recomputing metrics from the written dataset reproduces them") {
    const auto& f = fixture();
    std::istringstream in(f.out.dataset_csv);
    const auto parsed = read_dataset(in, f.grid, f.space);
    const auto again = compute_metrics(f.space, parsed, metrics_options(f.cfg));
    REQUIRE(again.size() == f.out.metrics.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
        CHECK(std::abs(again[i].feasible.mean - f.out.metrics[i].feasible.mean) <= 1e-12);
        CHECK(again[i].entropy == f.out.metrics[i].entropy);
    }
    std::ostringstream csv_again;
    write_metrics(csv_again, f.space, again);
    CHECK(csv_again.str() == f.out.metrics_csv);
}

TEST_CASE("depth-zero runs give a single metrics row") {
    auto cfg = small_run();
    cfg.exploration.max_depth = 0;
    const auto out = run_generate(cfg);
    CHECK(out.metrics.size() == 1);
    std::ostringstream series;
    write_rates_series(series, out.metrics);
    const auto text = series.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("manifest echoes the configuration and checksum") {
    const auto& f = fixture();
    const auto j = nlohmann::json::parse(f.out.manifest_json);
    CHECK(j["engine"] == kEngineVersion);
    CHECK(j["seed"] == 11);
    CHECK(j["records"] == f.out.result.records.size());
    CHECK(j["dataset_fnv1a64"] == fnv1a_hex(f.out.dataset_csv));
    const auto cfg = config_from_manifest(f.out.manifest_json);
    CHECK(render_config(cfg) == render_config(f.cfg));
    CHECK_THROWS_AS(config_from_manifest("{"), DatasetError);
    CHECK_THROWS_AS(config_from_manifest("{}"), DatasetError);
}

TEST_CASE("tree dump mirrors the exploration tree") {
    const auto& f = fixture();
    const auto j = nlohmann::json::parse(f.out.tree_json);
    std::size_t dumped = 0;
    std::function<void(const nlohmann::json&)> walk = [&](const nlohmann::json& n) {
        ++dumped;
        CHECK((n["stop_reason"].is_null() == !n["children"].empty()));
        if (!n["stop_reason"].is_null()) {
            CHECK(stop_reason_from_string(n["stop_reason"].get<std::string>()).has_value());
        }
        for (const auto& c : n["children"]) {
            walk(c);
        }
    };
    walk(j);
    std::size_t nodes = 0;
    visit(*f.out.result.root, [&](const ExplorationNode&) { ++nodes; });
    CHECK(dumped == nodes);
}

TEST_CASE("accuracy trend tolerates drops within one pooled deviation") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto row = [](double mean, double std) {
        MetricsRow r;
        r.accuracy_mean = mean;
        r.accuracy_std = std;
        return r;
    };
    CHECK(accuracy_trend_ok({row(0.90, 0.02), row(0.89, 0.02), row(0.95, 0.01)}));
    CHECK_FALSE(accuracy_trend_ok({row(0.90, 0.01), row(0.85, 0.01)}));
    // sqrt((0.03^2 + 0.04^2) / 2) = 0.0354
    CHECK(accuracy_trend_ok({row(0.90, 0.03), row(0.865, 0.04)}));
    CHECK_FALSE(accuracy_trend_ok({row(0.90, 0.03), row(0.864, 0.04)}));
    CHECK(accuracy_trend_ok({row(nan, nan), row(0.7, 0.0)}));
}

TEST_CASE("golden run reproduces the frozen dataset") {
    auto cfg = load_config(STABGEN_GOLDEN_DIR "/golden.cfg");
    const auto out = run_generate(cfg);
    const auto expected = read_text(STABGEN_GOLDEN_DIR "/golden_dataset.csv");
    CHECK(out.dataset_csv.size() == expected.size());
    CHECK(out.dataset_csv == expected);
    std::size_t cells = 0;
    visit(*out.result.root, [&](const ExplorationNode&) { ++cells; });
    CHECK(out.result.records.size() == 40 * cells);
}
