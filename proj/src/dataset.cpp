#include "stabgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stabgen/csv.hpp"

namespace stabgen {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kTrailingColumns[] = {"verdict",          "stable",          "max_real",
                                            "dominant_freq_hz", "dominant_damping", "adjustment_distance",
                                            "violations",       "pf_iterations",   "assess_ms"};

std::string optional_number(bool present, double value) { return present ? csv::format_double(value) : ""; }

double parse_number(const std::string& text, const char* column) {
    try {
        return csv::parse_double(text);
    } catch (const std::exception&) {
        throw DatasetError(std::string("dataset: bad number in ") + column + ": '" + text + "'");
    }
}

long long parse_int(const std::string& text, const char* column) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (text.empty() || used != text.size()) {
        throw DatasetError(std::string("dataset: bad integer in ") + column + ": '" + text + "'");
    }
    return v;
}

RateSummary summarize(const std::vector<double>& values) {
    RateSummary s;
    if (values.empty()) {
        return s;
    }
    for (const double v : values) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) {
        ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

/// True when `ancestor` equals `path` or is a proper prefix ending at a segment boundary.
bool is_ancestor(const std::string& ancestor, const std::string& path) {
    if (path.size() < ancestor.size() || path.compare(0, ancestor.size(), ancestor) != 0) {
        return false;
    }
    return path.size() == ancestor.size() || path[ancestor.size()] == '.';
}

json node_json(const OperatingSpace& space, const ExplorationNode& node) {
    json j;
    j["path"] = node.cell.path;
    j["depth"] = node.cell.depth;
    json bounds = json::object();
    for (std::size_t d = 0; d < node.cell.bounds.size(); ++d) {
        bounds[space.dims()[d].name] = {node.cell.bounds[d].lo, node.cell.bounds[d].hi};
    }
    j["bounds"] = bounds;
    j["records"] = node.records.size();
    j["inherited"] = node.inherited;
    j["feasible"] = node.stats.feasible;
    j["infeasible"] = node.stats.infeasible;
    j["discarded"] = node.stats.discarded;
    j["stable"] = node.stats.stable;
    j["entropy"] = node.stats.entropy;
    j["stop_reason"] = node.stop_reason ? json(to_string(*node.stop_reason)) : json(nullptr);
    json split = json::array();
    for (const auto d : node.split_dims) {
        split.push_back(space.dims()[d].name);
    }
    j["split_dims"] = split;
    if (!node.importance.empty()) {
        json imp = json::object();
        for (std::size_t d = 0; d < node.importance.size(); ++d) {
            imp[space.dims()[d].name] = node.importance[d];
        }
        j["importance"] = imp;
    }
    json children = json::array();
    for (const auto& c : node.children) {
        children.push_back(node_json(space, *c));
    }
    j["children"] = children;
    return j;
}

}  // namespace

std::vector<std::string> dataset_header(const GridModel& grid, const OperatingSpace& space) {
    std::vector<std::string> h{"cell_path", "depth", "sample_index", "case_index"};
    for (const auto& d : space.dims()) {
        h.push_back(d.name);
    }
    for (const auto& v : space.vars()) {
        h.push_back(v.name);
    }
    for (const auto& b : grid.buses()) {
        h.push_back("V_" + std::to_string(b.id));
    }
    for (const char* c : kTrailingColumns) {
        h.emplace_back(c);
    }
    return h;
}

std::string format_record(const OperatingSpace& space, const LabeledRecord& r) {
    std::vector<std::string> f{r.cell_path, std::to_string(r.depth), std::to_string(r.point.sample_index),
                               std::to_string(r.point.case_index)};
    for (std::size_t d = 0; d < space.dims().size(); ++d) {
        f.push_back(csv::format_double(r.point.dim_values.at(d)));
    }
    for (std::size_t v = 0; v < space.vars().size(); ++v) {
        f.push_back(csv::format_double(r.adjusted_vars.at(v)));
    }
    for (const double v : r.point.voltage_profile) {
        f.push_back(csv::format_double(v));
    }
    const bool s = r.stability.has_value();
    f.push_back(to_string(r.verdict.verdict));
    f.push_back(s ? (r.stability->stable ? "1" : "0") : "");
    f.push_back(optional_number(s, s ? r.stability->max_real : 0.0));
    f.push_back(optional_number(s, s ? r.stability->dominant_freq_hz : 0.0));
    f.push_back(optional_number(s, s ? r.stability->dominant_damping : 0.0));
    f.push_back(csv::format_double(r.verdict.adjustment_distance));
    f.push_back(format_violations(r.verdict.violations));
    f.push_back(std::to_string(r.pf_iterations));
    f.push_back(csv::format_double(r.assess_ms));
    return csv::join(f);
}

LabeledRecord parse_record(const OperatingSpace& space, std::size_t bus_count, const std::vector<std::string>& f) {
    const std::size_t nd = space.dims().size();
    const std::size_t nv = space.vars().size();
    const std::size_t expected = 4 + nd + nv + bus_count + std::size(kTrailingColumns);
    if (f.size() != expected) {
        throw DatasetError("dataset: row has " + std::to_string(f.size()) + " fields, expected " +
                           std::to_string(expected));
    }
    LabeledRecord r;
    r.cell_path = f[0];
    r.depth = static_cast<int>(parse_int(f[1], "depth"));
    r.point.sample_index = static_cast<int>(parse_int(f[2], "sample_index"));
    r.point.case_index = static_cast<int>(parse_int(f[3], "case_index"));
    std::size_t i = 4;
    for (std::size_t d = 0; d < nd; ++d) {
        r.point.dim_values.push_back(parse_number(f[i++], "dimension"));
    }
    for (std::size_t v = 0; v < nv; ++v) {
        r.adjusted_vars.push_back(parse_number(f[i++], "variable"));
    }
    r.point.var_values = r.adjusted_vars;
    for (std::size_t b = 0; b < bus_count; ++b) {
        r.point.voltage_profile.push_back(parse_number(f[i++], "voltage"));
    }
    try {
        r.verdict.verdict = verdict_from_string(f[i++]);
    } catch (const std::exception& e) {
        throw DatasetError(std::string("dataset: ") + e.what());
    }
    const auto& stable = f[i++];
    if (!stable.empty()) {
        if (stable != "0" && stable != "1") {
            throw DatasetError("dataset: stable must be 0, 1 or empty");
        }
        StabilityVerdict s;
        s.stable = stable == "1";
        s.max_real = parse_number(f[i++], "max_real");
        s.dominant_freq_hz = parse_number(f[i++], "dominant_freq_hz");
        s.dominant_damping = parse_number(f[i++], "dominant_damping");
        r.stability = s;
    } else {
        i += 3;
    }
    if ((r.verdict.verdict == Verdict::Feasible) != r.stability.has_value()) {
        throw DatasetError("dataset: stability columns must be filled exactly for feasible rows");
    }
    r.verdict.adjustment_distance = parse_number(f[i++], "adjustment_distance");
    try {
        r.verdict.violations = parse_violations(f[i++]);
    } catch (const std::exception& e) {
        throw DatasetError(std::string("dataset: ") + e.what());
    }
    r.pf_iterations = static_cast<int>(parse_int(f[i++], "pf_iterations"));
    r.assess_ms = parse_number(f[i++], "assess_ms");
    return r;
}

void write_dataset(std::ostream& out, const GridModel& grid, const OperatingSpace& space,
                   const std::vector<LabeledRecord>& records) {
    out << csv::join(dataset_header(grid, space)) << '\n';
    for (const auto& r : records) {
        out << format_record(space, r) << '\n';
    }
}

std::vector<LabeledRecord> read_dataset(std::istream& in, const GridModel& grid, const OperatingSpace& space) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DatasetError("dataset: empty file");
    }
    if (csv::split(line) != dataset_header(grid, space)) {
        throw DatasetError("dataset: header does not match the configured space");
    }
    std::vector<LabeledRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        records.push_back(parse_record(space, grid.bus_count(), csv::split(line)));
    }
    return records;
}

std::vector<CellRef> cells_of(const std::vector<LabeledRecord>& records) {
    std::vector<CellRef> cells;
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (seen.insert(r.cell_path).second) {
            cells.push_back({r.cell_path, r.depth});
        }
    }
    return cells;
}

std::vector<std::size_t> cell_members(const OperatingSpace& space, const std::vector<LabeledRecord>& records,
                                      const CellRef& cell) {
    const auto region = cell_from_path(space, cell.path, cell.depth);
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.cell_path == cell.path) {
            members.push_back(i);
        } else if (r.depth < cell.depth && is_ancestor(r.cell_path, cell.path) && contains(region, r.point)) {
            members.push_back(i);
        }
    }
    return members;
}

std::vector<MetricsRow> compute_metrics(const OperatingSpace& space, const std::vector<LabeledRecord>& records,
                                        const MetricsOptions& options) {
    std::map<int, std::vector<CellRef>> by_depth;
    for (const auto& c : cells_of(records)) {
        by_depth[c.depth].push_back(c);
    }
    std::vector<MetricsRow> rows;
    for (const auto& [depth, cells] : by_depth) {
        MetricsRow row;
        row.depth = depth;
        row.cells = cells.size();
        std::vector<double> feasible;
        std::vector<double> infeasible;
        std::vector<double> discarded;
        double entropy_sum = 0.0;
        for (const auto& c : cells) {
            const auto stats = node_stats(records, cell_members(space, records, c));
            const auto n = static_cast<double>(std::max<std::size_t>(1, stats.total()));
            feasible.push_back(static_cast<double>(stats.feasible) / n);
            infeasible.push_back(static_cast<double>(stats.infeasible) / n);
            discarded.push_back(static_cast<double>(stats.discarded) / n);
            entropy_sum += stats.entropy;
        }
        row.feasible = summarize(feasible);
        row.infeasible = summarize(infeasible);
        row.discarded = summarize(discarded);
        row.entropy = entropy_sum / static_cast<double>(cells.size());
        std::vector<std::size_t> cumulative;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].depth == depth) {
                ++row.records;
            }
            if (records[i].depth <= depth) {
                cumulative.push_back(i);
            }
        }
        const auto data = stability_dataset(space, records, cumulative);
        row.cumulative_feasible = data.size();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.accuracy_mean = nan;
        row.accuracy_std = nan;
        row.importance.assign(space.independent_count(), nan);
        try {
            const auto cv = kfold_accuracy(data, options.folds, options.forest, options.seed);
            row.accuracy_mean = cv.mean;
            row.accuracy_std = cv.std;
        } catch (const SensitivityUnavailable&) {
        }
        try {
            row.importance = feature_importance(train_forest(data, options.forest, options.seed));
        } catch (const SensitivityUnavailable&) {
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_metrics(std::ostream& out, const OperatingSpace& space, const std::vector<MetricsRow>& rows) {
    std::vector<std::string> h{"depth",          "cells",          "records",         "feasible_mean",
                               "feasible_std",   "infeasible_mean", "infeasible_std", "discarded_mean",
                               "discarded_std",  "entropy_mean",   "cumulative_feasible", "accuracy_mean",
                               "accuracy_std"};
    for (std::size_t d = 0; d < space.independent_count(); ++d) {
        h.push_back("importance_" + space.dims()[d].name);
    }
    out << csv::join(h) << '\n';
    for (const auto& r : rows) {
        std::vector<std::string> f{std::to_string(r.depth),
                                   std::to_string(r.cells),
                                   std::to_string(r.records),
                                   csv::format_double(r.feasible.mean),
                                   csv::format_double(r.feasible.std),
                                   csv::format_double(r.infeasible.mean),
                                   csv::format_double(r.infeasible.std),
                                   csv::format_double(r.discarded.mean),
                                   csv::format_double(r.discarded.std),
                                   csv::format_double(r.entropy),
                                   std::to_string(r.cumulative_feasible),
                                   csv::format_double(r.accuracy_mean),
                                   csv::format_double(r.accuracy_std)};
        for (const double v : r.importance) {
            f.push_back(csv::format_double(v));
        }
        out << csv::join(f) << '\n';
    }
}

void write_rates_series(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "depth,rate,mean,std\n";
    for (const auto& r : rows) {
        const std::pair<const char*, const RateSummary*> series[] = {
            {"feasible", &r.feasible}, {"infeasible", &r.infeasible}, {"discarded", &r.discarded}};
        for (const auto& [name, s] : series) {
            out << r.depth << ',' << name << ',' << csv::format_double(s->mean) << ',' << csv::format_double(s->std)
                << '\n';
        }
    }
}

void write_entropy_series(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "depth,mean_entropy\n";
    for (const auto& r : rows) {
        out << r.depth << ',' << csv::format_double(r.entropy) << '\n';
    }
}

void write_accuracy_series(std::ostream& out, const std::vector<MetricsRow>& rows) {
    out << "depth,cumulative_feasible,mean,std\n";
    for (const auto& r : rows) {
        out << r.depth << ',' << r.cumulative_feasible << ',' << csv::format_double(r.accuracy_mean) << ','
            << csv::format_double(r.accuracy_std) << '\n';
    }
}

bool accuracy_trend_ok(const std::vector<MetricsRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& a = rows[i - 1];
        const auto& b = rows[i];
        if (std::isnan(a.accuracy_mean) || std::isnan(b.accuracy_mean)) {
            continue;
        }
        const double pooled = std::sqrt(0.5 * (a.accuracy_std * a.accuracy_std + b.accuracy_std * b.accuracy_std));
        if (b.accuracy_mean < a.accuracy_mean - pooled) {
            return false;
        }
    }
    return true;
}

std::string tree_json(const OperatingSpace& space, const ExplorationNode& root) {
    return node_json(space, root).dump(2) + "\n";
}

std::string manifest_json(const RunConfig& config, std::size_t record_count, const std::string& dataset_checksum) {
    json j;
    j["engine"] = kEngineVersion;
    j["dataset_schema"] = kDatasetSchema;
    j["seed"] = config.exploration.seed;
    j["records"] = record_count;
    j["dataset_fnv1a64"] = dataset_checksum;
    json cfg = json::object();
    for (const auto& [k, v] : config_entries(config)) {
        cfg[k] = v;
    }
    j["config"] = cfg;
    return j.dump(2) + "\n";
}

RunConfig config_from_manifest(const std::string& manifest_text) {
    json j;
    try {
        j = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw DatasetError(std::string("manifest: ") + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) {
        throw DatasetError("manifest: missing config block");
    }
    std::string text;
    for (const auto& [k, v] : j["config"].items()) {
        text += k + " = " + v.get<std::string>() + "\n";
    }
    return parse_config(text);
}

MetricsOptions metrics_options(const RunConfig& config) {
    MetricsOptions o;
    o.folds = config.cv_folds;
    o.forest = config.exploration.forest;
    o.forest.workers = config.exploration.workers;
    o.seed = config.exploration.seed;
    return o;
}

RunOutputs run_generate(const RunConfig& config, const ProgressSink& progress) {
    const auto grid = resolve_grid(config.grid);
    SpaceOptions opts;
    opts.min_tolerance_frac = config.exploration.min_tolerance_frac;
    const auto space = build_space(grid, config.controls, opts);
    RunOutputs out;
    out.result = explore(grid, space, config.exploration, progress);
    std::ostringstream data;
    write_dataset(data, grid, space, out.result.records);
    out.dataset_csv = data.str();
    out.metrics = compute_metrics(space, out.result.records, metrics_options(config));
    std::ostringstream metrics;
    write_metrics(metrics, space, out.metrics);
    out.metrics_csv = metrics.str();
    out.tree_json = tree_json(space, *out.result.root);
    out.manifest_json = manifest_json(config, out.result.records.size(), fnv1a_hex(out.dataset_csv));
    return out;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace stabgen
