#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stabgen/config.hpp"
#include "stabgen/csv.hpp"
#include "stabgen/dataset.hpp"
#include "stabgen/grid.hpp"
#include "stabgen/scan.hpp"

namespace fs = std::filesystem;
using namespace stabgen;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeError = 1;
constexpr int kInputError = 2;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DatasetError("cannot read '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
}

int generate(const std::string& config_path) {
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        (void)resolve_grid(cfg.grid);
    } catch (const ConfigError& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kInputError;
    } catch (const GridError& e) {
        std::cerr << "stabgen: grid: " << e.what() << '\n';
        return kInputError;
    } catch (const csv::CsvError& e) {
        std::cerr << "stabgen: grid: " << e.what() << '\n';
        return kInputError;
    }
    try {
        const auto out = run_generate(cfg, [](const std::string& line) { std::cerr << line << '\n'; });
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        write_file(dir / "dataset.csv", out.dataset_csv);
        write_file(dir / "metrics.csv", out.metrics_csv);
        write_file(dir / "tree.json", out.tree_json);
        write_file(dir / "manifest.json", out.manifest_json);
        std::cout << "wrote " << out.result.records.size() << " records to " << (dir / "dataset.csv").string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int report(const std::string& dataset_path) {
    const fs::path data(dataset_path);
    const fs::path dir = data.has_parent_path() ? data.parent_path() : fs::path(".");
    RunConfig cfg;
    std::vector<LabeledRecord> records;
    OperatingSpace space({}, {});
    try {
        cfg = config_from_manifest(read_file(dir / "manifest.json"));
        const auto grid = resolve_grid(cfg.grid);
        SpaceOptions opts;
        opts.min_tolerance_frac = cfg.exploration.min_tolerance_frac;
        space = build_space(grid, cfg.controls, opts);
        std::istringstream in(read_file(data));
        records = read_dataset(in, grid, space);
    } catch (const std::exception& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kInputError;
    }
    try {
        const auto rows = compute_metrics(space, records, metrics_options(cfg));
        std::ostringstream metrics, rates, entropy, accuracy;
        write_metrics(metrics, space, rows);
        write_rates_series(rates, rows);
        write_entropy_series(entropy, rows);
        write_accuracy_series(accuracy, rows);
        write_file(dir / "report_metrics.csv", metrics.str());
        write_file(dir / "rates_vs_depth.csv", rates.str());
        write_file(dir / "entropy_vs_depth.csv", entropy.str());
        write_file(dir / "accuracy_vs_depth.csv", accuracy.str());
        std::cout << "depths=" << rows.size() << " accuracy_trend=" << (accuracy_trend_ok(rows) ? "ok" : "decreasing")
                  << '\n';
    } catch (const std::exception& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

int scan(const std::string& grid_spec, const std::string& component, double fmin, double fmax, int units, int ppd,
         const std::string& out_path, const std::string& config_path) {
    ScanReport result;
    try {
        RunConfig cfg;
        if (!config_path.empty()) {
            cfg = load_config(config_path);
        }
        const auto grid = resolve_grid(grid_spec);
        const auto space = build_space(grid, cfg.controls);
        const auto available = midpoint_units(grid, space, cfg.exploration.model);
        ScanRequest req;
        for (const auto& id : csv::split(component)) {
            req.components.push_back(csv::trim(id));
        }
        req.units = units;
        req.fmin = fmin;
        req.fmax = fmax;
        req.points_per_decade = ppd;
        result = run_scan(available, req);
    } catch (const ScanError& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kInputError;
    } catch (const ModelError& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kInputError;
    } catch (const ConfigError& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kInputError;
    } catch (const GridError& e) {
        std::cerr << "stabgen: grid: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kRuntimeError;
    }
    try {
        if (out_path == "-") {
            write_scan_csv(std::cout, result);
        } else {
            std::ostringstream csv_out;
            write_scan_csv(csv_out, result);
            write_file(out_path, csv_out.str());
        }
        (out_path == "-" ? std::cerr : std::cout) << "max_deviation=" << csv::format_double(result.max_deviation)
                                                    << '\n';
    } catch (const std::exception& e) {
        std::cerr << "stabgen: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Operating-point dataset generator for small-signal stability"};
    app.require_subcommand(1);

    std::string config_path;
    auto* gen = app.add_subcommand("generate", "Explore the operating space and write the dataset");
    gen->add_option("--config", config_path, "Configuration file")->required();

    std::string dataset_path;
    auto* rep = app.add_subcommand("report", "Recompute metrics and per-depth series from a dataset");
    rep->add_option("--dataset", dataset_path, "dataset.csv written by generate")->required();

    std::string grid_spec;
    std::string component;
    std::string scan_out = "scan.csv";
    std::string scan_config;
    double fmin = 1.0;
    double fmax = 1000.0;
    int units = 2;
    int ppd = 50;
    auto* sc = app.add_subcommand("scan", "Admittance scan of split units against their aggregate");
    sc->add_option("--grid", grid_spec, "Grid directory or fixture name")->required();
    sc->add_option("--component", component, "Unit id, or comma-separated ids to aggregate")->required();
    sc->add_option("--fmin", fmin, "Lowest frequency in Hz")->required();
    sc->add_option("--fmax", fmax, "Highest frequency in Hz")->required();
    sc->add_option("--units", units, "Identical parts the unit is split into")->capture_default_str();
    sc->add_option("--points-per-decade", ppd, "Frequency grid density")->capture_default_str();
    sc->add_option("--out", scan_out, "Output CSV, '-' for stdout")->capture_default_str();
    sc->add_option("--config", scan_config, "Configuration supplying control defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }
    if (*gen) {
        return generate(config_path);
    }
    if (*rep) {
        return report(dataset_path);
    }
    return scan(grid_spec, component, fmin, fmax, units, ppd, scan_out, scan_config);
}
