#include "stabgen/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "stabgen/csv.hpp"

namespace stabgen {

namespace {

double to_double(const std::string& key, const std::string& value) {
    try {
        return csv::parse_double(value);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
    }
}

long long to_integer(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size() || value.empty()) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
    }
    return v;
}

std::size_t to_count(const std::string& key, const std::string& value) {
    const auto v = to_integer(key, value);
    if (v < 0) {
        throw ConfigError("config: '" + key + "' must be non-negative");
    }
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    throw ConfigError("config: '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<std::string> to_list(const std::string& value) {
    std::vector<std::string> out;
    for (const auto& item : csv::split(value, ',')) {
        const auto t = csv::trim(item);
        if (!t.empty()) {
            out.push_back(t);
        }
    }
    return out;
}

std::string join_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += (i ? "," : "") + items[i];
    }
    return out;
}

std::string bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

ExplorationConfig RunConfig::default_exploration() {
    ExplorationConfig c;
    c.model.gfor.t_v = kRunDefaultGforLag;
    return c;
}

RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    auto& e = cfg.exploration;
    bool controls_declared = false;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = csv::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = csv::trim(line.substr(0, eq));
        const auto value = csv::trim(line.substr(eq + 1));
        if (key.rfind("control.", 0) == 0) {
            const auto name = key.substr(8);
            if (!is_control_param(name)) {
                throw ConfigError("config: unknown control parameter '" + name + "'");
            }
            const auto bounds = to_list(value);
            if (bounds.size() != 2) {
                throw ConfigError("config: '" + key + "' expects lo, hi");
            }
            if (!controls_declared) {
                cfg.controls.clear();
                controls_declared = true;
            }
            cfg.controls.push_back({name, to_double(key, bounds[0]), to_double(key, bounds[1])});
        } else if (key.rfind("model.", 0) == 0) {
            const auto name = key.substr(6);
            if (!is_control_param(name)) {
                throw ConfigError("config: unknown model parameter '" + name + "'");
            }
            set_control_param(e.model, name, to_double(key, value));
        } else if (key == "controls") {
            if (value != "none") {
                throw ConfigError("config: 'controls' only accepts none");
            }
            cfg.controls.clear();
            controls_declared = true;
        } else if (key == "grid") {
            cfg.grid = value;
        } else if (key == "output_dir") {
            cfg.output_dir = value;
        } else if (key == "n_samples") {
            e.n_samples = to_count(key, value);
        } else if (key == "n_cases") {
            e.n_cases = to_count(key, value);
        } else if (key == "max_depth") {
            e.max_depth = static_cast<int>(to_integer(key, value));
        } else if (key == "min_feasible_rate") {
            e.min_feasible_rate = to_double(key, value);
        } else if (key == "entropy_decrease_threshold") {
            e.entropy_decrease_threshold = to_double(key, value);
        } else if (key == "min_tolerance_frac") {
            e.min_tolerance_frac = to_double(key, value);
        } else if (key == "use_sensitivity") {
            e.use_sensitivity = to_bool(key, value);
        } else if (key == "fixed_split_dims") {
            e.fixed_split_dims = to_list(value);
        } else if (key == "split_dims_per_node") {
            e.split_dims_per_node = static_cast<int>(to_integer(key, value));
        } else if (key == "loss_factor") {
            e.loss_factor = to_double(key, value);
        } else if (key == "eps_margin") {
            e.eps_margin = to_double(key, value);
        } else if (key == "seed") {
            e.seed = static_cast<std::uint64_t>(to_count(key, value));
        } else if (key == "workers") {
            e.workers = static_cast<int>(to_integer(key, value));
        } else if (key == "dev_bound") {
            e.dev_bound = to_double(key, value);
        } else if (key == "load_mode") {
            if (value == "participation") {
                e.load_mode = LoadMode::Participation;
            } else if (value == "randomized") {
                e.load_mode = LoadMode::Randomized;
            } else {
                throw ConfigError("config: load_mode must be participation or randomized");
            }
        } else if (key == "load_spread") {
            e.load_spread = to_double(key, value);
        } else if (key == "max_tries") {
            e.max_tries = static_cast<int>(to_integer(key, value));
        } else if (key == "record_timing") {
            e.record_timing = to_bool(key, value);
        } else if (key == "load_power_factor") {
            e.feasibility.network.load_power_factor = to_double(key, value);
        } else if (key == "forest_n_trees") {
            e.forest.n_trees = static_cast<int>(to_integer(key, value));
        } else if (key == "forest_max_depth") {
            e.forest.max_tree_depth = static_cast<int>(to_integer(key, value));
        } else if (key == "forest_max_features") {
            e.forest.max_features = to_count(key, value);
        } else if (key == "cv_folds") {
            cfg.cv_folds = static_cast<int>(to_integer(key, value));
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    for (const auto& c : cfg.controls) {
        if (!(c.lo <= c.hi)) {
            throw ConfigError("config: control '" + c.name + "' needs lo <= hi");
        }
        for (const double v : {c.lo, c.hi}) {
            auto probe = e.model;
            set_control_param(probe, c.name, v);
            try {
                validate(probe);
            } catch (const ModelError& err) {
                throw ConfigError("config: control '" + c.name + "' range: " + err.what());
            }
        }
    }
    if (cfg.cv_folds < 2) {
        throw ConfigError("config: cv_folds must be >= 2");
    }
    try {
        validate(e);
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("config: ") + err.what());
    }
    return cfg;
}

void apply_environment(RunConfig& config) {
    if (const char* w = std::getenv("STABGEN_WORKERS")) {
        const auto v = to_integer("STABGEN_WORKERS", w);
        if (v < 1) {
            throw ConfigError("STABGEN_WORKERS must be >= 1");
        }
        config.exploration.workers = static_cast<int>(v);
    }
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    auto cfg = parse_config(buf.str());
    apply_environment(cfg);
    const bool fixture = cfg.grid == "3bus" || cfg.grid == "9bus" || cfg.grid.rfind("fixture:", 0) == 0;
    if (!fixture) {
        std::filesystem::path grid(cfg.grid);
        if (grid.is_relative()) {
            grid = std::filesystem::path(path).parent_path() / grid;
        }
        if (!std::filesystem::is_directory(grid)) {
            throw ConfigError("grid directory '" + cfg.grid + "' does not exist");
        }
        cfg.grid = grid.string();
    }
    return cfg;
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config) {
    const auto& e = config.exploration;
    std::vector<std::pair<std::string, std::string>> out{
        {"grid", config.grid},
        {"output_dir", config.output_dir},
        {"n_samples", std::to_string(e.n_samples)},
        {"n_cases", std::to_string(e.n_cases)},
        {"max_depth", std::to_string(e.max_depth)},
        {"min_feasible_rate", csv::format_double(e.min_feasible_rate)},
        {"entropy_decrease_threshold", csv::format_double(e.entropy_decrease_threshold)},
        {"min_tolerance_frac", csv::format_double(e.min_tolerance_frac)},
        {"use_sensitivity", bool_text(e.use_sensitivity)},
        {"fixed_split_dims", join_list(e.fixed_split_dims)},
        {"split_dims_per_node", std::to_string(e.split_dims_per_node)},
        {"loss_factor", csv::format_double(e.loss_factor)},
        {"eps_margin", csv::format_double(e.eps_margin)},
        {"seed", std::to_string(e.seed)},
        {"workers", std::to_string(e.workers)},
        {"dev_bound", csv::format_double(e.dev_bound)},
        {"load_mode", e.load_mode == LoadMode::Participation ? "participation" : "randomized"},
        {"load_spread", csv::format_double(e.load_spread)},
        {"max_tries", std::to_string(e.max_tries)},
        {"record_timing", bool_text(e.record_timing)},
        {"load_power_factor", csv::format_double(e.feasibility.network.load_power_factor)},
        {"forest_n_trees", std::to_string(e.forest.n_trees)},
        {"forest_max_depth", std::to_string(e.forest.max_tree_depth)},
        {"forest_max_features", std::to_string(e.forest.max_features)},
        {"cv_folds", std::to_string(config.cv_folds)},
    };
    if (config.controls.empty()) {
        out.emplace_back("controls", "none");
    }
    for (const auto& c : config.controls) {
        out.emplace_back("control." + c.name, csv::format_double(c.lo) + "," + csv::format_double(c.hi));
    }
    for (const auto& name : model_param_names()) {
        out.emplace_back("model." + name, csv::format_double(control_param(e.model, name)));
    }
    return out;
}

std::string render_config(const RunConfig& config) {
    std::string out;
    for (const auto& [k, v] : config_entries(config)) {
        out += k + " = " + v + "\n";
    }
    return out;
}

}  // namespace stabgen
