#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stabgen/explorer.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Default lag of the grid-forming voltage loop used by generated datasets (seconds).
inline constexpr double kRunDefaultGforLag = 0.035;

struct RunConfig {
    /// Fixture name ("3bus", "9bus", "fixture:<name>") or a directory of grid CSV tables.
    std::string grid = "3bus";
    std::string output_dir = "stabgen_out";
    std::vector<ControlParam> controls{{"tau_u", 0.01, 1.0}, {"tau_w", 0.01, 1.0}};
    ExplorationConfig exploration = default_exploration();
    int cv_folds = 5;

    [[nodiscard]] static ExplorationConfig default_exploration();
};

/// Flat "key = value" lines; '#' starts a comment. Control dimensions are declared as
/// "control.<name> = lo, hi" (the first such key replaces the default list, "controls = none"
/// empties it); model parameters as "model.<name> = value".
[[nodiscard]] RunConfig parse_config(std::string_view text);

/// Parses the file, applies STABGEN_WORKERS and checks that a grid directory exists.
[[nodiscard]] RunConfig load_config(const std::string& path);

/// Overrides the worker count from STABGEN_WORKERS when set.
void apply_environment(RunConfig& config);

/// Every resolved setting as ordered key/value text; parse_config(render) reproduces the run.
[[nodiscard]] std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& config);
[[nodiscard]] std::string render_config(const RunConfig& config);

}  // namespace stabgen
