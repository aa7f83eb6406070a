#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "stabgen/config.hpp"
#include "stabgen/explorer.hpp"
#include "stabgen/forest.hpp"
#include "stabgen/grid.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

inline constexpr const char* kEngineVersion = "stabgen 1.0.0";
inline constexpr const char* kDatasetSchema = "dataset/1";

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// cell_path, depth, sample_index, case_index, every dimension, every variable, V_<bus>, then the
/// verdict and stability columns.
[[nodiscard]] std::vector<std::string> dataset_header(const GridModel& grid, const OperatingSpace& space);
[[nodiscard]] std::string format_record(const OperatingSpace& space, const LabeledRecord& record);
/// Inverse of format_record; throws DatasetError on malformed fields.
[[nodiscard]] LabeledRecord parse_record(const OperatingSpace& space, std::size_t bus_count,
                                         const std::vector<std::string>& fields);

void write_dataset(std::ostream& out, const GridModel& grid, const OperatingSpace& space,
                   const std::vector<LabeledRecord>& records);
/// Throws DatasetError when the header does not match the space.
[[nodiscard]] std::vector<LabeledRecord> read_dataset(std::istream& in, const GridModel& grid,
                                                      const OperatingSpace& space);

struct MetricsOptions {
    int folds = 5;
    ForestParams forest;
    std::uint64_t seed = 0;
};

struct RateSummary {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation over cells
};

/// One depth level. Rates are taken per cell over the cell's records (inherited and new),
/// accuracy and importance over all feasible records up to this depth.
struct MetricsRow {
    int depth = 0;
    std::size_t cells = 0;
    std::size_t records = 0;  // newly assessed at this depth
    RateSummary feasible;
    RateSummary infeasible;
    RateSummary discarded;
    double entropy = 0.0;
    std::size_t cumulative_feasible = 0;
    double accuracy_mean = 0.0;  // NaN when a class is too small for the folds
    double accuracy_std = 0.0;
    std::vector<double> importance;  // per independent dimension, NaN when untrainable
};

struct CellRef {
    std::string path;
    int depth = 0;
};

/// Distinct cells in order of first appearance.
[[nodiscard]] std::vector<CellRef> cells_of(const std::vector<LabeledRecord>& records);

/// Records a cell holds: its own plus those of its ancestors that fall inside it.
[[nodiscard]] std::vector<std::size_t> cell_members(const OperatingSpace& space, const std::vector<LabeledRecord>& records,
                                                    const CellRef& cell);

[[nodiscard]] std::vector<MetricsRow> compute_metrics(const OperatingSpace& space,
                                                      const std::vector<LabeledRecord>& records,
                                                      const MetricsOptions& options);

void write_metrics(std::ostream& out, const OperatingSpace& space, const std::vector<MetricsRow>& rows);

/// Tidy series: rates (depth, rate, mean, std), entropy (depth, mean_entropy) and
/// accuracy (depth, cumulative_feasible, mean, std).
void write_rates_series(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_entropy_series(std::ostream& out, const std::vector<MetricsRow>& rows);
void write_accuracy_series(std::ostream& out, const std::vector<MetricsRow>& rows);

/// True when every accuracy step is at least minus one pooled standard deviation.
[[nodiscard]] bool accuracy_trend_ok(const std::vector<MetricsRow>& rows);

[[nodiscard]] std::string tree_json(const OperatingSpace& space, const ExplorationNode& root);
[[nodiscard]] std::string manifest_json(const RunConfig& config, std::size_t record_count,
                                        const std::string& dataset_checksum);
/// Reads the configuration block back from a manifest.
[[nodiscard]] RunConfig config_from_manifest(const std::string& manifest_text);

/// Fold count, forest settings and seed of a run.
[[nodiscard]] MetricsOptions metrics_options(const RunConfig& config);

/// Everything a generate run writes, as file contents.
struct RunOutputs {
    ExplorationResult result;
    std::vector<MetricsRow> metrics;
    std::string dataset_csv;
    std::string metrics_csv;
    std::string tree_json;
    std::string manifest_json;
};

/// Resolves the grid, builds the space, explores and renders every output.
[[nodiscard]] RunOutputs run_generate(const RunConfig& config, const ProgressSink& progress = {});

/// FNV-1a 64-bit digest as 16 hex digits.
[[nodiscard]] std::string fnv1a_hex(const std::string& bytes);

}  // namespace stabgen
