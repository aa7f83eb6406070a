#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "stabgen/grid.hpp"
#include "stabgen/smallsignal.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

class ScanError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dynamic units at the centre of the operating space: every independent dimension at its
/// midpoint, flat voltages at the anchor midpoint, then redispatched to a solved power flow.
[[nodiscard]] std::vector<DynamicUnit> midpoint_units(const GridModel& grid, const OperatingSpace& space,
                                                      const ModelParams& params);

struct ScanRequest {
    /// One id splits that unit into `units` identical parts; several ids are aggregated as given.
    std::vector<std::string> components;
    int units = 2;
    double fmin = 1.0;
    double fmax = 1000.0;
    int points_per_decade = 50;
};

struct ScanReport {
    std::vector<std::string> names;
    std::vector<ScanResult> individual;
    ScanResult sum;
    ScanResult aggregate;
    /// Largest entrywise |Y_agg - sum Y_i| over the grid.
    double max_deviation = 0.0;
};

/// Throws ScanError for an invalid request and ModelError when the units cannot be aggregated.
[[nodiscard]] ScanReport run_scan(const std::vector<DynamicUnit>& available, const ScanRequest& request);

/// Long format: component, freq_hz, row, col, re_y, im_y.
void write_scan_csv(std::ostream& out, const ScanReport& report);

}  // namespace stabgen
