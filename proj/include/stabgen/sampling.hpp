#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "stabgen/grid.hpp"
#include "stabgen/rng.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Latin hypercube over every bounded dimension of the cell. Row i is sample i; each column
/// has exactly one value in each of the n equal-width strata of [lo, hi).
[[nodiscard]] std::vector<std::vector<double>> lhs(std::size_t n, const Subregion& cell, RngStream& rng);

/// Layer-synchronous breadth-first walk from the slack bus. Each bus of the next layer receives
/// one tentative value per edge from the current layer (parent voltage plus a uniform deviation);
/// the mean of those tentatives is clamped to the bus limits.
[[nodiscard]] std::vector<double> sample_voltage_profile(const GridModel& grid, double anchor_v, double dev_bound,
                                                         RngStream& rng);

struct Bounds {
    double lo = 0.0;
    double hi = 0.0;
};

/// Start at the lower bounds and, in shuffled order, raise each element toward its upper bound
/// by the remaining deficit.
[[nodiscard]] std::vector<double> disaggregate_variance_max(double target, const std::vector<Bounds>& bounds,
                                                            RngStream& rng);
/// Gaussian around the proportionally scaled means (sigma = range / 6), clamped, then rescaled
/// above the lower bounds until the sum matches exactly.
[[nodiscard]] std::vector<double> disaggregate_gaussian(double target, const std::vector<Bounds>& bounds,
                                                        RngStream& rng);

struct Disaggregation {
    std::vector<double> values;
    bool used_fallback = false;
};

constexpr int kDefaultMaxTries = 50;

/// Variance-max with up to max_tries attempts, then the Gaussian fallback.
[[nodiscard]] Disaggregation disaggregate(double target, const std::vector<Bounds>& bounds, RngStream& rng,
                                          int max_tries = kDefaultMaxTries);

/// True when values sum to target (1e-9 relative) and every value lies in its bounds.
[[nodiscard]] bool allocation_valid(double target, const std::vector<Bounds>& bounds,
                                    const std::vector<double>& values);

enum class LoadMode { Participation, Randomized };

struct SamplingOptions {
    std::size_t n_samples = 333;
    std::size_t n_cases = 3;
    double loss_factor = 0.97;
    double dev_bound = 0.02;
    LoadMode load_mode = LoadMode::Participation;
    double load_spread = 0.2;
    int max_tries = kDefaultMaxTries;
    std::uint64_t seed = 0;
};

/// n_samples dimension tuples (LHS plus a voltage walk each), times n_cases variable realizations.
/// Points are ordered sample-major; sample_index and case_index are local to the cell.
[[nodiscard]] std::vector<OperatingPoint> hierarchical_sample(const Subregion& cell, const GridModel& grid,
                                                              const OperatingSpace& space,
                                                              const SamplingOptions& options);

/// Realizes the variables of one dimension tuple; the stream decides the case.
[[nodiscard]] OperatingPoint realize_case(const std::vector<double>& dim_values, const std::vector<double>& voltages,
                                          const GridModel& grid, const OperatingSpace& space,
                                          const SamplingOptions& options, RngStream& rng);

}  // namespace stabgen
