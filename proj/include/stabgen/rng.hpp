#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stabgen {

/// Separates streams that share the same (seed, path, indices) key.
enum class StreamPurpose : std::uint64_t {
    Lhs = 1,
    Voltage = 2,
    Disaggregation = 3,
    Forest = 4,
    Metrics = 5,
    Generic = 6,
};

/// Random stream keyed by its seed material, so the sequence a sample sees does not depend
/// on which worker draws it or in which order samples are processed.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view cell_path, std::uint64_t sample_index, std::uint64_t case_index,
              StreamPurpose purpose = StreamPurpose::Generic);
    explicit RngStream(std::uint64_t raw_seed);

    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi);
    double normal(double mean, double stddev);
    std::uint64_t next() { return engine_(); }

    std::mt19937_64& engine() noexcept { return engine_; }

    [[nodiscard]] static std::uint64_t mix(std::uint64_t a, std::uint64_t b);
    [[nodiscard]] static std::uint64_t hash(std::string_view text);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace stabgen
