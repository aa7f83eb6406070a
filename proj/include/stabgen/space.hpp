#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stabgen/grid.hpp"

namespace stabgen {

enum class DimKind { Independent, Dependent };

/// What a dimension controls; drives sampling and disaggregation.
enum class DimRole { TotalSG, TotalIBR, GfmShare, VoltageAnchor, Control, Demand };

struct DimensionSpec {
    std::string name;
    DimKind kind = DimKind::Independent;
    DimRole role = DimRole::Control;
    double lo = 0.0;
    double hi = 0.0;
    double min_tolerance_frac = 0.01;
};

enum class VarRole { SG, IBR, GFM, GFL, Load };

struct VariableSpec {
    std::string name;
    std::string parent_dimension;
    VarRole role = VarRole::SG;
    std::size_t element = 0;  // gen group index, or load index for VarRole::Load
    int bus = 0;
    double lo = 0.0;
    double hi = 0.0;
    DimKind kind = DimKind::Independent;
};

struct ControlParam {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
};

struct SpaceOptions {
    /// Include the grid-forming share dimension; unset means "whenever the grid has IBR capacity".
    std::optional<bool> gfm_share;
    double min_tolerance_frac = 0.01;
};

class SpaceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by split() when a dimension has reached its minimum tolerance.
class ToleranceFloor : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    [[nodiscard]] double width() const noexcept { return hi - lo; }
    [[nodiscard]] double mid() const noexcept { return 0.5 * (lo + hi); }
};

/// Axis-aligned cell over the independent dimensions.
struct Subregion {
    std::vector<Interval> bounds;
    /// Upper edge is closed only where it coincides with the root's upper edge.
    std::vector<bool> closed_hi;
    int depth = 0;
    std::string path = "R";

    [[nodiscard]] double volume() const;
};

/// One fully disaggregated sample. Dimension values are indexed like OperatingSpace::dims(),
/// variable values like OperatingSpace::vars().
struct OperatingPoint {
    std::vector<double> dim_values;
    std::vector<double> var_values;
    std::vector<double> voltage_profile;  // per bus index, pu
    int case_index = 0;
    int sample_index = 0;
};

/// Independent dimensions come first (same order as Subregion::bounds), then the dependent demand.
class OperatingSpace {
public:
    OperatingSpace(std::vector<DimensionSpec> dims, std::vector<VariableSpec> vars);

    [[nodiscard]] const std::vector<DimensionSpec>& dims() const noexcept { return dims_; }
    [[nodiscard]] const std::vector<VariableSpec>& vars() const noexcept { return vars_; }
    [[nodiscard]] std::size_t independent_count() const noexcept { return independent_; }

    [[nodiscard]] std::optional<std::size_t> find_dim(const std::string& name) const;
    [[nodiscard]] std::size_t dim_index(const std::string& name) const;
    [[nodiscard]] std::optional<std::size_t> dim_with_role(DimRole role) const;
    [[nodiscard]] std::vector<std::size_t> vars_with_role(VarRole role) const;
    [[nodiscard]] std::optional<std::size_t> find_var(VarRole role, std::size_t element) const;
    [[nodiscard]] std::vector<std::string> independent_names() const;

    [[nodiscard]] Subregion root() const;

private:
    std::vector<DimensionSpec> dims_;
    std::vector<VariableSpec> vars_;
    std::size_t independent_ = 0;
};

[[nodiscard]] OperatingSpace build_space(const GridModel& grid, const std::vector<ControlParam>& control_params,
                                         const SpaceOptions& options = {});

/// True when the dimension's current width still exceeds its tolerance floor.
[[nodiscard]] bool can_split(const OperatingSpace& space, const Subregion& cell, std::size_t dim);

/// Midpoint bisection; throws ToleranceFloor at the floor.
[[nodiscard]] std::pair<Subregion, Subregion> split(const OperatingSpace& space, const Subregion& cell,
                                                    std::size_t dim);
[[nodiscard]] std::pair<Subregion, Subregion> split(const OperatingSpace& space, const Subregion& cell,
                                                    const std::string& dim);

/// Bisects along each listed dimension in turn; all 2^k children sit one depth below the parent.
[[nodiscard]] std::vector<Subregion> split_product(const OperatingSpace& space, const Subregion& cell,
                                                   const std::vector<std::size_t>& dims);

/// Half-open containment on the independent dimensions of a dimension-value vector.
[[nodiscard]] bool contains(const Subregion& cell, const std::vector<double>& dim_values);
[[nodiscard]] bool contains(const Subregion& cell, const OperatingPoint& op);

/// Sets P_D = loss_factor * (P_SG + P_IBR) and P_GFL_i = P_IBR_i - P_GFM_i.
[[nodiscard]] OperatingPoint derive_dependent(const OperatingSpace& space, OperatingPoint op, double loss_factor);

/// Rebuilds a cell from its path string by replaying the bisections from the root.
[[nodiscard]] Subregion cell_from_path(const OperatingSpace& space, const std::string& path, int depth);

}  // namespace stabgen
