#pragma once

#include <string>
#include <vector>

#include "stabgen/grid.hpp"
#include "stabgen/powerflow.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

/// One violated constraint. Ids: vmax_<bus>, vmin_<bus>, line_<from>_<to>, pmin_<group>,
/// pmax_<group>, pf_<group>, qmax_<group>, qmin_<group>. Magnitudes are in the constraint's units
/// (pu for voltage, MVA for lines, MW and MVAr for groups, dimensionless for power factor).
struct Violation {
    std::string id;
    double magnitude = 0.0;
};

struct ConstraintReport {
    std::vector<Violation> violations;
    [[nodiscard]] bool clean() const noexcept { return violations.empty(); }
};

enum class Verdict { Feasible, Infeasible, Discarded };

[[nodiscard]] std::string to_string(Verdict verdict);
[[nodiscard]] Verdict verdict_from_string(const std::string& text);

struct FeasibilityVerdict {
    Verdict verdict = Verdict::Infeasible;
    std::vector<Violation> violations;
    /// Sum over redispatchable groups of (P_adjusted - P_sampled)^2, MW^2.
    double adjustment_distance = 0.0;
};

/// "id:magnitude;id:magnitude", empty when clean.
[[nodiscard]] std::string format_violations(const std::vector<Violation>& violations);
[[nodiscard]] std::vector<Violation> parse_violations(const std::string& text);

/// Groups with zero dispatch are offline and skip their P, Q and power-factor checks.
/// The slack group is offline only at zero output.
[[nodiscard]] ConstraintReport check_constraints(const PowerFlowSolution& solution, const GridModel& grid);

struct FeasibilityOptions {
    NetworkOptions network;
    PfOptions pf;
    int max_outer_iterations = 20;
    double min_relative_improvement = 1e-4;
    /// Initial redispatch step as a fraction of each group's capability width.
    double initial_step = 0.25;
    int max_step_halvings = 8;
    int bisection_steps = 12;
};

struct Adjustment {
    OperatingPoint adjusted;
    /// Dimension totals implied by the adjusted dispatch (slack output included).
    std::vector<double> adjusted_dims;
    PowerFlowSolution solution;
    FeasibilityVerdict verdict;
};

/// Clips setpoints to the capability boxes, solves the power flow and, while violations remain,
/// redispatches the non-slack groups down the gradient of the squared normalized violation.
/// Among constraint-clean iterates the one closest to the sampled setpoints is kept.
[[nodiscard]] Adjustment adjust_to_feasible(const GridModel& grid, const OperatingSpace& space,
                                            const OperatingPoint& op, const Subregion& cell,
                                            const FeasibilityOptions& options = {});

/// Infeasible when the flow did not converge or violations remain; Discarded when the adjusted
/// totals fall outside the cell; Feasible otherwise.
[[nodiscard]] FeasibilityVerdict classify(const std::vector<double>& adjusted_dims, const PowerFlowSolution& solution,
                                          const ConstraintReport& report, const Subregion& cell);

}  // namespace stabgen
