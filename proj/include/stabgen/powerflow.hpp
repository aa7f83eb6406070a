#pragma once

#include <complex>
#include <limits>
#include <vector>

#include "stabgen/grid.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

/// Bus specification in per unit. p_spec/q_spec are net injections (generation minus load).
/// q_min/q_max bound the net reactive injection of a PV bus before it is switched to PQ.
struct PfBus {
    BusKind kind = BusKind::PQ;
    double p_spec = 0.0;
    double q_spec = 0.0;
    double v_set = 1.0;
    double q_min = -std::numeric_limits<double>::infinity();
    double q_max = std::numeric_limits<double>::infinity();
};

struct PfCase {
    ComplexMatrix y;
    std::vector<PfBus> buses;
    /// Initial voltage magnitudes; PV and slack buses start at v_set regardless.
    std::vector<double> vm_start;
};

struct PfOptions {
    double tolerance = 1e-8;
    int max_iterations = 30;
    bool enforce_q_limits = true;
};

struct PfResult {
    std::vector<double> vm;
    std::vector<double> va;
    std::vector<std::complex<double>> s_injection;  // per unit
    std::vector<BusKind> final_kinds;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = std::numeric_limits<double>::infinity();
};

/// Polar Newton-Raphson. PV buses whose reactive injection leaves [q_min, q_max] are switched
/// to PQ at the violated limit and the case is re-solved.
[[nodiscard]] PfResult solve_power_flow(const PfCase& pf_case, const PfOptions& options = {});

/// Complex power injections S = V conj(Y V).
[[nodiscard]] std::vector<std::complex<double>> bus_injections(const ComplexMatrix& y,
                                                               const std::vector<double>& vm,
                                                               const std::vector<double>& va);

/// Active power per generation group (MW), load per load entry (MW), and voltage setpoints per bus.
struct Dispatch {
    std::vector<double> group_p;
    std::vector<double> load_p;
    std::vector<double> voltage;
};

struct NetworkOptions {
    /// Loads draw Q = P tan(acos(pf)).
    double load_power_factor = 0.98;
};

[[nodiscard]] Dispatch dispatch_from(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op);

struct PowerFlowSolution {
    std::vector<double> vm;
    std::vector<double> va;
    std::vector<double> group_p;  // MW
    std::vector<double> group_q;  // MVAr
    std::vector<double> load_p;   // MW
    std::vector<double> load_q;   // MVAr
    bool converged = false;
    int iterations = 0;
    double max_mismatch = std::numeric_limits<double>::infinity();
};

/// Builds the bus-level case: PV limits from the online groups at each bus.
[[nodiscard]] PfCase make_pf_case(const GridModel& grid, const Dispatch& dispatch, const NetworkOptions& net);

/// The slack group absorbs the balance; reactive output at a bus is shared among its online
/// groups in proportion to their q_max.
[[nodiscard]] PowerFlowSolution solve_pf(const GridModel& grid, const Dispatch& dispatch,
                                         const NetworkOptions& net = {}, const PfOptions& options = {});
[[nodiscard]] PowerFlowSolution solve_pf(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op,
                                         const NetworkOptions& net = {}, const PfOptions& options = {});

struct LineFlow {
    std::complex<double> s_from;  // MVA, into the line at its from end
    std::complex<double> s_to;
};

[[nodiscard]] std::vector<LineFlow> line_flows(const GridModel& grid, const std::vector<double>& vm,
                                               const std::vector<double>& va);

}  // namespace stabgen
