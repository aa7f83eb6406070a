#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stabgen/feasibility.hpp"
#include "stabgen/sampling.hpp"

using namespace stabgen;

TEST_CASE("verdict and violation text round-trips") {
    for (const auto v : {Verdict::Feasible, Verdict::Infeasible, Verdict::Discarded}) {
        CHECK(verdict_from_string(to_string(v)) == v);
    }
    CHECK_THROWS(verdict_from_string("maybe"));
    const std::vector<Violation> vs{{"vmax_3", 0.0125}, {"line_1_2", 17.5}, {"pf_SG_1", 1e-3}};
    const auto text = format_violations(vs);
    CHECK(text == "vmax_3:0.0125;line_1_2:17.5;pf_SG_1:0.001");
    const auto back = parse_violations(text);
    REQUIRE(back.size() == 3);
    CHECK(back[1].id == "line_1_2");
    CHECK(back[1].magnitude == 17.5);
    CHECK(format_violations(back) == text);
    CHECK(parse_violations("").empty());
    CHECK_THROWS(parse_violations("novalue"));
}

TEST_CASE("constraint check flags voltage and line limits") {
    const auto grid = load_fixture("3bus");
    Dispatch d;
    d.group_p = {0.0, 150.0};
    d.load_p = {300.0};
    d.voltage = {1.015, 1.015, 1.0};
    auto sol = solve_pf(grid, d);
    REQUIRE(sol.converged);
    CHECK(check_constraints(sol, grid).clean());
    sol.vm[2] = 1.2;
    const auto report = check_constraints(sol, grid);
    REQUIRE_FALSE(report.clean());
    CHECK(report.violations.front().id == "vmax_3");
    CHECK(report.violations.front().magnitude == doctest::Approx(0.1));
}

TEST_CASE("classification order: convergence, constraints, then cell membership") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    const auto cell = space.root();
    PowerFlowSolution sol;
    sol.converged = false;
    const std::vector<double> inside{cell.bounds[0].mid(), cell.bounds[1].mid(), 0.5, 1.0};
    CHECK(classify(inside, sol, {}, cell).verdict == Verdict::Infeasible);
    sol.converged = true;
    ConstraintReport dirty;
    dirty.violations.push_back({"vmin_3", 0.01});
    CHECK(classify(inside, sol, dirty, cell).verdict == Verdict::Infeasible);
    CHECK(classify(inside, sol, {}, cell).verdict == Verdict::Feasible);
    auto outside = inside;
    outside[0] = cell.bounds[0].hi + 1.0;
    CHECK(classify(outside, sol, {}, cell).verdict == Verdict::Discarded);
}

TEST_CASE("feasible verdicts come with clean flows inside the cell") {
    for (const char* name : {"3bus", "9bus"}) {
        const auto grid = load_fixture(name);
        const auto space = build_space(grid, {});
        SamplingOptions so;
        so.n_samples = 40;
        so.n_cases = 1;
        so.seed = 13;
        std::size_t feasible = 0;
        for (const auto& op : hierarchical_sample(space.root(), grid, space, so)) {
            const auto adj = adjust_to_feasible(grid, space, op, space.root());
            if (adj.verdict.verdict != Verdict::Feasible) {
                continue;
            }
            ++feasible;
            CHECK(adj.solution.converged);
            CHECK(check_constraints(adj.solution, grid).clean());
            CHECK(contains(space.root(), adj.adjusted_dims));
            CHECK(adj.verdict.adjustment_distance >= 0.0);
            // Only redispatchable groups move; the load stays as sampled.
            const auto loads = space.vars_with_role(VarRole::Load);
            for (const auto v : loads) {
                CHECK(adj.adjusted.var_values[v] == op.var_values[v]);
            }
        }
        CHECK(feasible > 0);
    }
}

TEST_CASE("an untouched feasible point keeps zero adjustment distance") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    SamplingOptions so;
    so.n_samples = 60;
    so.n_cases = 1;
    so.seed = 4;
    bool seen = false;
    for (const auto& op : hierarchical_sample(space.root(), grid, space, so)) {
        const auto sol = solve_pf(grid, space, op);
        if (!sol.converged || !check_constraints(sol, grid).clean()) {
            continue;
        }
        const auto adj = adjust_to_feasible(grid, space, op, space.root());
        CHECK(adj.verdict.adjustment_distance == 0.0);
        // Only the slack group's variable may move, to its solved output.
        for (std::size_t v = 0; v < space.vars().size(); ++v) {
            const auto& spec = space.vars()[v];
            const bool slack = spec.role == VarRole::SG && spec.element == grid.slack_group();
            if (!slack) {
                CHECK(adj.adjusted.var_values[v] == op.var_values[v]);
            }
        }
        seen = true;
    }
    CHECK(seen);
}

namespace {

/// 3-bus point with the given group setpoints and a load of 0.97 times their sum.
OperatingPoint three_bus_point(const OperatingSpace& space, double p_sg, double p_ibr) {
    OperatingPoint op;
    op.dim_values = {p_sg, p_ibr, 0.5, 1.0, 0.97 * (p_sg + p_ibr)};
    op.var_values = {p_sg, p_ibr, 0.5 * p_ibr, 0.5 * p_ibr, 0.97 * (p_sg + p_ibr)};
    op.voltage_profile = {1.0, 1.03, 1.0};
    REQUIRE(space.vars().size() == op.var_values.size());
    return op;
}

}  // namespace

TEST_CASE("bus above its band reports the excess") {
    const auto grid = load_fixture("3bus");
    Dispatch d;
    d.group_p = {0.0, 150.0};
    d.load_p = {300.0};
    d.voltage = {1.015, 1.015, 1.0};
    auto sol = solve_pf(grid, d);
    REQUIRE(sol.converged);
    sol.vm[2] = 1.12;
    const auto report = check_constraints(sol, grid);
    REQUIRE(report.violations.size() == 1);
    CHECK(report.violations[0].id == "vmax_3");
    CHECK(report.violations[0].magnitude == doctest::Approx(0.02));
}

TEST_CASE("low power factor is flagged against cos phi") {
    const auto grid = load_fixture("3bus");
    Dispatch d;
    d.group_p = {0.0, 150.0};
    d.load_p = {300.0};
    d.voltage = {1.015, 1.015, 1.0};
    auto sol = solve_pf(grid, d);
    REQUIRE(sol.converged);
    sol.group_p[1] = 10.0;
    sol.group_q[1] = 20.0;
    const double pf = 10.0 / std::sqrt(10.0 * 10.0 + 20.0 * 20.0);
    CHECK(pf == doctest::Approx(0.447).epsilon(1e-3));
    bool found = false;
    for (const auto& v : check_constraints(sol, grid).violations) {
        if (v.id == "pf_IBR_2") {
            found = true;
            CHECK(v.magnitude == doctest::Approx(0.95 - pf));
        }
    }
    CHECK(found);
}

TEST_CASE("zero-flow case is clean") {
    const TableSet t{{"buses", "id,kind,v_min,v_max\n1,Slack,0.95,1.05\n2,PV,0.9,1.1\n3,PQ,0.9,1.1\n"},
                     {"lines", "from,to,r,x,b,s_max\n1,2,0.01,0.1,0,100\n2,3,0.01,0.1,0,100\n"},
                     {"gens", "bus,tech,p_nom,cos_phi\n1,SG,100,0.95\n2,IBR,100,0.95\n"},
                     {"loads", "bus,participation\n3,1\n"}};
    const auto grid = load_grid(t);
    Dispatch d;
    d.group_p = {0.0, 0.0};
    d.load_p = {0.0};
    d.voltage = {1.0, 1.0, 1.0};
    const auto sol = solve_pf(grid, d);
    REQUIRE(sol.converged);
    CHECK(std::abs(sol.group_p[0]) < 1e-9);
    CHECK(check_constraints(sol, grid).clean());
}

TEST_CASE("a group 5 MW above its maximum is clipped to it") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    const auto ibr = grid.gens()[1].cap.p_max;
    const auto op = three_bus_point(space, 100.0, ibr + 5.0);
    const auto adj = adjust_to_feasible(grid, space, op, space.root());
    REQUIRE(adj.verdict.verdict == Verdict::Feasible);
    CHECK(adj.adjusted.var_values[1] == ibr);
    CHECK(adj.verdict.adjustment_distance == doctest::Approx(25.0));
}

TEST_CASE("a repair that leaves the cell is discarded") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    const auto ibr = grid.gens()[1].cap.p_max;
    const auto op = three_bus_point(space, 100.0, ibr + 5.0);
    const auto root_adj = adjust_to_feasible(grid, space, op, space.root());
    REQUIRE(root_adj.verdict.verdict == Verdict::Feasible);
    // A cell whose P_SG edge lies between the sampled and the repaired slack output.
    const double sampled = op.dim_values[0];
    const double repaired = root_adj.adjusted_dims[0];
    REQUIRE(sampled != repaired);
    auto cell = space.root();
    const double edge = 0.5 * (sampled + repaired);
    if (repaired > sampled) {
        cell.bounds[0].hi = edge;
    } else {
        cell.bounds[0].lo = edge;
    }
    cell.closed_hi[0] = false;
    CHECK(adjust_to_feasible(grid, space, op, cell).verdict.verdict == Verdict::Discarded);
}

TEST_CASE("demand beyond total capacity is infeasible") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {});
    double capacity = 0.0;
    for (const auto& g : grid.gens()) {
        capacity += g.cap.p_max;
    }
    auto op = three_bus_point(space, grid.gens()[0].cap.p_max, grid.gens()[1].cap.p_max);
    op.var_values[4] = capacity + 100.0;
    op.dim_values[4] = capacity + 100.0;
    const auto adj = adjust_to_feasible(grid, space, op, space.root());
    CHECK(adj.verdict.verdict == Verdict::Infeasible);
    CHECK_FALSE(adj.verdict.violations.empty());
}
