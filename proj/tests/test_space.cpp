#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "stabgen/rng.hpp"
#include "stabgen/space.hpp"

using namespace stabgen;

namespace {

const std::vector<ControlParam> kControls{{"tau_u", 0.01, 1.0}, {"tau_w", 0.01, 1.0}};

std::vector<double> random_point(const Subregion& cell, RngStream& rng) {
    std::vector<double> x;
    for (const auto& b : cell.bounds) {
        x.push_back(rng.uniform(b.lo, b.hi));
    }
    return x;
}

}  // namespace

TEST_CASE("3-bus space has six independent dimensions and a dependent demand") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, kControls);
    CHECK(space.independent_count() == 6);
    CHECK(space.independent_names() ==
          std::vector<std::string>{"P_SG", "P_IBR", "pct_GFM", "V_anchor", "tau_u", "tau_w"});
    REQUIRE(space.dims().size() == 7);
    CHECK(space.dims().back().kind == DimKind::Dependent);
    CHECK(space.dims().back().role == DimRole::Demand);
    const auto root = space.root();
    CHECK(root.bounds.size() == 6);
    CHECK(root.path == "R");
    CHECK(root.depth == 0);
    for (const auto& v : space.vars()) {
        CHECK(space.find_dim(v.parent_dimension).has_value());
    }
}

TEST_CASE("bisection halves one dimension and keeps the rest") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    const auto root = space.root();
    const auto [lo, hi] = split(space, root, "P_IBR");
    CHECK(lo.path == "R.P_IBRL");
    CHECK(hi.path == "R.P_IBRH");
    CHECK(lo.depth == 1);
    CHECK(lo.bounds[1].hi == hi.bounds[1].lo);
    CHECK(lo.bounds[1].width() == doctest::Approx(root.bounds[1].width() / 2));
    CHECK(lo.volume() + hi.volume() == doctest::Approx(root.volume()));
    CHECK(lo.bounds[0].lo == root.bounds[0].lo);
    CHECK(lo.bounds[0].hi == root.bounds[0].hi);
}

TEST_CASE("children partition their parent") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    RngStream rng(11);
    auto cells = split_product(space, space.root(), {0, 4});
    REQUIRE(cells.size() == 4);
    std::set<std::string> paths;
    for (const auto& c : cells) {
        paths.insert(c.path);
        CHECK(c.depth == 1);
    }
    CHECK(paths.size() == 4);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto x = random_point(space.root(), rng);
        int owners = 0;
        for (const auto& c : cells) {
            owners += contains(c, x) ? 1 : 0;
        }
        CHECK(owners == 1);
    }
    // The root's upper edge belongs to the upper child only.
    std::vector<double> corner;
    for (const auto& b : space.root().bounds) {
        corner.push_back(b.hi);
    }
    int owners = 0;
    for (const auto& c : cells) {
        owners += contains(c, corner) ? 1 : 0;
    }
    CHECK(owners == 1);
}

TEST_CASE("cells rebuild from their path") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    auto cell = space.root();
    for (const std::size_t d : {0u, 5u, 0u, 2u}) {
        cell = split(space, cell, d).second;
    }
    const auto rebuilt = cell_from_path(space, cell.path, cell.depth);
    REQUIRE(rebuilt.bounds.size() == cell.bounds.size());
    for (std::size_t d = 0; d < cell.bounds.size(); ++d) {
        CHECK(rebuilt.bounds[d].lo == cell.bounds[d].lo);
        CHECK(rebuilt.bounds[d].hi == cell.bounds[d].hi);
        CHECK(rebuilt.closed_hi[d] == cell.closed_hi[d]);
    }
    const auto product = split_product(space, space.root(), {0, 1});
    for (const auto& c : product) {
        const auto r = cell_from_path(space, c.path, c.depth);
        CHECK(r.bounds[0].lo == c.bounds[0].lo);
        CHECK(r.bounds[1].hi == c.bounds[1].hi);
    }
}

TEST_CASE("splitting stops at the tolerance floor") {
    SpaceOptions opts;
    opts.min_tolerance_frac = 0.25;
    const auto space = build_space(load_fixture("3bus"), kControls, opts);
    auto cell = space.root();
    int splits = 0;
    while (can_split(space, cell, 0)) {
        cell = split(space, cell, 0).first;
        ++splits;
    }
    CHECK(splits == 2);
    CHECK_THROWS_AS((void)split(space, cell, 0), ToleranceFloor);
}

TEST_CASE("dependent values follow the loss factor") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    OperatingPoint op;
    op.dim_values = {300.0, 150.0, 0.4, 1.0, 0.1, 0.2, 0.0};
    op.var_values.assign(space.vars().size(), 0.0);
    const auto ibr = space.vars_with_role(VarRole::IBR);
    const auto gfm = space.vars_with_role(VarRole::GFM);
    const auto gfl = space.vars_with_role(VarRole::GFL);
    REQUIRE(ibr.size() == 1);
    op.var_values[ibr[0]] = 150.0;
    op.var_values[gfm[0]] = 60.0;
    const auto out = derive_dependent(space, op, 0.97);
    CHECK(out.dim_values[6] == doctest::Approx(0.97 * 450.0));
    CHECK(out.var_values[gfl[0]] == doctest::Approx(90.0));
}

TEST_CASE("3-bus variables and 9-bus counts") {
    const auto s3 = build_space(load_fixture("3bus"), kControls);
    std::vector<std::string> names;
    for (const auto& v : s3.vars()) {
        names.push_back(v.name);
    }
    CHECK(names == std::vector<std::string>{"P_SG_1", "P_IBR_2", "P_GFM_2", "P_GFL_2", "P_L_3"});
    CHECK(s3.vars()[3].kind == DimKind::Dependent);
    const auto s9 = build_space(load_fixture("9bus"), kControls);
    CHECK(s9.independent_count() == 6);
    CHECK(s9.vars().size() == 12);
}

TEST_CASE("grids without converters have no grid-forming share") {
    const TableSet t{{"buses", "id,kind,v_min,v_max\n1,Slack,0.95,1.05\n2,PQ,0.9,1.1\n"},
                     {"lines", "from,to,r,x,b,s_max\n1,2,0.01,0.1,0,100\n"},
                     {"gens", "bus,tech,p_nom,cos_phi\n1,SG,100,0.95\n"},
                     {"loads", "bus,participation\n2,1\n"}};
    const auto space = build_space(load_grid(t), {});
    CHECK_FALSE(space.find_dim("pct_GFM").has_value());
    CHECK(space.vars_with_role(VarRole::IBR).empty());
    CHECK(space.vars_with_role(VarRole::GFM).empty());
    CHECK(space.vars_with_role(VarRole::GFL).empty());
}

TEST_CASE("bisection bookkeeping and the half-open midpoint") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    auto cell = space.root();
    for (const std::size_t d : {0u, 1u, 4u}) {
        cell = split(space, cell, d).first;
    }
    REQUIRE(cell.depth == 3);
    const auto [lo, hi] = split(space, cell, "tau_w");
    CHECK(lo.depth == 4);
    CHECK(lo.path == cell.path + ".tau_wL");
    CHECK(hi.path == cell.path + ".tau_wH");
    std::vector<double> x;
    for (const auto& b : cell.bounds) {
        x.push_back(b.mid());
    }
    CHECK_FALSE(contains(lo, x));
    CHECK(contains(hi, x));
    x[0] = cell.bounds[0].hi + 1.0;
    CHECK_FALSE(contains(cell, x));
}

TEST_CASE("a range below one percent of the initial width cannot split") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    auto cell = space.root();
    // Seven halvings leave 0.78 % of the range, below the 1 % floor.
    for (int i = 0; i < 6; ++i) {
        cell = split(space, cell, 0).first;
    }
    CHECK(can_split(space, cell, 0));
    cell = split(space, cell, 0).first;
    CHECK(cell.bounds[0].width() / space.root().bounds[0].width() < 0.01);
    CHECK_FALSE(can_split(space, cell, 0));
    CHECK_THROWS_AS((void)split(space, cell, 0), ToleranceFloor);
}

TEST_CASE("dependent arithmetic examples") {
    const auto space = build_space(load_fixture("3bus"), kControls);
    OperatingPoint op;
    op.dim_values = {600.0, 400.0, 0.5, 1.0, 0.1, 0.2, 0.0};
    op.var_values.assign(space.vars().size(), 0.0);
    const auto ibr = space.vars_with_role(VarRole::IBR)[0];
    const auto gfm = space.vars_with_role(VarRole::GFM)[0];
    const auto gfl = space.vars_with_role(VarRole::GFL)[0];
    op.var_values[ibr] = 50.0;
    op.var_values[gfm] = 50.0;
    const auto out = derive_dependent(space, op, 0.97);
    CHECK(out.dim_values[6] == doctest::Approx(970.0));
    CHECK(out.var_values[gfl] == 0.0);
    op.var_values[gfm] = 60.0;
    CHECK_THROWS_AS((void)derive_dependent(space, op, 0.97), SpaceError);
}
