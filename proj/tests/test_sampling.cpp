#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cases.hpp"
#include "stabgen/sampling.hpp"

using namespace stabgen;
using cases::stratified;
using cases::variance;

namespace {

Subregion unit_cell(std::size_t dims) {
    Subregion c;
    for (std::size_t d = 0; d < dims; ++d) {
        c.bounds.push_back({-1.0 + static_cast<double>(d), 2.0 * static_cast<double>(d + 1)});
        c.closed_hi.push_back(false);
    }
    return c;
}

std::vector<Bounds> random_bounds(RngStream& rng, std::size_t n) {
    std::vector<Bounds> b;
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = rng.uniform(0.0, 50.0);
        b.push_back({lo, lo + rng.uniform(0.0, 100.0)});
    }
    return b;
}

GridModel small_grid(const std::string& lines) {
    std::string buses = "id,kind,v_min,v_max\n1,Slack,0.5,1.5\n";
    for (int id = 2; id <= 4; ++id) {
        if (lines.find("," + std::to_string(id) + ",") != std::string::npos) {
            buses += std::to_string(id) + ",PQ,0.5,1.5\n";
        }
    }
    return load_grid({{"buses", buses},
                      {"lines", "from,to,r,x,b,s_max\n" + lines},
                      {"gens", "bus,tech,p_nom,cos_phi\n1,SG,100,0.95\n"},
                      {"loads", "bus,participation\n2,1\n"}});
}

}  // namespace

TEST_CASE("latin hypercube occupies every stratum once") {
    RngStream rng(3);
    for (const std::size_t n : {1u, 2u, 4u, 17u, 333u}) {
        for (const std::size_t dims : {1u, 3u, 6u}) {
            const auto cell = unit_cell(dims);
            const auto rows = lhs(n, cell, rng);
            REQUIRE(rows.size() == n);
            CHECK(stratified(rows, cell));
        }
    }
}

TEST_CASE("latin hypercube is reproducible per stream") {
    const auto cell = unit_cell(4);
    RngStream a(9, "R.x", 0, 0, StreamPurpose::Lhs);
    RngStream b(9, "R.x", 0, 0, StreamPurpose::Lhs);
    CHECK(lhs(50, cell, a) == lhs(50, cell, b));
}

TEST_CASE("disaggregation meets the target within bounds") {
    RngStream rng(21);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto bounds = random_bounds(rng, 1 + static_cast<std::size_t>(rng.uniform() * 8));
        double lo = 0.0;
        double hi = 0.0;
        for (const auto& b : bounds) {
            lo += b.lo;
            hi += b.hi;
        }
        const double target = rng.uniform(lo, hi);
        const auto vm = disaggregate_variance_max(target, bounds, rng);
        const auto gs = disaggregate_gaussian(target, bounds, rng);
        CHECK(allocation_valid(target, bounds, vm));
        CHECK(allocation_valid(target, bounds, gs));
        CHECK(allocation_valid(target, bounds, disaggregate(target, bounds, rng).values));
    }
}

TEST_CASE("variance-max spreads allocations more than the Gaussian fallback") {
    const std::vector<Bounds> bounds{{0.0, 100.0}, {0.0, 100.0}, {0.0, 100.0}};
    RngStream rng(4);
    std::vector<double> vm;
    std::vector<double> gs;
    for (int i = 0; i < 10000; ++i) {
        vm.push_back(disaggregate_variance_max(150.0, bounds, rng)[0]);
        gs.push_back(disaggregate_gaussian(150.0, bounds, rng)[0]);
    }
    CHECK(variance(vm) > variance(gs));
}

TEST_CASE("infeasible targets are rejected") {
    RngStream rng(1);
    const std::vector<Bounds> bounds{{0.0, 1.0}, {0.0, 1.0}};
    CHECK_THROWS(disaggregate(3.0, bounds, rng));
}

TEST_CASE("voltage walk respects bus limits and the deviation bound") {
    const auto grid = load_fixture("9bus");
    RngStream rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const double anchor = rng.uniform(0.95, 1.05);
        const auto v = sample_voltage_profile(grid, anchor, 0.02, rng);
        REQUIRE(v.size() == grid.bus_count());
        CHECK(v[grid.slack_index()] == doctest::Approx(anchor));
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(v[i] >= grid.buses()[i].v_min - 1e-12);
            CHECK(v[i] <= grid.buses()[i].v_max + 1e-12);
            double nearest = 1e9;
            for (const auto k : grid.neighbours(i)) {
                nearest = std::min(nearest, std::abs(v[i] - v[k]));
            }
            // Each bus sits within the deviation bound of at least one neighbour, up to twice
            // the bound when the mean of several parents is taken.
            CHECK(nearest <= 0.04 + 1e-12);
        }
    }
}

TEST_CASE("hierarchical sampling nests cases inside samples") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {{"tau_w", 0.01, 1.0}});
    SamplingOptions so;
    so.n_samples = 12;
    so.n_cases = 3;
    so.seed = 2;
    const auto pts = hierarchical_sample(space.root(), grid, space, so);
    REQUIRE(pts.size() == 36);
    const auto sg = space.vars_with_role(VarRole::SG);
    const auto ibr = space.vars_with_role(VarRole::IBR);
    const auto loads = space.vars_with_role(VarRole::Load);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto& p = pts[i];
        CHECK(p.sample_index == static_cast<int>(i / 3));
        CHECK(p.case_index == static_cast<int>(i % 3));
        CHECK(contains(space.root(), p));
        const auto& first = pts[i - i % 3];
        CHECK(p.dim_values == first.dim_values);
        CHECK(p.voltage_profile == first.voltage_profile);
        double sg_sum = 0.0;
        double ibr_sum = 0.0;
        double load_sum = 0.0;
        for (const auto v : sg) {
            sg_sum += p.var_values[v];
        }
        for (const auto v : ibr) {
            ibr_sum += p.var_values[v];
        }
        for (const auto v : loads) {
            load_sum += p.var_values[v];
        }
        CHECK(sg_sum == doctest::Approx(p.dim_values[0]).epsilon(1e-9));
        CHECK(ibr_sum == doctest::Approx(p.dim_values[1]).epsilon(1e-9));
        CHECK(load_sum == doctest::Approx(0.97 * (p.dim_values[0] + p.dim_values[1])).epsilon(1e-9));
    }
    CHECK(hierarchical_sample(space.root(), grid, space, so)[7].var_values == pts[7].var_values);
}

TEST_CASE("zero deviation puts every bus at the anchor") {
    for (const char* name : {"3bus", "9bus"}) {
        const auto grid = load_fixture(name);
        RngStream rng(1);
        for (const auto v : sample_voltage_profile(grid, 1.02, 0.0, rng)) {
            CHECK(v == 1.02);
        }
    }
}

TEST_CASE("voltage walk along a chain adds one deviation per edge") {
    const auto grid = small_grid("1,2,0.01,0.1,0,100\n2,3,0.01,0.1,0,100\n");
    RngStream rng(5);
    RngStream replay(5);
    const auto v = sample_voltage_profile(grid, 1.0, 0.05, rng);
    const double d1 = replay.uniform(-0.05, 0.05);
    const double d2 = replay.uniform(-0.05, 0.05);
    CHECK(v[1] == 1.0 + d1);
    CHECK(v[2] == 1.0 + d1 + d2);
}

TEST_CASE("a bus reached twice in one layer takes the mean") {
    // Diamond: 1 feeds 2 and 3, both of which feed 4.
    const auto grid = small_grid("1,2,0.01,0.1,0,100\n1,3,0.01,0.1,0,100\n2,4,0.01,0.1,0,100\n3,4,0.01,0.1,0,100\n");
    RngStream rng(9);
    RngStream replay(9);
    const auto v = sample_voltage_profile(grid, 1.0, 0.05, rng);
    const double v2 = 1.0 + replay.uniform(-0.05, 0.05);
    const double v3 = 1.0 + replay.uniform(-0.05, 0.05);
    const double via2 = v2 + replay.uniform(-0.05, 0.05);
    const double via3 = v3 + replay.uniform(-0.05, 0.05);
    CHECK(v[1] == v2);
    CHECK(v[2] == v3);
    CHECK(v[3] == doctest::Approx((via2 + via3) / 2.0).epsilon(1e-15));
}

TEST_CASE("targets at the bound sums are forced") {
    const std::vector<Bounds> bounds{{1.0, 4.0}, {0.0, 10.0}, {2.5, 3.0}};
    RngStream rng(6);
    for (int i = 0; i < 20; ++i) {
        const auto top = disaggregate(17.0, bounds, rng).values;
        const auto bottom = disaggregate(3.5, bounds, rng).values;
        for (std::size_t k = 0; k < bounds.size(); ++k) {
            CHECK(top[k] == bounds[k].hi);
            CHECK(bottom[k] == bounds[k].lo);
        }
    }
}

TEST_CASE("variance-max reaches the extreme allocations") {
    const std::vector<Bounds> bounds{{0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}};
    RngStream rng(12);
    std::vector<int> full(3, 0);
    for (int i = 0; i < 300; ++i) {
        const auto x = disaggregate_variance_max(10.0, bounds, rng);
        const auto at_top = std::count(x.begin(), x.end(), 10.0);
        const auto at_zero = std::count(x.begin(), x.end(), 0.0);
        CHECK(at_top == 1);
        CHECK(at_zero == 2);
        ++full[static_cast<std::size_t>(std::max_element(x.begin(), x.end()) - x.begin())];
    }
    // Each element takes the whole target under some permutation.
    CHECK(std::all_of(full.begin(), full.end(), [](int n) { return n > 0; }));
}

TEST_CASE("point counts follow samples times cases") {
    const auto grid = load_fixture("3bus");
    const auto space = build_space(grid, {{"tau_u", 0.01, 1.0}, {"tau_w", 0.01, 1.0}});
    SamplingOptions so;
    so.n_samples = 333;
    so.n_cases = 3;
    const auto pts = hierarchical_sample(space.root(), grid, space, so);
    CHECK(pts.size() == 999);
    so.n_samples = 1;
    so.n_cases = 1;
    CHECK(hierarchical_sample(space.root(), grid, space, so).size() == 1);
}

TEST_CASE("cases of one sample share the tuple but split it differently") {
    const auto grid = load_fixture("9bus");
    const auto space = build_space(grid, {});
    SamplingOptions so;
    so.n_samples = 50;
    so.n_cases = 2;
    const auto pts = hierarchical_sample(space.root(), grid, space, so);
    const auto sg = space.vars_with_role(VarRole::SG);
    int differing = 0;
    for (std::size_t s = 0; s < 50; ++s) {
        const auto& a = pts[2 * s];
        const auto& b = pts[2 * s + 1];
        CHECK(a.dim_values == b.dim_values);
        differing += a.var_values != b.var_values ? 1 : 0;
        double sum_a = 0.0;
        double sum_b = 0.0;
        for (const auto v : sg) {
            sum_a += a.var_values[v];
            sum_b += b.var_values[v];
        }
        CHECK(sum_a == doctest::Approx(sum_b).epsilon(1e-12));
    }
    // Variance-max picks one of a few extreme allocations per group, so an occasional pair coincides.
    CHECK(differing >= 40);
}
