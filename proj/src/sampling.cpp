#include "stabgen/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stabgen {

namespace {

constexpr double kSumTolerance = 1e-9;

double sum_tolerance(double target) { return kSumTolerance * std::max(1.0, std::abs(target)); }

void check_target(double target, const std::vector<Bounds>& bounds) {
    double lo = 0.0;
    double hi = 0.0;
    for (const auto& b : bounds) {
        lo += b.lo;
        hi += b.hi;
    }
    const double tol = sum_tolerance(target);
    if (target < lo - tol || target > hi + tol) {
        throw SamplingError("disaggregate: target " + std::to_string(target) + " outside [" + std::to_string(lo) +
                            ", " + std::to_string(hi) + "]");
    }
}

}  // namespace

std::vector<std::vector<double>> lhs(std::size_t n, const Subregion& cell, RngStream& rng) {
    if (n == 0) {
        throw SamplingError("lhs: need at least one sample");
    }
    const auto dims = cell.bounds.size();
    std::vector<std::vector<double>> out(n, std::vector<double>(dims));
    std::vector<std::size_t> perm(n);
    for (std::size_t d = 0; d < dims; ++d) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        const auto& b = cell.bounds[d];
        const double width = b.width() / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double stratum_lo = b.lo + width * static_cast<double>(perm[i]);
            const double stratum_hi = perm[i] + 1 == n ? b.hi : b.lo + width * static_cast<double>(perm[i] + 1);
            out[i][d] = rng.uniform(stratum_lo, stratum_hi);
        }
    }
    return out;
}

std::vector<double> sample_voltage_profile(const GridModel& grid, double anchor_v, double dev_bound,
                                           RngStream& rng) {
    if (dev_bound < 0.0) {
        throw SamplingError("sample_voltage_profile: dev_bound must be non-negative");
    }
    const auto n = grid.bus_count();
    const auto& buses = grid.buses();
    auto clamp = [&](std::size_t bus, double v) { return std::clamp(v, buses[bus].v_min, buses[bus].v_max); };

    std::vector<double> v(n, 0.0);
    std::vector<bool> assigned(n, false);
    const auto slack = grid.slack_index();
    v[slack] = clamp(slack, anchor_v);
    assigned[slack] = true;
    std::vector<std::size_t> layer{slack};
    while (!layer.empty()) {
        std::vector<double> total(n, 0.0);
        std::vector<int> hits(n, 0);
        for (const auto u : layer) {
            for (const auto w : grid.neighbours(u)) {
                if (assigned[w]) {
                    continue;
                }
                const double dev = dev_bound > 0.0 ? rng.uniform(-dev_bound, dev_bound) : 0.0;
                total[w] += v[u] + dev;
                ++hits[w];
            }
        }
        std::vector<std::size_t> next;
        for (std::size_t w = 0; w < n; ++w) {
            if (hits[w] > 0) {
                v[w] = clamp(w, total[w] / hits[w]);
                assigned[w] = true;
                next.push_back(w);
            }
        }
        layer = std::move(next);
    }
    return v;
}

std::vector<double> disaggregate_variance_max(double target, const std::vector<Bounds>& bounds, RngStream& rng) {
    check_target(target, bounds);
    std::vector<double> x(bounds.size());
    double deficit = target;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        x[i] = bounds[i].lo;
        deficit -= bounds[i].lo;
    }
    std::vector<std::size_t> order(bounds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (const auto i : order) {
        if (deficit <= 0.0) {
            break;
        }
        const double room = bounds[i].hi - bounds[i].lo;
        if (deficit >= room) {
            x[i] = bounds[i].hi;
            deficit -= room;
        } else {
            x[i] = bounds[i].lo + deficit;
            deficit = 0.0;
        }
    }
    return x;
}

std::vector<double> disaggregate_gaussian(double target, const std::vector<Bounds>& bounds, RngStream& rng) {
    check_target(target, bounds);
    const auto n = bounds.size();
    double lo_sum = 0.0;
    double range_sum = 0.0;
    for (const auto& b : bounds) {
        lo_sum += b.lo;
        range_sum += b.hi - b.lo;
    }
    const double deficit = std::clamp(target - lo_sum, 0.0, range_sum);
    const double frac = range_sum > 0.0 ? deficit / range_sum : 0.0;

    // y_i is the allocation above the lower bound, within [0, range_i].
    std::vector<double> y(n);
    std::vector<double> range(n);
    for (std::size_t i = 0; i < n; ++i) {
        range[i] = bounds[i].hi - bounds[i].lo;
        const double mean = frac * range[i];
        const double sigma = range[i] / 6.0;
        y[i] = sigma > 0.0 ? std::clamp(rng.normal(mean, sigma), 0.0, range[i]) : 0.0;
    }

    // Proportional rescale; elements pushed past their range are pinned and the rest rescaled again.
    std::vector<bool> pinned(n, false);
    for (std::size_t round = 0; round <= n; ++round) {
        double free_sum = 0.0;
        double free_range = 0.0;
        double remaining = deficit;
        for (std::size_t i = 0; i < n; ++i) {
            if (pinned[i]) {
                remaining -= y[i];
            } else {
                free_sum += y[i];
                free_range += range[i];
            }
        }
        if (free_range <= 0.0) {
            break;
        }
        bool newly_pinned = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (pinned[i]) {
                continue;
            }
            y[i] = free_sum > 0.0 ? y[i] * remaining / free_sum : range[i] * remaining / free_range;
            if (y[i] >= range[i]) {
                y[i] = range[i];
                pinned[i] = true;
                newly_pinned = true;
            }
        }
        if (!newly_pinned) {
            break;
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = y[i] >= range[i] ? bounds[i].hi : bounds[i].lo + y[i];
    }
    return x;
}

bool allocation_valid(double target, const std::vector<Bounds>& bounds, const std::vector<double>& values) {
    if (values.size() != bounds.size()) {
        return false;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= bounds[i].lo && values[i] <= bounds[i].hi)) {
            return false;
        }
        sum += values[i];
    }
    return std::abs(sum - target) <= sum_tolerance(target);
}

Disaggregation disaggregate(double target, const std::vector<Bounds>& bounds, RngStream& rng, int max_tries) {
    check_target(target, bounds);
    for (int attempt = 0; attempt < max_tries; ++attempt) {
        auto values = disaggregate_variance_max(target, bounds, rng);
        if (allocation_valid(target, bounds, values)) {
            return {std::move(values), false};
        }
    }
    return {disaggregate_gaussian(target, bounds, rng), true};
}

OperatingPoint realize_case(const std::vector<double>& dim_values, const std::vector<double>& voltages,
                            const GridModel& grid, const OperatingSpace& space, const SamplingOptions& options,
                            RngStream& rng) {
    OperatingPoint op;
    op.dim_values = dim_values;
    op.dim_values.resize(space.dims().size(), 0.0);
    op.var_values.assign(space.vars().size(), 0.0);
    op.voltage_profile = voltages;

    auto fill = [&](VarRole role, double target, const std::vector<Bounds>& bounds) {
        const auto idx = space.vars_with_role(role);
        if (idx.empty()) {
            return;
        }
        const auto result = disaggregate(target, bounds, rng, options.max_tries);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            op.var_values[idx[k]] = result.values[k];
        }
    };
    auto var_bounds = [&](VarRole role) {
        std::vector<Bounds> b;
        for (const auto v : space.vars_with_role(role)) {
            b.push_back({space.vars()[v].lo, space.vars()[v].hi});
        }
        return b;
    };

    if (auto d = space.dim_with_role(DimRole::TotalSG)) {
        fill(VarRole::SG, op.dim_values[*d], var_bounds(VarRole::SG));
    }
    if (auto d = space.dim_with_role(DimRole::TotalIBR)) {
        fill(VarRole::IBR, op.dim_values[*d], var_bounds(VarRole::IBR));
    }
    if (auto d = space.dim_with_role(DimRole::GfmShare)) {
        const auto ibr_dim = space.dim_with_role(DimRole::TotalIBR);
        const double total_gfm = op.dim_values[*d] * (ibr_dim ? op.dim_values[*ibr_dim] : 0.0);
        std::vector<Bounds> b;
        for (const auto v : space.vars_with_role(VarRole::GFM)) {
            const auto ibr = space.find_var(VarRole::IBR, space.vars()[v].element);
            b.push_back({0.0, op.var_values.at(*ibr)});
        }
        fill(VarRole::GFM, total_gfm, b);
    }
    op = derive_dependent(space, std::move(op), options.loss_factor);

    const auto demand_dim = space.dim_with_role(DimRole::Demand);
    const double demand = demand_dim ? op.dim_values[*demand_dim] : 0.0;
    const auto loads = space.vars_with_role(VarRole::Load);
    if (options.load_mode == LoadMode::Participation) {
        for (const auto v : loads) {
            op.var_values[v] = grid.loads()[space.vars()[v].element].participation * demand;
        }
    } else {
        std::vector<Bounds> b;
        for (const auto v : loads) {
            const double nominal = grid.loads()[space.vars()[v].element].participation * demand;
            b.push_back({(1.0 - options.load_spread) * nominal, (1.0 + options.load_spread) * nominal});
        }
        fill(VarRole::Load, demand, b);
    }
    return op;
}

std::vector<OperatingPoint> hierarchical_sample(const Subregion& cell, const GridModel& grid,
                                                const OperatingSpace& space, const SamplingOptions& options) {
    if (options.n_samples == 0 || options.n_cases == 0) {
        throw SamplingError("hierarchical_sample: n_samples and n_cases must be at least 1");
    }
    RngStream lhs_rng(options.seed, cell.path, 0, 0, StreamPurpose::Lhs);
    const auto tuples = lhs(options.n_samples, cell, lhs_rng);
    const auto anchor_dim = space.dim_with_role(DimRole::VoltageAnchor);

    std::vector<OperatingPoint> out;
    out.reserve(options.n_samples * options.n_cases);
    for (std::size_t s = 0; s < tuples.size(); ++s) {
        RngStream v_rng(options.seed, cell.path, s, 0, StreamPurpose::Voltage);
        const double anchor = anchor_dim ? tuples[s][*anchor_dim] : grid.buses()[grid.slack_index()].v_max;
        const auto voltages = sample_voltage_profile(grid, anchor, options.dev_bound, v_rng);
        for (std::size_t c = 0; c < options.n_cases; ++c) {
            RngStream case_rng(options.seed, cell.path, s, c, StreamPurpose::Disaggregation);
            auto op = realize_case(tuples[s], voltages, grid, space, options, case_rng);
            op.sample_index = static_cast<int>(s);
            op.case_index = static_cast<int>(c);
            out.push_back(std::move(op));
        }
    }
    return out;
}

}  // namespace stabgen
