#include "stabgen/space.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <regex>

namespace stabgen {

namespace {

constexpr double kGflTolerance = 1e-9;

bool valid_name(const std::string& name) {
    return !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
        return std::isalnum(c) != 0 || c == '_';
    });
}

}  // namespace

double Subregion::volume() const {
    double v = 1.0;
    for (const auto& b : bounds) {
        v *= b.width();
    }
    return v;
}

OperatingSpace::OperatingSpace(std::vector<DimensionSpec> dims, std::vector<VariableSpec> vars)
    : dims_(std::move(dims)), vars_(std::move(vars)) {
    bool seen_dependent = false;
    for (const auto& d : dims_) {
        if (!valid_name(d.name)) {
            throw SpaceError("dimension name '" + d.name + "' must match [A-Za-z0-9_]+");
        }
        if (d.kind == DimKind::Independent) {
            if (seen_dependent) {
                throw SpaceError("independent dimensions must precede dependent ones");
            }
            if (!(d.lo < d.hi) || !std::isfinite(d.lo) || !std::isfinite(d.hi)) {
                throw SpaceError("dimension '" + d.name + "' needs finite lo < hi");
            }
            ++independent_;
        } else {
            seen_dependent = true;
        }
    }
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        for (std::size_t j = i + 1; j < dims_.size(); ++j) {
            if (dims_[i].name == dims_[j].name) {
                throw SpaceError("duplicate dimension '" + dims_[i].name + "'");
            }
        }
    }
    for (const auto& v : vars_) {
        if (v.lo > v.hi) {
            throw SpaceError("variable '" + v.name + "' has lo > hi");
        }
    }
}

std::optional<std::size_t> OperatingSpace::find_dim(const std::string& name) const {
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t OperatingSpace::dim_index(const std::string& name) const {
    if (auto i = find_dim(name)) {
        return *i;
    }
    throw SpaceError("unknown dimension '" + name + "'");
}

std::optional<std::size_t> OperatingSpace::dim_with_role(DimRole role) const {
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i].role == role) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::size_t> OperatingSpace::vars_with_role(VarRole role) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].role == role) {
            out.push_back(i);
        }
    }
    return out;
}

std::optional<std::size_t> OperatingSpace::find_var(VarRole role, std::size_t element) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].role == role && vars_[i].element == element) {
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::string> OperatingSpace::independent_names() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < independent_; ++i) {
        out.push_back(dims_[i].name);
    }
    return out;
}

Subregion OperatingSpace::root() const {
    Subregion cell;
    for (std::size_t i = 0; i < independent_; ++i) {
        cell.bounds.push_back({dims_[i].lo, dims_[i].hi});
    }
    cell.closed_hi.assign(independent_, true);
    return cell;
}

OperatingSpace build_space(const GridModel& grid, const std::vector<ControlParam>& control_params,
                           const SpaceOptions& options) {
    const auto sg = grid.groups_of(Tech::SG);
    const auto ibr = grid.groups_of(Tech::IBR);
    double ibr_capacity = 0.0;
    for (const auto g : ibr) {
        ibr_capacity += grid.gens()[g].cap.p_max;
    }
    const bool want_gfm = options.gfm_share.value_or(ibr_capacity > 0.0);
    if (want_gfm && !(ibr_capacity > 0.0)) {
        throw SpaceError("grid-forming share requested but the grid has no IBR capacity");
    }

    std::vector<DimensionSpec> dims;
    const double tol = options.min_tolerance_frac;
    auto add_total = [&](const std::vector<std::size_t>& groups, const std::string& name, DimRole role) {
        if (groups.empty()) {
            return;
        }
        double lo = 0.0;
        double hi = 0.0;
        for (const auto g : groups) {
            lo += grid.gens()[g].cap.p_min;
            hi += grid.gens()[g].cap.p_max;
        }
        dims.push_back({name, DimKind::Independent, role, lo, hi, tol});
    };
    add_total(sg, "P_SG", DimRole::TotalSG);
    add_total(ibr, "P_IBR", DimRole::TotalIBR);
    if (want_gfm) {
        dims.push_back({"pct_GFM", DimKind::Independent, DimRole::GfmShare, 0.0, 1.0, tol});
    }
    const auto& slack = grid.buses()[grid.slack_index()];
    dims.push_back({"V_anchor", DimKind::Independent, DimRole::VoltageAnchor, slack.v_min, slack.v_max, tol});
    for (const auto& cp : control_params) {
        if (!std::isfinite(cp.lo) || !std::isfinite(cp.hi)) {
            throw SpaceError("control parameter '" + cp.name + "' has non-finite bounds");
        }
        dims.push_back({cp.name, DimKind::Independent, DimRole::Control, cp.lo, cp.hi, tol});
    }
    double p_max_total = 0.0;
    for (const auto& g : grid.gens()) {
        p_max_total += g.cap.p_max;
    }
    dims.push_back({"P_D", DimKind::Dependent, DimRole::Demand, 0.0, 0.0, tol});

    std::vector<VariableSpec> vars;
    for (const auto g : sg) {
        const auto& gen = grid.gens()[g];
        vars.push_back({"P_SG_" + std::to_string(gen.bus), "P_SG", VarRole::SG, g, gen.bus, gen.cap.p_min,
                        gen.cap.p_max, DimKind::Independent});
    }
    for (const auto g : ibr) {
        const auto& gen = grid.gens()[g];
        vars.push_back({"P_IBR_" + std::to_string(gen.bus), "P_IBR", VarRole::IBR, g, gen.bus, gen.cap.p_min,
                        gen.cap.p_max, DimKind::Independent});
    }
    if (want_gfm) {
        for (const auto g : ibr) {
            const auto& gen = grid.gens()[g];
            vars.push_back({"P_GFM_" + std::to_string(gen.bus), "pct_GFM", VarRole::GFM, g, gen.bus, 0.0,
                            gen.cap.p_max, DimKind::Independent});
        }
        for (const auto g : ibr) {
            const auto& gen = grid.gens()[g];
            vars.push_back({"P_GFL_" + std::to_string(gen.bus), "pct_GFM", VarRole::GFL, g, gen.bus, 0.0,
                            gen.cap.p_max, DimKind::Dependent});
        }
    }
    std::vector<int> load_count(grid.bus_count(), 0);
    for (std::size_t l = 0; l < grid.loads().size(); ++l) {
        const auto& load = grid.loads()[l];
        auto& count = load_count[grid.index_of(load.bus)];
        std::string name = "P_L_" + std::to_string(load.bus);
        if (count > 0) {
            name += "_" + std::to_string(count);
        }
        ++count;
        vars.push_back({name, "P_D", VarRole::Load, l, load.bus, 0.0, load.participation * p_max_total,
                        DimKind::Independent});
    }
    return OperatingSpace(std::move(dims), std::move(vars));
}

bool can_split(const OperatingSpace& space, const Subregion& cell, std::size_t dim) {
    if (dim >= cell.bounds.size()) {
        return false;
    }
    const auto& spec = space.dims().at(dim);
    const double initial = spec.hi - spec.lo;
    return cell.bounds[dim].width() > spec.min_tolerance_frac * initial;
}

std::pair<Subregion, Subregion> split(const OperatingSpace& space, const Subregion& cell, std::size_t dim) {
    if (dim >= space.independent_count()) {
        throw SpaceError("split: dimension index " + std::to_string(dim) + " is not independent");
    }
    const auto& spec = space.dims()[dim];
    if (!can_split(space, cell, dim)) {
        throw ToleranceFloor("split: dimension '" + spec.name + "' is at its minimum tolerance");
    }
    Subregion low = cell;
    Subregion high = cell;
    const double mid = cell.bounds[dim].mid();
    low.bounds[dim].hi = mid;
    low.closed_hi[dim] = false;
    high.bounds[dim].lo = mid;
    low.depth = high.depth = cell.depth + 1;
    low.path = cell.path + "." + spec.name + "L";
    high.path = cell.path + "." + spec.name + "H";
    return {std::move(low), std::move(high)};
}

std::pair<Subregion, Subregion> split(const OperatingSpace& space, const Subregion& cell, const std::string& dim) {
    return split(space, cell, space.dim_index(dim));
}

std::vector<Subregion> split_product(const OperatingSpace& space, const Subregion& cell,
                                     const std::vector<std::size_t>& dims) {
    std::vector<Subregion> cells{cell};
    for (const auto d : dims) {
        std::vector<Subregion> next;
        next.reserve(cells.size() * 2);
        for (const auto& c : cells) {
            auto [lo, hi] = split(space, c, d);
            next.push_back(std::move(lo));
            next.push_back(std::move(hi));
        }
        cells = std::move(next);
    }
    for (auto& c : cells) {
        c.depth = cell.depth + 1;
    }
    return cells;
}

bool contains(const Subregion& cell, const std::vector<double>& dim_values) {
    if (dim_values.size() < cell.bounds.size()) {
        throw SpaceError("contains: point has fewer values than the cell has dimensions");
    }
    for (std::size_t i = 0; i < cell.bounds.size(); ++i) {
        const double v = dim_values[i];
        const auto& b = cell.bounds[i];
        if (v < b.lo) {
            return false;
        }
        if (cell.closed_hi[i] ? v > b.hi : v >= b.hi) {
            return false;
        }
    }
    return true;
}

bool contains(const Subregion& cell, const OperatingPoint& op) { return contains(cell, op.dim_values); }

OperatingPoint derive_dependent(const OperatingSpace& space, OperatingPoint op, double loss_factor) {
    double generation = 0.0;
    for (auto role : {DimRole::TotalSG, DimRole::TotalIBR}) {
        if (auto d = space.dim_with_role(role)) {
            generation += op.dim_values.at(*d);
        }
    }
    if (auto d = space.dim_with_role(DimRole::Demand)) {
        op.dim_values.at(*d) = loss_factor * generation;
    }
    for (const auto v : space.vars_with_role(VarRole::GFL)) {
        const auto element = space.vars()[v].element;
        const auto ibr = space.find_var(VarRole::IBR, element);
        const auto gfm = space.find_var(VarRole::GFM, element);
        if (!ibr || !gfm) {
            throw SpaceError("derive_dependent: incomplete IBR variables for " + space.vars()[v].name);
        }
        const double gfl = op.var_values.at(*ibr) - op.var_values.at(*gfm);
        if (gfl < -kGflTolerance) {
            throw SpaceError("derive_dependent: " + space.vars()[*gfm].name + " exceeds " +
                             space.vars()[*ibr].name);
        }
        op.var_values.at(v) = std::max(gfl, 0.0);
    }
    return op;
}

Subregion cell_from_path(const OperatingSpace& space, const std::string& path, int depth) {
    static const std::regex grammar(R"(R(\.[A-Za-z0-9_]+[LH])*)");
    if (!std::regex_match(path, grammar)) {
        throw SpaceError("malformed cell path '" + path + "'");
    }
    Subregion cell = space.root();
    std::size_t pos = 1;
    while (pos < path.size()) {
        const auto next = path.find('.', pos + 1);
        const auto segment = path.substr(pos + 1, (next == std::string::npos ? path.size() : next) - pos - 1);
        const char half = segment.back();
        const auto dim = space.dim_index(segment.substr(0, segment.size() - 1));
        auto [lo, hi] = split(space, cell, dim);
        cell = half == 'L' ? std::move(lo) : std::move(hi);
        pos = next == std::string::npos ? path.size() : next;
    }
    cell.depth = depth;
    return cell;
}

}  // namespace stabgen
