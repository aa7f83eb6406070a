#include "stabgen/scan.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "stabgen/csv.hpp"
#include "stabgen/feasibility.hpp"
#include "stabgen/rng.hpp"
#include "stabgen/sampling.hpp"

namespace stabgen {

std::vector<DynamicUnit> midpoint_units(const GridModel& grid, const OperatingSpace& space, const ModelParams& params) {
    const auto root = space.root();
    std::vector<double> dims;
    for (const auto& b : root.bounds) {
        dims.push_back(b.mid());
    }
    double anchor = 1.0;
    if (const auto v = space.dim_with_role(DimRole::VoltageAnchor)) {
        anchor = dims[*v];
    }
    RngStream rng(0, root.path, 0, 0);
    auto op = realize_case(dims, std::vector<double>(grid.bus_count(), anchor), grid, space, SamplingOptions{}, rng);
    const auto adj = adjust_to_feasible(grid, space, op, root);
    if (!adj.solution.converged) {
        throw std::runtime_error("scan: power flow at the midpoint operating point did not converge");
    }
    return build_units(grid, space, adj.adjusted, adj.solution, params_for(space, op.dim_values, params));
}

namespace {

const DynamicUnit& find_unit(const std::vector<DynamicUnit>& units, const std::string& id) {
    const auto it = std::find_if(units.begin(), units.end(), [&](const DynamicUnit& u) { return u.id == id; });
    if (it == units.end()) {
        std::string known;
        for (const auto& u : units) {
            known += (known.empty() ? "" : ", ") + u.id;
        }
        throw ScanError("scan: unknown component '" + id + "' (available: " + known + ")");
    }
    return *it;
}

}  // namespace

ScanReport run_scan(const std::vector<DynamicUnit>& available, const ScanRequest& request) {
    if (!(request.fmin > 0.0) || !(request.fmax > request.fmin) || !std::isfinite(request.fmax)) {
        throw ScanError("scan: frequency range must satisfy 0 < fmin < fmax");
    }
    if (request.points_per_decade < 1) {
        throw ScanError("scan: points per decade must be >= 1");
    }
    if (request.components.empty()) {
        throw ScanError("scan: no component given");
    }
    std::vector<DynamicUnit> parts;
    if (request.components.size() == 1) {
        if (request.units < 1) {
            throw ScanError("scan: unit count must be >= 1");
        }
        const auto& whole = find_unit(available, request.components.front());
        for (int k = 0; k < request.units; ++k) {
            auto u = whole;
            u.id = whole.id + "#" + std::to_string(k + 1);
            u.s_rated = whole.s_rated / request.units;
            u.s0 = whole.s0 / static_cast<double>(request.units);
            parts.push_back(u);
        }
    } else {
        for (const auto& id : request.components) {
            parts.push_back(find_unit(available, id));
        }
    }
    const auto agg = aggregate_ibrs(parts);
    const auto freq = log_frequency_grid(request.fmin, request.fmax, request.points_per_decade);

    ScanReport report;
    for (const auto& u : parts) {
        report.names.push_back(u.id);
        report.individual.push_back(admittance_scan(device_model(u), freq));
    }
    report.aggregate = admittance_scan(device_model(agg), freq);
    report.sum = report.individual.front();
    for (std::size_t k = 1; k < report.individual.size(); ++k) {
        const auto& s = report.individual[k];
        if (s.freq_hz != report.sum.freq_hz) {
            throw ModelError("scan: units are singular at different frequencies");
        }
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            report.sum.y[i] += s.y[i];
        }
    }
    if (report.sum.freq_hz != report.aggregate.freq_hz) {
        throw ModelError("scan: aggregate and units are singular at different frequencies");
    }
    for (std::size_t i = 0; i < report.sum.y.size(); ++i) {
        report.max_deviation = std::max(report.max_deviation, (report.aggregate.y[i] - report.sum.y[i]).cwiseAbs().maxCoeff());
    }
    return report;
}

void write_scan_csv(std::ostream& out, const ScanReport& report) {
    out << "component,freq_hz,row,col,re_y,im_y\n";
    auto emit = [&](const std::string& name, const ScanResult& s) {
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            for (Eigen::Index r = 0; r < s.y[i].rows(); ++r) {
                for (Eigen::Index c = 0; c < s.y[i].cols(); ++c) {
                    out << name << ',' << csv::format_double(s.freq_hz[i]) << ',' << r << ',' << c << ','
                        << csv::format_double(s.y[i](r, c).real()) << ',' << csv::format_double(s.y[i](r, c).imag())
                        << '\n';
                }
            }
        }
    };
    for (std::size_t k = 0; k < report.names.size(); ++k) {
        emit(report.names[k], report.individual[k]);
    }
    emit("sum", report.sum);
    emit("aggregate", report.aggregate);
}

}  // namespace stabgen
