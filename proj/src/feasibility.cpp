#include "stabgen/feasibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stabgen/csv.hpp"

namespace stabgen {

namespace {

constexpr double kVoltageTol = 1e-9;  // pu
constexpr double kPowerTol = 1e-5;    // MW, MVAr, MVA
constexpr double kPfTol = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

void add(std::vector<Violation>& out, std::string id, double magnitude) { out.push_back({std::move(id), magnitude}); }

/// The slack group counts as dispatched unless it settles at zero output.
bool online(const PowerFlowSolution& sol, const GridModel& grid, std::size_t g) {
    return sol.group_p[g] > 0.0 || (g == grid.slack_group() && std::abs(sol.group_p[g]) > kPowerTol);
}

/// Sum of squared violations, each scaled by the natural width of its constraint.
double violation_measure(const PowerFlowSolution& sol, const GridModel& grid) {
    if (!sol.converged) {
        return kInf;
    }
    double m = 0.0;
    for (std::size_t b = 0; b < grid.bus_count(); ++b) {
        const auto& bus = grid.buses()[b];
        const double width = bus.v_max - bus.v_min;
        const double over = std::max(0.0, sol.vm[b] - bus.v_max) + std::max(0.0, bus.v_min - sol.vm[b]);
        m += (over / width) * (over / width);
    }
    const auto flows = line_flows(grid, sol.vm, sol.va);
    for (std::size_t l = 0; l < flows.size(); ++l) {
        const double s_max = grid.lines()[l].s_max;
        const double s = std::max(std::abs(flows[l].s_from), std::abs(flows[l].s_to));
        const double over = std::max(0.0, s - s_max) / s_max;
        m += over * over;
    }
    for (std::size_t g = 0; g < grid.gens().size(); ++g) {
        if (!online(sol, grid, g)) {
            continue;
        }
        const auto& cap = grid.gens()[g].cap;
        const double p = sol.group_p[g];
        const double q = sol.group_q[g];
        const double dp = (std::max(0.0, cap.p_min - p) + std::max(0.0, p - cap.p_max)) / cap.s_rated;
        const double dq = (std::max(0.0, q - cap.q_max) + std::max(0.0, cap.q_min - q)) / cap.s_rated;
        const double s = std::hypot(p, q);
        const double dpf = p > 0.0 && s > 0.0 ? std::max(0.0, grid.gens()[g].cos_phi - p / s) : 0.0;
        m += dp * dp + dq * dq + dpf * dpf;
    }
    return m;
}

struct Candidate {
    std::vector<double> x;
    PowerFlowSolution solution;
    ConstraintReport report;
    double measure = kInf;
};

}  // namespace

std::string to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::Feasible:
            return "feasible";
        case Verdict::Infeasible:
            return "infeasible";
        case Verdict::Discarded:
            return "discarded";
    }
    return "infeasible";
}

Verdict verdict_from_string(const std::string& text) {
    if (text == "feasible") {
        return Verdict::Feasible;
    }
    if (text == "infeasible") {
        return Verdict::Infeasible;
    }
    if (text == "discarded") {
        return Verdict::Discarded;
    }
    throw std::invalid_argument("unknown verdict '" + text + "'");
}

std::string format_violations(const std::vector<Violation>& violations) {
    std::string out;
    for (const auto& v : violations) {
        if (!out.empty()) {
            out += ';';
        }
        out += v.id + ':' + csv::format_double(v.magnitude);
    }
    return out;
}

std::vector<Violation> parse_violations(const std::string& text) {
    std::vector<Violation> out;
    if (text.empty()) {
        return out;
    }
    for (const auto& item : csv::split(text, ';')) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos || colon == 0) {
            throw std::invalid_argument("malformed violation '" + item + "'");
        }
        out.push_back({item.substr(0, colon), csv::parse_double(item.substr(colon + 1))});
    }
    return out;
}

ConstraintReport check_constraints(const PowerFlowSolution& solution, const GridModel& grid) {
    ConstraintReport report;
    auto& out = report.violations;
    for (std::size_t b = 0; b < grid.bus_count(); ++b) {
        const auto& bus = grid.buses()[b];
        const auto id = std::to_string(bus.id);
        if (solution.vm[b] > bus.v_max + kVoltageTol) {
            add(out, "vmax_" + id, solution.vm[b] - bus.v_max);
        }
        if (solution.vm[b] < bus.v_min - kVoltageTol) {
            add(out, "vmin_" + id, bus.v_min - solution.vm[b]);
        }
    }
    const auto flows = line_flows(grid, solution.vm, solution.va);
    for (std::size_t l = 0; l < flows.size(); ++l) {
        const auto& line = grid.lines()[l];
        const double s = std::max(std::abs(flows[l].s_from), std::abs(flows[l].s_to));
        if (s > line.s_max + kPowerTol) {
            add(out, "line_" + std::to_string(line.from) + "_" + std::to_string(line.to), s - line.s_max);
        }
    }
    for (std::size_t g = 0; g < grid.gens().size(); ++g) {
        if (!online(solution, grid, g)) {
            continue;
        }
        const auto& gen = grid.gens()[g];
        const auto label = gen.label();
        const double p = solution.group_p[g];
        const double q = solution.group_q[g];
        if (p < gen.cap.p_min - kPowerTol) {
            add(out, "pmin_" + label, gen.cap.p_min - p);
        }
        if (p > gen.cap.p_max + kPowerTol) {
            add(out, "pmax_" + label, p - gen.cap.p_max);
        }
        const double s = std::hypot(p, q);
        if (p > 0.0 && s > 0.0 && p / s < gen.cos_phi - kPfTol) {
            add(out, "pf_" + label, gen.cos_phi - p / s);
        }
        if (q > gen.cap.q_max + kPowerTol) {
            add(out, "qmax_" + label, q - gen.cap.q_max);
        }
        if (q < gen.cap.q_min - kPowerTol) {
            add(out, "qmin_" + label, gen.cap.q_min - q);
        }
    }
    return report;
}

FeasibilityVerdict classify(const std::vector<double>& adjusted_dims, const PowerFlowSolution& solution,
                            const ConstraintReport& report, const Subregion& cell) {
    FeasibilityVerdict v;
    v.violations = report.violations;
    if (!solution.converged) {
        v.verdict = Verdict::Infeasible;
        if (v.violations.empty()) {
            v.violations.push_back({"pf_nonconvergence", solution.max_mismatch});
        }
    } else if (!report.clean()) {
        v.verdict = Verdict::Infeasible;
    } else if (!contains(cell, adjusted_dims)) {
        v.verdict = Verdict::Discarded;
    } else {
        v.verdict = Verdict::Feasible;
    }
    return v;
}

Adjustment adjust_to_feasible(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op,
                              const Subregion& cell, const FeasibilityOptions& options) {
    const auto base = dispatch_from(grid, space, op);
    const auto slack = grid.slack_group();

    // Redispatchable groups: online and not the slack.
    std::vector<std::size_t> free;
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<double> x0;
    for (std::size_t g = 0; g < grid.gens().size(); ++g) {
        if (g == slack || !(base.group_p[g] > 0.0)) {
            continue;
        }
        const auto& cap = grid.gens()[g].cap;
        free.push_back(g);
        lo.push_back(cap.p_min);
        hi.push_back(cap.p_max);
        x0.push_back(std::clamp(base.group_p[g], cap.p_min, cap.p_max));
    }
    const auto n = free.size();

    auto evaluate = [&](const std::vector<double>& x) {
        Candidate c;
        c.x = x;
        auto d = base;
        for (std::size_t k = 0; k < n; ++k) {
            d.group_p[free[k]] = x[k];
        }
        c.solution = solve_pf(grid, d, options.network, options.pf);
        if (c.solution.converged) {
            c.report = check_constraints(c.solution, grid);
        }
        c.measure = violation_measure(c.solution, grid);
        return c;
    };
    auto distance = [&](const std::vector<double>& x) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double d = x[k] - base.group_p[free[k]];
            s += d * d;
        }
        return s;
    };
    auto is_clean = [](const Candidate& c) { return c.solution.converged && c.report.clean(); };

    Candidate current = evaluate(x0);
    Candidate best = current;
    bool have_clean = is_clean(current);
    Candidate last_unclean;

    for (int outer = 0; !have_clean && n > 0 && outer < options.max_outer_iterations; ++outer) {
        if (!std::isfinite(current.measure)) {
            break;
        }
        // Gradient in box-normalized coordinates by one-sided differences.
        std::vector<double> grad(n, 0.0);
        double norm = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double width = hi[k] - lo[k];
            double h = 1e-4 * width;
            if (current.x[k] + h > hi[k]) {
                h = -h;
            }
            auto xs = current.x;
            xs[k] += h;
            const double m = evaluate(xs).measure;
            grad[k] = std::isfinite(m) ? (m - current.measure) / (h / width) : 0.0;
            norm += grad[k] * grad[k];
        }
        norm = std::sqrt(norm);
        if (!(norm > 0.0)) {
            break;
        }
        double step = options.initial_step;
        bool improved = false;
        Candidate next;
        for (int halving = 0; halving <= options.max_step_halvings; ++halving, step *= 0.5) {
            auto xs = current.x;
            for (std::size_t k = 0; k < n; ++k) {
                const double width = hi[k] - lo[k];
                xs[k] = std::clamp(xs[k] - step * width * grad[k] / norm, lo[k], hi[k]);
            }
            next = evaluate(xs);
            if (next.measure < current.measure) {
                improved = true;
                break;
            }
        }
        if (!improved) {
            break;
        }
        const double gain = (current.measure - next.measure) / current.measure;
        last_unclean = std::move(current);
        current = std::move(next);
        if (is_clean(current)) {
            have_clean = true;
            best = current;
            // The boundary between the last unclean and the first clean iterate may hold a
            // clean point closer to the sampled setpoints.
            auto a = last_unclean.x;
            auto b = current.x;
            for (int i = 0; i < options.bisection_steps; ++i) {
                std::vector<double> mid(n);
                for (std::size_t k = 0; k < n; ++k) {
                    mid[k] = 0.5 * (a[k] + b[k]);
                }
                auto c = evaluate(mid);
                if (is_clean(c)) {
                    b = mid;
                    if (distance(mid) < distance(best.x)) {
                        best = std::move(c);
                    }
                } else {
                    a = mid;
                }
            }
            break;
        }
        if (gain < options.min_relative_improvement) {
            break;
        }
    }
    if (!have_clean) {
        best = current;
    }

    Adjustment out;
    out.solution = best.solution;
    out.adjusted = op;
    out.verdict.adjustment_distance = distance(best.x);

    // Per-element values follow the adjusted dispatch; the slack reports its actual output.
    std::vector<double> group_p = base.group_p;
    for (std::size_t k = 0; k < n; ++k) {
        group_p[free[k]] = best.x[k];
    }
    if (best.solution.converged) {
        group_p[slack] = best.solution.group_p[slack];
    }
    double total_sg = 0.0;
    double total_ibr = 0.0;
    double total_gfm = 0.0;
    for (std::size_t v = 0; v < space.vars().size(); ++v) {
        const auto& spec = space.vars()[v];
        if (spec.role == VarRole::SG) {
            out.adjusted.var_values[v] = group_p[spec.element];
            total_sg += group_p[spec.element];
        } else if (spec.role == VarRole::IBR) {
            out.adjusted.var_values[v] = group_p[spec.element];
            total_ibr += group_p[spec.element];
        }
    }
    for (const auto v : space.vars_with_role(VarRole::GFM)) {
        const auto g = space.vars()[v].element;
        const double old_ibr = base.group_p[g];
        const double scale = old_ibr > 0.0 ? group_p[g] / old_ibr : 0.0;
        out.adjusted.var_values[v] = op.var_values[v] * scale;
        total_gfm += out.adjusted.var_values[v];
        if (auto gfl = space.find_var(VarRole::GFL, g)) {
            out.adjusted.var_values[*gfl] = std::max(0.0, group_p[g] - out.adjusted.var_values[v]);
        }
    }

    out.adjusted_dims = op.dim_values;
    if (auto d = space.dim_with_role(DimRole::TotalSG)) {
        out.adjusted_dims[*d] = total_sg;
    }
    if (auto d = space.dim_with_role(DimRole::TotalIBR)) {
        out.adjusted_dims[*d] = total_ibr;
    }
    if (auto d = space.dim_with_role(DimRole::GfmShare); d && total_ibr > 0.0) {
        // Proportional rescaling keeps each group's share; the total share only moves when
        // groups are rescaled unevenly.
        const double sampled_gfm = op.dim_values[*d];
        double sampled_ibr = 0.0;
        for (const auto v : space.vars_with_role(VarRole::IBR)) {
            sampled_ibr += op.var_values[v];
        }
        double sampled_total_gfm = 0.0;
        for (const auto v : space.vars_with_role(VarRole::GFM)) {
            sampled_total_gfm += op.var_values[v];
        }
        const bool unchanged = std::abs(total_gfm - sampled_total_gfm) <= 1e-12 * std::max(1.0, sampled_total_gfm) &&
                               std::abs(total_ibr - sampled_ibr) <= 1e-12 * std::max(1.0, sampled_ibr);
        const bool single = space.vars_with_role(VarRole::IBR).size() <= 1;
        out.adjusted_dims[*d] = unchanged || single ? sampled_gfm : total_gfm / total_ibr;
    }

    const auto verdict = classify(out.adjusted_dims, best.solution, best.report, cell);
    out.verdict.verdict = verdict.verdict;
    out.verdict.violations = verdict.violations;
    return out;
}

}  // namespace stabgen
