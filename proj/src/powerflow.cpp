#include "stabgen/powerflow.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

namespace stabgen {

namespace {

using cd = std::complex<double>;

constexpr double kSwitchMargin = 1e-9;

struct NrOutcome {
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
};

NrOutcome newton_raphson(const ComplexMatrix& y, const std::vector<PfBus>& buses, std::vector<double>& vm,
                         std::vector<double>& va, const PfOptions& options) {
    const auto n = static_cast<Eigen::Index>(buses.size());
    std::vector<Eigen::Index> pvpq;
    std::vector<Eigen::Index> pq;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (buses[i].kind != BusKind::Slack) {
            pvpq.push_back(i);
        }
        if (buses[i].kind == BusKind::PQ) {
            pq.push_back(i);
        }
    }
    const auto npvpq = static_cast<Eigen::Index>(pvpq.size());
    const auto npq = static_cast<Eigen::Index>(pq.size());
    const auto dim = npvpq + npq;

    NrOutcome out;
    Eigen::VectorXcd v(n);
    Eigen::VectorXd mismatch(dim);
    Eigen::MatrixXd jac(dim, dim);
    for (int iter = 0;; ++iter) {
        for (Eigen::Index i = 0; i < n; ++i) {
            v(i) = std::polar(vm[i], va[i]);
        }
        const Eigen::VectorXcd ibus = y * v;
        for (Eigen::Index k = 0; k < npvpq; ++k) {
            const auto i = pvpq[k];
            mismatch(k) = buses[i].p_spec - (v(i) * std::conj(ibus(i))).real();
        }
        for (Eigen::Index k = 0; k < npq; ++k) {
            const auto i = pq[k];
            mismatch(npvpq + k) = buses[i].q_spec - (v(i) * std::conj(ibus(i))).imag();
        }
        out.max_mismatch = dim > 0 ? mismatch.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(out.max_mismatch)) {
            out.converged = false;
            return out;
        }
        if (out.max_mismatch < options.tolerance) {
            out.converged = true;
            return out;
        }
        if (iter >= options.max_iterations) {
            return out;
        }

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)); dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        const Eigen::VectorXcd vnorm = v.array() / v.array().abs();
        ComplexMatrix ds_dva = -(y * v.asDiagonal()).conjugate();
        ds_dva.diagonal() += ibus.conjugate();
        ds_dva = (cd(0.0, 1.0) * v).asDiagonal() * ds_dva;
        ComplexMatrix ds_dvm = v.asDiagonal() * (y * vnorm.asDiagonal()).conjugate();
        ds_dvm.diagonal() += ibus.conjugate().cwiseProduct(vnorm);

        for (Eigen::Index r = 0; r < npvpq; ++r) {
            for (Eigen::Index c = 0; c < npvpq; ++c) {
                jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
            }
            for (Eigen::Index c = 0; c < npq; ++c) {
                jac(r, npvpq + c) = ds_dvm(pvpq[r], pq[c]).real();
            }
        }
        for (Eigen::Index r = 0; r < npq; ++r) {
            for (Eigen::Index c = 0; c < npvpq; ++c) {
                jac(npvpq + r, c) = ds_dva(pq[r], pvpq[c]).imag();
            }
            for (Eigen::Index c = 0; c < npq; ++c) {
                jac(npvpq + r, npvpq + c) = ds_dvm(pq[r], pq[c]).imag();
            }
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
        const Eigen::VectorXd dx = lu.solve(mismatch);
        if (!dx.allFinite()) {
            return out;
        }
        for (Eigen::Index k = 0; k < npvpq; ++k) {
            va[pvpq[k]] += dx(k);
        }
        for (Eigen::Index k = 0; k < npq; ++k) {
            vm[pq[k]] += dx(npvpq + k);
        }
        ++out.iterations;
        for (const auto i : pq) {
            if (!(vm[i] > 0.0)) {
                return out;
            }
        }
    }
}

double tan_phi(double pf) {
    if (pf >= 1.0) {
        return 0.0;
    }
    return std::tan(std::acos(pf));
}

}  // namespace

std::vector<std::complex<double>> bus_injections(const ComplexMatrix& y, const std::vector<double>& vm,
                                                 const std::vector<double>& va) {
    const auto n = static_cast<Eigen::Index>(vm.size());
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = std::polar(vm[i], va[i]);
    }
    const Eigen::VectorXcd ibus = y * v;
    std::vector<cd> s(vm.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        s[i] = v(i) * std::conj(ibus(i));
    }
    return s;
}

PfResult solve_power_flow(const PfCase& pf_case, const PfOptions& options) {
    const auto n = pf_case.buses.size();
    std::vector<PfBus> buses = pf_case.buses;
    PfResult result;
    result.vm.assign(n, 1.0);
    result.va.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < pf_case.vm_start.size()) {
            result.vm[i] = pf_case.vm_start[i];
        }
        if (buses[i].kind != BusKind::PQ) {
            result.vm[i] = buses[i].v_set;
        }
    }

    for (std::size_t round = 0; round <= n; ++round) {
        const auto nr = newton_raphson(pf_case.y, buses, result.vm, result.va, options);
        result.iterations += nr.iterations;
        result.max_mismatch = nr.max_mismatch;
        result.converged = nr.converged;
        if (!nr.converged || !options.enforce_q_limits) {
            break;
        }
        const auto s = bus_injections(pf_case.y, result.vm, result.va);
        bool switched = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (buses[i].kind != BusKind::PV) {
                continue;
            }
            const double q = s[i].imag();
            if (q > buses[i].q_max + kSwitchMargin) {
                buses[i].kind = BusKind::PQ;
                buses[i].q_spec = buses[i].q_max;
                switched = true;
            } else if (q < buses[i].q_min - kSwitchMargin) {
                buses[i].kind = BusKind::PQ;
                buses[i].q_spec = buses[i].q_min;
                switched = true;
            }
        }
        if (!switched) {
            break;
        }
        result.converged = false;
    }
    result.s_injection = bus_injections(pf_case.y, result.vm, result.va);
    result.final_kinds.clear();
    for (const auto& b : buses) {
        result.final_kinds.push_back(b.kind);
    }
    return result;
}

Dispatch dispatch_from(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op) {
    Dispatch d;
    d.group_p.assign(grid.gens().size(), 0.0);
    d.load_p.assign(grid.loads().size(), 0.0);
    for (std::size_t v = 0; v < space.vars().size(); ++v) {
        const auto& spec = space.vars()[v];
        if (spec.role == VarRole::SG || spec.role == VarRole::IBR) {
            d.group_p[spec.element] = op.var_values.at(v);
        } else if (spec.role == VarRole::Load) {
            d.load_p[spec.element] = op.var_values.at(v);
        }
    }
    d.voltage = op.voltage_profile;
    if (d.voltage.size() != grid.bus_count()) {
        d.voltage.assign(grid.bus_count(), 1.0);
    }
    return d;
}

PfCase make_pf_case(const GridModel& grid, const Dispatch& dispatch, const NetworkOptions& net) {
    const auto n = grid.bus_count();
    const double base = grid.base_mva();
    const double load_tan = tan_phi(net.load_power_factor);
    PfCase pf;
    pf.y = build_admittance(grid);
    pf.buses.resize(n);
    pf.vm_start = dispatch.voltage;
    std::vector<double> q_load(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        pf.buses[i].kind = grid.buses()[i].kind;
        pf.buses[i].v_set = dispatch.voltage.at(i);
    }
    for (std::size_t l = 0; l < grid.loads().size(); ++l) {
        const auto b = grid.index_of(grid.loads()[l].bus);
        pf.buses[b].p_spec -= dispatch.load_p[l] / base;
        q_load[b] += dispatch.load_p[l] * load_tan / base;
        pf.buses[b].q_spec -= dispatch.load_p[l] * load_tan / base;
    }
    std::vector<double> q_min(n, 0.0);
    std::vector<double> q_max(n, 0.0);
    for (std::size_t g = 0; g < grid.gens().size(); ++g) {
        const auto& gen = grid.gens()[g];
        const auto b = grid.index_of(gen.bus);
        pf.buses[b].p_spec += dispatch.group_p[g] / base;
        if (dispatch.group_p[g] > 0.0 || g == grid.slack_group()) {
            q_min[b] += gen.cap.q_min / base;
            q_max[b] += gen.cap.q_max / base;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (pf.buses[i].kind == BusKind::PV) {
            pf.buses[i].q_min = q_min[i] - q_load[i];
            pf.buses[i].q_max = q_max[i] - q_load[i];
        }
    }
    return pf;
}

PowerFlowSolution solve_pf(const GridModel& grid, const Dispatch& dispatch, const NetworkOptions& net,
                           const PfOptions& options) {
    const auto pf_case = make_pf_case(grid, dispatch, net);
    const auto result = solve_power_flow(pf_case, options);
    const double base = grid.base_mva();
    const double load_tan = tan_phi(net.load_power_factor);

    PowerFlowSolution sol;
    sol.vm = result.vm;
    sol.va = result.va;
    sol.converged = result.converged;
    sol.iterations = result.iterations;
    sol.max_mismatch = result.max_mismatch;
    sol.group_p = dispatch.group_p;
    sol.group_q.assign(grid.gens().size(), 0.0);
    sol.load_p = dispatch.load_p;
    sol.load_q.resize(dispatch.load_p.size());
    std::vector<double> bus_load_p(grid.bus_count(), 0.0);
    std::vector<double> bus_load_q(grid.bus_count(), 0.0);
    for (std::size_t l = 0; l < grid.loads().size(); ++l) {
        const auto b = grid.index_of(grid.loads()[l].bus);
        sol.load_q[l] = dispatch.load_p[l] * load_tan;
        bus_load_p[b] += dispatch.load_p[l];
        bus_load_q[b] += sol.load_q[l];
    }

    // Slack group takes the active-power balance at the slack bus.
    const auto slack_bus = grid.slack_index();
    const auto slack_group = grid.slack_group();
    double other_p = 0.0;
    for (const auto g : grid.groups_at(slack_bus)) {
        if (g != slack_group) {
            other_p += dispatch.group_p[g];
        }
    }
    sol.group_p[slack_group] = result.s_injection[slack_bus].real() * base + bus_load_p[slack_bus] - other_p;

    for (std::size_t b = 0; b < grid.bus_count(); ++b) {
        const auto groups = grid.groups_at(b);
        if (groups.empty()) {
            continue;
        }
        const double q_gen = result.s_injection[b].imag() * base + bus_load_q[b];
        double weight = 0.0;
        for (const auto g : groups) {
            if (sol.group_p[g] > 0.0 || g == slack_group) {
                weight += grid.gens()[g].cap.q_max;
            }
        }
        for (const auto g : groups) {
            if (weight > 0.0 && (sol.group_p[g] > 0.0 || g == slack_group)) {
                sol.group_q[g] = q_gen * grid.gens()[g].cap.q_max / weight;
            }
        }
    }
    return sol;
}

PowerFlowSolution solve_pf(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op,
                           const NetworkOptions& net, const PfOptions& options) {
    return solve_pf(grid, dispatch_from(grid, space, op), net, options);
}

std::vector<LineFlow> line_flows(const GridModel& grid, const std::vector<double>& vm, const std::vector<double>& va) {
    std::vector<LineFlow> flows;
    const double base = grid.base_mva();
    for (const auto& line : grid.lines()) {
        const auto f = grid.index_of(line.from);
        const auto t = grid.index_of(line.to);
        const cd vf = std::polar(vm[f], va[f]);
        const cd vt = std::polar(vm[t], va[t]);
        const cd series = 1.0 / cd(line.r, line.x);
        const cd half_shunt(0.0, line.b / 2.0);
        const cd i_from = (vf - vt) * series + vf * half_shunt;
        const cd i_to = (vt - vf) * series + vt * half_shunt;
        flows.push_back({vf * std::conj(i_from) * base, vt * std::conj(i_to) * base});
    }
    return flows;
}

}  // namespace stabgen
