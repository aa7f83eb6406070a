#include "stabgen/smallsignal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace stabgen {

namespace {

using cd = std::complex<double>;
constexpr cd kJ{0.0, 1.0};

/// Steady-state constants of a unit, derived from its terminal conditions.
struct UnitConst {
    double m = 1.0;
    cd y;               // source admittance, system pu (zero for current sources)
    double e_mag = 0.0; // SG internal EMF or GFOR voltage setpoint
    double angle0 = 0.0;
    double p0 = 0.0;    // machine pu
    double q0 = 0.0;
    double v_mag0 = 0.0;
};

UnitConst unit_const(const DynamicUnit& u) {
    UnitConst c;
    c.m = u.scale();
    if (!(c.m > 0.0)) {
        throw ModelError("unit " + u.id + " needs a positive rating");
    }
    if (std::abs(u.v0) <= 0.0) {
        throw ModelError("unit " + u.id + " has zero terminal voltage");
    }
    c.p0 = u.s0.real() / c.m;
    c.q0 = u.s0.imag() / c.m;
    c.v_mag0 = std::abs(u.v0);
    const cd i0 = std::conj(u.s0 / u.v0);
    switch (u.kind) {
        case UnitKind::SG:
        case UnitKind::GFOR: {
            const double x = u.kind == UnitKind::SG ? u.sg.x_d : u.gfor.x_c;
            c.y = c.m / cd(0.0, x);
            const cd e0 = u.v0 + i0 / c.y;
            c.e_mag = std::abs(e0);
            c.angle0 = std::arg(e0);
            break;
        }
        case UnitKind::GFOL: {
            c.y = 0.0;
            const cd vc = u.v0 + cd(0.0, u.gfol.x_f / c.m) * i0;
            c.angle0 = std::arg(vc);
            c.v_mag0 = std::abs(vc);
            c.q0 = (vc * std::conj(i0)).imag() / c.m;
            break;
        }
    }
    return c;
}

/// Norton current injected at the bus and its tangent.
void unit_norton(const DynamicUnit& u, const UnitConst& c, const double* x, const double* dx, cd& j, cd& dj) {
    switch (u.kind) {
        case UnitKind::SG: {
            const cd e = std::polar(c.e_mag, x[0]);
            j = c.y * e;
            dj = c.y * kJ * e * dx[0];
            break;
        }
        case UnitKind::GFOR: {
            const double mag = c.e_mag - u.gfor.k_q * (x[2] - c.q0);
            const double dmag = -u.gfor.k_q * dx[2];
            const std::size_t a = u.gfor.t_v > 0.0 ? 3 : 0;
            const cd rot = std::polar(1.0, x[a]);
            j = c.y * mag * rot;
            dj = c.y * (dmag + kJ * mag * dx[a]) * rot;
            break;
        }
        case UnitKind::GFOL: {
            const auto& p = u.gfol;
            const double vf = x[4];
            const double iq = -(c.q0 - p.k_v * (vf - c.v_mag0)) / vf;
            const double diq = (c.q0 + p.k_v * c.v_mag0) / (vf * vf) * dx[4];
            const cd rot = std::polar(1.0, x[0]);
            const cd i_local(x[2], iq);
            j = c.m * i_local * rot;
            dj = c.m * (cd(dx[2], diq) + kJ * i_local * dx[0]) * rot;
            break;
        }
    }
}

/// State derivatives and their tangent, given the terminal voltage and its tangent.
void unit_rhs(const DynamicUnit& u, const UnitConst& c, const double* x, const double* dx, cd v, cd dv, double* f,
              double* df) {
    cd j;
    cd dj;
    unit_norton(u, c, x, dx, j, dj);
    // Terminal current into the network.
    const cd it = j - c.y * v;
    const cd dit = dj - c.y * dv;
    switch (u.kind) {
        case UnitKind::SG: {
            const auto& p = u.sg;
            const cd e = std::polar(c.e_mag, x[0]);
            const cd de = kJ * e * dx[0];
            const double pe = (e * std::conj(it)).real() / c.m;
            const double dpe = (de * std::conj(it) + e * std::conj(dit)).real() / c.m;
            const double pm = p.governor ? x[2] : c.p0;
            const double dpm = p.governor ? dx[2] : 0.0;
            f[0] = kOmegaBase * x[1];
            df[0] = kOmegaBase * dx[1];
            f[1] = (pm - pe - p.damping_d * x[1]) / (2.0 * p.inertia_h);
            df[1] = (dpm - dpe - p.damping_d * dx[1]) / (2.0 * p.inertia_h);
            if (p.governor) {
                f[2] = (c.p0 - x[1] / p.droop_r - x[2]) / p.t_g;
                df[2] = (-dx[1] / p.droop_r - dx[2]) / p.t_g;
            }
            break;
        }
        case UnitKind::GFOR: {
            const auto& p = u.gfor;
            const cd s = v * std::conj(it);
            const cd ds = dv * std::conj(it) + v * std::conj(dit);
            f[0] = p.k_p * (c.p0 - x[1]);
            df[0] = -p.k_p * dx[1];
            f[1] = (s.real() / c.m - x[1]) / p.tau_w;
            df[1] = (ds.real() / c.m - dx[1]) / p.tau_w;
            f[2] = (s.imag() / c.m - x[2]) / p.tau_u;
            df[2] = (ds.imag() / c.m - dx[2]) / p.tau_u;
            if (p.t_v > 0.0) {
                f[3] = (x[0] - x[3]) / p.t_v;
                df[3] = (dx[0] - dx[3]) / p.t_v;
            }
            break;
        }
        case UnitKind::GFOL: {
            const auto& p = u.gfol;
            // Converter-side voltage behind the coupling reactance.
            const cd zf(0.0, p.x_f / c.m);
            dv += zf * dj;
            v += zf * j;
            const cd rot = std::polar(1.0, -x[0]);
            const double eq = (v * rot).imag();
            const double deq = ((dv - kJ * v * dx[0]) * rot).imag();
            const double w = p.pll_kp * eq + x[1];
            const double dw = p.pll_kp * deq + dx[1];
            const cd s = v * std::conj(it);
            const cd ds = dv * std::conj(it) + v * std::conj(dit);
            const double vm = std::abs(v);
            const double dvm = (std::conj(v) * dv).real() / vm;
            f[0] = w;
            df[0] = dw;
            f[1] = p.pll_ki * eq;
            df[1] = p.pll_ki * deq;
            f[2] = (c.p0 - p.k_f * x[3] - s.real() / c.m) / p.t_p;
            df[2] = (-p.k_f * dx[3] - ds.real() / c.m) / p.t_p;
            f[3] = (w / kOmegaBase - x[3]) / p.tau_w;
            df[3] = (dw / kOmegaBase - dx[3]) / p.tau_w;
            f[4] = (vm - x[4]) / p.tau_u;
            df[4] = (dvm - dx[4]) / p.tau_u;
            break;
        }
    }
}

void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw ModelError(std::string("parameter ") + name + " must be positive");
    }
}

void validate(const DynamicUnit& u) {
    switch (u.kind) {
        case UnitKind::SG:
            require_positive(u.sg.inertia_h, "sg_h");
            require_positive(u.sg.t_g, "t_g");
            require_positive(u.sg.x_d, "x_d");
            require_positive(u.sg.droop_r, "droop_r");
            break;
        case UnitKind::GFOR:
            require_positive(u.gfor.k_p, "gfor_kp");
            require_positive(u.gfor.k_q, "gfor_kq");
            require_positive(u.gfor.tau_u, "gfor_tau_u");
            require_positive(u.gfor.tau_w, "gfor_tau_w");
            require_positive(u.gfor.x_c, "x_c");
            if (!(u.gfor.t_v >= 0.0) || !std::isfinite(u.gfor.t_v)) {
                throw ModelError("parameter gfor_tv must be non-negative");
            }
            break;
        case UnitKind::GFOL:
            require_positive(u.gfol.pll_kp, "pll_kp");
            require_positive(u.gfol.pll_ki, "pll_ki");
            require_positive(u.gfol.t_p, "t_p");
            require_positive(u.gfol.k_f, "gfol_kf");
            require_positive(u.gfol.k_v, "gfol_kv");
            require_positive(u.gfol.tau_u, "gfol_tau_u");
            require_positive(u.gfol.tau_w, "gfol_tau_w");
            break;
    }
}

bool same_params(const DynamicUnit& a, const DynamicUnit& b) {
    switch (a.kind) {
        case UnitKind::SG:
            return a.sg.inertia_h == b.sg.inertia_h && a.sg.damping_d == b.sg.damping_d &&
                   a.sg.droop_r == b.sg.droop_r && a.sg.t_g == b.sg.t_g && a.sg.x_d == b.sg.x_d &&
                   a.sg.governor == b.sg.governor;
        case UnitKind::GFOR:
            return a.gfor.k_p == b.gfor.k_p && a.gfor.k_q == b.gfor.k_q && a.gfor.tau_u == b.gfor.tau_u &&
                   a.gfor.tau_w == b.gfor.tau_w && a.gfor.x_c == b.gfor.x_c && a.gfor.t_v == b.gfor.t_v;
        case UnitKind::GFOL:
            return a.gfol.x_f == b.gfol.x_f && a.gfol.pll_kp == b.gfol.pll_kp && a.gfol.pll_ki == b.gfol.pll_ki && a.gfol.t_p == b.gfol.t_p &&
                   a.gfol.k_f == b.gfol.k_f && a.gfol.k_v == b.gfol.k_v && a.gfol.tau_u == b.gfol.tau_u &&
                   a.gfol.tau_w == b.gfol.tau_w;
    }
    return false;
}

bool close(cd a, cd b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }

}  // namespace

void validate(const ModelParams& params) {
    for (const auto kind : {UnitKind::SG, UnitKind::GFOR, UnitKind::GFOL}) {
        DynamicUnit u;
        u.kind = kind;
        u.sg = params.sg;
        u.gfor = params.gfor;
        u.gfol = params.gfol;
        validate(u);
    }
    if (!(params.sg.damping_d >= 0.0) || !(params.gfol.x_f >= 0.0)) {
        throw ModelError("parameters sg_d and gfol_xf must be non-negative");
    }
}

bool is_control_param(const std::string& name) {
    ModelParams p;
    try {
        set_control_param(p, name, 1.0);
        return true;
    } catch (const ModelError&) {
        return false;
    }
}

void set_control_param(ModelParams& params, const std::string& name, double value) {
    if (name == "tau_u") {
        params.gfor.tau_u = value;
        params.gfol.tau_u = value;
    } else if (name == "tau_w") {
        params.gfor.tau_w = value;
        params.gfol.tau_w = value;
    } else if (name == "gfor_tau_u") {
        params.gfor.tau_u = value;
    } else if (name == "gfor_tau_w") {
        params.gfor.tau_w = value;
    } else if (name == "gfol_tau_u") {
        params.gfol.tau_u = value;
    } else if (name == "gfol_tau_w") {
        params.gfol.tau_w = value;
    } else if (name == "gfor_kp") {
        params.gfor.k_p = value;
    } else if (name == "gfor_kq") {
        params.gfor.k_q = value;
    } else if (name == "gfor_tv") {
        params.gfor.t_v = value;
    } else if (name == "pll_kp") {
        params.gfol.pll_kp = value;
    } else if (name == "pll_ki") {
        params.gfol.pll_ki = value;
    } else if (name == "gfol_kf") {
        params.gfol.k_f = value;
    } else if (name == "gfol_kv") {
        params.gfol.k_v = value;
    } else if (name == "sg_h") {
        params.sg.inertia_h = value;
    } else if (name == "sg_d") {
        params.sg.damping_d = value;
    } else if (name == "sg_r") {
        params.sg.droop_r = value;
    } else if (name == "sg_tg") {
        params.sg.t_g = value;
    } else if (name == "sg_xd") {
        params.sg.x_d = value;
    } else if (name == "gfor_xc") {
        params.gfor.x_c = value;
    } else if (name == "gfol_tp") {
        params.gfol.t_p = value;
    } else if (name == "gfol_xf") {
        params.gfol.x_f = value;
    } else {
        throw ModelError("unknown control parameter '" + name + "'");
    }
}

double control_param(const ModelParams& p, const std::string& name) {
    using Getter = double (*)(const ModelParams&);
    static const std::vector<std::pair<std::string, Getter>> getters{
        {"tau_u", [](const ModelParams& m) { return m.gfor.tau_u; }},
        {"tau_w", [](const ModelParams& m) { return m.gfor.tau_w; }},
        {"gfor_tau_u", [](const ModelParams& m) { return m.gfor.tau_u; }},
        {"gfor_tau_w", [](const ModelParams& m) { return m.gfor.tau_w; }},
        {"gfol_tau_u", [](const ModelParams& m) { return m.gfol.tau_u; }},
        {"gfol_tau_w", [](const ModelParams& m) { return m.gfol.tau_w; }},
        {"gfor_kp", [](const ModelParams& m) { return m.gfor.k_p; }},
        {"gfor_kq", [](const ModelParams& m) { return m.gfor.k_q; }},
        {"gfor_tv", [](const ModelParams& m) { return m.gfor.t_v; }},
        {"gfor_xc", [](const ModelParams& m) { return m.gfor.x_c; }},
        {"pll_kp", [](const ModelParams& m) { return m.gfol.pll_kp; }},
        {"pll_ki", [](const ModelParams& m) { return m.gfol.pll_ki; }},
        {"gfol_kf", [](const ModelParams& m) { return m.gfol.k_f; }},
        {"gfol_kv", [](const ModelParams& m) { return m.gfol.k_v; }},
        {"gfol_tp", [](const ModelParams& m) { return m.gfol.t_p; }},
        {"gfol_xf", [](const ModelParams& m) { return m.gfol.x_f; }},
        {"sg_h", [](const ModelParams& m) { return m.sg.inertia_h; }},
        {"sg_d", [](const ModelParams& m) { return m.sg.damping_d; }},
        {"sg_r", [](const ModelParams& m) { return m.sg.droop_r; }},
        {"sg_tg", [](const ModelParams& m) { return m.sg.t_g; }},
        {"sg_xd", [](const ModelParams& m) { return m.sg.x_d; }},
    };
    for (const auto& [key, get] : getters) {
        if (key == name) {
            return get(p);
        }
    }
    throw ModelError("unknown control parameter '" + name + "'");
}

const std::vector<std::string>& model_param_names() {
    static const std::vector<std::string> names{"gfor_tau_u", "gfor_tau_w", "gfol_tau_u", "gfol_tau_w", "gfor_kp",
                                                "gfor_kq",    "gfor_tv",    "gfor_xc",    "pll_kp",     "pll_ki",
                                                "gfol_kf",    "gfol_kv",    "gfol_tp",    "gfol_xf",    "sg_h",
                                                "sg_d",       "sg_r",       "sg_tg",      "sg_xd"};
    return names;
}

ModelParams params_for(const OperatingSpace& space, const std::vector<double>& dim_values,
                       const ModelParams& defaults) {
    ModelParams p = defaults;
    for (std::size_t d = 0; d < space.dims().size(); ++d) {
        if (space.dims()[d].role == DimRole::Control) {
            set_control_param(p, space.dims()[d].name, dim_values.at(d));
        }
    }
    return p;
}

std::string to_string(UnitKind kind) {
    switch (kind) {
        case UnitKind::SG:
            return "SG";
        case UnitKind::GFOR:
            return "GFOR";
        case UnitKind::GFOL:
            return "GFOL";
    }
    return "SG";
}

std::size_t DynamicUnit::state_count() const {
    switch (kind) {
        case UnitKind::SG:
            return sg.governor ? 3 : 2;
        case UnitKind::GFOR:
            return gfor.t_v > 0.0 ? 4 : 3;
        case UnitKind::GFOL:
            return 5;
    }
    return 0;
}

std::vector<std::size_t> DynamicUnit::angle_states() const {
    if (kind == UnitKind::GFOR && gfor.t_v > 0.0) {
        return {0, 3};
    }
    return {0};
}

std::vector<std::string> DynamicUnit::state_names() const {
    switch (kind) {
        case UnitKind::SG:
            if (sg.governor) {
                return {"delta", "omega", "p_m"};
            }
            return {"delta", "omega"};
        case UnitKind::GFOR:
            if (gfor.t_v > 0.0) {
                return {"theta", "p_f", "q_f", "theta_v"};
            }
            return {"theta", "p_f", "q_f"};
        case UnitKind::GFOL:
            return {"theta_pll", "x_pll", "i_d", "omega_f", "v_f"};
    }
    return {};
}

std::complex<double> DynamicUnit::shunt() const { return unit_const(*this).y; }

std::vector<double> DynamicUnit::equilibrium() const {
    const auto c = unit_const(*this);
    switch (kind) {
        case UnitKind::SG:
            if (sg.governor) {
                return {c.angle0, 0.0, c.p0};
            }
            return {c.angle0, 0.0};
        case UnitKind::GFOR:
            if (gfor.t_v > 0.0) {
                return {c.angle0, c.p0, c.q0, c.angle0};
            }
            return {c.angle0, c.p0, c.q0};
        case UnitKind::GFOL:
            return {c.angle0, 0.0, c.p0 / c.v_mag0, 0.0, c.v_mag0};
    }
    return {};
}

std::vector<DynamicUnit> build_units(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op,
                                     const PowerFlowSolution& solution, const ModelParams& params) {
    std::vector<DynamicUnit> units;
    const double base = grid.base_mva();
    for (std::size_t g = 0; g < grid.gens().size(); ++g) {
        const double p = solution.group_p[g];
        if (!(p > 0.0) && g != grid.slack_group()) {
            continue;
        }
        const auto& gen = grid.gens()[g];
        const auto b = grid.index_of(gen.bus);
        DynamicUnit u;
        u.bus = b;
        u.base_mva = base;
        u.v0 = std::polar(solution.vm[b], solution.va[b]);
        u.sg = params.sg;
        u.gfor = params.gfor;
        u.gfol = params.gfol;
        const cd s(p / base, solution.group_q[g] / base);
        if (gen.tech == Tech::SG) {
            u.id = "SG_" + std::to_string(gen.bus);
            u.kind = UnitKind::SG;
            u.s_rated = gen.cap.s_rated;
            u.s0 = s;
            units.push_back(u);
            continue;
        }
        double share = 0.0;
        const auto gfm = space.find_var(VarRole::GFM, g);
        const auto ibr = space.find_var(VarRole::IBR, g);
        if (gfm && ibr && op.var_values.at(*ibr) > 0.0) {
            share = std::clamp(op.var_values.at(*gfm) / op.var_values.at(*ibr), 0.0, 1.0);
        }
        if (share > 0.0) {
            auto f = u;
            f.id = "GFOR_" + std::to_string(gen.bus);
            f.kind = UnitKind::GFOR;
            f.s_rated = gen.cap.s_rated * share;
            f.s0 = s * share;
            units.push_back(f);
        }
        if (share < 1.0) {
            auto f = u;
            f.id = "GFOL_" + std::to_string(gen.bus);
            f.kind = UnitKind::GFOL;
            f.s_rated = gen.cap.s_rated * (1.0 - share);
            f.s0 = s * (1.0 - share);
            units.push_back(f);
        }
    }
    return units;
}

DynamicSystem::DynamicSystem(const ComplexMatrix& y_bus, std::vector<cd> load_admittance,
                             std::vector<DynamicUnit> units, std::vector<FixedBus> fixed)
    : units_(std::move(units)), fixed_(std::move(fixed)) {
    const auto n = y_bus.rows();
    if (units_.empty()) {
        throw ModelError("linearize: no dynamic sources");
    }
    if (static_cast<Eigen::Index>(load_admittance.size()) != n) {
        throw ModelError("linearize: load admittance size mismatch");
    }
    ComplexMatrix y_aug = y_bus;
    for (Eigen::Index i = 0; i < n; ++i) {
        y_aug(i, i) += load_admittance[i];
    }
    offsets_.push_back(0);
    for (const auto& u : units_) {
        validate(u);
        if (static_cast<Eigen::Index>(u.bus) >= n) {
            throw ModelError("unit " + u.id + " references a bus outside the network");
        }
        y_aug(u.bus, u.bus) += u.shunt();
        offsets_.push_back(offsets_.back() + u.state_count());
    }
    free_index_.assign(n, 0);
    for (const auto& f : fixed_) {
        free_index_.at(f.bus) = -1;
    }
    for (const auto& u : units_) {
        if (free_index_[u.bus] < 0) {
            throw ModelError("unit " + u.id + " sits on a fixed-voltage bus");
        }
    }
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (free_index_[i] >= 0) {
            free_index_[i] = static_cast<long>(free.size());
            free.push_back(i);
        }
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    ComplexMatrix y_ff(nf, nf);
    for (Eigen::Index r = 0; r < nf; ++r) {
        for (Eigen::Index c = 0; c < nf; ++c) {
            y_ff(r, c) = y_aug(free[r], free[c]);
        }
    }
    Eigen::PartialPivLU<ComplexMatrix> lu(y_ff);
    if (!(lu.rcond() > 1e-14)) {
        throw ModelError("linearize: singular network reduction");
    }
    z_ = lu.inverse();
    Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(nf);
    for (const auto& f : fixed_) {
        for (Eigen::Index r = 0; r < nf; ++r) {
            inj(r) -= y_aug(free[r], f.bus) * f.voltage;
        }
    }
    v_fixed_part_ = z_ * inj;
}

Eigen::VectorXd DynamicSystem::equilibrium() const {
    Eigen::VectorXd x(state_count());
    for (std::size_t k = 0; k < units_.size(); ++k) {
        const auto eq = units_[k].equilibrium();
        for (std::size_t i = 0; i < eq.size(); ++i) {
            x(offsets_[k] + i) = eq[i];
        }
    }
    return x;
}

void DynamicSystem::evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& dx, Eigen::VectorXd& f,
                             Eigen::VectorXd& df) const {
    const auto nf = z_.rows();
    Eigen::VectorXcd j = Eigen::VectorXcd::Zero(nf);
    Eigen::VectorXcd dj = Eigen::VectorXcd::Zero(nf);
    std::vector<UnitConst> consts;
    consts.reserve(units_.size());
    for (std::size_t k = 0; k < units_.size(); ++k) {
        consts.push_back(unit_const(units_[k]));
        cd uj;
        cd duj;
        unit_norton(units_[k], consts.back(), x.data() + offsets_[k], dx.data() + offsets_[k], uj, duj);
        j(free_index_[units_[k].bus]) += uj;
        dj(free_index_[units_[k].bus]) += duj;
    }
    const Eigen::VectorXcd v = z_ * j + v_fixed_part_;
    const Eigen::VectorXcd dv = z_ * dj;
    f.resize(state_count());
    df.resize(state_count());
    for (std::size_t k = 0; k < units_.size(); ++k) {
        const auto b = free_index_[units_[k].bus];
        unit_rhs(units_[k], consts[k], x.data() + offsets_[k], dx.data() + offsets_[k], v(b), dv(b),
                 f.data() + offsets_[k], df.data() + offsets_[k]);
    }
}

Eigen::VectorXd DynamicSystem::rhs(const Eigen::VectorXd& x) const {
    Eigen::VectorXd f;
    Eigen::VectorXd df;
    evaluate(x, Eigen::VectorXd::Zero(x.size()), f, df);
    return f;
}

Eigen::MatrixXd DynamicSystem::jacobian(const Eigen::VectorXd& x) const {
    const auto n = static_cast<Eigen::Index>(state_count());
    Eigen::MatrixXd jac(n, n);
    Eigen::VectorXd f;
    Eigen::VectorXd df;
    for (Eigen::Index k = 0; k < n; ++k) {
        evaluate(x, Eigen::VectorXd::Unit(n, k), f, df);
        jac.col(k) = df;
    }
    return jac;
}

DynamicSystem make_system(const GridModel& grid, const PowerFlowSolution& solution, std::vector<DynamicUnit> units,
                          const NetworkOptions& /*net*/) {
    const double base = grid.base_mva();
    std::vector<cd> load_y(grid.bus_count(), 0.0);
    for (std::size_t l = 0; l < grid.loads().size(); ++l) {
        const auto b = grid.index_of(grid.loads()[l].bus);
        const double vm = solution.vm[b];
        load_y[b] += cd(solution.load_p[l], -solution.load_q[l]) / base / (vm * vm);
    }
    return DynamicSystem(build_admittance(grid), std::move(load_y), std::move(units));
}

StateSpaceModel linearize(const DynamicSystem& system) {
    StateSpaceModel m;
    m.a = system.jacobian(system.equilibrium());
    if (!m.a.allFinite()) {
        throw ModelError("linearize: non-finite state matrix");
    }
    m.has_reference = system.has_reference();
    for (std::size_t k = 0; k < system.units().size(); ++k) {
        const auto& u = system.units()[k];
        for (const auto& name : u.state_names()) {
            m.labels.push_back({u.id, name});
        }
        for (const auto i : u.angle_states()) {
            m.angle_states.push_back(system.offset(k) + i);
        }
    }
    return m;
}

StateSpaceModel linearize(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op,
                          const PowerFlowSolution& solution, const ModelParams& params, const NetworkOptions& net) {
    if (!solution.converged) {
        throw ModelError("linearize: power flow did not converge");
    }
    return linearize(make_system(grid, solution, build_units(grid, space, op, solution, params), net));
}

Eigen::MatrixXd reduce_angle_reference(const StateSpaceModel& model) {
    if (model.has_reference || model.angle_states.empty()) {
        return model.a;
    }
    const auto n = model.a.rows();
    const auto r = static_cast<Eigen::Index>(model.angle_states.front());
    Eigen::MatrixXd a = model.a;
    for (std::size_t i = 1; i < model.angle_states.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(model.angle_states[i]);
        a.row(k) -= model.a.row(r);
    }
    Eigen::MatrixXd out(n - 1, n - 1);
    for (Eigen::Index i = 0, ri = 0; i < n; ++i) {
        if (i == r) {
            continue;
        }
        for (Eigen::Index j = 0, rj = 0; j < n; ++j) {
            if (j == r) {
                continue;
            }
            out(ri, rj++) = a(i, j);
        }
        ++ri;
    }
    return out;
}

StabilityVerdict eig_stability(const Eigen::MatrixXd& a, double eps_margin) {
    StabilityVerdict v;
    if (a.rows() == 0) {
        v.stable = true;
        v.max_real = -std::numeric_limits<double>::infinity();
        return v;
    }
    if (!a.allFinite()) {
        throw ModelError("eig_stability: non-finite state matrix");
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(a, false);
    if (solver.info() != Eigen::Success) {
        throw ModelError("eig_stability: eigensolver did not converge");
    }
    const auto& ev = solver.eigenvalues();
    v.eigenvalues.assign(ev.data(), ev.data() + ev.size());
    std::sort(v.eigenvalues.begin(), v.eigenvalues.end(), [](cd x, cd y) {
        if (x.real() != y.real()) {
            return x.real() > y.real();
        }
        return x.imag() > y.imag();
    });
    const cd dom = v.eigenvalues.front();
    v.max_real = dom.real();
    v.stable = v.max_real < -eps_margin;
    v.dominant_freq_hz = std::abs(dom.imag()) / (2.0 * std::numbers::pi);
    const double mag = std::abs(dom);
    v.dominant_damping = mag > 0.0 ? -dom.real() / mag : 0.0;
    return v;
}

StabilityVerdict eig_stability(const StateSpaceModel& model, double eps_margin) {
    return eig_stability(reduce_angle_reference(model), eps_margin);
}

LinearDevice device_model(const DynamicUnit& unit) {
    validate(unit);
    const auto c = unit_const(unit);
    const auto n = static_cast<Eigen::Index>(unit.state_count());
    const auto x0 = unit.equilibrium();
    LinearDevice dev;
    dev.a.resize(n, n);
    dev.b.resize(n, 2);
    dev.c.resize(2, n);
    std::vector<double> f(n);
    std::vector<double> df(n);
    std::vector<double> dx(n, 0.0);
    for (Eigen::Index k = 0; k < n; ++k) {
        std::fill(dx.begin(), dx.end(), 0.0);
        dx[k] = 1.0;
        unit_rhs(unit, c, x0.data(), dx.data(), unit.v0, 0.0, f.data(), df.data());
        for (Eigen::Index i = 0; i < n; ++i) {
            dev.a(i, k) = df[i];
        }
        cd j;
        cd dj;
        unit_norton(unit, c, x0.data(), dx.data(), j, dj);
        dev.c(0, k) = -dj.real();
        dev.c(1, k) = -dj.imag();
    }
    std::fill(dx.begin(), dx.end(), 0.0);
    const cd inputs[2] = {1.0, kJ};
    for (int col = 0; col < 2; ++col) {
        unit_rhs(unit, c, x0.data(), dx.data(), unit.v0, inputs[col], f.data(), df.data());
        for (Eigen::Index i = 0; i < n; ++i) {
            dev.b(i, col) = df[i];
        }
    }
    // The current drawn through the source admittance is y * dV.
    dev.d.resize(2, 2);
    dev.d << c.y.real(), -c.y.imag(), c.y.imag(), c.y.real();
    return dev;
}

ScanResult admittance_scan(const LinearDevice& device, const std::vector<double>& freq_hz) {
    if (freq_hz.empty()) {
        throw ModelError("admittance_scan: empty frequency grid");
    }
    ScanResult out;
    const auto n = device.a.rows();
    const Eigen::MatrixXcd a = device.a.cast<cd>();
    const Eigen::MatrixXcd b = device.b.cast<cd>();
    const Eigen::MatrixXcd c = device.c.cast<cd>();
    const Eigen::MatrixXcd d = device.d.cast<cd>();
    for (const double f : freq_hz) {
        if (n == 0) {
            out.freq_hz.push_back(f);
            out.y.push_back(d);
            continue;
        }
        const cd s(0.0, 2.0 * std::numbers::pi * f);
        Eigen::MatrixXcd m = -a;
        m.diagonal().array() += s;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(m);
        if (!(lu.rcond() > 1e-13)) {
            out.singular_hz.push_back(f);
            continue;
        }
        out.freq_hz.push_back(f);
        out.y.push_back(c * lu.solve(b) + d);
    }
    return out;
}

std::vector<double> log_frequency_grid(double fmin, double fmax, int points_per_decade) {
    if (!(fmin > 0.0) || !(fmax >= fmin) || !std::isfinite(fmax)) {
        throw ModelError("frequency range must satisfy 0 < fmin <= fmax");
    }
    if (points_per_decade < 1) {
        throw ModelError("points per decade must be at least 1");
    }
    if (fmax == fmin) {
        return {fmin};
    }
    const double decades = std::log10(fmax / fmin);
    const auto steps = std::max<long>(1, std::lround(decades * points_per_decade));
    std::vector<double> out;
    for (long k = 0; k <= steps; ++k) {
        out.push_back(k == steps ? fmax : fmin * std::pow(10.0, decades * static_cast<double>(k) / steps));
    }
    return out;
}

DynamicUnit aggregate_ibrs(const std::vector<DynamicUnit>& units) {
    if (units.empty()) {
        throw ModelError("aggregate_ibrs: no units");
    }
    const auto& first = units.front();
    if (first.kind == UnitKind::SG) {
        throw ModelError("aggregate_ibrs: only converter units can be aggregated");
    }
    DynamicUnit agg = first;
    agg.id = first.id + "_agg";
    agg.s_rated = 0.0;
    agg.s0 = 0.0;
    for (const auto& u : units) {
        if (u.kind != first.kind) {
            throw ModelError("aggregate_ibrs: mixed control modes (" + to_string(first.kind) + " and " +
                             to_string(u.kind) + ")");
        }
        if (!same_params(u, first)) {
            throw ModelError("aggregate_ibrs: units must share per-unit parameters");
        }
        if (!close(u.v0, first.v0) || !close(u.s0 / u.scale(), first.s0 / first.scale())) {
            throw ModelError("aggregate_ibrs: units must share the per-unit operating point");
        }
        agg.s_rated += u.s_rated;
        agg.s0 += u.s0;
    }
    return agg;
}

}  // namespace stabgen
