#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stabgen/grid.hpp"
#include "stabgen/powerflow.hpp"
#include "stabgen/space.hpp"

namespace stabgen {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kOmegaBase = 2.0 * std::numbers::pi * 50.0;  // rad/s

/// Classical machine behind transient reactance with a first-order governor.
struct SgParams {
    double inertia_h = 3.5;  // s
    double damping_d = 2.0;  // pu torque per pu speed
    double droop_r = 0.05;
    double t_g = 0.5;  // s
    double x_d = 0.3;  // pu on machine base
    /// Without the governor the mechanical power is constant and the model has two states.
    bool governor = true;
};

/// Current-source converter: PLL, power loop on the d-axis current, droop filters.
struct GfolParams {
    double pll_kp = 50.0;
    double pll_ki = 900.0;
    double t_p = 0.05;  // s
    double k_f = 20.0;
    double k_v = 10.0;
    double tau_u = 0.1;  // s, voltage measurement filter
    double tau_w = 0.1;  // s, frequency measurement filter
    /// Coupling reactance on machine base; the PLL and power loop see the converter-side voltage.
    double x_f = 0.15;
};

/// Voltage-source converter synchronized by active-power droop.
struct GforParams {
    double k_p = 0.02 * kOmegaBase;  // rad/s per pu
    double k_q = 0.05;
    double tau_u = 0.1;  // s, reactive power filter
    double tau_w = 0.1;  // s, active power filter
    double x_c = 0.15;   // pu coupling reactance on machine base
    /// Lag between the droop angle and the voltage actually applied (voltage loop and terminal
    /// filter). Zero removes the state.
    double t_v = 0.0;  // s
};

struct ModelParams {
    SgParams sg;
    GfolParams gfol;
    GforParams gfor;
};

/// Names accepted as control dimensions: tau_u, tau_w (both converter types), gfor_tau_u,
/// gfor_tau_w, gfol_tau_u, gfol_tau_w, gfor_kp, gfor_kq, gfor_tv, gfor_xc, pll_kp, pll_ki, gfol_kf,
/// gfol_kv, gfol_tp, gfol_xf, sg_h, sg_d, sg_r, sg_tg, sg_xd.
[[nodiscard]] bool is_control_param(const std::string& name);
void set_control_param(ModelParams& params, const std::string& name, double value);
/// Shared names (tau_u, tau_w) report the grid-forming value.
[[nodiscard]] double control_param(const ModelParams& params, const std::string& name);
/// Unambiguous parameter names, one per model field.
[[nodiscard]] const std::vector<std::string>& model_param_names();
/// Throws ModelError when a parameter is outside its admissible range.
void validate(const ModelParams& params);
/// Applies every control dimension of the space to a copy of the defaults.
[[nodiscard]] ModelParams params_for(const OperatingSpace& space, const std::vector<double>& dim_values,
                                     const ModelParams& defaults = {});

enum class UnitKind { SG, GFOR, GFOL };

[[nodiscard]] std::string to_string(UnitKind kind);

/// A dynamic source at one bus together with its steady-state terminal conditions.
struct DynamicUnit {
    std::string id;
    UnitKind kind = UnitKind::SG;
    std::size_t bus = 0;      // bus index
    double s_rated = 0.0;     // MVA
    double base_mva = 100.0;  // system base
    std::complex<double> v0;  // terminal voltage, system pu
    std::complex<double> s0;  // injected power, system pu
    SgParams sg;
    GfolParams gfol;
    GforParams gfor;

    [[nodiscard]] double scale() const noexcept { return s_rated / base_mva; }
    [[nodiscard]] std::size_t state_count() const;
    [[nodiscard]] std::vector<std::string> state_names() const;
    /// Indices of the absolute-angle states within the unit.
    [[nodiscard]] std::vector<std::size_t> angle_states() const;
    /// Shunt admittance placed at the bus (Norton source impedance), system pu.
    [[nodiscard]] std::complex<double> shunt() const;
    /// States consistent with v0 and s0.
    [[nodiscard]] std::vector<double> equilibrium() const;
};

/// Splits each online converter group into grid-forming and grid-following sub-units in
/// proportion to its P_GFM / P_GFL allocation; SG groups become one machine each.
[[nodiscard]] std::vector<DynamicUnit> build_units(const GridModel& grid, const OperatingSpace& space,
                                                   const OperatingPoint& op, const PowerFlowSolution& solution,
                                                   const ModelParams& params);

struct FixedBus {
    std::size_t bus = 0;
    std::complex<double> voltage;
};

/// Sources coupled through the algebraic network. Loads are constant admittances taken from the
/// equilibrium; buses listed as fixed behave as infinite buses.
class DynamicSystem {
public:
    DynamicSystem(const ComplexMatrix& y_bus, std::vector<std::complex<double>> load_admittance,
                  std::vector<DynamicUnit> units, std::vector<FixedBus> fixed = {});

    [[nodiscard]] std::size_t state_count() const noexcept { return offsets_.back(); }
    [[nodiscard]] const std::vector<DynamicUnit>& units() const noexcept { return units_; }
    [[nodiscard]] bool has_reference() const noexcept { return !fixed_.empty(); }
    [[nodiscard]] Eigen::VectorXd equilibrium() const;
    [[nodiscard]] Eigen::VectorXd rhs(const Eigen::VectorXd& x) const;
    /// Analytic Jacobian by forward tangents through the network solution.
    [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;
    [[nodiscard]] std::size_t offset(std::size_t unit) const { return offsets_.at(unit); }

private:
    void evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& dx, Eigen::VectorXd& f, Eigen::VectorXd& df) const;

    std::vector<DynamicUnit> units_;
    std::vector<FixedBus> fixed_;
    std::vector<std::size_t> offsets_;
    std::vector<long> free_index_;  // bus -> position among free buses, -1 if fixed
    Eigen::MatrixXcd z_;            // inverse of the free-bus block of the augmented admittance
    Eigen::VectorXcd v_fixed_part_; // free-bus voltages due to fixed buses
};

[[nodiscard]] DynamicSystem make_system(const GridModel& grid, const PowerFlowSolution& solution,
                                        std::vector<DynamicUnit> units, const NetworkOptions& net = {});

struct StateLabel {
    std::string component;
    std::string state;
};

struct StateSpaceModel {
    Eigen::MatrixXd a;
    std::vector<StateLabel> labels;
    /// Absolute-angle states; shifting all of them together leaves the dynamics unchanged
    /// unless the model has a fixed reference bus.
    std::vector<std::size_t> angle_states;
    bool has_reference = false;
};

[[nodiscard]] StateSpaceModel linearize(const DynamicSystem& system);
[[nodiscard]] StateSpaceModel linearize(const GridModel& grid, const OperatingSpace& space, const OperatingPoint& op,
                                        const PowerFlowSolution& solution, const ModelParams& params,
                                        const NetworkOptions& net = {});

/// Removes the rotational zero mode: angles become differences to the first angle state,
/// which is then dropped. Returns the matrix unchanged when the model has a reference.
[[nodiscard]] Eigen::MatrixXd reduce_angle_reference(const StateSpaceModel& model);

struct StabilityVerdict {
    bool stable = false;
    double max_real = 0.0;
    std::vector<std::complex<double>> eigenvalues;
    double dominant_freq_hz = 0.0;
    double dominant_damping = 0.0;
};

inline constexpr double kDefaultEpsMargin = 1e-6;

[[nodiscard]] StabilityVerdict eig_stability(const Eigen::MatrixXd& a, double eps_margin = kDefaultEpsMargin);
[[nodiscard]] StabilityVerdict eig_stability(const StateSpaceModel& model, double eps_margin = kDefaultEpsMargin);

/// x' = A x + B u, y = C x + D u.
struct LinearDevice {
    Eigen::MatrixXd a;
    Eigen::MatrixXd b;
    Eigen::MatrixXd c;
    Eigen::MatrixXd d;
};

/// Terminal model of one unit: input (dV_re, dV_im), output the current drawn from the grid
/// (-dI_re, -dI_im), both in system pu.
[[nodiscard]] LinearDevice device_model(const DynamicUnit& unit);

struct ScanResult {
    std::vector<double> freq_hz;
    std::vector<Eigen::MatrixXcd> y;
    /// Frequencies where j*omega hits an eigenvalue of A.
    std::vector<double> singular_hz;
};

[[nodiscard]] ScanResult admittance_scan(const LinearDevice& device, const std::vector<double>& freq_hz);

/// Log-spaced grid from fmin to fmax inclusive.
[[nodiscard]] std::vector<double> log_frequency_grid(double fmin, double fmax, int points_per_decade);

/// Equivalent of identical converter units: ratings and dispatches add, per-unit parameters stay.
[[nodiscard]] DynamicUnit aggregate_ibrs(const std::vector<DynamicUnit>& units);

}  // namespace stabgen
