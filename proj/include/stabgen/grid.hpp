#pragma once

#include <complex>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stabgen {

enum class BusKind { Slack, PV, PQ };
enum class Tech { SG, IBR };

[[nodiscard]] std::string to_string(BusKind kind);
[[nodiscard]] std::string to_string(Tech tech);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_min = 0.9;
    double v_max = 1.1;
};

/// Series impedance and total line-charging susceptance of a pi-model branch, all per unit.
struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;
    double x = 0.0;
    double b = 0.0;
    double s_max = 0.0;  // MVA
};

struct Capability {
    double s_rated = 0.0;  // MVA
    double p_min = 0.0;    // MW
    double p_max = 0.0;    // MW
    double q_min = 0.0;    // MVAr
    double q_max = 0.0;    // MVAr
};

/// Uniform capability curve: P >= 20 % of the rated MVA, power factor >= cos_phi.
[[nodiscard]] Capability capability_limits(double p_nom, double cos_phi);

/// All generators of one technology at one bus, pre-aggregated.
struct GenGroup {
    int bus = 0;
    Tech tech = Tech::SG;
    double p_nom = 0.0;  // MW
    double cos_phi = 0.95;
    Capability cap;

    /// Stable identifier used in variable names and reports, e.g. "SG_1".
    [[nodiscard]] std::string label() const;
};

struct Load {
    int bus = 0;
    double participation = 0.0;
};

enum class GridErrorKind {
    MissingTable,
    MissingColumn,
    BadValue,
    DanglingBus,
    DuplicateBus,
    DuplicateSlack,
    NoSlack,
    Disconnected,
    ParticipationSum,
    DuplicateGroup,
    InvalidLine,
    SlackWithoutGeneration,
};

class GridError : public std::runtime_error {
public:
    GridError(GridErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    [[nodiscard]] GridErrorKind kind() const noexcept { return kind_; }

private:
    GridErrorKind kind_;
};

/// Immutable static network description. Bus indices (0-based, in table order) are used
/// internally; ids are only for I/O.
class GridModel {
public:
    GridModel(std::vector<Bus> buses, std::vector<Line> lines, std::vector<GenGroup> gens,
              std::vector<Load> loads, double base_mva = 100.0);

    [[nodiscard]] const std::vector<Bus>& buses() const noexcept { return buses_; }
    [[nodiscard]] const std::vector<Line>& lines() const noexcept { return lines_; }
    [[nodiscard]] const std::vector<GenGroup>& gens() const noexcept { return gens_; }
    [[nodiscard]] const std::vector<Load>& loads() const noexcept { return loads_; }
    [[nodiscard]] double base_mva() const noexcept { return base_mva_; }

    [[nodiscard]] std::size_t bus_count() const noexcept { return buses_.size(); }
    [[nodiscard]] std::size_t index_of(int bus_id) const;
    [[nodiscard]] std::size_t slack_index() const noexcept { return slack_; }

    /// Distinct neighbour bus indices, sorted ascending.
    [[nodiscard]] const std::vector<std::size_t>& neighbours(std::size_t bus) const { return adjacency_.at(bus); }

    [[nodiscard]] std::vector<std::size_t> groups_of(Tech tech) const;
    [[nodiscard]] std::vector<std::size_t> groups_at(std::size_t bus) const;
    /// Generation group that balances the system: the SG group at the slack bus if any,
    /// otherwise the IBR group there.
    [[nodiscard]] std::size_t slack_group() const noexcept { return slack_group_; }

    friend bool operator==(const GridModel&, const GridModel&);

private:
    std::vector<Bus> buses_;
    std::vector<Line> lines_;
    std::vector<GenGroup> gens_;
    std::vector<Load> loads_;
    double base_mva_;
    std::map<int, std::size_t> index_;
    std::vector<std::vector<std::size_t>> adjacency_;
    std::size_t slack_ = 0;
    std::size_t slack_group_ = 0;
};

bool operator==(const Bus&, const Bus&);
bool operator==(const Line&, const Line&);
bool operator==(const GenGroup&, const GenGroup&);
bool operator==(const Load&, const Load&);

/// Named CSV texts: "buses", "lines", "gens", "loads".
using TableSet = std::map<std::string, std::string>;

[[nodiscard]] GridModel load_grid(const TableSet& tables, double base_mva = 100.0);
/// Reads buses.csv, lines.csv, gens.csv and loads.csv from a directory.
[[nodiscard]] GridModel load_grid_dir(const std::string& directory, double base_mva = 100.0);
[[nodiscard]] TableSet export_tables(const GridModel& grid);
void write_tables(const TableSet& tables, const std::string& directory);

/// "3bus" or "9bus".
[[nodiscard]] TableSet fixture_tables(const std::string& name);
[[nodiscard]] GridModel load_fixture(const std::string& name);
/// Accepts "fixture:<name>", a bare fixture name, or a directory of CSV tables.
[[nodiscard]] GridModel resolve_grid(const std::string& spec);

using ComplexMatrix = Eigen::MatrixXcd;

/// Bus admittance matrix in per unit (pi-model lines, no transformers).
[[nodiscard]] ComplexMatrix build_admittance(const GridModel& grid);

}  // namespace stabgen
