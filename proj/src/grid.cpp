#include "stabgen/grid.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

#include "stabgen/csv.hpp"

namespace stabgen {

namespace {

constexpr double kParticipationTolerance = 1e-9;

BusKind parse_bus_kind(const std::string& text) {
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "slack") {
        return BusKind::Slack;
    }
    if (lower == "pv") {
        return BusKind::PV;
    }
    if (lower == "pq") {
        return BusKind::PQ;
    }
    throw GridError(GridErrorKind::BadValue, "buses: unknown bus kind '" + text + "'");
}

Tech parse_tech(const std::string& text) {
    std::string upper = text;
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
    if (upper == "SG") {
        return Tech::SG;
    }
    if (upper == "IBR") {
        return Tech::IBR;
    }
    throw GridError(GridErrorKind::BadValue, "gens: unknown technology '" + text + "'");
}

csv::Table parse_table(const TableSet& tables, const std::string& name, const std::vector<std::string>& columns) {
    const auto it = tables.find(name);
    if (it == tables.end()) {
        throw GridError(GridErrorKind::MissingTable, "missing table '" + name + "'");
    }
    csv::Table table = [&] {
        try {
            return csv::Table::parse(it->second, name);
        } catch (const csv::CsvError& e) {
            throw GridError(GridErrorKind::BadValue, e.what());
        }
    }();
    for (const auto& column : columns) {
        if (!table.has_column(column)) {
            throw GridError(GridErrorKind::MissingColumn, name + ": missing column '" + column + "'");
        }
    }
    return table;
}

template <typename F>
auto wrap_value(F&& f) {
    try {
        return f();
    } catch (const csv::CsvError& e) {
        throw GridError(GridErrorKind::BadValue, e.what());
    }
}

// 3-bus fixture: SG at the slack bus, converter plant at a PV bus, one load bus, meshed triangle.
constexpr const char* k3BusBuses =
    "id,kind,v_min,v_max\n"
    "1,Slack,0.95,1.05\n"
    "2,PV,0.9,1.1\n"
    "3,PQ,0.9,1.1\n";
constexpr const char* k3BusLines =
    "from,to,r,x,b,s_max\n"
    "1,2,0.01,0.12,0.02,600\n"
    "1,3,0.01,0.06,0.03,600\n"
    "2,3,0.01,0.06,0.02,500\n";
constexpr const char* k3BusGens =
    "bus,tech,p_nom,cos_phi\n"
    "1,SG,400,0.95\n"
    "2,IBR,300,0.95\n";
constexpr const char* k3BusLoads =
    "bus,participation\n"
    "3,1\n";

// 9-bus fixture: WSCC-style meshed ring with converter plants co-located at buses 2 and 3.
constexpr const char* k9BusBuses =
    "id,kind,v_min,v_max\n"
    "1,Slack,0.95,1.05\n"
    "2,PV,0.9,1.1\n"
    "3,PV,0.9,1.1\n"
    "4,PQ,0.9,1.1\n"
    "5,PQ,0.9,1.1\n"
    "6,PQ,0.9,1.1\n"
    "7,PQ,0.9,1.1\n"
    "8,PQ,0.9,1.1\n"
    "9,PQ,0.9,1.1\n";
constexpr const char* k9BusLines =
    "from,to,r,x,b,s_max\n"
    "1,4,0,0.0576,0,250\n"
    "4,5,0.017,0.092,0.158,250\n"
    "5,6,0.039,0.17,0.358,150\n"
    "3,6,0,0.0586,0,300\n"
    "6,7,0.0119,0.1008,0.209,150\n"
    "7,8,0.0085,0.072,0.149,250\n"
    "8,2,0,0.0625,0,250\n"
    "8,9,0.032,0.161,0.306,250\n"
    "9,4,0.01,0.085,0.176,250\n";
constexpr const char* k9BusGens =
    "bus,tech,p_nom,cos_phi\n"
    "1,SG,250,0.95\n"
    "2,SG,300,0.95\n"
    "3,SG,270,0.95\n"
    "2,IBR,120,0.95\n"
    "3,IBR,100,0.95\n";
constexpr const char* k9BusLoads =
    "bus,participation\n"
    "5,0.3\n"
    "7,0.3\n"
    "9,0.4\n";

}  // namespace

std::string to_string(BusKind kind) {
    switch (kind) {
        case BusKind::Slack:
            return "Slack";
        case BusKind::PV:
            return "PV";
        case BusKind::PQ:
            return "PQ";
    }
    return "PQ";
}

std::string to_string(Tech tech) { return tech == Tech::SG ? "SG" : "IBR"; }

Capability capability_limits(double p_nom, double cos_phi) {
    if (!(p_nom > 0.0)) {
        throw std::invalid_argument("capability_limits: p_nom must be positive");
    }
    if (!(cos_phi > 0.0 && cos_phi <= 1.0)) {
        throw std::invalid_argument("capability_limits: cos_phi must lie in (0, 1]");
    }
    Capability cap;
    cap.s_rated = p_nom / cos_phi;
    cap.p_min = 0.2 * cap.s_rated;
    cap.p_max = p_nom;
    cap.q_max = cap.s_rated * std::sin(std::acos(cos_phi));
    cap.q_min = -cap.q_max;
    return cap;
}

std::string GenGroup::label() const { return to_string(tech) + "_" + std::to_string(bus); }

GridModel::GridModel(std::vector<Bus> buses, std::vector<Line> lines, std::vector<GenGroup> gens,
                     std::vector<Load> loads, double base_mva)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      gens_(std::move(gens)),
      loads_(std::move(loads)),
      base_mva_(base_mva) {
    if (!(base_mva_ > 0.0)) {
        throw GridError(GridErrorKind::BadValue, "base_mva must be positive");
    }
    if (buses_.empty()) {
        throw GridError(GridErrorKind::BadValue, "grid has no buses");
    }
    std::size_t slack_count = 0;
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const auto& bus = buses_[i];
        if (!index_.emplace(bus.id, i).second) {
            throw GridError(GridErrorKind::DuplicateBus, "duplicate bus id " + std::to_string(bus.id));
        }
        if (!(bus.v_min < bus.v_max) || !(bus.v_min > 0.0)) {
            throw GridError(GridErrorKind::BadValue, "bus " + std::to_string(bus.id) + ": need 0 < v_min < v_max");
        }
        if (bus.kind == BusKind::Slack) {
            ++slack_count;
            slack_ = i;
        }
    }
    if (slack_count == 0) {
        throw GridError(GridErrorKind::NoSlack, "grid has no slack bus");
    }
    if (slack_count > 1) {
        throw GridError(GridErrorKind::DuplicateSlack, "grid has " + std::to_string(slack_count) + " slack buses");
    }

    adjacency_.assign(buses_.size(), {});
    for (const auto& line : lines_) {
        for (int end : {line.from, line.to}) {
            if (index_.count(end) == 0) {
                throw GridError(GridErrorKind::DanglingBus,
                                "line " + std::to_string(line.from) + "-" + std::to_string(line.to) +
                                    " references unknown bus " + std::to_string(end));
            }
        }
        if (line.from == line.to) {
            throw GridError(GridErrorKind::InvalidLine, "line from and to are both bus " + std::to_string(line.from));
        }
        if (line.x == 0.0) {
            throw GridError(GridErrorKind::InvalidLine,
                            "line " + std::to_string(line.from) + "-" + std::to_string(line.to) + " has x = 0");
        }
        if (!(line.s_max > 0.0)) {
            throw GridError(GridErrorKind::InvalidLine,
                            "line " + std::to_string(line.from) + "-" + std::to_string(line.to) + " needs s_max > 0");
        }
        const auto f = index_.at(line.from);
        const auto t = index_.at(line.to);
        adjacency_[f].push_back(t);
        adjacency_[t].push_back(f);
    }
    for (auto& nbrs : adjacency_) {
        std::sort(nbrs.begin(), nbrs.end());
        nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    }

    std::set<std::pair<int, Tech>> seen;
    for (auto& g : gens_) {
        if (index_.count(g.bus) == 0) {
            throw GridError(GridErrorKind::DanglingBus, "generator references unknown bus " + std::to_string(g.bus));
        }
        if (!seen.emplace(g.bus, g.tech).second) {
            throw GridError(GridErrorKind::DuplicateGroup,
                            "more than one " + to_string(g.tech) + " group at bus " + std::to_string(g.bus));
        }
        try {
            g.cap = capability_limits(g.p_nom, g.cos_phi);
        } catch (const std::invalid_argument& e) {
            throw GridError(GridErrorKind::BadValue, "generator " + g.label() + ": " + e.what());
        }
    }

    double participation = 0.0;
    for (const auto& load : loads_) {
        if (index_.count(load.bus) == 0) {
            throw GridError(GridErrorKind::DanglingBus, "load references unknown bus " + std::to_string(load.bus));
        }
        if (load.participation < 0.0) {
            throw GridError(GridErrorKind::BadValue, "load at bus " + std::to_string(load.bus) +
                                                         " has negative participation");
        }
        participation += load.participation;
    }
    if (!loads_.empty() && std::abs(participation - 1.0) > kParticipationTolerance) {
        std::ostringstream msg;
        msg << "participation sum != 1 (got " << participation << ")";
        throw GridError(GridErrorKind::ParticipationSum, msg.str());
    }

    // Connectivity from the slack bus.
    std::vector<bool> reached(buses_.size(), false);
    std::queue<std::size_t> frontier;
    frontier.push(slack_);
    reached[slack_] = true;
    while (!frontier.empty()) {
        const auto u = frontier.front();
        frontier.pop();
        for (const auto v : adjacency_[u]) {
            if (!reached[v]) {
                reached[v] = true;
                frontier.push(v);
            }
        }
    }
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        if (!reached[i]) {
            throw GridError(GridErrorKind::Disconnected,
                            "grid is disconnected: bus " + std::to_string(buses_[i].id) + " unreachable from slack");
        }
    }

    const auto at_slack = groups_at(slack_);
    if (at_slack.empty()) {
        throw GridError(GridErrorKind::SlackWithoutGeneration, "slack bus hosts no generation group");
    }
    slack_group_ = at_slack.front();
    for (const auto g : at_slack) {
        if (gens_[g].tech == Tech::SG) {
            slack_group_ = g;
            break;
        }
    }
    for (std::size_t i = 0; i < buses_.size(); ++i) {
        if (buses_[i].kind == BusKind::PV && groups_at(i).empty()) {
            throw GridError(GridErrorKind::BadValue, "PV bus " + std::to_string(buses_[i].id) + " hosts no generation");
        }
    }
}

std::size_t GridModel::index_of(int bus_id) const {
    const auto it = index_.find(bus_id);
    if (it == index_.end()) {
        throw GridError(GridErrorKind::DanglingBus, "unknown bus id " + std::to_string(bus_id));
    }
    return it->second;
}

std::vector<std::size_t> GridModel::groups_of(Tech tech) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < gens_.size(); ++i) {
        if (gens_[i].tech == tech) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> GridModel::groups_at(std::size_t bus) const {
    std::vector<std::size_t> out;
    const int id = buses_.at(bus).id;
    for (std::size_t i = 0; i < gens_.size(); ++i) {
        if (gens_[i].bus == id) {
            out.push_back(i);
        }
    }
    return out;
}

bool operator==(const Bus& a, const Bus& b) {
    return a.id == b.id && a.kind == b.kind && a.v_min == b.v_min && a.v_max == b.v_max;
}
bool operator==(const Line& a, const Line& b) {
    return a.from == b.from && a.to == b.to && a.r == b.r && a.x == b.x && a.b == b.b && a.s_max == b.s_max;
}
bool operator==(const GenGroup& a, const GenGroup& b) {
    return a.bus == b.bus && a.tech == b.tech && a.p_nom == b.p_nom && a.cos_phi == b.cos_phi;
}
bool operator==(const Load& a, const Load& b) { return a.bus == b.bus && a.participation == b.participation; }
bool operator==(const GridModel& a, const GridModel& b) {
    return a.buses_ == b.buses_ && a.lines_ == b.lines_ && a.gens_ == b.gens_ && a.loads_ == b.loads_ &&
           a.base_mva_ == b.base_mva_;
}

GridModel load_grid(const TableSet& tables, double base_mva) {
    const auto bus_table = parse_table(tables, "buses", {"id", "kind", "v_min", "v_max"});
    const auto line_table = parse_table(tables, "lines", {"from", "to", "r", "x", "b", "s_max"});
    const auto gen_table = parse_table(tables, "gens", {"bus", "tech", "p_nom", "cos_phi"});
    const auto load_table = parse_table(tables, "loads", {"bus", "participation"});

    std::vector<Bus> buses;
    for (std::size_t r = 0; r < bus_table.rows(); ++r) {
        Bus bus;
        bus.id = static_cast<int>(wrap_value([&] { return bus_table.integer(r, "id"); }));
        bus.kind = parse_bus_kind(bus_table.cell(r, "kind"));
        bus.v_min = wrap_value([&] { return bus_table.number(r, "v_min"); });
        bus.v_max = wrap_value([&] { return bus_table.number(r, "v_max"); });
        buses.push_back(bus);
    }
    std::vector<Line> lines;
    for (std::size_t r = 0; r < line_table.rows(); ++r) {
        Line line;
        line.from = static_cast<int>(wrap_value([&] { return line_table.integer(r, "from"); }));
        line.to = static_cast<int>(wrap_value([&] { return line_table.integer(r, "to"); }));
        line.r = wrap_value([&] { return line_table.number(r, "r"); });
        line.x = wrap_value([&] { return line_table.number(r, "x"); });
        line.b = wrap_value([&] { return line_table.number(r, "b"); });
        line.s_max = wrap_value([&] { return line_table.number(r, "s_max"); });
        lines.push_back(line);
    }
    std::vector<GenGroup> gens;
    for (std::size_t r = 0; r < gen_table.rows(); ++r) {
        GenGroup g;
        g.bus = static_cast<int>(wrap_value([&] { return gen_table.integer(r, "bus"); }));
        g.tech = parse_tech(gen_table.cell(r, "tech"));
        g.p_nom = wrap_value([&] { return gen_table.number(r, "p_nom"); });
        g.cos_phi = wrap_value([&] { return gen_table.number(r, "cos_phi"); });
        gens.push_back(g);
    }
    std::vector<Load> loads;
    for (std::size_t r = 0; r < load_table.rows(); ++r) {
        Load load;
        load.bus = static_cast<int>(wrap_value([&] { return load_table.integer(r, "bus"); }));
        load.participation = wrap_value([&] { return load_table.number(r, "participation"); });
        loads.push_back(load);
    }
    return GridModel(std::move(buses), std::move(lines), std::move(gens), std::move(loads), base_mva);
}

GridModel load_grid_dir(const std::string& directory, double base_mva) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(directory)) {
        throw GridError(GridErrorKind::MissingTable, "grid directory not found: " + directory);
    }
    TableSet tables;
    for (const char* name : {"buses", "lines", "gens", "loads"}) {
        const auto path = fs::path(directory) / (std::string(name) + ".csv");
        std::ifstream in(path);
        if (!in) {
            throw GridError(GridErrorKind::MissingTable, "missing table file " + path.string());
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        tables[name] = ss.str();
    }
    return load_grid(tables, base_mva);
}

TableSet export_tables(const GridModel& grid) {
    using csv::format_double;
    TableSet out;
    std::string buses = "id,kind,v_min,v_max\n";
    for (const auto& b : grid.buses()) {
        buses += std::to_string(b.id) + "," + to_string(b.kind) + "," + format_double(b.v_min) + "," +
                 format_double(b.v_max) + "\n";
    }
    std::string lines = "from,to,r,x,b,s_max\n";
    for (const auto& l : grid.lines()) {
        lines += std::to_string(l.from) + "," + std::to_string(l.to) + "," + format_double(l.r) + "," +
                 format_double(l.x) + "," + format_double(l.b) + "," + format_double(l.s_max) + "\n";
    }
    std::string gens = "bus,tech,p_nom,cos_phi\n";
    for (const auto& g : grid.gens()) {
        gens += std::to_string(g.bus) + "," + to_string(g.tech) + "," + format_double(g.p_nom) + "," +
                format_double(g.cos_phi) + "\n";
    }
    std::string loads = "bus,participation\n";
    for (const auto& l : grid.loads()) {
        loads += std::to_string(l.bus) + "," + format_double(l.participation) + "\n";
    }
    out["buses"] = buses;
    out["lines"] = lines;
    out["gens"] = gens;
    out["loads"] = loads;
    return out;
}

void write_tables(const TableSet& tables, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    for (const auto& [name, text] : tables) {
        std::ofstream out(fs::path(directory) / (name + ".csv"), std::ios::binary);
        out << text;
    }
}

TableSet fixture_tables(const std::string& name) {
    if (name == "3bus") {
        return {{"buses", k3BusBuses}, {"lines", k3BusLines}, {"gens", k3BusGens}, {"loads", k3BusLoads}};
    }
    if (name == "9bus") {
        return {{"buses", k9BusBuses}, {"lines", k9BusLines}, {"gens", k9BusGens}, {"loads", k9BusLoads}};
    }
    throw GridError(GridErrorKind::MissingTable, "unknown fixture '" + name + "'");
}

GridModel load_fixture(const std::string& name) { return load_grid(fixture_tables(name)); }

GridModel resolve_grid(const std::string& spec) {
    constexpr std::string_view prefix = "fixture:";
    if (spec.rfind(prefix, 0) == 0) {
        return load_fixture(spec.substr(prefix.size()));
    }
    if (spec == "3bus" || spec == "9bus") {
        return load_fixture(spec);
    }
    return load_grid_dir(spec);
}

ComplexMatrix build_admittance(const GridModel& grid) {
    const auto n = grid.bus_count();
    ComplexMatrix y = ComplexMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& line : grid.lines()) {
        const auto f = static_cast<Eigen::Index>(grid.index_of(line.from));
        const auto t = static_cast<Eigen::Index>(grid.index_of(line.to));
        const std::complex<double> series = 1.0 / std::complex<double>(line.r, line.x);
        const std::complex<double> half_shunt(0.0, line.b / 2.0);
        y(f, f) += series + half_shunt;
        y(t, t) += series + half_shunt;
        y(f, t) -= series;
        y(t, f) -= series;
    }
    return y;
}

}  // namespace stabgen
