#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "stabgen/forest.hpp"
#include "stabgen/powerflow.hpp"
#include "stabgen/rng.hpp"
#include "stabgen/smallsignal.hpp"

/// Hand-built inputs shared by the unit suites and the acceptance binary.
namespace cases {

using cd = std::complex<double>;

/// Slack bus at 1 pu feeding a PQ load p + jq over one series branch.
inline stabgen::PfCase two_bus_case(double r, double x, double p, double q) {
    stabgen::PfCase pf;
    const cd y = 1.0 / cd(r, x);
    pf.y = stabgen::ComplexMatrix(2, 2);
    pf.y << y, -y, -y, y;
    pf.buses.resize(2);
    pf.buses[0].kind = stabgen::BusKind::Slack;
    pf.buses[0].v_set = 1.0;
    pf.buses[1].kind = stabgen::BusKind::PQ;
    pf.buses[1].p_spec = -p;
    pf.buses[1].q_spec = -q;
    pf.vm_start = {1.0, 1.0};
    return pf;
}

struct Smib {
    stabgen::DynamicSystem system;
    double e_mag;
    double delta0;
    double x_total;
};

/// Classical machine on a lossless line to an infinite bus at 1 pu, angle 0.
inline Smib make_smib(double p, double vt, double x_line, const stabgen::SgParams& sg) {
    using namespace stabgen;
    const double theta = std::asin(p * x_line / vt);
    const cd v_t = std::polar(vt, theta);
    const cd v_inf = 1.0;
    const cd i = (v_t - v_inf) / cd(0.0, x_line);
    DynamicUnit u;
    u.id = "SG";
    u.kind = UnitKind::SG;
    u.bus = 0;
    u.s_rated = 100.0;
    u.base_mva = 100.0;
    u.v0 = v_t;
    u.s0 = v_t * std::conj(i);
    u.sg = sg;
    ComplexMatrix y(2, 2);
    const cd yl = 1.0 / cd(0.0, x_line);
    y << yl, -yl, -yl, yl;
    const cd e = v_t + cd(0.0, sg.x_d) * i;
    return {DynamicSystem(y, {0.0, 0.0}, {u}, {{1, v_inf}}), std::abs(e), std::arg(e), sg.x_d + x_line};
}

/// Label 1 exactly when feature 0 exceeds 0.5; the other features are noise.
inline stabgen::LabeledDataset threshold_data(std::size_t n, std::size_t d, std::uint64_t seed) {
    stabgen::RngStream rng(seed);
    stabgen::LabeledDataset data;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(d);
        for (auto& v : x) {
            v = rng.uniform();
        }
        data.y.push_back(x[0] > 0.5 ? 1 : 0);
        data.x.push_back(std::move(x));
    }
    return data;
}

inline stabgen::LabeledDataset shuffled_labels(stabgen::LabeledDataset data, std::uint64_t seed) {
    stabgen::RngStream rng(seed);
    std::shuffle(data.y.begin(), data.y.end(), rng.engine());
    return data;
}

/// Every stratum of every column holds exactly one sample.
inline bool stratified(const std::vector<std::vector<double>>& rows, const stabgen::Subregion& cell) {
    const auto n = rows.size();
    for (std::size_t d = 0; d < cell.bounds.size(); ++d) {
        std::vector<int> hits(n, 0);
        for (const auto& r : rows) {
            const double u = (r[d] - cell.bounds[d].lo) / cell.bounds[d].width();
            const auto k = static_cast<long>(std::floor(u * static_cast<double>(n)));
            if (k < 0 || k >= static_cast<long>(n)) {
                return false;
            }
            ++hits[static_cast<std::size_t>(k)];
        }
        if (std::any_of(hits.begin(), hits.end(), [](int h) { return h != 1; })) {
            return false;
        }
    }
    return true;
}

/// Population variance.
inline double variance(const std::vector<double>& v) {
    double m = 0.0;
    for (const double x : v) {
        m += x;
    }
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (const double x : v) {
        s += (x - m) * (x - m);
    }
    return s / static_cast<double>(v.size());
}

}  // namespace cases
