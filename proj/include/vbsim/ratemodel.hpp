#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace vbsim {

/// Incoherent rates of the four-level polarization cycle for a single
/// spin-1/2 nucleus: hyperfine flip-flop channels plus optical pumping.
struct FourLevelRates {
    double gamma_plus_mhz = 0.0;   // |A+|-mediated, bidirectional |0,dn> <-> |-1,up>
    double gamma_minus_mhz = 0.0;  // |A-|-mediated, bidirectional |0,up> <-> |-1,dn>
    double gamma_l_mhz = 0.0;      // optical repolarization |-1,x> -> |0,x>

    void validate() const {
        if (gamma_plus_mhz < 0.0 || gamma_minus_mhz < 0.0 || gamma_l_mhz < 0.0)
            throw std::invalid_argument("FourLevelRates: rates must be >= 0");
        if (gamma_plus_mhz == 0.0 && gamma_minus_mhz == 0.0 && gamma_l_mhz == 0.0)
            throw std::invalid_argument("FourLevelRates: all rates zero, no steady state");
    }
};

/// Steady-state populations over {|0,up>, |0,dn>, |-1,up>, |-1,dn>}.
struct FourLevelPopulations {
    double p0_up = 0.0;
    double p0_dn = 0.0;
    double pm1_up = 0.0;
    double pm1_dn = 0.0;

    /// Nuclear polarization read out in the m_s = 0 manifold.
    double polarization() const {
        const double sum = p0_up + p0_dn;
        return sum > 0.0 ? (p0_up - p0_dn) / sum : 0.0;
    }
};

/// Rate matrix of the cycle: columns are source states, rows destinations,
/// state order {|0,up>, |0,dn>, |-1,up>, |-1,dn>}.
inline Eigen::Matrix4d four_level_rate_matrix(const FourLevelRates& r) {
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    auto add = [&m](int from, int to, double rate) {
        m(to, from) += rate;
        m(from, from) -= rate;
    };
    add(1, 2, r.gamma_plus_mhz);   // |0,dn> -> |-1,up>
    add(2, 1, r.gamma_plus_mhz);
    add(0, 3, r.gamma_minus_mhz);  // |0,up> -> |-1,dn>
    add(3, 0, r.gamma_minus_mhz);
    add(2, 0, r.gamma_l_mhz);      // optical pumping, nuclear spin conserved
    add(3, 1, r.gamma_l_mhz);
    return m;
}

/// Normalized steady state of the rate matrix. Solved as the minimum-norm
/// least-squares solution of [M; 1^T] n = [0; 1], which coincides with the
/// null vector when it is unique and picks the symmetric representative when
/// disconnected pools make it degenerate (e.g. gamma_l = 0).
inline FourLevelPopulations steady_state_populations(const FourLevelRates& r) {
    r.validate();
    const Eigen::Matrix4d m = four_level_rate_matrix(r);
    Eigen::Matrix<double, 5, 4> sys;
    sys.topRows<4>() = m;
    sys.bottomRows<1>().setOnes();
    Eigen::Matrix<double, 5, 1> rhs = Eigen::Matrix<double, 5, 1>::Zero();
    rhs(4) = 1.0;
    const Eigen::Vector4d n =
        sys.completeOrthogonalDecomposition().solve(rhs);
    return {n(0), n(1), n(2), n(3)};
}

/// Saturation limit of the nuclear polarization,
/// (1 - |a_minus/a_plus|) / (1 + |a_minus/a_plus|).
inline double saturation_polarization(double a_plus, double a_minus) {
    if (a_plus == 0.0)
        throw std::invalid_argument("saturation_polarization: undefined for a_plus = 0");
    const double ratio = std::abs(a_minus / a_plus);
    return (1.0 - ratio) / (1.0 + ratio);
}

struct PowerPolarizationPoint {
    double power_mw = 0.0;
    double polarization = 0.0;
};

/// Polarization versus laser power with gamma_l = k * P_L; rises
/// monotonically toward the saturation limit.
inline std::vector<PowerPolarizationPoint> polarization_vs_power(
    double gamma_plus_mhz, double gamma_minus_mhz, const std::vector<double>& power_grid_mw,
    double k_mhz_per_mw) {
    if (k_mhz_per_mw <= 0.0)
        throw std::invalid_argument("polarization_vs_power: k must be > 0");
    std::vector<PowerPolarizationPoint> curve;
    curve.reserve(power_grid_mw.size());
    for (double p : power_grid_mw) {
        const FourLevelRates r{gamma_plus_mhz, gamma_minus_mhz, k_mhz_per_mw * p};
        curve.push_back({p, steady_state_populations(r).polarization()});
    }
    return curve;
}

}  // namespace vbsim
