#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vbsim/model.hpp"

namespace vbsim {

/// One hyperfine line of the first-shell nitrogen structure, labelled by the
/// total nuclear projection of the three equivalent neighbors.
struct HyperfineLine {
    double m_i_total = 0.0;
    double offset_mhz = 0.0;   // m_i_total * |a_zz|, relative to line center
    std::int64_t weight = 1;   // number of composite states with this projection
    double area_scale = 1.0;   // population weight; multiplicity/total when unpolarized
};

/// Sampled ESR trace. Signal is photoluminescence contrast, 0 = baseline,
/// dips negative-going.
struct Spectrum {
    std::vector<double> freq_mhz;
    std::vector<double> signal;
    std::vector<std::pair<std::string, std::string>> meta;
};

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

inline double fwhm_from_sigma(double sigma_mhz) { return kFwhmPerSigma * sigma_mhz; }
inline double sigma_from_fwhm(double fwhm_mhz) { return fwhm_mhz / kFwhmPerSigma; }

/// Hyperfine lines of `n_nuclei` equivalent nitrogen neighbors: one line per
/// distinct total projection m_I, offset m_I * |a_zz|, weight the number of
/// composite states with that projection.
inline std::vector<HyperfineLine> nitrogen_lines(const IsotopeSpec& nitrogen, double a_zz_mhz,
                                                 int n_nuclei = 3) {
    if (a_zz_mhz == 0.0) throw std::invalid_argument("nitrogen_lines: |a_zz| must be > 0");
    if (n_nuclei < 1) throw std::invalid_argument("nitrogen_lines: need at least one nucleus");

    const int d = nitrogen.spin.dimension();
    const int two_s = nitrogen.spin.two_s;

    // count composite states per total projection; key is twice the total m
    std::map<int, std::int64_t> counts;
    std::int64_t total = 1;
    for (int k = 0; k < n_nuclei; ++k) total *= d;
    for (std::int64_t state = 0; state < total; ++state) {
        std::int64_t rest = state;
        int two_m_total = 0;
        for (int site = 0; site < n_nuclei; ++site) {
            const int idx = static_cast<int>(rest % d);
            rest /= d;
            two_m_total += two_s - 2 * idx;
        }
        counts[two_m_total] += 1;
    }

    std::vector<HyperfineLine> lines;
    lines.reserve(counts.size());
    for (const auto& [two_m, weight] : counts) {
        HyperfineLine line;
        line.m_i_total = 0.5 * two_m;
        line.offset_mhz = line.m_i_total * std::abs(a_zz_mhz);
        line.weight = weight;
        line.area_scale = static_cast<double>(weight) / static_cast<double>(total);
        lines.push_back(line);
    }
    return lines;
}

/// Replaces the multiplicity weights with the product distribution of
/// independent spin-1/2 nuclei each polarized to P (p_up = (1+P)/2).
inline std::vector<HyperfineLine> polarized_lines(std::vector<HyperfineLine> lines, double p) {
    if (p < -1.0 || p > 1.0)
        throw std::invalid_argument("polarized_lines: |P| must not exceed 1");

    const int n_lines = static_cast<int>(lines.size());
    const int n_nuclei = n_lines - 1;  // spin-1/2: one line per number of up spins
    std::int64_t total = 0;
    for (const auto& l : lines) total += l.weight;
    if (total != (std::int64_t{1} << n_nuclei))
        throw std::invalid_argument("polarized_lines: polarization model requires spin-1/2 nuclei");

    const double p_up = 0.5 * (1.0 + p);
    const double p_dn = 1.0 - p_up;
    std::sort(lines.begin(), lines.end(),
              [](const HyperfineLine& a, const HyperfineLine& b) { return a.m_i_total < b.m_i_total; });
    for (int k = 0; k < n_lines; ++k) {
        // line k has k spins up out of n_nuclei
        double w = static_cast<double>(lines[k].weight);  // binomial coefficient
        lines[k].area_scale = w * std::pow(p_up, k) * std::pow(p_dn, n_nuclei - k);
    }
    return lines;
}

/// Gaussian sigma of the unresolved offset distribution generated by the six
/// second-shell boron nuclei: sqrt(6 Var(m)) * |a_zz| with Var(m) = I(I+1)/3
/// for a uniform projection distribution.
inline double boron_broadening_sigma(const IsotopeSpec& boron, double a_zz_boron_mhz) {
    if (!std::isfinite(a_zz_boron_mhz))
        throw std::invalid_argument("boron_broadening_sigma: a_zz must be finite");
    const double i = boron.spin.s();
    const double var_m = i * (i + 1.0) / 3.0;
    return std::abs(a_zz_boron_mhz) * std::sqrt(6.0 * var_m);
}

/// Second-shell coupling and intrinsic width solving the quadrature-sum model
/// for the two measured FWHMs, with a_zz(10B) = a_zz(11B)/3.
struct BoronCalibration {
    double a_zz_b11_mhz = 0.0;
    double sigma_intrinsic_mhz = 0.0;
};

inline BoronCalibration calibrate_boron_linewidths(double fwhm_b10_mhz, double fwhm_b11_mhz) {
    const double var10 = sigma_from_fwhm(fwhm_b10_mhz) * sigma_from_fwhm(fwhm_b10_mhz);
    const double var11 = sigma_from_fwhm(fwhm_b11_mhz) * sigma_from_fwhm(fwhm_b11_mhz);
    // per-unit-coupling shell variances: 6 I(I+1)/3, with the factor-3 gamma
    // scaling applied to the 10B coupling
    const double shell11 = 6.0 * (1.5 * 2.5) / 3.0;        // = 7.5
    const double shell10 = 6.0 * (3.0 * 4.0) / 3.0 / 9.0;  // = 24/9
    const double a_sq = (var11 - var10) / (shell11 - shell10);
    if (a_sq <= 0.0)
        throw std::invalid_argument("calibrate_boron_linewidths: widths do not order as 11B > 10B");
    const double sigma_int_sq = var10 - shell10 * a_sq;
    if (sigma_int_sq < 0.0)
        throw std::invalid_argument("calibrate_boron_linewidths: negative intrinsic variance");
    return {std::sqrt(a_sq), std::sqrt(sigma_int_sq)};
}

/// Total Gaussian sigma for a spectrum in the given boron host: shell
/// broadening and intrinsic width added in quadrature.
inline double total_line_sigma(const BoronCalibration& cal, const IsotopeSpec& boron) {
    const double a = boron.name == "10B" ? cal.a_zz_b11_mhz / 3.0 : cal.a_zz_b11_mhz;
    const double shell = boron_broadening_sigma(boron, a);
    return std::sqrt(shell * shell + cal.sigma_intrinsic_mhz * cal.sigma_intrinsic_mhz);
}

/// Sum-of-Gaussians synthesis on the provided grid; dips are negative-going:
/// signal(f) = -amplitude * sum area_scale * exp(-(f - center - offset)^2 / 2 sigma^2).
inline Spectrum synthesize(const std::vector<HyperfineLine>& lines, double sigma_mhz,
                           double center_mhz, double contrast_amplitude,
                           const std::vector<double>& grid) {
    if (sigma_mhz <= 0.0) throw std::invalid_argument("synthesize: sigma must be > 0");
    if (lines.empty()) throw std::invalid_argument("synthesize: no lines");
    if (grid.size() < 2) throw std::invalid_argument("synthesize: grid too short");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw std::invalid_argument("synthesize: grid must be strictly increasing");

    double lo_line = lines.front().offset_mhz, hi_line = lines.front().offset_mhz;
    for (const auto& l : lines) {
        lo_line = std::min(lo_line, l.offset_mhz);
        hi_line = std::max(hi_line, l.offset_mhz);
    }
    if (grid.front() > center_mhz + lo_line - 3.0 * sigma_mhz ||
        grid.back() < center_mhz + hi_line + 3.0 * sigma_mhz)
        throw std::invalid_argument("synthesize: grid does not cover all lines +- 3 sigma");

    Spectrum spec;
    spec.freq_mhz = grid;
    spec.signal.resize(grid.size(), 0.0);
    const double inv_two_sig_sq = 1.0 / (2.0 * sigma_mhz * sigma_mhz);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double acc = 0.0;
        for (const auto& l : lines) {
            const double df = grid[i] - center_mhz - l.offset_mhz;
            acc += l.area_scale * std::exp(-df * df * inv_two_sig_sq);
        }
        spec.signal[i] = -contrast_amplitude * acc;
    }
    return spec;
}

/// synthesize with the line populations set by nuclear polarization P.
inline Spectrum synthesize_polarized(const std::vector<HyperfineLine>& lines, double p,
                                     double sigma_mhz, double center_mhz,
                                     double contrast_amplitude, const std::vector<double>& grid) {
    return synthesize(polarized_lines(lines, p), sigma_mhz, center_mhz, contrast_amplitude, grid);
}

/// Adds iid Gaussian noise of absolute standard deviation sigma; the seed
/// pins the realization.
inline void add_noise(Spectrum& spec, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw std::invalid_argument("add_noise: sigma must be >= 0");
    if (sigma == 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto& v : spec.signal) v += dist(rng);
}

/// Uniform grid helper covering [lo, hi] with n points.
inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    if (n < 2) throw std::invalid_argument("linspace: need at least 2 points");
    std::vector<double> out(n);
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + step * static_cast<double>(i);
    out.back() = hi;
    return out;
}

}  // namespace vbsim
