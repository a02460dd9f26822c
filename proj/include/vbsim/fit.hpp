#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vbsim/spectra.hpp"

namespace vbsim {

struct LmOptions {
    int max_iterations = 500;
    double rss_rel_tol = 1e-10;
    double step_tol = 1e-10;
    int stall_iterations = 3;  // consecutive small-change iterations to declare convergence
};

struct LmOutcome {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double rss = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
};

/// Damped least squares with Marquardt diagonal scaling and an optional
/// parameter validity predicate (invalid trial steps are rejected like
/// uphill ones). Covariance is the RSS-scaled pseudo-inverse of J^T J at
/// the optimum.
inline LmOutcome levenberg_marquardt(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    Eigen::VectorXd x0, const std::function<bool(const Eigen::VectorXd&)>& valid = nullptr,
    const LmOptions& opts = {}) {
    LmOutcome out;
    Eigen::VectorXd x = std::move(x0);
    Eigen::VectorXd r = residual(x);
    double rss = r.squaredNorm();
    double lambda = 1e-3;
    int stall = 0;

    const auto n = x.size();
    Eigen::MatrixXd jt_j(n, n);

    int iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        const Eigen::MatrixXd j = jacobian(x);
        jt_j = j.transpose() * j;
        const Eigen::VectorXd grad = j.transpose() * r;

        Eigen::VectorXd diag = jt_j.diagonal();
        const double diag_floor = 1e-12 * std::max(1.0, diag.maxCoeff());
        for (Eigen::Index i = 0; i < n; ++i) diag(i) = std::max(diag(i), diag_floor);

        bool accepted = false;
        for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
            Eigen::MatrixXd a = jt_j;
            a.diagonal() += lambda * diag;
            const Eigen::VectorXd step = a.ldlt().solve(-grad);
            const Eigen::VectorXd x_try = x + step;
            if (!x_try.allFinite() || (valid && !valid(x_try))) {
                lambda = std::min(lambda * 4.0, 1e14);
                continue;
            }
            const Eigen::VectorXd r_try = residual(x_try);
            const double rss_try = r_try.squaredNorm();
            if (rss_try <= rss) {
                const double rel_drop = (rss - rss_try) / std::max(rss, 1e-300);
                const double rel_step = step.norm() / (1.0 + x.norm());
                x = x_try;
                r = r_try;
                rss = rss_try;
                lambda = std::max(lambda * 0.25, 1e-14);
                accepted = true;
                if (rel_drop < opts.rss_rel_tol || rel_step < opts.step_tol)
                    ++stall;
                else
                    stall = 0;
            } else {
                lambda = std::min(lambda * 4.0, 1e14);
            }
        }
        if (!accepted) {
            // no downhill step found at any damping: stationary
            out.converged = true;
            break;
        }
        if (stall >= opts.stall_iterations) {
            out.converged = true;
            ++iter;
            break;
        }
    }

    out.params = x;
    out.rss = rss;
    out.iterations = iter;
    if (!out.converged && iter >= opts.max_iterations)
        out.message = "no convergence in " + std::to_string(opts.max_iterations) +
                      " iterations; returning best parameters so far";

    const Eigen::MatrixXd j = jacobian(x);
    jt_j = j.transpose() * j;
    const auto m = j.rows();
    const double dof = static_cast<double>(m > n ? m - n : 1);
    out.covariance = (rss / dof) *
                     jt_j.completeOrthogonalDecomposition().pseudoInverse();
    return out;
}

/// Shared-splitting, shared-width Gaussian mixture fit of a dip spectrum.
struct MixtureFit {
    double center_mhz = 0.0;
    double splitting_mhz = 0.0;
    double sigma_mhz = 0.0;
    double baseline = 0.0;
    std::vector<double> amplitudes;  // dip depths, one per line
    Eigen::MatrixXd covariance;      // order: center, splitting, sigma, baseline, amplitudes
    double rss = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;

    double fwhm_mhz() const { return fwhm_from_sigma(sigma_mhz); }
};

namespace detail {

struct DipEstimate {
    double freq = 0.0;
    double depth = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

/// Dip candidates: prominence-gated local minima of a lightly smoothed copy.
/// The prominence gate is the larger of a noise floor (estimated from raw
/// first differences, so the broad structure does not inflate it) and a small
/// fraction of the overall depth; overlapping dips keep their own minima.
inline std::vector<DipEstimate> find_dips(const Spectrum& spec) {
    const std::size_t n = spec.signal.size();
    const int half_w = std::max<int>(1, static_cast<int>(n / 400));
    std::vector<double> smooth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i > static_cast<std::size_t>(half_w) ? i - half_w : 0;
        const std::size_t hi = std::min(n - 1, i + half_w);
        double acc = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) acc += spec.signal[k];
        smooth[i] = acc / static_cast<double>(hi - lo + 1);
    }

    std::vector<double> diffs(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
        diffs[i] = std::abs(spec.signal[i + 1] - spec.signal[i]);
    const double sigma_noise = median(diffs) / 0.9539;  // sigma from |x_i+1 - x_i|
    const double sigma_smooth = sigma_noise / std::sqrt(2.0 * half_w + 1.0);
    const double med = median(smooth);
    const double lo_val = *std::min_element(smooth.begin(), smooth.end());
    const double gate = std::max(5.0 * sigma_smooth, 0.02 * (med - lo_val));

    const double med_raw = median(spec.signal);
    std::vector<DipEstimate> dips;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(smooth[i] < smooth[i - 1] && smooth[i] <= smooth[i + 1])) continue;
        // prominence: smallest rise separating this minimum from deeper ground
        double rise_left = -1e300;
        for (std::size_t j = i; j-- > 0;) {
            rise_left = std::max(rise_left, smooth[j]);
            if (smooth[j] < smooth[i]) break;
        }
        double rise_right = -1e300;
        for (std::size_t j = i + 1; j < n; ++j) {
            rise_right = std::max(rise_right, smooth[j]);
            if (smooth[j] < smooth[i]) break;
        }
        if (std::min(rise_left, rise_right) - smooth[i] < gate) continue;

        const std::size_t a = i > static_cast<std::size_t>(half_w) ? i - half_w : 0;
        const std::size_t b = std::min(n - 1, i + half_w);
        std::size_t best = a;
        for (std::size_t k = a; k <= b; ++k)
            if (spec.signal[k] < spec.signal[best]) best = k;
        dips.push_back({spec.freq_mhz[best], med_raw - spec.signal[best]});
    }
    return dips;
}

}  // namespace detail

struct MixtureInit {
    double center_mhz = 0.0;
    double splitting_mhz = 0.0;
    double sigma_mhz = 0.0;
};

/// Fits n_lines equally spaced Gaussian dips with a shared width, shared
/// adjacent-line splitting and a constant baseline. Line k (k = 0 ..
/// n_lines-1) sits at center + (k - (n_lines-1)/2) * splitting.
inline MixtureFit fit_mixture(const Spectrum& spec, int n_lines,
                              const std::optional<MixtureInit>& init = std::nullopt) {
    if (n_lines < 2 || n_lines > 9)
        throw std::invalid_argument("fit_mixture: n_lines must be in 2..9");
    if (spec.freq_mhz.size() != spec.signal.size() || spec.freq_mhz.size() < 8)
        throw std::invalid_argument("fit_mixture: spectrum too short");
    const double sig_lo = *std::min_element(spec.signal.begin(), spec.signal.end());
    const double sig_hi = *std::max_element(spec.signal.begin(), spec.signal.end());
    if (sig_hi == sig_lo)
        throw std::invalid_argument("fit_mixture: degenerate input, zero amplitude range");

    const int n = n_lines;
    const double k_offset = 0.5 * (n - 1);
    const double baseline0 = detail::median(spec.signal);
    const auto& f = spec.freq_mhz;
    const auto& y = spec.signal;
    const auto m = static_cast<Eigen::Index>(f.size());

    // sampled dip depth at a model line position, for amplitude seeding
    auto depth_at = [&](double freq) {
        const auto it = std::lower_bound(f.begin(), f.end(), freq);
        const std::size_t i = std::min<std::size_t>(std::distance(f.begin(), it), f.size() - 1);
        return baseline0 - y[i];
    };

    // --- starting points ----------------------------------------------------
    // Each candidate is (center, splitting, sigma); ambiguity in which comb
    // slot a dip occupies is resolved by trying the alignments and keeping
    // the best-RSS fit.
    struct Start {
        double center, splitting, sigma;
    };
    std::vector<Start> starts;
    if (init) {
        if (init->splitting_mhz <= 0.0 || init->sigma_mhz <= 0.0)
            throw std::invalid_argument("fit_mixture: init requires positive splitting and sigma");
        starts.push_back({init->center_mhz, init->splitting_mhz, init->sigma_mhz});
    } else {
        auto dips = detail::find_dips(spec);
        if (dips.size() > static_cast<std::size_t>(n)) {
            std::sort(dips.begin(), dips.end(),
                      [](const auto& a, const auto& b) { return a.depth > b.depth; });
            dips.resize(n);
            std::sort(dips.begin(), dips.end(),
                      [](const auto& a, const auto& b) { return a.freq < b.freq; });
        }
        double splitting0;
        double deepest_freq;
        if (dips.size() >= 2) {
            std::vector<double> spacings;
            for (std::size_t i = 1; i < dips.size(); ++i)
                spacings.push_back(dips[i].freq - dips[i - 1].freq);
            splitting0 = detail::median(spacings);
            deepest_freq = std::max_element(dips.begin(), dips.end(),
                                            [](const auto& a, const auto& b) {
                                                return a.depth < b.depth;
                                            })
                               ->freq;
            double sum_f = 0.0;
            for (const auto& d : dips) sum_f += d.freq;
            starts.push_back({sum_f / static_cast<double>(dips.size()), splitting0,
                              splitting0 / 3.0});
        } else {
            const double span = f.back() - f.front();
            splitting0 = span / (n + 1);
            deepest_freq = dips.size() == 1 ? dips.front().freq : 0.5 * (f.front() + f.back());
            starts.push_back({deepest_freq, splitting0, splitting0 / 3.0});
        }
        for (int j = 0; j < n; ++j)
            starts.push_back({deepest_freq - (j - k_offset) * splitting0, splitting0,
                              splitting0 / 3.0});
    }

    auto residual = [&, n, k_offset](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(m);
        const double inv2s2 = 1.0 / (2.0 * x(2) * x(2));
        for (Eigen::Index i = 0; i < m; ++i) {
            double model = x(3);
            for (int k = 0; k < n; ++k) {
                const double d = f[i] - (x(0) + (k - k_offset) * x(1));
                model -= x(4 + k) * std::exp(-d * d * inv2s2);
            }
            r(i) = model - y[i];
        }
        return r;
    };
    auto jacobian = [&, n, k_offset](const Eigen::VectorXd& x) {
        Eigen::MatrixXd j(m, 4 + n);
        const double s = x(2);
        const double inv_s2 = 1.0 / (s * s);
        for (Eigen::Index i = 0; i < m; ++i) {
            double d_center = 0.0, d_split = 0.0, d_sigma = 0.0;
            for (int k = 0; k < n; ++k) {
                const double d = f[i] - (x(0) + (k - k_offset) * x(1));
                const double e = std::exp(-0.5 * d * d * inv_s2);
                const double d_mu = -x(4 + k) * e * d * inv_s2;  // d model / d mu_k
                d_center += d_mu;
                d_split += d_mu * (k - k_offset);
                d_sigma -= x(4 + k) * e * d * d * inv_s2 / s;
                j(i, 4 + k) = -e;
            }
            j(i, 0) = d_center;
            j(i, 1) = d_split;
            j(i, 2) = d_sigma;
            j(i, 3) = 1.0;
        }
        return j;
    };
    auto valid = [](const Eigen::VectorXd& x) { return x(1) > 0.0 && x(2) > 0.0; };

    LmOutcome lm;
    bool have_result = false;
    const double depth_floor = 0.02 * (sig_hi - sig_lo);
    for (const auto& start : starts) {
        Eigen::VectorXd x0(4 + n);
        x0(0) = start.center;
        x0(1) = start.splitting;
        x0(2) = start.sigma;
        x0(3) = baseline0;
        for (int k = 0; k < n; ++k)
            x0(4 + k) = std::max(depth_at(start.center + (k - k_offset) * start.splitting),
                                 depth_floor);
        const LmOutcome attempt = levenberg_marquardt(residual, jacobian, x0, valid);
        const bool better = !have_result ||
                            (attempt.converged && !lm.converged) ||
                            (attempt.converged == lm.converged && attempt.rss < lm.rss);
        if (better) {
            lm = attempt;
            have_result = true;
        }
    }

    MixtureFit fit;
    fit.center_mhz = lm.params(0);
    fit.splitting_mhz = lm.params(1);
    fit.sigma_mhz = lm.params(2);
    fit.baseline = lm.params(3);
    fit.amplitudes.assign(lm.params.data() + 4, lm.params.data() + 4 + n);
    fit.covariance = lm.covariance;
    fit.rss = lm.rss;
    fit.iterations = lm.iterations;
    fit.converged = lm.converged;
    fit.message = lm.message;
    return fit;
}

/// Diagnostic variant with per-line centers and widths (no shared-parameter
/// constraint); baseline first, then (center, sigma, amplitude) triples.
struct FreeMixtureFit {
    double baseline = 0.0;
    std::vector<double> centers_mhz;
    std::vector<double> sigmas_mhz;
    std::vector<double> amplitudes;
    double rss = 0.0;
    bool converged = false;
    std::string message;
};

inline FreeMixtureFit fit_mixture_free(const Spectrum& spec, int n_lines) {
    const MixtureFit shared = fit_mixture(spec, n_lines);
    const int n = n_lines;
    const double k_offset = 0.5 * (n - 1);

    Eigen::VectorXd x0(1 + 3 * n);
    x0(0) = shared.baseline;
    for (int k = 0; k < n; ++k) {
        x0(1 + 3 * k) = shared.center_mhz + (k - k_offset) * shared.splitting_mhz;
        x0(2 + 3 * k) = shared.sigma_mhz;
        x0(3 + 3 * k) = shared.amplitudes[k];
    }

    const auto& f = spec.freq_mhz;
    const auto& y = spec.signal;
    const auto m = static_cast<Eigen::Index>(f.size());

    auto residual = [&, n](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            double model = x(0);
            for (int k = 0; k < n; ++k) {
                const double d = f[i] - x(1 + 3 * k);
                const double s = x(2 + 3 * k);
                model -= x(3 + 3 * k) * std::exp(-0.5 * d * d / (s * s));
            }
            r(i) = model - y[i];
        }
        return r;
    };
    auto jacobian = [&, n](const Eigen::VectorXd& x) {
        Eigen::MatrixXd j(m, 1 + 3 * n);
        for (Eigen::Index i = 0; i < m; ++i) {
            j(i, 0) = 1.0;
            for (int k = 0; k < n; ++k) {
                const double d = f[i] - x(1 + 3 * k);
                const double s = x(2 + 3 * k);
                const double a = x(3 + 3 * k);
                const double e = std::exp(-0.5 * d * d / (s * s));
                j(i, 1 + 3 * k) = -a * e * d / (s * s);
                j(i, 2 + 3 * k) = -a * e * d * d / (s * s * s);
                j(i, 3 + 3 * k) = -e;
            }
        }
        return j;
    };
    auto valid = [n](const Eigen::VectorXd& x) {
        for (int k = 0; k < n; ++k)
            if (x(2 + 3 * k) <= 0.0) return false;
        return true;
    };

    const LmOutcome lm = levenberg_marquardt(residual, jacobian, x0, valid);
    FreeMixtureFit fit;
    fit.baseline = lm.params(0);
    for (int k = 0; k < n; ++k) {
        fit.centers_mhz.push_back(lm.params(1 + 3 * k));
        fit.sigmas_mhz.push_back(lm.params(2 + 3 * k));
        fit.amplitudes.push_back(lm.params(3 + 3 * k));
    }
    fit.rss = lm.rss;
    fit.converged = lm.converged;
    fit.message = lm.message;
    return fit;
}

/// Per-line areas keyed by total nuclear projection, assuming the lines are
/// ordered by frequency and map onto m_I = -(n-1)/2 ... +(n-1)/2 times the
/// per-step projection change (1 for the spin-1/2 and spin-1 ladders here).
inline std::vector<std::pair<double, double>> areas_by_projection(const MixtureFit& fit) {
    const int n = static_cast<int>(fit.amplitudes.size());
    const double k_offset = 0.5 * (n - 1);
    std::vector<std::pair<double, double>> areas;
    const double norm = fit.sigma_mhz * std::sqrt(2.0 * std::numbers::pi);
    for (int k = 0; k < n; ++k)
        areas.emplace_back(k - k_offset, fit.amplitudes[k] * norm);
    return areas;
}

/// Average per-spin polarization from line areas:
/// (sum m_I S_mI) / (max|m_I| * sum S_mI).
inline double polarization_from_areas(const std::vector<std::pair<double, double>>& areas_by_mi) {
    if (areas_by_mi.empty())
        throw std::invalid_argument("polarization_from_areas: no areas");
    double num = 0.0, den = 0.0, m_max = 0.0;
    for (const auto& [m_i, area] : areas_by_mi) {
        num += m_i * area;
        den += area;
        m_max = std::max(m_max, std::abs(m_i));
    }
    if (den == 0.0 || m_max == 0.0)
        throw std::invalid_argument("polarization_from_areas: all areas zero");
    return num / (m_max * den);
}

/// Rising saturation curve P(P_L) = p_max (P_L/p_sat) / (1 + P_L/p_sat).
struct SaturationFit {
    double p_max = 0.0;
    double p_sat_mw = 0.0;
    Eigen::Matrix2d covariance;
    double rss = 0.0;
    bool converged = false;
    std::string message;
};

inline SaturationFit fit_saturation(const std::vector<std::pair<double, double>>& points,
                                    std::optional<std::pair<double, double>> init = std::nullopt) {
    if (points.size() < 3)
        throw std::invalid_argument("fit_saturation: need at least 3 points");
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t k = i + 1; k < points.size(); ++k)
            if (points[i].first == points[k].first)
                throw std::invalid_argument("fit_saturation: powers must be distinct");

    double p_max0, p_sat0;
    if (init) {
        p_max0 = init->first;
        p_sat0 = init->second;
    } else {
        p_max0 = 0.0;
        for (const auto& [pw, pol] : points) p_max0 = std::max(p_max0, std::abs(pol));
        if (p_max0 == 0.0) p_max0 = 1e-3;
        p_max0 *= 1.2;
        std::vector<double> powers;
        for (const auto& [pw, pol] : points) powers.push_back(pw);
        p_sat0 = std::max(detail::median(powers), 1e-6);
        for (const auto& [pw, pol] : points)
            if (std::abs(pol) >= 0.5 * p_max0 / 1.2 && pw > 0.0) {
                p_sat0 = pw;
                break;
            }
    }

    const auto m = static_cast<Eigen::Index>(points.size());
    auto residual = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double pw = points[i].first;
            r(i) = x(0) * pw / (x(1) + pw) - points[i].second;
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& x) {
        Eigen::MatrixXd j(m, 2);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double pw = points[i].first;
            const double den = x(1) + pw;
            j(i, 0) = pw / den;
            j(i, 1) = -x(0) * pw / (den * den);
        }
        return j;
    };
    auto valid = [](const Eigen::VectorXd& x) { return x(1) > 0.0; };

    Eigen::VectorXd x0(2);
    x0 << p_max0, p_sat0;
    const LmOutcome lm = levenberg_marquardt(residual, jacobian, x0, valid);

    SaturationFit fit;
    fit.p_max = lm.params(0);
    fit.p_sat_mw = lm.params(1);
    fit.covariance = lm.covariance;
    fit.rss = lm.rss;
    fit.converged = lm.converged;
    fit.message = lm.message;
    return fit;
}

}  // namespace vbsim
