#pragma once

#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "vbsim/model.hpp"

namespace vbsim {

/// Incoherent rates of the seven-electronic-level optical cycle, MHz.
/// The defaults reproduce the observed polarization trends; the spin
/// selectivity (k_isc_1 > k_isc_0, k_s0 > k_s1) is what polarizes m_s = 0
/// under pumping.
struct RateSet {
    double gamma_pump_mhz = 10.0;   // spin-conserving GS -> ES drive, prop. to laser power
    double gamma_rad_mhz = 1000.0;  // ES -> GS radiative decay (~1 ns lifetime)
    double k_isc_0_mhz = 100.0;     // ES m_s=0 -> singlet
    double k_isc_1_mhz = 1000.0;    // ES m_s=+-1 -> singlet
    double k_s0_mhz = 300.0;        // singlet -> GS m_s=0
    double k_s1_mhz = 30.0;         // singlet -> GS m_s=+1 and m_s=-1
    double gamma_deph_e_mhz = 5.0;
    double gamma_deph_n_mhz = 0.01;
    // nuclear spin relaxation (I+ and I- jumps); the hyperfine flip-flop rate
    // competes against it, which is what localizes the polarization peak at
    // the anticrossing instead of letting branching ratios saturate it
    double gamma_relax_n_mhz = 1.0;

    void validate() const {
        const double all[] = {gamma_pump_mhz, gamma_rad_mhz, k_isc_0_mhz, k_isc_1_mhz,
                              k_s0_mhz,       k_s1_mhz,      gamma_deph_e_mhz, gamma_deph_n_mhz,
                              gamma_relax_n_mhz};
        for (double v : all)
            if (v < 0.0 || !std::isfinite(v))
                throw std::invalid_argument("RateSet: rates must be finite and >= 0");
        // pumping without spin-selective shelving cannot polarize m_s = 0
        if (gamma_pump_mhz > 0.0 && k_isc_1_mhz <= k_isc_0_mhz)
            throw std::invalid_argument(
                "RateSet: k_isc_1 must exceed k_isc_0 when the pump is on");
    }
};

/// Index map of the {GS triplet, ES triplet, singlet} (x) nuclear register.
/// Electronic level order: GS m_s=+1,0,-1; ES m_s=+1,0,-1; singlet.
/// Nuclear order matches CompositeSpace (site 1 slowest, m descending).
struct LevelScheme {
    std::vector<IsotopeSpec> nuclei;

    static constexpr int kElectronic = 7;
    static constexpr int kGsUp = 0, kGs0 = 1, kGsDn = 2;
    static constexpr int kEsUp = 3, kEs0 = 4, kEsDn = 5;
    static constexpr int kSinglet = 6;

    explicit LevelScheme(std::vector<IsotopeSpec> nuclei_in = {}) : nuclei(std::move(nuclei_in)) {}

    int nuclear_dim() const {
        int d = 1;
        for (const auto& n : nuclei) d *= n.spin.dimension();
        return d;
    }
    int dim() const { return kElectronic * nuclear_dim(); }
    int flat(int electronic, int nuclear) const { return electronic * nuclear_dim() + nuclear; }

    /// Total nuclear projection of the nuclear basis state `nuclear`.
    double m_i_total(int nuclear) const {
        double m = 0.0;
        int rest = nuclear;
        for (auto it = nuclei.rbegin(); it != nuclei.rend(); ++it) {
            const int d = it->spin.dimension();
            const int idx = rest % d;
            rest /= d;
            m += it->spin.s() - idx;
        }
        return m;
    }

    std::string label(int flat_index) const {
        static const char* electronic_names[] = {"gs_ms+1", "gs_ms0", "gs_ms-1",
                                                 "es_ms+1", "es_ms0", "es_ms-1", "singlet"};
        const int nd = nuclear_dim();
        const int e = flat_index / nd;
        int rest = flat_index % nd;
        std::string nuc;
        std::vector<int> idx(nuclei.size());
        for (int i = static_cast<int>(nuclei.size()) - 1; i >= 0; --i) {
            const int d = nuclei[i].spin.dimension();
            idx[i] = rest % d;
            rest /= d;
        }
        for (std::size_t i = 0; i < nuclei.size(); ++i) {
            if (nuclei[i].spin.two_s == 1)
                nuc += idx[i] == 0 ? 'u' : 'd';
            else
                nuc += std::to_string(idx[i]);
        }
        std::string out = electronic_names[e];
        if (!nuc.empty()) out += "|" + nuc;
        return out;
    }
};

namespace detail {

/// acc += coeff * kron(a, b), skipping zero entries of `a`.
inline void kron_accumulate(ComplexMatrix& acc, const ComplexMatrix& a, const ComplexMatrix& b,
                            Complex coeff) {
    const auto br = b.rows(), bc = b.cols();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const Complex w = coeff * a(i, j);
            if (w == Complex(0.0, 0.0)) continue;
            acc.block(i * br, j * bc, br, bc) += w * b;
        }
}

/// Lindblad dissipator of jump operator l in column-stacked vectorization:
/// kron(conj(l), l) - 1/2 kron(I, l^H l) - 1/2 kron((l^H l)^T, I).
inline void add_dissipator(ComplexMatrix& acc, const ComplexMatrix& l, double rate) {
    if (rate == 0.0) return;
    const auto d = l.rows();
    const ComplexMatrix eye = ComplexMatrix::Identity(d, d);
    const ComplexMatrix ldl = l.adjoint() * l;
    kron_accumulate(acc, l.conjugate(), l, Complex(rate, 0.0));
    kron_accumulate(acc, eye, ldl, Complex(-0.5 * rate, 0.0));
    kron_accumulate(acc, ldl.transpose(), eye, Complex(-0.5 * rate, 0.0));
}

/// Electron-level population transfer |to><from| (x) identity on the nuclei.
inline ComplexMatrix level_transfer(const LevelScheme& scheme, int to, int from) {
    const int nd = scheme.nuclear_dim();
    ComplexMatrix l = ComplexMatrix::Zero(scheme.dim(), scheme.dim());
    for (int n = 0; n < nd; ++n) l(scheme.flat(to, n), scheme.flat(from, n)) = 1.0;
    return l;
}

}  // namespace detail

/// Hamiltonian of the full level scheme, MHz: spin Hamiltonians of the two
/// triplet manifolds plus nuclear Zeeman in the singlet block.
inline ComplexMatrix build_level_hamiltonian(const DefectModel& model, const FieldConfig& field,
                                             const LevelScheme& scheme) {
    const int nd = scheme.nuclear_dim();
    const int dim = scheme.dim();
    ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
    h.topLeftCorner(3 * nd, 3 * nd) =
        build_hamiltonian(model, Manifold::ground, field, scheme.nuclei);
    h.block(3 * nd, 3 * nd, 3 * nd, 3 * nd) =
        build_hamiltonian(model, Manifold::excited, field, scheme.nuclei);
    h.bottomRightCorner(nd, nd) = build_nuclear_zeeman(field, scheme.nuclei);
    return h;
}

/// Vectorized Liouvillian (column-stacked), rad/us units for the coherent
/// part: L = -i 2 pi [H, .] + sum of dissipators for pumping, radiative
/// decay, spin-dependent ISC, singlet decay and pure dephasing (Sz eigenbasis
/// per triplet, Iz per nuclear site).
inline ComplexMatrix build_liouvillian(const DefectModel& model, const FieldConfig& field,
                                       const RateSet& rates, const LevelScheme& scheme) {
    rates.validate();
    const int nd = scheme.nuclear_dim();
    const int dim = scheme.dim();
    const ComplexMatrix h = build_level_hamiltonian(model, field, scheme);
    const ComplexMatrix eye = ComplexMatrix::Identity(dim, dim);

    ComplexMatrix super = ComplexMatrix::Zero(dim * dim, dim * dim);
    const Complex minus_i_two_pi(0.0, -2.0 * std::numbers::pi);
    detail::kron_accumulate(super, eye, h, minus_i_two_pi);
    detail::kron_accumulate(super, h.transpose(), eye, -minus_i_two_pi);

    // spin-conserving optical drive and radiative decay
    for (const auto [gs, es] : {std::pair{LevelScheme::kGsUp, LevelScheme::kEsUp},
                                std::pair{LevelScheme::kGs0, LevelScheme::kEs0},
                                std::pair{LevelScheme::kGsDn, LevelScheme::kEsDn}}) {
        detail::add_dissipator(super, detail::level_transfer(scheme, es, gs),
                               rates.gamma_pump_mhz);
        detail::add_dissipator(super, detail::level_transfer(scheme, gs, es),
                               rates.gamma_rad_mhz);
    }
    // spin-dependent shelving through the singlet
    detail::add_dissipator(super, detail::level_transfer(scheme, LevelScheme::kSinglet,
                                                         LevelScheme::kEs0),
                           rates.k_isc_0_mhz);
    detail::add_dissipator(super, detail::level_transfer(scheme, LevelScheme::kSinglet,
                                                         LevelScheme::kEsUp),
                           rates.k_isc_1_mhz);
    detail::add_dissipator(super, detail::level_transfer(scheme, LevelScheme::kSinglet,
                                                         LevelScheme::kEsDn),
                           rates.k_isc_1_mhz);
    detail::add_dissipator(super, detail::level_transfer(scheme, LevelScheme::kGs0,
                                                         LevelScheme::kSinglet),
                           rates.k_s0_mhz);
    detail::add_dissipator(super, detail::level_transfer(scheme, LevelScheme::kGsUp,
                                                         LevelScheme::kSinglet),
                           rates.k_s1_mhz);
    detail::add_dissipator(super, detail::level_transfer(scheme, LevelScheme::kGsDn,
                                                         LevelScheme::kSinglet),
                           rates.k_s1_mhz);

    // electron dephasing in the Sz eigenbasis of each triplet
    if (rates.gamma_deph_e_mhz > 0.0) {
        ComplexMatrix sz_gs = ComplexMatrix::Zero(dim, dim);
        ComplexMatrix sz_es = ComplexMatrix::Zero(dim, dim);
        for (int n = 0; n < nd; ++n) {
            sz_gs(scheme.flat(LevelScheme::kGsUp, n), scheme.flat(LevelScheme::kGsUp, n)) = 1.0;
            sz_gs(scheme.flat(LevelScheme::kGsDn, n), scheme.flat(LevelScheme::kGsDn, n)) = -1.0;
            sz_es(scheme.flat(LevelScheme::kEsUp, n), scheme.flat(LevelScheme::kEsUp, n)) = 1.0;
            sz_es(scheme.flat(LevelScheme::kEsDn, n), scheme.flat(LevelScheme::kEsDn, n)) = -1.0;
        }
        detail::add_dissipator(super, sz_gs, rates.gamma_deph_e_mhz);
        detail::add_dissipator(super, sz_es, rates.gamma_deph_e_mhz);
    }
    // nuclear dephasing and relaxation, all electronic blocks
    if ((rates.gamma_deph_n_mhz > 0.0 || rates.gamma_relax_n_mhz > 0.0) &&
        !scheme.nuclei.empty()) {
        CompositeSpace nuc_space;
        for (const auto& n : scheme.nuclei) nuc_space.factors.push_back(n.spin);
        const ComplexMatrix eye_e = ComplexMatrix::Identity(LevelScheme::kElectronic,
                                                            LevelScheme::kElectronic);
        for (std::size_t site = 0; site < scheme.nuclei.size(); ++site) {
            const SpinOperators ops = spin_operators(scheme.nuclei[site].spin);
            detail::add_dissipator(super, kron(eye_e, embed(ops.sz, site, nuc_space)),
                                   rates.gamma_deph_n_mhz);
            detail::add_dissipator(super, kron(eye_e, embed(ops.splus, site, nuc_space)),
                                   rates.gamma_relax_n_mhz);
            detail::add_dissipator(super, kron(eye_e, embed(ops.sminus, site, nuc_space)),
                                   rates.gamma_relax_n_mhz);
        }
    }
    return super;
}

/// Steady-state density matrix with solver diagnostics. `residual_norm` is
/// ||L vec(rho)|| / (||L||_F ||vec(rho)||); `degenerate` flags a null space
/// of dimension > 1, in which case rho is the minimum-norm representative.
struct SteadyState {
    ComplexMatrix rho;
    double residual_norm = 0.0;
    bool degenerate = false;
};

inline SteadyState steady_state(const ComplexMatrix& liouvillian) {
    const auto dim_sq = liouvillian.rows();
    const int dim = static_cast<int>(std::llround(std::sqrt(static_cast<double>(dim_sq))));
    if (static_cast<Eigen::Index>(dim) * dim != dim_sq)
        throw std::invalid_argument("steady_state: superoperator is not a square vectorization");

    const double l_norm = liouvillian.norm();

    // fast path: replace one row with the trace constraint and LU-solve
    ComplexMatrix m = liouvillian;
    m.row(0).setZero();
    for (int i = 0; i < dim; ++i) m(0, i * dim + i) = 1.0;
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(dim_sq);
    rhs(0) = 1.0;
    const Eigen::PartialPivLU<ComplexMatrix> lu(m);
    Eigen::VectorXcd x = lu.solve(rhs);

    auto rel_residual = [&](const Eigen::VectorXcd& v) {
        return (liouvillian * v).norm() / (l_norm * v.norm());
    };

    auto trace_of = [dim](const Eigen::VectorXcd& v) {
        Complex t = 0.0;
        for (int i = 0; i < dim; ++i) t += v(i * dim + i);
        return t;
    };

    SteadyState out;
    // a singular system still yields small residuals (any null mix works), so
    // rank deficiency must be detected through the condition estimate
    bool good = x.allFinite() && lu.rcond() > 1e-13 && std::abs(trace_of(x) - 1.0) < 1e-6;
    double resid = good ? rel_residual(x) : 1.0;
    if (!good || resid > 1e-8) {
        // rank-deficient Liouvillian: minimum-norm least-squares with the
        // trace constraint appended
        ComplexMatrix stacked(dim_sq + 1, dim_sq);
        stacked.topRows(dim_sq) = liouvillian;
        stacked.row(dim_sq).setZero();
        for (int i = 0; i < dim; ++i) stacked(dim_sq, i * dim + i) = 1.0;
        Eigen::VectorXcd rhs2 = Eigen::VectorXcd::Zero(dim_sq + 1);
        rhs2(dim_sq) = 1.0;
        Eigen::CompleteOrthogonalDecomposition<ComplexMatrix> cod(stacked);
        x = cod.solve(rhs2);
        out.degenerate = cod.rank() < dim_sq;
        resid = rel_residual(x);
        if (resid > 1e-8)
            throw std::runtime_error("steady_state: residual " + std::to_string(resid) +
                                     " exceeds 1e-8 after least-squares fallback");
    }
    out.residual_norm = resid;

    ComplexMatrix rho(dim, dim);
    for (int col = 0; col < dim; ++col) rho.col(col) = x.segment(col * dim, dim);
    rho = 0.5 * (rho + ComplexMatrix(rho.adjoint()));
    rho /= rho.trace().real();

    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(rho, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-9)
        throw std::runtime_error("steady_state: negative population " +
                                 std::to_string(es.eigenvalues().minCoeff()));
    out.rho = std::move(rho);
    return out;
}

/// Diagonal populations of the GS m_s=0 manifold grouped by total nuclear
/// projection m_I.
inline std::vector<std::pair<double, double>> ms0_populations_by_projection(
    const SteadyState& ss, const LevelScheme& scheme) {
    const int nd = scheme.nuclear_dim();
    std::vector<std::pair<double, double>> sums;
    for (int n = 0; n < nd; ++n) {
        const int i = scheme.flat(LevelScheme::kGs0, n);
        const double m = scheme.m_i_total(n);
        const double pop = ss.rho(i, i).real();
        bool found = false;
        for (auto& [mi, s] : sums)
            if (std::abs(mi - m) < 1e-9) {
                s += pop;
                found = true;
            }
        if (!found) sums.emplace_back(m, pop);
    }
    std::sort(sums.begin(), sums.end());
    return sums;
}

/// Average per-spin nuclear polarization of the GS m_s=0 populations:
/// (sum m_I S_mI) / (max m_I * sum S_mI).
inline double nuclear_polarization(const SteadyState& ss, const LevelScheme& scheme) {
    if (scheme.nuclei.empty()) return 0.0;
    const auto sums = ms0_populations_by_projection(ss, scheme);
    double num = 0.0, den = 0.0, m_max = 0.0;
    for (const auto& [m, s] : sums) {
        num += m * s;
        den += s;
        m_max = std::max(m_max, std::abs(m));
    }
    if (den <= 0.0 || m_max == 0.0) return 0.0;
    return num / (m_max * den);
}

struct SweepPoint {
    double b_mt = 0.0;
    double polarization = 0.0;
    double residual_norm = 0.0;
    bool ok = false;
    std::string error;
};

/// Steady-state polarization over a field grid at fixed tilt. Points are
/// independent; results are ordered by grid index for any worker count.
inline std::vector<SweepPoint> sweep_field(const DefectModel& model, const RateSet& rates,
                                           const std::vector<double>& b_grid_mt, double tilt_deg,
                                           const LevelScheme& scheme, int n_workers = 1) {
    std::vector<SweepPoint> results(b_grid_mt.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= b_grid_mt.size()) return;
            SweepPoint& pt = results[i];
            pt.b_mt = b_grid_mt[i];
            try {
                const FieldConfig field{b_grid_mt[i], tilt_deg, 0.0};
                const ComplexMatrix l = build_liouvillian(model, field, rates, scheme);
                const SteadyState ss = steady_state(l);
                pt.polarization = nuclear_polarization(ss, scheme);
                pt.residual_norm = ss.residual_norm;
                pt.ok = true;
            } catch (const std::exception& e) {
                pt.ok = false;
                pt.error = e.what();
            }
        }
    };
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return results;
}

}  // namespace vbsim
