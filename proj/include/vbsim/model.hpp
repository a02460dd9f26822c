#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vbsim/spin.hpp"

namespace vbsim {

/// A nuclear (or electronic) spin species with its shipped constants.
struct IsotopeSpec {
    std::string name;
    SpinSpec spin;
    double gamma_n_mhz_per_t = 0.0;  // signed
    double natural_abundance = 0.0;  // fraction
};

namespace isotopes {

inline IsotopeSpec boron11() { return {"11B", SpinSpec(3), 13.66, 0.80}; }
inline IsotopeSpec boron10() { return {"10B", SpinSpec(6), 4.575, 0.20}; }
inline IsotopeSpec nitrogen14() { return {"14N", SpinSpec(2), 3.07, 0.996}; }
inline IsotopeSpec nitrogen15() { return {"15N", SpinSpec(1), -4.3, 0.004}; }

inline IsotopeSpec by_name(const std::string& name) {
    if (name == "11B") return boron11();
    if (name == "10B") return boron10();
    if (name == "14N") return nitrogen14();
    if (name == "15N") return nitrogen15();
    throw std::invalid_argument("unknown isotope '" + name + "' (expected 10B, 11B, 14N or 15N)");
}

}  // namespace isotopes

/// Diagonal hyperfine coupling in the site principal frame, MHz.
struct HyperfineTensor {
    double axx_mhz = 0.0;
    double ayy_mhz = 0.0;
    double azz_mhz = 0.0;

    double a_plus_mhz() const { return 0.25 * (axx_mhz + ayy_mhz); }
    double a_minus_mhz() const { return 0.25 * (axx_mhz - ayy_mhz); }
};

/// Rescales every tensor component by gamma_n(to)/gamma_n(from), sign included.
inline HyperfineTensor scale_tensor_by_isotope(const HyperfineTensor& t, const IsotopeSpec& from,
                                               const IsotopeSpec& to) {
    const double r = to.gamma_n_mhz_per_t / from.gamma_n_mhz_per_t;
    return {t.axx_mhz * r, t.ayy_mhz * r, t.azz_mhz * r};
}

/// Static field of magnitude b_mag at angle tilt_deg from the defect z axis;
/// azimuth_deg orients the transverse component in the xy plane.
struct FieldConfig {
    double b_mag_mt = 0.0;
    double tilt_deg = 0.0;
    double azimuth_deg = 0.0;

    double b_z_mt() const { return b_mag_mt * std::cos(tilt_deg * std::numbers::pi / 180.0); }
    double b_perp_mt() const { return b_mag_mt * std::sin(tilt_deg * std::numbers::pi / 180.0); }
};

enum class Manifold { ground, excited };

/// Electronic and hyperfine parameters of the defect. The three nitrogen
/// sites carry one diagonal tensor each, principal frames aligned.
struct DefectModel {
    double d_gs_ghz = 3.47;
    double d_es_ghz = 2.1;
    double gamma_e_ghz_per_t = 28.0;
    IsotopeSpec nitrogen = isotopes::nitrogen15();
    std::array<HyperfineTensor, 3> tensors_gs{};
    std::array<HyperfineTensor, 3> tensors_es{};

    /// Shipped defaults: measured |A_zz| for 15N (stored negative, following
    /// the sign of its gyromagnetic ratio), transverse components scaled from
    /// the 14N ab-initio values by the gamma ratio. Excited-state tensors
    /// default to zero: no measured values exist, and at the pump rates
    /// treated here the excited state contributes no net polarization, which
    /// a copied ground-state tensor would spuriously break near the ESLAC.
    static DefectModel defaults() {
        DefectModel m;
        const HyperfineTensor n14{47.0, 90.0, 44.3};
        HyperfineTensor n15 =
            scale_tensor_by_isotope(n14, isotopes::nitrogen14(), isotopes::nitrogen15());
        n15.azz_mhz = -64.1;  // measured value overrides the scaled one
        m.tensors_gs = {n15, n15, n15};
        m.tensors_es = {HyperfineTensor{}, HyperfineTensor{}, HyperfineTensor{}};
        return m;
    }

    double zero_field_splitting_mhz(Manifold manifold) const {
        return 1000.0 * (manifold == Manifold::ground ? d_gs_ghz : d_es_ghz);
    }
    const std::array<HyperfineTensor, 3>& tensors(Manifold manifold) const {
        return manifold == Manifold::ground ? tensors_gs : tensors_es;
    }
    double gslac_field_mt() const { return 1000.0 * d_gs_ghz / gamma_e_ghz_per_t; }
    double eslac_field_mt() const { return 1000.0 * d_es_ghz / gamma_e_ghz_per_t; }

    void validate() const {
        if (gslac_field_mt() < 120.0 || gslac_field_mt() > 130.0)
            throw std::invalid_argument("DefectModel: d_gs/gamma_e outside [0.12, 0.13] T");
        if (eslac_field_mt() < 70.0 || eslac_field_mt() > 80.0)
            throw std::invalid_argument("DefectModel: d_es/gamma_e outside [0.07, 0.08] T");
    }
};

namespace detail {

// Transverse axes rotated by the field azimuth. Applying the same rotation to
// the Zeeman terms and to the tensor frames makes the spectrum an exact
// invariant of the azimuth (it is a rigid rotation about z).
struct RotatedAxes {
    ComplexMatrix x, y;
};

inline RotatedAxes rotate_about_z(const SpinOperators& ops, double azimuth_deg) {
    const double phi = azimuth_deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    return {c * ops.sx + s * ops.sy, -s * ops.sx + c * ops.sy};
}

}  // namespace detail

/// Ground- or excited-state spin Hamiltonian over [S=1, nuclei...], in MHz
/// (ordinary frequency):
///   D Sz^2 + ge Bz Sz + ge Bperp Sx
///   - sum_i gn Bz Iz_i - sum_i gn Bperp Ix_i
///   + sum_i (Axx Sx Ix + Ayy Sy Iy + Azz Sz Iz)_i
inline ComplexMatrix build_hamiltonian(const DefectModel& model, Manifold manifold,
                                       const FieldConfig& field,
                                       const std::vector<IsotopeSpec>& nuclei,
                                       const std::vector<HyperfineTensor>& tensors) {
    if (nuclei.size() > 3)
        throw std::invalid_argument("build_hamiltonian: at most 3 coherent nuclei supported");
    if (tensors.size() != nuclei.size())
        throw std::invalid_argument("build_hamiltonian: " + std::to_string(tensors.size()) +
                                    " tensors for " + std::to_string(nuclei.size()) + " nuclei");

    CompositeSpace space;
    space.factors.emplace_back(2);  // electron triplet
    for (const auto& n : nuclei) space.factors.push_back(n.spin);
    const int dim = space.dim();

    const double d_mhz = model.zero_field_splitting_mhz(manifold);
    const double ge_mhz_per_mt = model.gamma_e_ghz_per_t;  // GHz/T == MHz/mT
    const double bz = field.b_z_mt();
    const double bp = field.b_perp_mt();

    const SpinOperators s_ops = spin_operators(SpinSpec(2));
    const auto s_axes = detail::rotate_about_z(s_ops, field.azimuth_deg);
    const ComplexMatrix sx = embed(s_axes.x, 0, space);
    const ComplexMatrix sy = embed(s_axes.y, 0, space);
    const ComplexMatrix sz = embed(s_ops.sz, 0, space);

    ComplexMatrix h = d_mhz * sz * sz + ge_mhz_per_mt * bz * sz + ge_mhz_per_mt * bp * sx;

    for (std::size_t i = 0; i < nuclei.size(); ++i) {
        const SpinOperators i_ops = spin_operators(nuclei[i].spin);
        const auto i_axes = detail::rotate_about_z(i_ops, field.azimuth_deg);
        const ComplexMatrix ix = embed(i_axes.x, i + 1, space);
        const ComplexMatrix iy = embed(i_axes.y, i + 1, space);
        const ComplexMatrix iz = embed(i_ops.sz, i + 1, space);

        const double gn_mhz_per_mt = 1e-3 * nuclei[i].gamma_n_mhz_per_t;
        h -= gn_mhz_per_mt * bz * iz;
        h -= gn_mhz_per_mt * bp * ix;
        h += tensors[i].axx_mhz * sx * ix + tensors[i].ayy_mhz * sy * iy +
             tensors[i].azz_mhz * sz * iz;
    }

    // guard against accumulation asymmetry
    h = 0.5 * (h + ComplexMatrix(h.adjoint()));
    (void)dim;
    return h;
}

/// Convenience overload taking the first nuclei.size() tensors from the model.
inline ComplexMatrix build_hamiltonian(const DefectModel& model, Manifold manifold,
                                       const FieldConfig& field,
                                       const std::vector<IsotopeSpec>& nuclei) {
    const auto& site_tensors = model.tensors(manifold);
    if (nuclei.size() > site_tensors.size())
        throw std::invalid_argument("build_hamiltonian: at most 3 coherent nuclei supported");
    std::vector<HyperfineTensor> tensors(site_tensors.begin(),
                                         site_tensors.begin() + nuclei.size());
    return build_hamiltonian(model, manifold, field, nuclei, tensors);
}

/// Nuclear-only Zeeman Hamiltonian (MHz) on the bare nuclear product space;
/// used for electronic levels that carry no electron spin.
inline ComplexMatrix build_nuclear_zeeman(const FieldConfig& field,
                                          const std::vector<IsotopeSpec>& nuclei) {
    CompositeSpace space;
    for (const auto& n : nuclei) space.factors.push_back(n.spin);
    const int dim = space.factors.empty() ? 1 : space.dim();
    ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
    for (std::size_t i = 0; i < nuclei.size(); ++i) {
        const SpinOperators i_ops = spin_operators(nuclei[i].spin);
        const auto i_axes = detail::rotate_about_z(i_ops, field.azimuth_deg);
        const double gn_mhz_per_mt = 1e-3 * nuclei[i].gamma_n_mhz_per_t;
        h -= gn_mhz_per_mt * field.b_z_mt() * embed(i_ops.sz, i, space);
        h -= gn_mhz_per_mt * field.b_perp_mt() * embed(i_axes.x, i, space);
    }
    return h;
}

struct LacResult {
    double b_mt = 0.0;
    double gap_mhz = 0.0;
};

namespace detail {

inline double lac_gap_mhz(const DefectModel& model, Manifold manifold,
                          const std::vector<IsotopeSpec>& nuclei, double b_mt) {
    const ComplexMatrix h =
        build_hamiltonian(model, manifold, FieldConfig{b_mt, 0.0, 0.0}, nuclei);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
    int nuclear_dim = 1;
    for (const auto& n : nuclei) nuclear_dim *= n.spin.dimension();
    // Levels sorted ascending; the m_s=0 group fills the lowest nuclear_dim
    // slots below the anticrossing, so this is the gap that closes there.
    return es.eigenvalues()(nuclear_dim) - es.eigenvalues()(nuclear_dim - 1);
}

}  // namespace detail

/// Field of minimum gap between the adiabatic levels connected to m_s=0 and
/// m_s=-1, located by a grid scan over [0, 300] mT followed by golden-section
/// refinement. Returns nothing when no interior minimum exists in the window.
inline std::optional<LacResult> locate_lac(const DefectModel& model, Manifold manifold,
                                           const std::vector<IsotopeSpec>& nuclei = {},
                                           double b_min_mt = 0.0, double b_max_mt = 300.0,
                                           double grid_step_mt = 0.1) {
    const auto gap = [&](double b) { return detail::lac_gap_mhz(model, manifold, nuclei, b); };

    const int n_steps = static_cast<int>(std::floor((b_max_mt - b_min_mt) / grid_step_mt));
    int best = 0;
    double best_gap = gap(b_min_mt);
    for (int i = 1; i <= n_steps; ++i) {
        const double g = gap(b_min_mt + i * grid_step_mt);
        if (g < best_gap) {
            best_gap = g;
            best = i;
        }
    }
    if (best == 0 || best == n_steps) return std::nullopt;

    // golden-section refinement inside the bracketing interval
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = b_min_mt + (best - 1) * grid_step_mt;
    double hi = b_min_mt + (best + 1) * grid_step_mt;
    double c = hi - invphi * (hi - lo);
    double d = lo + invphi * (hi - lo);
    double gc = gap(c), gd = gap(d);
    while (hi - lo > 1e-6) {
        if (gc < gd) {
            hi = d;
            d = c;
            gd = gc;
            c = hi - invphi * (hi - lo);
            gc = gap(c);
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + invphi * (hi - lo);
            gd = gap(d);
        }
    }
    const double b_star = 0.5 * (lo + hi);
    return LacResult{b_star, gap(b_star)};
}

}  // namespace vbsim
