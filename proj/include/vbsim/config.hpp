#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vbsim/lindblad.hpp"
#include "vbsim/model.hpp"
#include "vbsim/spectra.hpp"

namespace vbsim {

struct GridSpec {
    double lo = 0.0;
    double hi = 1.0;
    int n = 2;
};

/// Fully resolved run parameters. Every physical constant ships with a
/// default and a provenance note; config files are validated fail-closed
/// (unknown keys are errors, so typos cannot silently drop a constant).
struct RunConfig {
    int schema_version = 1;

    // defect
    double d_gs_ghz = 3.47;
    double d_es_ghz = 2.1;
    double gamma_e_ghz_per_t = 28.0;

    // isotope selection
    std::string boron = "10B";
    std::string nitrogen = "15N";

    // first-shell hyperfine tensors (one per isotope, three aligned sites)
    HyperfineTensor tensor_n14{47.0, 90.0, 44.3};
    HyperfineTensor tensor_n15{-65.8306188925081, -126.058631921824, -64.1};
    HyperfineTensor tensor_es{0.0, 0.0, 0.0};

    // second-shell linewidth model inputs (calibrated pair derived from them)
    double fwhm_b10_mhz = 44.3;
    double fwhm_b11_mhz = 52.9;

    // static field
    FieldConfig field{12.0, 0.0, 0.0};

    // optical cycle rates
    RateSet rates;

    // four-level model
    double gamma_plus_mhz = 47.9722992630716;   // |A+| of the 15N tensor
    double gamma_minus_mhz = 15.0570082572685;  // |A-| of the 15N tensor
    double k_mhz_per_mw = 1.0;
    GridSpec power_grid_mw{0.0, 10.0, 41};

    // spectrum synthesis
    std::optional<double> center_mhz;  // absent: computed from the transition
    std::string transition = "ms0_to_ms-1";
    double contrast_amplitude = 0.08;
    double polarization = 0.0;
    double noise_sigma = 0.0;  // absolute, signal units
    GridSpec spectrum_grid_mhz{0.0, 0.0, 2001};  // lo==hi: span chosen automatically

    // field sweep
    GridSpec sweep_grid_mt{5.0, 140.0, 46};

    std::map<std::string, std::string> provenance = default_provenance();

    static std::map<std::string, std::string> default_provenance() {
        return {
            {"d_gs_ghz", "measured zero-field splitting of the ground-state triplet"},
            {"d_es_ghz", "measured zero-field splitting of the excited-state triplet"},
            {"gamma_e_ghz_per_t", "electron gyromagnetic ratio, literature value"},
            {"tensor_n14", "axx/ayy from ab-initio calculations; azz measured 44.3(2) MHz"},
            {"tensor_n15",
             "axx/ayy scaled from 14N by gamma_n(15N)/gamma_n(14N); azz measured -64.1(2) MHz "
             "(magnitude measured, sign follows the gyromagnetic ratio)"},
            {"tensor_es",
             "assumed zero: no measured excited-state tensor; nonzero values would produce an "
             "excited-state anticrossing response not seen at these pump rates"},
            {"fwhm_b10_mhz", "measured ESR linewidth in the 10B host, 44.3(3) MHz"},
            {"fwhm_b11_mhz", "measured ESR linewidth in the 11B host, 52.9(3) MHz"},
            {"boron_shell", "a_zz(11B) and intrinsic width derived from the two FWHMs via the "
                            "quadrature-sum model with a_zz(10B) = a_zz(11B)/3"},
            {"rates.gamma_pump_mhz", "pump rate of the field-sweep simulations, 10 MHz"},
            {"rates.gamma_rad_mhz", "radiative decay for a ~1 ns excited-state lifetime"},
            {"rates.other",
             "assumed: shelving, singlet decay, dephasing and nuclear relaxation rates are not "
             "published; chosen so the simulated polarization peaks near the ground-state "
             "anticrossing at the observed ~30% scale"},
            {"gamma_plus_mhz", "derived |A+| = |axx+ayy|/4 of the 15N tensor"},
            {"gamma_minus_mhz", "derived |A-| = |axx-ayy|/4 of the 15N tensor"},
            {"k_mhz_per_mw", "assumed power-to-rate conversion; 10 mW ~ 10 MHz"},
        };
    }

    BoronCalibration boron_calibration() const {
        return calibrate_boron_linewidths(fwhm_b10_mhz, fwhm_b11_mhz);
    }

    IsotopeSpec boron_isotope() const { return isotopes::by_name(boron); }
    IsotopeSpec nitrogen_isotope() const { return isotopes::by_name(nitrogen); }

    const HyperfineTensor& nitrogen_tensor() const {
        if (nitrogen == "14N") return tensor_n14;
        if (nitrogen == "15N") return tensor_n15;
        throw std::invalid_argument("config: nitrogen must be 14N or 15N");
    }

    DefectModel defect_model() const {
        DefectModel m;
        m.d_gs_ghz = d_gs_ghz;
        m.d_es_ghz = d_es_ghz;
        m.gamma_e_ghz_per_t = gamma_e_ghz_per_t;
        m.nitrogen = nitrogen_isotope();
        const HyperfineTensor& t = nitrogen_tensor();
        m.tensors_gs = {t, t, t};
        m.tensors_es = {tensor_es, tensor_es, tensor_es};
        return m;
    }

    /// Line-center frequency in MHz: explicit value or the Zeeman-shifted
    /// electron resonance of the selected transition.
    double resolved_center_mhz() const {
        if (center_mhz) return *center_mhz;
        const double d_mhz = 1000.0 * d_gs_ghz;
        const double zeeman = gamma_e_ghz_per_t * field.b_z_mt();
        if (transition == "ms0_to_ms-1") return d_mhz - zeeman;
        if (transition == "ms0_to_ms+1") return d_mhz + zeeman;
        throw std::invalid_argument("config: transition must be ms0_to_ms-1 or ms0_to_ms+1");
    }

    void validate() const {
        if (schema_version != 1)
            throw std::invalid_argument("config: unsupported schema_version " +
                                        std::to_string(schema_version));
        (void)boron_isotope();
        (void)nitrogen_isotope();
        (void)nitrogen_tensor();
        (void)resolved_center_mhz();
        (void)boron_calibration();
        rates.validate();
        defect_model().validate();
        if (contrast_amplitude <= 0.0)
            throw std::invalid_argument("config: contrast_amplitude must be > 0");
        if (noise_sigma < 0.0) throw std::invalid_argument("config: noise_sigma must be >= 0");
        if (polarization < -1.0 || polarization > 1.0)
            throw std::invalid_argument("config: polarization must lie in [-1, 1]");
        for (const auto& [name, g] :
             {std::pair<const char*, const GridSpec&>{"power_grid_mw", power_grid_mw},
              {"sweep_grid_mt", sweep_grid_mt}}) {
            if (g.n < 1 || g.hi < g.lo)
                throw std::invalid_argument(std::string("config: bad grid ") + name);
        }
        if (spectrum_grid_mhz.n < 8)
            throw std::invalid_argument("config: spectrum grid needs at least 8 points");
    }
};

namespace detail {

using nlohmann::json;

inline void require_keys(const json& obj, const std::string& path,
                         const std::vector<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const auto& a : allowed)
            if (key == a) known = true;
        if (!known)
            throw std::invalid_argument("config: unknown key '" + path + key + "'");
    }
}

inline json tensor_to_json(const HyperfineTensor& t) {
    return {{"axx_mhz", t.axx_mhz}, {"ayy_mhz", t.ayy_mhz}, {"azz_mhz", t.azz_mhz}};
}

inline HyperfineTensor tensor_from_json(const json& j, const std::string& path) {
    require_keys(j, path, {"axx_mhz", "ayy_mhz", "azz_mhz"});
    HyperfineTensor t;
    t.axx_mhz = j.value("axx_mhz", 0.0);
    t.ayy_mhz = j.value("ayy_mhz", 0.0);
    t.azz_mhz = j.value("azz_mhz", 0.0);
    return t;
}

inline json grid_to_json(const GridSpec& g) {
    return {{"lo", g.lo}, {"hi", g.hi}, {"n", g.n}};
}

inline GridSpec grid_from_json(const json& j, const std::string& path, GridSpec fallback) {
    require_keys(j, path, {"lo", "hi", "n"});
    GridSpec g = fallback;
    g.lo = j.value("lo", g.lo);
    g.hi = j.value("hi", g.hi);
    g.n = j.value("n", g.n);
    return g;
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
    using nlohmann::json;
    json j;
    j["schema_version"] = c.schema_version;
    j["defect"] = {{"d_gs_ghz", c.d_gs_ghz},
                   {"d_es_ghz", c.d_es_ghz},
                   {"gamma_e_ghz_per_t", c.gamma_e_ghz_per_t}};
    j["isotopes"] = {{"boron", c.boron}, {"nitrogen", c.nitrogen}};
    j["hyperfine"] = {{"n14", detail::tensor_to_json(c.tensor_n14)},
                      {"n15", detail::tensor_to_json(c.tensor_n15)},
                      {"es", detail::tensor_to_json(c.tensor_es)}};
    j["linewidth"] = {{"fwhm_b10_mhz", c.fwhm_b10_mhz}, {"fwhm_b11_mhz", c.fwhm_b11_mhz}};
    j["field"] = {{"b_mt", c.field.b_mag_mt},
                  {"tilt_deg", c.field.tilt_deg},
                  {"azimuth_deg", c.field.azimuth_deg}};
    j["rates"] = {{"gamma_pump_mhz", c.rates.gamma_pump_mhz},
                  {"gamma_rad_mhz", c.rates.gamma_rad_mhz},
                  {"k_isc_0_mhz", c.rates.k_isc_0_mhz},
                  {"k_isc_1_mhz", c.rates.k_isc_1_mhz},
                  {"k_s0_mhz", c.rates.k_s0_mhz},
                  {"k_s1_mhz", c.rates.k_s1_mhz},
                  {"gamma_deph_e_mhz", c.rates.gamma_deph_e_mhz},
                  {"gamma_deph_n_mhz", c.rates.gamma_deph_n_mhz},
                  {"gamma_relax_n_mhz", c.rates.gamma_relax_n_mhz}};
    j["ratemodel"] = {{"gamma_plus_mhz", c.gamma_plus_mhz},
                      {"gamma_minus_mhz", c.gamma_minus_mhz},
                      {"k_mhz_per_mw", c.k_mhz_per_mw},
                      {"power_grid_mw", detail::grid_to_json(c.power_grid_mw)}};
    json spectrum = {{"transition", c.transition},
                     {"contrast_amplitude", c.contrast_amplitude},
                     {"polarization", c.polarization},
                     {"noise_sigma", c.noise_sigma},
                     {"grid_mhz", detail::grid_to_json(c.spectrum_grid_mhz)}};
    if (c.center_mhz) spectrum["center_mhz"] = *c.center_mhz;
    j["spectrum"] = spectrum;
    j["sweep"] = {{"grid_mt", detail::grid_to_json(c.sweep_grid_mt)}};
    j["provenance"] = c.provenance;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    using detail::require_keys;
    RunConfig c;
    require_keys(j, "", {"schema_version", "defect", "isotopes", "hyperfine", "linewidth",
                         "field", "rates", "ratemodel", "spectrum", "sweep", "provenance"});
    c.schema_version = j.value("schema_version", 1);
    if (j.contains("defect")) {
        const auto& d = j.at("defect");
        require_keys(d, "defect.", {"d_gs_ghz", "d_es_ghz", "gamma_e_ghz_per_t"});
        c.d_gs_ghz = d.value("d_gs_ghz", c.d_gs_ghz);
        c.d_es_ghz = d.value("d_es_ghz", c.d_es_ghz);
        c.gamma_e_ghz_per_t = d.value("gamma_e_ghz_per_t", c.gamma_e_ghz_per_t);
    }
    if (j.contains("isotopes")) {
        const auto& iso = j.at("isotopes");
        require_keys(iso, "isotopes.", {"boron", "nitrogen"});
        c.boron = iso.value("boron", c.boron);
        c.nitrogen = iso.value("nitrogen", c.nitrogen);
    }
    if (j.contains("hyperfine")) {
        const auto& h = j.at("hyperfine");
        require_keys(h, "hyperfine.", {"n14", "n15", "es"});
        if (h.contains("n14")) c.tensor_n14 = detail::tensor_from_json(h.at("n14"), "hyperfine.n14.");
        if (h.contains("n15")) c.tensor_n15 = detail::tensor_from_json(h.at("n15"), "hyperfine.n15.");
        if (h.contains("es")) c.tensor_es = detail::tensor_from_json(h.at("es"), "hyperfine.es.");
    }
    if (j.contains("linewidth")) {
        const auto& lw = j.at("linewidth");
        require_keys(lw, "linewidth.", {"fwhm_b10_mhz", "fwhm_b11_mhz"});
        c.fwhm_b10_mhz = lw.value("fwhm_b10_mhz", c.fwhm_b10_mhz);
        c.fwhm_b11_mhz = lw.value("fwhm_b11_mhz", c.fwhm_b11_mhz);
    }
    if (j.contains("field")) {
        const auto& f = j.at("field");
        require_keys(f, "field.", {"b_mt", "tilt_deg", "azimuth_deg"});
        c.field.b_mag_mt = f.value("b_mt", c.field.b_mag_mt);
        c.field.tilt_deg = f.value("tilt_deg", c.field.tilt_deg);
        c.field.azimuth_deg = f.value("azimuth_deg", c.field.azimuth_deg);
    }
    if (j.contains("rates")) {
        const auto& r = j.at("rates");
        require_keys(r, "rates.",
                     {"gamma_pump_mhz", "gamma_rad_mhz", "k_isc_0_mhz", "k_isc_1_mhz", "k_s0_mhz",
                      "k_s1_mhz", "gamma_deph_e_mhz", "gamma_deph_n_mhz", "gamma_relax_n_mhz"});
        c.rates.gamma_pump_mhz = r.value("gamma_pump_mhz", c.rates.gamma_pump_mhz);
        c.rates.gamma_rad_mhz = r.value("gamma_rad_mhz", c.rates.gamma_rad_mhz);
        c.rates.k_isc_0_mhz = r.value("k_isc_0_mhz", c.rates.k_isc_0_mhz);
        c.rates.k_isc_1_mhz = r.value("k_isc_1_mhz", c.rates.k_isc_1_mhz);
        c.rates.k_s0_mhz = r.value("k_s0_mhz", c.rates.k_s0_mhz);
        c.rates.k_s1_mhz = r.value("k_s1_mhz", c.rates.k_s1_mhz);
        c.rates.gamma_deph_e_mhz = r.value("gamma_deph_e_mhz", c.rates.gamma_deph_e_mhz);
        c.rates.gamma_deph_n_mhz = r.value("gamma_deph_n_mhz", c.rates.gamma_deph_n_mhz);
        c.rates.gamma_relax_n_mhz = r.value("gamma_relax_n_mhz", c.rates.gamma_relax_n_mhz);
    }
    if (j.contains("ratemodel")) {
        const auto& rm = j.at("ratemodel");
        require_keys(rm, "ratemodel.",
                     {"gamma_plus_mhz", "gamma_minus_mhz", "k_mhz_per_mw", "power_grid_mw"});
        c.gamma_plus_mhz = rm.value("gamma_plus_mhz", c.gamma_plus_mhz);
        c.gamma_minus_mhz = rm.value("gamma_minus_mhz", c.gamma_minus_mhz);
        c.k_mhz_per_mw = rm.value("k_mhz_per_mw", c.k_mhz_per_mw);
        if (rm.contains("power_grid_mw"))
            c.power_grid_mw = detail::grid_from_json(rm.at("power_grid_mw"),
                                                     "ratemodel.power_grid_mw.", c.power_grid_mw);
    }
    if (j.contains("spectrum")) {
        const auto& s = j.at("spectrum");
        require_keys(s, "spectrum.", {"transition", "center_mhz", "contrast_amplitude",
                                      "polarization", "noise_sigma", "grid_mhz"});
        c.transition = s.value("transition", c.transition);
        if (s.contains("center_mhz")) c.center_mhz = s.at("center_mhz").get<double>();
        c.contrast_amplitude = s.value("contrast_amplitude", c.contrast_amplitude);
        c.polarization = s.value("polarization", c.polarization);
        c.noise_sigma = s.value("noise_sigma", c.noise_sigma);
        if (s.contains("grid_mhz"))
            c.spectrum_grid_mhz = detail::grid_from_json(s.at("grid_mhz"), "spectrum.grid_mhz.",
                                                         c.spectrum_grid_mhz);
    }
    if (j.contains("sweep")) {
        const auto& sw = j.at("sweep");
        require_keys(sw, "sweep.", {"grid_mt"});
        if (sw.contains("grid_mt"))
            c.sweep_grid_mt = detail::grid_from_json(sw.at("grid_mt"), "sweep.grid_mt.",
                                                     c.sweep_grid_mt);
    }
    if (j.contains("provenance")) {
        c.provenance.clear();
        for (const auto& [key, value] : j.at("provenance").items())
            c.provenance[key] = value.get<std::string>();
    }
    c.validate();
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

/// Compact single-line form used to embed the resolved configuration in
/// output file headers.
inline std::string config_fingerprint(const RunConfig& c) { return to_json(c).dump(); }

}  // namespace vbsim
