// Command-line front end: hyperfine spectrum synthesis, spectrum fitting,
// the four-level polarization model and the full master-equation solver,
// wired together through a JSON run configuration.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vbsim/config.hpp"
#include "vbsim/fit.hpp"
#include "vbsim/io.hpp"
#include "vbsim/lindblad.hpp"
#include "vbsim/ratemodel.hpp"
#include "vbsim/spectra.hpp"

namespace {

using namespace vbsim;

struct CommonArgs {
    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    int workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run configuration (defaults if omitted)");
    cmd->add_option("--out", args.out_path, "output path (stdout if omitted)");
    cmd->add_option("--seed", args.seed, "noise seed");
    cmd->add_option("--workers", args.workers, "worker threads for sweeps")
        ->check(CLI::Range(1, 64));
}

RunConfig resolve_config(const CommonArgs& args) {
    if (args.config_path.empty()) {
        RunConfig c;
        c.validate();
        return c;
    }
    return load_config(args.config_path);
}

std::unique_ptr<std::ostream> open_out(const std::string& path) {
    if (path.empty()) return nullptr;
    auto out = std::make_unique<std::ofstream>(path);
    if (!*out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

std::ostream& out_stream(const std::unique_ptr<std::ostream>& file) {
    return file ? *file : std::cout;
}

void write_header(std::ostream& os, const std::string& command, const RunConfig& cfg,
                  std::uint64_t seed) {
    os << "# generated_by = vbsim " << command << "\n";
    os << "# seed = " << seed << "\n";
    os << "# config = " << config_fingerprint(cfg) << "\n";
}

std::vector<double> grid_points(const GridSpec& g) {
    if (g.n == 1) return {g.lo};
    return linspace(g.lo, g.hi, static_cast<std::size_t>(g.n));
}

// ---------------------------------------------------------------------------

int cmd_spectrum(const CommonArgs& args, const std::string& boron_override,
                 const std::string& nitrogen_override) {
    RunConfig cfg = resolve_config(args);
    if (!boron_override.empty()) cfg.boron = boron_override;
    if (!nitrogen_override.empty()) cfg.nitrogen = nitrogen_override;
    cfg.validate();

    const IsotopeSpec nitrogen = cfg.nitrogen_isotope();
    const double a_zz = cfg.nitrogen_tensor().azz_mhz;
    auto lines = nitrogen_lines(nitrogen, a_zz);
    if (cfg.polarization != 0.0) lines = polarized_lines(lines, cfg.polarization);

    const double sigma = total_line_sigma(cfg.boron_calibration(), cfg.boron_isotope());
    const double center = cfg.resolved_center_mhz();
    GridSpec g = cfg.spectrum_grid_mhz;
    if (g.lo >= g.hi) {
        const double half_span = nitrogen.spin.s() * 3.0 * std::abs(a_zz) + 5.0 * sigma;
        g.lo = center - half_span;
        g.hi = center + half_span;
    }
    Spectrum spec = synthesize(lines, sigma, center, cfg.contrast_amplitude, grid_points(g));
    add_noise(spec, cfg.noise_sigma, args.seed);

    spec.meta.emplace_back("boron", cfg.boron);
    spec.meta.emplace_back("nitrogen", cfg.nitrogen);
    spec.meta.emplace_back("n_lines", std::to_string(lines.size()));
    spec.meta.emplace_back("a_zz_mhz", format_g9(a_zz));
    spec.meta.emplace_back("sigma_mhz", format_g9(sigma));
    spec.meta.emplace_back("center_mhz", format_g9(center));
    spec.meta.emplace_back("polarization", format_g9(cfg.polarization));

    auto file = open_out(args.out_path);
    std::ostream& os = out_stream(file);
    write_header(os, "spectrum", cfg, args.seed);
    write_spectrum_csv(os, spec);
    return 0;
}

int cmd_fit(const CommonArgs& args, const std::string& input, int n_lines, bool free_fit,
            const std::string& report_csv) {
    const Spectrum spec = read_spectrum_csv_file(input);
    auto file = open_out(args.out_path);
    std::ostream& os = out_stream(file);

    if (free_fit) {
        const FreeMixtureFit fit = fit_mixture_free(spec, n_lines);
        os << "converged = " << (fit.converged ? "yes" : "no") << "\n";
        os << "baseline = " << format_g9(fit.baseline) << "\n";
        for (int k = 0; k < n_lines; ++k)
            os << "line" << k << " = center " << format_g9(fit.centers_mhz[k]) << " MHz, sigma "
               << format_g9(fit.sigmas_mhz[k]) << " MHz, amplitude "
               << format_g9(fit.amplitudes[k]) << "\n";
        os << "rss = " << format_g9(fit.rss) << "\n";
        if (!fit.converged) {
            std::cerr << "vbsim fit: " << fit.message << "\n";
            return 1;
        }
        return 0;
    }

    const MixtureFit fit = fit_mixture(spec, n_lines);
    os << "converged = " << (fit.converged ? "yes" : "no") << "\n";
    os << "center_mhz = " << format_g9(fit.center_mhz) << "\n";
    os << "splitting_mhz = " << format_g9(fit.splitting_mhz) << "\n";
    os << "sigma_mhz = " << format_g9(fit.sigma_mhz) << "\n";
    os << "fwhm_mhz = " << format_g9(fit.fwhm_mhz()) << "\n";
    os << "baseline = " << format_g9(fit.baseline) << "\n";
    os << "splitting_err_mhz = " << format_g9(std::sqrt(fit.covariance(1, 1))) << "\n";
    os << "sigma_err_mhz = " << format_g9(std::sqrt(fit.covariance(2, 2))) << "\n";
    for (std::size_t k = 0; k < fit.amplitudes.size(); ++k)
        os << "amplitude" << k << " = " << format_g9(fit.amplitudes[k]) << "\n";
    os << "rss = " << format_g9(fit.rss) << "\n";
    os << "iterations = " << fit.iterations << "\n";

    const auto areas = areas_by_projection(fit);
    for (const auto& [m_i, area] : areas)
        os << "area_m" << format_g9(m_i) << " = " << format_g9(area) << "\n";
    os << "polarization_eq1 = " << format_g9(polarization_from_areas(areas)) << "\n";

    if (!report_csv.empty()) {
        std::ofstream crow(report_csv, std::ios::app);
        if (!crow) throw std::runtime_error("cannot open '" + report_csv + "' for writing");
        crow << input << "," << format_g9(fit.center_mhz) << "," << format_g9(fit.splitting_mhz)
             << "," << format_g9(fit.sigma_mhz) << "," << format_g9(fit.fwhm_mhz()) << ","
             << format_g9(fit.rss) << "," << (fit.converged ? 1 : 0) << "\n";
    }
    if (!fit.converged) {
        std::cerr << "vbsim fit: " << fit.message << "\n";
        return 1;
    }
    return 0;
}

int cmd_ratemodel(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const auto powers = grid_points(cfg.power_grid_mw);
    const auto curve =
        polarization_vs_power(cfg.gamma_plus_mhz, cfg.gamma_minus_mhz, powers, cfg.k_mhz_per_mw);
    const double limit = saturation_polarization(cfg.gamma_plus_mhz, cfg.gamma_minus_mhz);

    auto file = open_out(args.out_path);
    std::ostream& os = out_stream(file);
    write_header(os, "ratemodel", cfg, args.seed);
    os << "# saturation_limit = " << format_g9(limit) << "\n";
    os << "power_mw,polarization\n";
    for (const auto& pt : curve)
        os << format_g9(pt.power_mw) << "," << format_g9(pt.polarization) << "\n";
    std::cerr << "saturation limit (gamma_l -> inf): " << format_g9(limit) << "\n";
    return 0;
}

int cmd_dnp_steady(const CommonArgs& args, std::optional<double> b_mt, bool dump_populations) {
    RunConfig cfg = resolve_config(args);
    if (b_mt) cfg.field.b_mag_mt = *b_mt;
    cfg.validate();

    const LevelScheme scheme(std::vector<IsotopeSpec>(3, cfg.nitrogen_isotope()));
    const ComplexMatrix liouvillian =
        build_liouvillian(cfg.defect_model(), cfg.field, cfg.rates, scheme);
    const SteadyState ss = steady_state(liouvillian);
    const double p = nuclear_polarization(ss, scheme);

    auto file = open_out(args.out_path);
    std::ostream& os = out_stream(file);
    write_header(os, "dnp-steady", cfg, args.seed);
    os << "# b_mt = " << format_g9(cfg.field.b_mag_mt) << "\n";
    os << "# polarization = " << format_g9(p) << "\n";
    os << "# residual_norm = " << format_g9(ss.residual_norm) << "\n";
    os << "# degenerate = " << (ss.degenerate ? "yes" : "no") << "\n";
    if (dump_populations) {
        os << "state,population\n";
        for (int i = 0; i < scheme.dim(); ++i)
            os << scheme.label(i) << "," << format_g9(ss.rho(i, i).real()) << "\n";
    } else {
        os << "m_i,population_ms0\n";
        for (const auto& [m, pop] : ms0_populations_by_projection(ss, scheme))
            os << format_g9(m) << "," << format_g9(pop) << "\n";
    }
    std::cerr << "steady-state polarization at " << format_g9(cfg.field.b_mag_mt)
              << " mT: " << format_g9(p) << "\n";
    return 0;
}

int cmd_dnp_sweep(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    const LevelScheme scheme(std::vector<IsotopeSpec>(3, cfg.nitrogen_isotope()));
    const auto grid = grid_points(cfg.sweep_grid_mt);
    const auto points = sweep_field(cfg.defect_model(), cfg.rates, grid, cfg.field.tilt_deg,
                                    scheme, args.workers);

    auto file = open_out(args.out_path);
    std::ostream& os = out_stream(file);
    write_header(os, "dnp-sweep", cfg, args.seed);
    os << "b_mt,polarization,residual_norm\n";
    int failures = 0;
    for (const auto& pt : points) {
        if (pt.ok) {
            os << format_g9(pt.b_mt) << "," << format_g9(pt.polarization) << ","
               << format_g9(pt.residual_norm) << "\n";
        } else {
            ++failures;
            os << format_g9(pt.b_mt) << ",nan,nan\n";
            std::cerr << "vbsim dnp-sweep: point " << format_g9(pt.b_mt)
                      << " mT failed: " << pt.error << "\n";
        }
    }
    return failures == 0 ? 0 : 1;
}

int cmd_fit_saturation(const CommonArgs& args, const std::string& input) {
    const Spectrum xy = read_spectrum_csv_file(input);  // two columns: power, polarization
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < xy.freq_mhz.size(); ++i)
        pts.emplace_back(xy.freq_mhz[i], xy.signal[i]);
    const SaturationFit fit = fit_saturation(pts);

    auto file = open_out(args.out_path);
    std::ostream& os = out_stream(file);
    os << "converged = " << (fit.converged ? "yes" : "no") << "\n";
    os << "p_max = " << format_g9(fit.p_max) << "\n";
    os << "p_sat_mw = " << format_g9(fit.p_sat_mw) << "\n";
    os << "p_max_err = " << format_g9(std::sqrt(fit.covariance(0, 0))) << "\n";
    os << "p_sat_err_mw = " << format_g9(std::sqrt(fit.covariance(1, 1))) << "\n";
    os << "rss = " << format_g9(fit.rss) << "\n";
    if (!fit.converged) {
        std::cerr << "vbsim fit-saturation: " << fit.message << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"V_B- spin defect toolkit: hyperfine spectra, DNP models, fitting"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* spectrum = app.add_subcommand("spectrum", "synthesize a hyperfine ESR spectrum");
    std::string boron_override, nitrogen_override;
    add_common(spectrum, args);
    spectrum->add_option("--boron", boron_override, "boron isotope (10B or 11B)");
    spectrum->add_option("--nitrogen", nitrogen_override, "nitrogen isotope (14N or 15N)");

    auto* fit = app.add_subcommand("fit", "fit Gaussian dips to a spectrum CSV");
    std::string fit_input, fit_report_csv;
    int n_lines = 4;
    bool free_fit = false;
    add_common(fit, args);
    fit->add_option("input", fit_input, "spectrum CSV")->required();
    fit->add_option("--lines", n_lines, "number of hyperfine lines")->check(CLI::Range(2, 9));
    fit->add_flag("--free", free_fit, "per-line centers and widths (diagnostic)");
    fit->add_option("--report-csv", fit_report_csv, "append a machine-readable result row here");

    auto* ratemodel = app.add_subcommand("ratemodel", "four-level polarization vs laser power");
    add_common(ratemodel, args);

    auto* dnp_steady = app.add_subcommand("dnp-steady", "single-field master-equation steady state");
    double b_override = -1.0;
    bool dump_populations = false;
    bool have_b_override = false;
    add_common(dnp_steady, args);
    dnp_steady->add_option("--b-mt", b_override, "field magnitude in mT (overrides config)")
        ->each([&have_b_override](const std::string&) { have_b_override = true; });
    dnp_steady->add_flag("--dump-populations", dump_populations,
                         "write all labeled diagonal populations");

    auto* dnp_sweep = app.add_subcommand("dnp-sweep", "steady-state polarization vs field");
    add_common(dnp_sweep, args);

    auto* fit_sat = app.add_subcommand("fit-saturation", "fit a rising saturation curve");
    std::string sat_input;
    add_common(fit_sat, args);
    fit_sat->add_option("input", sat_input, "CSV of (power_mw, polarization)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (spectrum->parsed()) return cmd_spectrum(args, boron_override, nitrogen_override);
        if (fit->parsed()) return cmd_fit(args, fit_input, n_lines, free_fit, fit_report_csv);
        if (ratemodel->parsed()) return cmd_ratemodel(args);
        if (dnp_steady->parsed())
            return cmd_dnp_steady(
                args, have_b_override ? std::optional<double>(b_override) : std::nullopt,
                dump_populations);
        if (dnp_sweep->parsed()) return cmd_dnp_sweep(args);
        if (fit_sat->parsed()) return cmd_fit_saturation(args, sat_input);
    } catch (const std::exception& e) {
        std::cerr << "vbsim: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
