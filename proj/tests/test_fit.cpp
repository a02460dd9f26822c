#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "vbsim/fit.hpp"
#include "vbsim/ratemodel.hpp"
#include "vbsim/spectra.hpp"

using namespace vbsim;
using Catch::Approx;

namespace {

struct SynthCase {
    IsotopeSpec nitrogen;
    IsotopeSpec boron;
    double a_zz;
    int n_lines;
};

Spectrum make_spectrum(const SynthCase& c, double p = 0.0, double amplitude = 0.08) {
    const BoronCalibration cal = calibrate_boron_linewidths(44.3, 52.9);
    const double sigma = total_line_sigma(cal, c.boron);
    auto lines = nitrogen_lines(c.nitrogen, c.a_zz);
    if (p != 0.0) lines = polarized_lines(lines, p);
    const double half_span = 1.5 * std::abs(c.a_zz) * c.nitrogen.spin.s() * 2.0 + 6.0 * sigma;
    const auto grid = linspace(-half_span, half_span, 1601);
    return synthesize(lines, sigma, 0.0, amplitude, grid);
}

}  // namespace

TEST_CASE("noiseless 15N spectrum round-trips through the mixture fit", "[fit]") {
    const SynthCase c{isotopes::nitrogen15(), isotopes::boron10(), -64.1, 4};
    const Spectrum spec = make_spectrum(c);
    const MixtureFit fit = fit_mixture(spec, 4);
    REQUIRE(fit.converged);
    CHECK(fit.splitting_mhz == Approx(64.1).epsilon(1e-3));
    CHECK(fit.fwhm_mhz() == Approx(44.3).epsilon(1e-3));
    CHECK(std::abs(fit.center_mhz) < 0.05);
    CHECK(std::abs(fit.baseline) < 1e-5);
}

TEST_CASE("all four isotope hosts round-trip to better than 0.1% relative", "[fit]") {
    const BoronCalibration cal = calibrate_boron_linewidths(44.3, 52.9);
    const std::vector<SynthCase> cases = {
        {isotopes::nitrogen14(), isotopes::boron10(), 44.3, 7},
        {isotopes::nitrogen14(), isotopes::boron11(), 44.3, 7},
        {isotopes::nitrogen15(), isotopes::boron10(), -64.1, 4},
        {isotopes::nitrogen15(), isotopes::boron11(), -64.1, 4},
    };
    for (const auto& c : cases) {
        const Spectrum spec = make_spectrum(c);
        const MixtureFit fit = fit_mixture(spec, c.n_lines);
        REQUIRE(fit.converged);
        CHECK(fit.splitting_mhz == Approx(std::abs(c.a_zz)).epsilon(1e-3));
        const double expected_fwhm = fwhm_from_sigma(total_line_sigma(cal, c.boron));
        CHECK(fit.fwhm_mhz() == Approx(expected_fwhm).epsilon(1e-3));
    }
}

TEST_CASE("splitting stays within 0.5 MHz under 5% noise across 100 seeds", "[fit]") {
    const SynthCase c{isotopes::nitrogen15(), isotopes::boron10(), -64.1, 4};
    const Spectrum clean = make_spectrum(c);
    const double dip = -*std::min_element(clean.signal.begin(), clean.signal.end());
    int failures = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Spectrum noisy = clean;
        add_noise(noisy, 0.05 * dip, seed);
        const MixtureFit fit = fit_mixture(noisy, 4);
        if (!fit.converged || std::abs(fit.splitting_mhz - 64.1) > 0.5) ++failures;
    }
    CHECK(failures == 0);
}

TEST_CASE("calibrated synthesis reproduces the measured splittings and widths", "[fit]") {
    // 14N splitting
    const Spectrum n14 = make_spectrum({isotopes::nitrogen14(), isotopes::boron10(), 44.3, 7});
    const MixtureFit f14 = fit_mixture(n14, 7);
    REQUIRE(f14.converged);
    CHECK(f14.splitting_mhz == Approx(44.3).margin(0.2));
    // boron-dependent linewidths at the 15N splitting
    const Spectrum b10 = make_spectrum({isotopes::nitrogen15(), isotopes::boron10(), -64.1, 4});
    CHECK(fit_mixture(b10, 4).fwhm_mhz() == Approx(44.3).margin(0.3));
    const Spectrum b11 = make_spectrum({isotopes::nitrogen15(), isotopes::boron11(), -64.1, 4});
    CHECK(fit_mixture(b11, 4).fwhm_mhz() == Approx(52.9).margin(0.3));
}

TEST_CASE("fit is invariant under grid shifts and signal rescaling", "[fit]") {
    const SynthCase c{isotopes::nitrogen15(), isotopes::boron10(), -64.1, 4};
    Spectrum spec = make_spectrum(c);
    const MixtureFit ref = fit_mixture(spec, 4);

    Spectrum shifted = spec;
    for (auto& f : shifted.freq_mhz) f += 3100.0;
    const MixtureFit fs = fit_mixture(shifted, 4);
    CHECK(fs.center_mhz - ref.center_mhz == Approx(3100.0).margin(1e-6));
    CHECK(fs.splitting_mhz == Approx(ref.splitting_mhz).margin(1e-6));
    CHECK(fs.sigma_mhz == Approx(ref.sigma_mhz).margin(1e-6));

    Spectrum scaled = spec;
    for (auto& v : scaled.signal) v *= 37.0;
    const MixtureFit fr = fit_mixture(scaled, 4);
    CHECK(fr.splitting_mhz == Approx(ref.splitting_mhz).margin(1e-6));
    CHECK(fr.sigma_mhz == Approx(ref.sigma_mhz).margin(1e-6));
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(fr.amplitudes[k] == Approx(37.0 * ref.amplitudes[k]).epsilon(1e-6));
}

TEST_CASE("degenerate flat input is rejected", "[fit]") {
    Spectrum flat;
    flat.freq_mhz = linspace(0.0, 100.0, 64);
    flat.signal.assign(64, 0.123);
    CHECK_THROWS_AS(fit_mixture(flat, 4), std::invalid_argument);
    CHECK_THROWS_AS(fit_mixture(flat, 1), std::invalid_argument);
    CHECK_THROWS_AS(fit_mixture(flat, 10), std::invalid_argument);
}

TEST_CASE("polarization extraction from areas handles the reference cases", "[fit]") {
    using Areas = std::vector<std::pair<double, double>>;
    const Areas equal{{-1.5, 1.0}, {-0.5, 1.0}, {0.5, 1.0}, {1.5, 1.0}};
    CHECK(polarization_from_areas(equal) == Approx(0.0).margin(1e-15));
    const Areas top{{-1.5, 0.0}, {-0.5, 0.0}, {0.5, 0.0}, {1.5, 2.7}};
    CHECK(polarization_from_areas(top) == Approx(1.0).epsilon(1e-15));
    const Areas bottom{{-1.5, 2.7}, {-0.5, 0.0}, {0.5, 0.0}, {1.5, 0.0}};
    CHECK(polarization_from_areas(bottom) == Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(polarization_from_areas(Areas{{1.5, 0.0}, {-1.5, 0.0}}),
                    std::invalid_argument);
    CHECK_THROWS_AS(polarization_from_areas(Areas{}), std::invalid_argument);
}

TEST_CASE("polarization from areas is linear and bounded", "[fit]") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> areas;
        for (double m : {-1.5, -0.5, 0.5, 1.5}) areas.emplace_back(m, u(rng));
        const double p = polarization_from_areas(areas);
        CHECK(p >= -1.0);
        CHECK(p <= 1.0);
        auto scaled = areas;
        for (auto& [m, s] : scaled) s *= 17.3;
        CHECK(polarization_from_areas(scaled) == Approx(p).epsilon(1e-12));
    }
}

TEST_CASE("Eq.-1 polarization round-trips through polarized synthesis", "[fit]") {
    for (double p : {-0.6, -0.1, 0.0, 0.22, 0.75}) {
        const SynthCase c{isotopes::nitrogen15(), isotopes::boron10(), -64.1, 4};
        const Spectrum spec = make_spectrum(c, p);
        const MixtureFit fit = fit_mixture(spec, 4);
        REQUIRE(fit.converged);
        const double p_out = polarization_from_areas(areas_by_projection(fit));
        CHECK(p_out == Approx(p).margin(5e-8));
    }
}

TEST_CASE("saturation fit recovers exact model parameters to 1e-8", "[fit]") {
    std::vector<std::pair<double, double>> pts;
    for (double pw : {0.1, 0.3, 0.6, 1.0, 1.5, 2.2, 3.0, 4.5, 7.0, 10.0})
        pts.emplace_back(pw, 0.226 * pw / (1.1 + pw));
    const SaturationFit fit = fit_saturation(pts);
    REQUIRE(fit.converged);
    CHECK(fit.p_max == Approx(0.226).epsilon(1e-8));
    CHECK(fit.p_sat_mw == Approx(1.1).epsilon(1e-8));
}

TEST_CASE("powers far above saturation leave p_sat unconstrained, loudly", "[fit]") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> noise(0.0, 1e-5);
    std::vector<std::pair<double, double>> pts;
    for (double pw : {500.0, 800.0, 1200.0, 2000.0, 5000.0})
        pts.emplace_back(pw, 0.226 * pw / (1.1 + pw) + noise(rng));
    const SaturationFit fit = fit_saturation(pts);
    // relative uncertainty on p_sat dwarfs the one on p_max
    const double sd_pmax = std::sqrt(fit.covariance(0, 0)) / std::abs(fit.p_max);
    const double sd_psat = std::sqrt(fit.covariance(1, 1)) / std::abs(fit.p_sat_mw);
    CHECK(sd_psat > 100.0 * std::max(sd_pmax, 1e-12));
}

TEST_CASE("saturation fit input validation", "[fit]") {
    CHECK_THROWS_AS(fit_saturation({{1.0, 0.1}, {2.0, 0.2}}), std::invalid_argument);
    CHECK_THROWS_AS(fit_saturation({{1.0, 0.1}, {1.0, 0.2}, {2.0, 0.3}}),
                    std::invalid_argument);
}

TEST_CASE("four-level curve fitted with the saturation form matches Eq. 3", "[fit]") {
    const double a_plus = (47.0 + 90.0) / 4.0;
    const double a_minus = (47.0 - 90.0) / 4.0;
    const double gp = std::abs(a_plus), gm = std::abs(a_minus);
    std::vector<double> powers;
    for (int i = 1; i <= 30; ++i) powers.push_back(2.0 * i);
    const auto curve = polarization_vs_power(gp, gm, powers, 1.0);
    std::vector<std::pair<double, double>> pts;
    for (const auto& pt : curve) pts.emplace_back(pt.power_mw, pt.polarization);
    const SaturationFit fit = fit_saturation(pts);
    REQUIRE(fit.converged);
    CHECK(fit.p_max == Approx(saturation_polarization(a_plus, a_minus)).epsilon(0.1));
}
