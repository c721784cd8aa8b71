#include <catch2/catch_amalgamated.hpp>

#include "ppsf/io.hpp"
#include "ppsf/qpm.hpp"

#include "oracles.hpp"

using namespace ppsf;

namespace {

const StepIndexFiber& raw_fiber() {
    static const StepIndexFiber f =
        load_fiber(std::string(PPSF_CONFIG_DIR) + "/fiber_ppsf.json");
    return f;
}

const StepIndexFiber& cal_fiber() {
    static const StepIndexFiber f = calibrated_fiber(raw_fiber());
    return f;
}

double degenerate_mismatch(const StepIndexFiber& f, ProcessType p, double pump_nm) {
    const double wp = omega_from_wavelength(pump_nm * 1e-9);
    return phase_mismatch(f, p, 0.5 * wp, 0.5 * wp);
}

}  // namespace

TEST_CASE("calibration leaves a tiny positive dn far below the core contrast") {
    const double dn = cal_fiber().birefringence_dn;
    CHECK(dn > 0.0);
    CHECK(dn < 1e-3);
    CHECK(dn < 0.01 * cal_fiber().core_index_offset);
}

TEST_CASE("calibrated type-II mismatch vanishes at the 653.3 nm target") {
    const double mm = degenerate_mismatch(cal_fiber(), ProcessType::TypeII, 653.3);
    CHECK(std::abs(mm) < 1e-5);
    CHECK(std::abs(mm) < 2.0 * pi / (100.0 * cal_fiber().length_m));
}

TEST_CASE("calibration is a fixed point when re-run on the calibrated fiber") {
    const double dn2 = calibrate_birefringence(cal_fiber());
    CHECK(std::abs(dn2 - cal_fiber().birefringence_dn) < 1e-12);
}

TEST_CASE("target at the dn-free QPM wavelength calibrates to dn = 0") {
    // Find the type-0 degenerate QPM root, which does not depend on dn.
    const double root_nm = bisect(
        [&](double nm) { return degenerate_mismatch(raw_fiber(), ProcessType::Type0, nm); }, 652.0,
        654.0, 1e-10, "type0 root");
    CHECK(calibrate_birefringence(raw_fiber(), root_nm) == 0.0);
}

TEST_CASE("grating-free limit reduces to the bare wavenumber mismatch") {
    StepIndexFiber f = cal_fiber();
    f.poling_period_um = 1e15;
    const double ws = omega_from_wavelength(1310e-9);
    const double wi = omega_from_wavelength(1303e-9);
    const double bare = wavenumber_at_omega(f, ws + wi, PolarizationAxis::V) -
                        wavenumber_at_omega(f, ws, PolarizationAxis::H) -
                        wavenumber_at_omega(f, wi, PolarizationAxis::V);
    CHECK(phase_mismatch(f, ProcessType::TypeII, ws, wi) == Catch::Approx(bare).margin(1e-8));
}

TEST_CASE("calibration fails cleanly when the poling period cannot be rescued") {
    StepIndexFiber f = raw_fiber();
    f.poling_period_um = 40.0;  // grating far from any QPM solution near 653.3
    CHECK_THROWS_AS(calibrate_birefringence(f), CalibrationError);
}

TEST_CASE("spectral density is peak-normalized with the peak at degeneracy") {
    const auto s = spdc_spectral_density({cal_fiber(), ProcessType::TypeII, 653.3, {}});
    double maxv = 0.0;
    std::size_t imax = 0;
    for (std::size_t i = 0; i < s.intensity.size(); ++i)
        if (s.intensity[i] > maxv) {
            maxv = s.intensity[i];
            imax = i;
        }
    CHECK(maxv == 1.0);
    const double grid_step = s.delta[1] - s.delta[0];
    CHECK(std::abs(s.delta[imax]) < 2.0 * grid_step);
    for (double v : s.intensity) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
}

TEST_CASE("full density equals a direct evaluation through phase_mismatch") {
    const SpdcConfig cfg{cal_fiber(), ProcessType::TypeII, 653.3, {512, 2.0 * pi * 40e12}};
    const auto s = spdc_spectral_density(cfg);
    const double wc = 0.5 * omega_from_wavelength(653.3e-9);
    const double halfL = 0.5 * cal_fiber().length_m;
    double raw_max = 0.0;
    std::vector<double> direct(s.delta.size());
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
        const double mm =
            phase_mismatch(cal_fiber(), ProcessType::TypeII, wc - s.delta[i], wc + s.delta[i]);
        direct[i] = sinc(halfL * mm) * sinc(halfL * mm);
        raw_max = std::max(raw_max, direct[i]);
    }
    for (std::size_t i = 0; i < s.delta.size(); ++i)
        REQUIRE(s.intensity[i] == Catch::Approx(direct[i] / raw_max).margin(1e-12));
}

TEST_CASE("first zero of the density sits where the mismatch phase reaches pi") {
    const auto s = spdc_spectral_density({cal_fiber(), ProcessType::TypeII, 653.3, {}});
    const double halfL = 0.5 * cal_fiber().length_m;
    const double wc = 0.5 * omega_from_wavelength(653.3e-9);
    // test-side root of (L/2) mismatch = -pi on the positive-Delta side
    const double d_zero = bisect(
        [&](double d) {
            return halfL * phase_mismatch(cal_fiber(), ProcessType::TypeII, wc - d, wc + d) + pi;
        },
        1e12, 3e14, 1.0, "first zero");
    // density must be tiny at that detuning
    double v = 1.0;
    for (std::size_t i = 0; i + 1 < s.delta.size(); ++i)
        if (s.delta[i] <= d_zero && d_zero <= s.delta[i + 1]) v = std::min(s.intensity[i], s.intensity[i + 1]);
    CHECK(v < 1e-3);
}

TEST_CASE("calibrated type-II spectrum exceeds the paper bandwidth") {
    const auto bw = fwhm_bandwidth(spdc_spectral_density({cal_fiber(), ProcessType::TypeII, 653.3, {}}));
    CHECK(bw.fwhm_thz > 24.0);
    CHECK(bw.fwhm_nm > 130.0);
}

TEST_CASE("taylor density with zero coefficients is flat unity") {
    const auto s = taylor_spectral_density({cal_fiber(), ProcessType::TypeII, 653.3, {64, 1e14}},
                                           0.0, 0.0);
    for (double v : s.intensity) REQUIRE(v == 1.0);
}

TEST_CASE("taylor density matches the closed-form sinc^2 to machine precision") {
    const double m = 3e-15, k2 = 2e-27;
    const SpdcConfig cfg{cal_fiber(), ProcessType::TypeII, 653.3, {256, 2.0 * pi * 30e12}};
    const auto s = taylor_spectral_density(cfg, m, k2);
    const double L = cal_fiber().length_m;
    double raw_max = 0.0;
    std::vector<double> direct(s.delta.size());
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
        const double d = s.delta[i];
        const double amp = sinc(0.5 * m * L * d + 0.5 * k2 * L * d * d);
        direct[i] = amp * amp;
        raw_max = std::max(raw_max, direct[i]);
    }
    for (std::size_t i = 0; i < s.delta.size(); ++i)
        REQUIRE(s.intensity[i] == Catch::Approx(direct[i] / raw_max).margin(1e-14));
}

TEST_CASE("taylor half width reproduces the analytic k2 L oracle") {
    // k2 L = 4e-28 s^2, M = 0: half maximum at Delta = sqrt(2 x0 / k2 L).
    const double k2 = 2e-27;
    StepIndexFiber f = cal_fiber();
    f.length_m = 0.2;
    const auto s = taylor_spectral_density({f, ProcessType::TypeII, 653.3, {}}, 0.0, k2);
    const double x0 = oracles::sinc2_half_point();
    const double d_half = std::sqrt(2.0 * x0 / (k2 * f.length_m));
    CHECK(d_half == Catch::Approx(8.341e13).epsilon(2e-4));  // frozen oracle value

    const auto bw = fwhm_bandwidth(s);
    CHECK(bw.fwhm_thz == Catch::Approx(2.0 * d_half / (2.0 * pi) / 1e12).epsilon(1e-3));
    CHECK(bw.fwhm_thz == Catch::Approx(26.6).epsilon(0.02));
}

TEST_CASE("taylor expansion tracks the full spectrum over the central lobe") {
    // Higher-order fiber dispersion bounds the attainable agreement; the
    // quartic term alone contributes a few percent at the half-maximum.
    const SpdcConfig cfg{cal_fiber(), ProcessType::TypeII, 653.3, {}};
    const auto full = spdc_spectral_density(cfg);
    const auto dh = dispersion_derivatives(cal_fiber(), 1306.6e-9, PolarizationAxis::H);
    const auto dv = dispersion_derivatives(cal_fiber(), 1306.6e-9, PolarizationAxis::V);
    const auto tay = taylor_spectral_density(cfg, dh.beta1 - dv.beta1, 0.5 * (dh.k2 + dv.k2));

    std::size_t imax = 0;
    for (std::size_t i = 1; i < full.intensity.size(); ++i)
        if (full.intensity[i] > full.intensity[imax]) imax = i;
    // central lobe edges: first samples below 1e-4 on each side
    std::size_t lo = imax, hi = imax;
    while (lo > 0 && full.intensity[lo] > 1e-4) --lo;
    while (hi + 1 < full.intensity.size() && full.intensity[hi] > 1e-4) ++hi;
    double dev = 0.0;
    for (std::size_t i = lo; i <= hi; ++i)
        dev = std::max(dev, std::abs(full.intensity[i] - tay.intensity[i]));
    CHECK(dev < 0.08);
    CHECK(dev > 1e-4);  // the quartic term is genuinely visible at this scale
}

TEST_CASE("energy-conserving mirror symmetry at dn = 0") {
    StepIndexFiber f = raw_fiber();  // dn = 0
    const auto s = spdc_spectral_density({f, ProcessType::TypeII, 653.3, {1024, 2.0 * pi * 50e12}});
    const std::size_t n = s.intensity.size();
    for (std::size_t i = 0; i < n / 2; ++i)
        REQUIRE(std::abs(s.intensity[i] - s.intensity[n - 1 - i]) < 1e-12);
}

TEST_CASE("half width scales as the inverse square root of k2 L") {
    const double k2 = 2e-27;
    StepIndexFiber f1 = cal_fiber();
    f1.length_m = 0.2;
    StepIndexFiber f2 = cal_fiber();
    f2.length_m = 0.4;
    const auto b1 = fwhm_bandwidth(taylor_spectral_density({f1, ProcessType::TypeII, 653.3, {}}, 0.0, k2));
    const auto b2 = fwhm_bandwidth(taylor_spectral_density({f2, ProcessType::TypeII, 653.3, {}}, 0.0, k2));
    CHECK(b1.fwhm_thz / b2.fwhm_thz == Catch::Approx(std::sqrt(2.0)).epsilon(0.02));
}

TEST_CASE("SHG spectrum carries the 9:1:4 weights with exact peak heights") {
    const auto grid = linspace(1306.0, 1307.2, 601);
    const auto shg = shg_spectrum(cal_fiber(), grid);
    CHECK(shg.weight0 == 9.0);
    CHECK(shg.weight1 == 1.0);
    CHECK(shg.weight2 == 4.0);

    // At the reported QPM roots the sinc^2 factor is 1, so the curve heights
    // equal the weights exactly.
    auto height_at = [&](ProcessType p, double sh_nm, double w) {
        const double wp = omega_from_wavelength(sh_nm * 1e-9);
        const double mm = phase_mismatch(cal_fiber(), p, 0.5 * wp, 0.5 * wp);
        const double amp = sinc(0.5 * cal_fiber().length_m * mm);
        return w * amp * amp;
    };
    CHECK(height_at(ProcessType::Type0, shg.peak0_sh_nm, 9.0) == Catch::Approx(9.0).epsilon(1e-9));
    CHECK(height_at(ProcessType::TypeI, shg.peak1_sh_nm, 1.0) == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(height_at(ProcessType::TypeII, shg.peak2_sh_nm, 4.0) == Catch::Approx(4.0).epsilon(1e-9));

    // Sampled curook curves approach the weights on the grid.
    const double m0 = *std::max_element(shg.type0.begin(), shg.type0.end());
    const double m2 = *std::max_element(shg.type2.begin(), shg.type2.end());
    CHECK(m0 / m2 == Catch::Approx(9.0 / 4.0).epsilon(1e-3));
}

TEST_CASE("calibrated type-II SHG peak lands on 653.3 nm") {
    const auto shg = shg_spectrum(cal_fiber(), linspace(1306.0, 1307.2, 301));
    CHECK(shg.peak2_sh_nm == Catch::Approx(653.3).margin(1e-6));
    CHECK(shg.peak2_fundamental_nm == Catch::Approx(1306.6).margin(2e-6));
}

TEST_CASE("dn > 0 splits the three QPM peaks; type-0 stays fixed") {
    const auto grid = linspace(1306.0, 1307.2, 301);
    const auto shg1 = shg_spectrum(cal_fiber(), grid);
    CHECK(shg1.peak0_sh_nm < shg1.peak2_sh_nm);
    CHECK(shg1.peak2_sh_nm < shg1.peak1_sh_nm);

    StepIndexFiber f2 = cal_fiber();
    f2.birefringence_dn *= 2.0;
    const auto shg2 = shg_spectrum(f2, grid);
    CHECK(std::abs(shg2.peak0_sh_nm - shg1.peak0_sh_nm) < 1e-9);
    CHECK(shg2.peak2_sh_nm - shg1.peak2_sh_nm > 0.5 * (shg1.peak2_sh_nm - shg1.peak0_sh_nm));
    // type-I shifts about twice as far as type-II from the fixed type-0 anchor
    const double s2 = shg1.peak2_sh_nm - shg1.peak0_sh_nm;
    const double s1 = shg1.peak1_sh_nm - shg1.peak0_sh_nm;
    CHECK(s1 == Catch::Approx(2.0 * s2).epsilon(0.05));
}

TEST_CASE("tuning curve contains degeneracy at the calibrated pump") {
    const auto tc = tuning_curve(cal_fiber(), {653.3}, 0.5, ProcessType::TypeII,
                                 {1024, 2.0 * pi * 50e12});
    REQUIRE(tc.slices.size() == 1);
    REQUIRE(!tc.slices[0].intervals.empty());
    bool covers_deg = false;
    for (const auto& iv : tc.slices[0].intervals)
        if (iv.lo_nm <= 1306.6 && 1306.6 <= iv.hi_nm + 1e-9) covers_deg = true;
    CHECK(covers_deg);
    for (const auto& iv : tc.slices[0].intervals) {
        if (iv.branch == "signal") CHECK(iv.hi_nm <= 1306.6 + 1e-9);
        if (iv.branch == "idler") CHECK(iv.lo_nm >= 1306.6 - 1e-9);
    }
}

TEST_CASE("detuned pump splits the locus into omega-symmetric branches") {
    const GridSpec grid{2048, 2.0 * pi * 55e12};
    const auto tc = tuning_curve(cal_fiber(), {652.9}, 0.5, ProcessType::TypeII, grid);
    REQUIRE(tc.slices.size() == 1);
    const auto& ivs = tc.slices[0].intervals;
    REQUIRE(ivs.size() >= 2);
    // innermost edges of the two outer branches, mapped back to |Delta|
    const double wc = 0.5 * omega_from_wavelength(652.9e-9);
    auto to_abs_delta = [&](double lam_nm) {
        return std::abs(omega_from_wavelength(lam_nm * 1e-9) - wc);
    };
    const double lo_edge = to_abs_delta(ivs.front().hi_nm);
    const double hi_edge = to_abs_delta(ivs.back().lo_nm);
    const double step = 2.0 * grid.span_rad_s / (grid.points - 1);
    CHECK(std::abs(lo_edge - hi_edge) < 2.5 * step);
}

TEST_CASE("branch separation grows away from the phase-matched pump") {
    // Brute-force oracle over a 2-D (pump, Delta) intensity scan.
    const GridSpec grid{1024, 2.0 * pi * 55e12};
    const double halfL = 0.5 * cal_fiber().length_m;
    std::vector<double> separations;
    for (double pump_nm : {653.15, 653.0, 652.85, 652.7}) {
        const double wp = omega_from_wavelength(pump_nm * 1e-9);
        double first_above = 0.0;
        const auto deltas = linspace(0.0, grid.span_rad_s, 4000);
        for (double d : deltas) {
            const double mm =
                phase_mismatch(cal_fiber(), ProcessType::TypeII, 0.5 * wp - d, 0.5 * wp + d);
            const double v = sinc(halfL * mm) * sinc(halfL * mm);
            if (v >= 0.5) first_above = d;  // outermost threshold crossing wins below
        }
        // oracle separation: smallest |Delta| reaching threshold
        double inner = grid.span_rad_s;
        for (double d : deltas) {
            const double mm =
                phase_mismatch(cal_fiber(), ProcessType::TypeII, 0.5 * wp - d, 0.5 * wp + d);
            const double v = sinc(halfL * mm) * sinc(halfL * mm);
            if (v >= 0.5 && d < inner) inner = d;
        }
        separations.push_back(inner);
        (void)first_above;
    }
    for (std::size_t i = 0; i + 1 < separations.size(); ++i)
        CHECK(separations[i] < separations[i + 1]);
}

TEST_CASE("red-detuned pump yields an empty locus, not an error") {
    const auto tc = tuning_curve(cal_fiber(), {653.6}, 0.5, ProcessType::TypeII,
                                 {512, 2.0 * pi * 40e12});
    REQUIRE(tc.slices.size() == 1);
    CHECK(tc.slices[0].intervals.empty());
}

TEST_CASE("tuning threshold is validated") {
    CHECK_THROWS_AS(tuning_curve(cal_fiber(), {653.3}, 0.0), InputError);
    CHECK_THROWS_AS(tuning_curve(cal_fiber(), {653.3}, 1.0), InputError);
}

TEST_CASE("rectangular density has FWHM equal to its width") {
    SpectralDensity s;
    s.pump_nm = 653.3;
    const int n = 2001;
    s.delta = linspace(-1e14, 1e14, n);
    s.intensity.assign(n, 0.0);
    const double w_half = 4.0e13;
    for (int i = 0; i < n; ++i)
        if (std::abs(s.delta[i]) <= w_half) s.intensity[i] = 1.0;
    const auto bw = fwhm_bandwidth(s);
    const double grid_step = s.delta[1] - s.delta[0];
    CHECK(std::abs(bw.fwhm_thz * 2.0 * pi * 1e12 - 2.0 * w_half) <= 1.5 * grid_step);
}

TEST_CASE("unbounded spectra are reported as such") {
    SpectralDensity s;
    s.pump_nm = 653.3;
    s.delta = linspace(-1e13, 1e13, 101);
    s.intensity.assign(101, 1.0);
    CHECK_THROWS_AS(fwhm_bandwidth(s), UnboundedBandwidthError);
}

TEST_CASE("config validation rejects bad grids and pump wavelengths") {
    CHECK_THROWS_AS(spdc_spectral_density({cal_fiber(), ProcessType::TypeII, -1.0, {}}), InputError);
    CHECK_THROWS_AS(spdc_spectral_density({cal_fiber(), ProcessType::TypeII, 653.3, {4, 1e14}}),
                    InputError);
}
