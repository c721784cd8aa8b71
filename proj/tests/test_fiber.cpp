#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ppsf/fiber.hpp"
#include "ppsf/io.hpp"

#include "oracles.hpp"

using namespace ppsf;

namespace {

const StepIndexFiber& paper_fiber() {
    static const StepIndexFiber f =
        load_fiber(std::string(PPSF_CONFIG_DIR) + "/fiber_ppsf.json");
    return f;
}

StepIndexFiber with_dn(const StepIndexFiber& f, double dn) {
    StepIndexFiber out = f;
    out.birefringence_dn = dn;
    return out;
}

// Near-bulk stand-in: a huge weakly guiding core makes the LP01 index track
// the core material to well below a part in 1e6.
StepIndexFiber bulk_like_fiber() {
    return make_step_index_fiber(60.0, 0.02, 1.55, fused_silica(), 0.0, 0.2, 54.0, "bulk-like");
}

}  // namespace

TEST_CASE("uniform slow-axis offset shifts n_eff by dn to first order") {
    const double dn = 1e-4;
    const auto f = with_dn(paper_fiber(), dn);
    for (double lam_nm : {1270.0, 1306.6, 1340.0}) {
        const double nh = lp01_neff(f, lam_nm * 1e-9, PolarizationAxis::H);
        const double nv = lp01_neff(f, lam_nm * 1e-9, PolarizationAxis::V);
        CAPTURE(lam_nm);
        CHECK(std::abs((nv - nh) - dn) < 0.01 * dn);
    }
}

TEST_CASE("large core at fixed NA approaches the bulk core index monotonically") {
    double prev_gap = 1.0;
    for (double a_um : {3.0, 6.0, 12.0, 24.0, 48.0}) {
        const auto f = make_step_index_fiber(a_um, 0.14, 1.55, fused_silica(), 0.0, 0.2, 54.0);
        const double lam = 1.31e-6;
        const double gap = f.core_index(1.31, PolarizationAxis::H) -
                           lp01_neff(f, lam, PolarizationAxis::H);
        CAPTURE(a_um);
        CHECK(gap > 0.0);
        CHECK(gap < prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap < 1e-5);
}

TEST_CASE("paper fiber: n_clad < n_eff < n_core at 1306.6 nm") {
    const auto& f = paper_fiber();
    const double n_eff = lp01_neff(f, 1306.6e-9, PolarizationAxis::H);
    const double n_clad = oracles::silica_index(1.3066);
    CHECK(n_eff > n_clad);
    CHECK(n_eff < n_clad + f.core_index_offset);
}

TEST_CASE("n_eff ordering holds across a random wavelength grid") {
    const auto f = with_dn(paper_fiber(), 5e-5);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> pick(0.9, 1.7);
    for (int i = 0; i < 30; ++i) {
        const double lam_um = pick(rng);
        CAPTURE(lam_um);
        for (auto axis : {PolarizationAxis::H, PolarizationAxis::V}) {
            const double n_eff = lp01_neff(f, lam_um * 1e-6, axis);
            CHECK(n_eff > f.cladding_index(lam_um, axis));
            CHECK(n_eff < f.core_index(lam_um, axis));
        }
        // slow axis is never below the fast axis for dn >= 0
        CHECK(lp01_neff(f, lam_um * 1e-6, PolarizationAxis::V) >=
              lp01_neff(f, lam_um * 1e-6, PolarizationAxis::H));
    }
}

TEST_CASE("wavenumber is 2 pi n_eff / lambda and grows with frequency") {
    const auto& f = paper_fiber();
    const double lam = 1.45e-6;
    CHECK(wavenumber(f, lam, PolarizationAxis::H) * lam / (2.0 * pi) ==
          Catch::Approx(lp01_neff(f, lam, PolarizationAxis::H)).epsilon(1e-14));

    double prev = 0.0;
    for (int i = 0; i <= 10; ++i) {
        const double lam_nm = 1360.0 - 10.0 * i;  // increasing omega
        const double k = wavenumber(f, lam_nm * 1e-9, PolarizationAxis::H);
        CHECK(k > prev);
        prev = k;
    }
}

TEST_CASE("mode cutoff raises a dedicated error") {
    const auto tiny = make_step_index_fiber(0.05, 0.02, 1.55, fused_silica(), 0.0, 0.2, 54.0);
    CHECK_THROWS_AS(lp01_neff(tiny, 3.5e-6, PolarizationAxis::H), CutoffError);
}

TEST_CASE("finite differences reproduce the analytic bulk dispersion") {
    const auto bulk = bulk_like_fiber();
    // The bulk-like fiber's k2 must sit within a few percent of the analytic
    // material value away from the ZDW.
    for (double lam_um : {1.20, 1.32, 1.36}) {
        const double k2 = dispersion_derivatives(bulk, lam_um * 1e-6, PolarizationAxis::H).k2;
        const double k2_oracle = oracles::bulk_k2_analytic(lam_um * 1e-6);
        CAPTURE(lam_um, k2, k2_oracle);
        CHECK(std::abs(k2 - k2_oracle) < 0.05 * std::abs(k2_oracle) + 2e-29);
    }
}

TEST_CASE("bulk zero-dispersion wavelength near 1.273 um") {
    const double zdw_oracle = oracles::bulk_zdw_analytic();
    CHECK(std::abs(zdw_oracle - 1.273e-6) < 2e-9);  // frozen: 1.27275 um

    const auto bulk = bulk_like_fiber();
    const double zdw = zero_dispersion_wavelength(bulk, PolarizationAxis::H, 1.15e-6, 1.4e-6);
    CHECK(std::abs(zdw - zdw_oracle) < 2e-9);
}

TEST_CASE("paper fiber ZDW sits in the O-band window") {
    const double zdw =
        zero_dispersion_wavelength(paper_fiber(), PolarizationAxis::H, 1.15e-6, 1.45e-6);
    CHECK(zdw > 1.25e-6);
    CHECK(zdw < 1.35e-6);
}

TEST_CASE("missing sign change in the ZDW bracket is reported") {
    CHECK_THROWS_AS(
        zero_dispersion_wavelength(paper_fiber(), PolarizationAxis::H, 1.0e-6, 1.1e-6),
        NotFoundError);
}

TEST_CASE("fiber k2 magnitude near the degenerate wavelength is a few ps^2/km") {
    const double k2 = dispersion_derivatives(paper_fiber(), 1306.6e-9, PolarizationAxis::H).k2;
    CHECK(std::abs(k2) > 1e-27);
    CHECK(std::abs(k2) < 4e-27);
}

TEST_CASE("halving the step changes k2 by less than 0.1%") {
    const auto& f = paper_fiber();
    const double k2a = dispersion_derivatives(f, 1306.6e-9, PolarizationAxis::H).k2;
    const double k2b =
        dispersion_derivatives(f, 1306.6e-9, PolarizationAxis::H, 0.5 * default_fd_step).k2;
    CHECK(std::abs(k2b - k2a) < 1e-3 * std::abs(k2a));
}

TEST_CASE("central differences converge at second order") {
    const auto& f = paper_fiber();
    const double h = 2.0 * pi * 4e12;
    auto k2_at = [&](double step) {
        return dispersion_derivatives(f, 1290.0e-9, PolarizationAxis::H, step).k2;
    };
    auto b1_at = [&](double step) {
        return dispersion_derivatives(f, 1290.0e-9, PolarizationAxis::H, step).beta1;
    };
    const double order_k2 =
        std::log2(std::abs(k2_at(h) - k2_at(h / 2)) / std::abs(k2_at(h / 2) - k2_at(h / 4)));
    const double order_b1 =
        std::log2(std::abs(b1_at(h) - b1_at(h / 2)) / std::abs(b1_at(h / 2) - b1_at(h / 4)));
    CHECK(order_k2 > 1.8);
    CHECK(order_k2 < 2.2);
    CHECK(order_b1 > 1.8);
    CHECK(order_b1 < 2.2);
}

TEST_CASE("group velocity mismatch vanishes identically at dn = 0") {
    CHECK(group_velocity_mismatch(paper_fiber(), 1306.6e-9) == 0.0);
}

TEST_CASE("group velocity mismatch tracks -dn/c in the uniform-offset model") {
    const double dn = 2e-5;
    const auto f = with_dn(paper_fiber(), dn);
    const double m = group_velocity_mismatch(f, 1306.6e-9);
    CHECK(std::abs(m + dn / speed_of_light) < 0.05 * dn / speed_of_light);

    // cross-check beta1 difference with an independent 5-point stencil
    auto kh = [&](double w) { return wavenumber_at_omega(f, w, PolarizationAxis::H); };
    auto kv = [&](double w) { return wavenumber_at_omega(f, w, PolarizationAxis::V); };
    const double w0 = omega_from_wavelength(1306.6e-9);
    const double h = 2.0 * pi * 400e9;
    const double m5 = oracles::beta1_5point(kh, w0, h) - oracles::beta1_5point(kv, w0, h);
    CHECK(std::abs(m - m5) < 0.02 * std::abs(m));
}

TEST_CASE("modal dispersion sampling validates its grid and satisfies bounds") {
    const auto& f = paper_fiber();
    CHECK_THROWS_AS(sample_modal_dispersion(f, {1300.0, 1300.0}, PolarizationAxis::H), InputError);
    const auto md = sample_modal_dispersion(f, {1280.0, 1306.6, 1340.0}, PolarizationAxis::H);
    REQUIRE(md.n_eff.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const double lam_um = md.lambda_nm[i] * 1e-3;
        CHECK(md.n_eff[i] > f.cladding_index(lam_um, md.axis));
        CHECK(md.n_eff[i] < f.core_index(lam_um, md.axis));
        CHECK(md.beta1[i] > 0.0);
    }
}

TEST_CASE("fiber construction rejects inconsistent parameters") {
    CHECK_THROWS_AS(make_step_index_fiber(-1.0, 0.14, 1.55, fused_silica(), 0.0, 0.2, 54.0),
                    InputError);
    CHECK_THROWS_AS(make_step_index_fiber(3.0, 0.14, 1.55, fused_silica(), -1e-6, 0.2, 54.0),
                    InputError);
    CHECK_THROWS_AS(make_step_index_fiber(3.0, 0.14, 1.55, fused_silica(), 0.02, 0.2, 54.0),
                    InputError);  // dn not << core contrast
    CHECK_THROWS_AS(make_step_index_fiber(3.0, 0.14, 1.55, fused_silica(), 0.0, 0.0, 54.0),
                    InputError);
    CHECK_THROWS_AS(make_step_index_fiber(3.0, 0.14, 1.55, fused_silica(), 0.0, 0.2, 0.0),
                    InputError);
}
