#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ppsf/common.hpp"
#include "ppsf/sellmeier.hpp"

namespace ppsf {

/// H is the fast axis; V (the slow axis) carries the +birefringence_dn offset.
enum class PolarizationAxis { H, V };

inline const char* to_string(PolarizationAxis a) {
    return a == PolarizationAxis::H ? "H" : "V";
}

/// LP01 mode cutoff / no guided solution at the requested wavelength.
struct CutoffError : Error {
    using Error::Error;
};

/// Weakly guiding step-index fiber with UV-erased periodic poling.
///
/// The cladding is the base glass; the core is the same glass raised by a
/// wavelength-independent index offset chosen to reproduce the numerical
/// aperture at its reference wavelength. Birefringence is modeled as a
/// uniform index offset dn applied to both core and cladding on the V axis.
struct StepIndexFiber {
    std::string id = "ppsf";
    double core_radius_um = 0.0;
    double numerical_aperture = 0.0;
    double na_reference_um = 1.55;
    SellmeierModel cladding_material;
    double core_index_offset = 0.0;  // derived from the NA datum, see make_step_index_fiber
    double birefringence_dn = 0.0;   // slow-axis (V) uniform offset, >= 0
    double length_m = 0.0;           // L
    double poling_period_um = 0.0;   // Lambda

    double cladding_index(double lambda_um, PolarizationAxis axis) const {
        const double dn = axis == PolarizationAxis::V ? birefringence_dn : 0.0;
        return refractive_index(cladding_material, lambda_um) + dn;
    }

    double core_index(double lambda_um, PolarizationAxis axis) const {
        return cladding_index(lambda_um, axis) + core_index_offset;
    }

    double grating_wavevector() const {  // 2*pi/Lambda, rad/m
        return 2.0 * pi / (poling_period_um * 1e-6);
    }

    void validate() const {
        cladding_material.validate();
        if (core_radius_um <= 0.0) throw InputError("fiber: core radius must be > 0");
        if (numerical_aperture <= 0.0) throw InputError("fiber: NA must be > 0");
        if (core_index_offset <= 0.0) throw InputError("fiber: core index must exceed cladding");
        if (birefringence_dn < 0.0) throw InputError("fiber: birefringence_dn must be >= 0");
        if (birefringence_dn >= core_index_offset)
            throw InputError("fiber: birefringence_dn must be << core-cladding contrast");
        if (length_m <= 0.0) throw InputError("fiber: length must be > 0");
        if (poling_period_um <= 0.0) throw InputError("fiber: poling period must be > 0");
    }
};

/// Builds a fiber whose core offset reproduces the given NA at its reference
/// wavelength: n_core = sqrt(n_clad^2 + NA^2) there, constant offset elsewhere.
inline StepIndexFiber make_step_index_fiber(double core_radius_um, double na,
                                            double na_reference_um, SellmeierModel cladding,
                                            double birefringence_dn, double length_m,
                                            double poling_period_um, std::string id = "ppsf") {
    StepIndexFiber f;
    f.id = std::move(id);
    f.core_radius_um = core_radius_um;
    f.numerical_aperture = na;
    f.na_reference_um = na_reference_um;
    f.cladding_material = std::move(cladding);
    const double ncl = refractive_index(f.cladding_material, na_reference_um);
    f.core_index_offset = std::sqrt(ncl * ncl + na * na) - ncl;
    f.birefringence_dn = birefringence_dn;
    f.length_m = length_m;
    f.poling_period_um = poling_period_um;
    f.validate();
    return f;
}

namespace detail {

inline constexpr double j0_first_zero = 2.404825557695773;

/// LP01 characteristic equation residual u*J1(u)/J0(u) - w*K1(w)/K0(w).
inline double lp01_residual(double u, double v_number) {
    const double w2 = v_number * v_number - u * u;
    const double w = w2 > 0.0 ? std::sqrt(w2) : 1e-14;
    const double lhs = u * std::cyl_bessel_j(1.0, u) / std::cyl_bessel_j(0.0, u);
    const double rhs = w * std::cyl_bessel_k(1.0, w) / std::cyl_bessel_k(0.0, w);
    return lhs - rhs;
}

}  // namespace detail

/// LP01 effective index from the weakly-guiding scalar dispersion relation
/// u*J1(u)/J0(u) = w*K1(w)/K0(w), u^2 + w^2 = V^2, solved for u by bracketed
/// bisection to an interval of 1e-13 (relative to the bracket width).
inline double lp01_neff(const StepIndexFiber& fiber, double lambda_m, PolarizationAxis axis) {
    const double lambda_um = lambda_m * 1e6;
    const double ncl = fiber.cladding_index(lambda_um, axis);
    const double nco = fiber.core_index(lambda_um, axis);
    const double a_m = fiber.core_radius_um * 1e-6;
    const double k0 = 2.0 * pi / lambda_m;
    const double v_number = k0 * a_m * std::sqrt(nco * nco - ncl * ncl);
    if (!(v_number > 1e-3)) {
        throw CutoffError("lp01_neff: V-number " + std::to_string(v_number) +
                          " too small for a guided mode at " + std::to_string(lambda_um) + " um");
    }

    const double umax = std::min(v_number, detail::j0_first_zero);
    double lo = 1e-9 * umax;
    double hi = umax * (1.0 - 1e-12);
    double flo = detail::lp01_residual(lo, v_number);
    double fhi = detail::lp01_residual(hi, v_number);
    if ((flo > 0.0) == (fhi > 0.0)) {
        throw NumericalError("lp01_neff: bracketing failure, V=" + std::to_string(v_number) +
                             " f(lo)=" + std::to_string(flo) + " f(hi)=" + std::to_string(fhi));
    }
    // 60 halvings take the bracket below 1e-13 relative width.
    double u = 0.5 * (lo + hi);
    for (int it = 0; it < 60; ++it) {
        u = 0.5 * (lo + hi);
        const double fm = detail::lp01_residual(u, v_number);
        if (fm == 0.0) break;
        if ((fm > 0.0) == (fhi > 0.0)) {
            hi = u;
            fhi = fm;
        } else {
            lo = u;
            flo = fm;
        }
    }
    const double ua = u / (k0 * a_m);
    return std::sqrt(nco * nco - ua * ua);
}

/// k = 2*pi*n_eff/lambda, rad/m.
inline double wavenumber(const StepIndexFiber& fiber, double lambda_m, PolarizationAxis axis) {
    return 2.0 * pi * lp01_neff(fiber, lambda_m, axis) / lambda_m;
}

inline double wavenumber_at_omega(const StepIndexFiber& fiber, double omega, PolarizationAxis axis) {
    return wavenumber(fiber, wavelength_from_omega(omega), axis);
}

/// Default central-difference step in omega. 2*pi x 200 GHz balances the
/// O(h^2) truncation against the ~1e-13 noise floor of the bisection-based
/// n_eff when resolving |k2| ~ 2e-27 s^2/m.
inline constexpr double default_fd_step = 2.0 * pi * 200e9;

struct DispersionDerivatives {
    double beta1;  // dk/domega, s/m
    double k2;     // d^2k/domega^2, s^2/m
};

/// Central finite differences of k(omega) at lambda0 with the given step.
inline DispersionDerivatives dispersion_derivatives(const StepIndexFiber& fiber, double lambda0_m,
                                                    PolarizationAxis axis,
                                                    double omega_step = default_fd_step) {
    const double w0 = omega_from_wavelength(lambda0_m);
    const double kp = wavenumber_at_omega(fiber, w0 + omega_step, axis);
    const double k0 = wavenumber_at_omega(fiber, w0, axis);
    const double km = wavenumber_at_omega(fiber, w0 - omega_step, axis);
    return {(kp - km) / (2.0 * omega_step), (kp - 2.0 * k0 + km) / (omega_step * omega_step)};
}

/// M = beta1(H) - beta1(V) at omega = 2*pi*c/lambda0, s/m.
inline double group_velocity_mismatch(const StepIndexFiber& fiber, double lambda0_m,
                                      double omega_step = default_fd_step) {
    return dispersion_derivatives(fiber, lambda0_m, PolarizationAxis::H, omega_step).beta1 -
           dispersion_derivatives(fiber, lambda0_m, PolarizationAxis::V, omega_step).beta1;
}

/// Wavelength where k2 crosses zero inside [bracket_lo_m, bracket_hi_m].
/// Bisection to 0.01 nm.
inline double zero_dispersion_wavelength(const StepIndexFiber& fiber, PolarizationAxis axis,
                                         double bracket_lo_m, double bracket_hi_m,
                                         double omega_step = default_fd_step) {
    auto k2_of_lambda = [&](double lam) {
        return dispersion_derivatives(fiber, lam, axis, omega_step).k2;
    };
    return bisect(k2_of_lambda, bracket_lo_m, bracket_hi_m, 0.01e-9, "zero_dispersion_wavelength");
}

/// Sampled modal dispersion of one polarization axis over a wavelength grid.
struct ModalDispersion {
    PolarizationAxis axis;
    std::vector<double> lambda_nm;
    std::vector<double> n_eff;
    std::vector<double> beta1;  // s/m
    std::vector<double> k2;     // s^2/m
};

inline ModalDispersion sample_modal_dispersion(const StepIndexFiber& fiber,
                                               const std::vector<double>& lambda_nm,
                                               PolarizationAxis axis,
                                               double omega_step = default_fd_step) {
    ModalDispersion md;
    md.axis = axis;
    md.lambda_nm = lambda_nm;
    md.n_eff.reserve(lambda_nm.size());
    md.beta1.reserve(lambda_nm.size());
    md.k2.reserve(lambda_nm.size());
    double prev = -1.0;
    for (double lnm : lambda_nm) {
        if (lnm <= prev) throw InputError("sample_modal_dispersion: grid must be strictly increasing");
        prev = lnm;
        const double lam = lnm * 1e-9;
        md.n_eff.push_back(lp01_neff(fiber, lam, axis));
        const auto d = dispersion_derivatives(fiber, lam, axis, omega_step);
        md.beta1.push_back(d.beta1);
        md.k2.push_back(d.k2);
    }
    return md;
}

}  // namespace ppsf
