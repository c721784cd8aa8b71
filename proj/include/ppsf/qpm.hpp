#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ppsf/common.hpp"
#include "ppsf/fiber.hpp"

namespace ppsf {

struct CalibrationError : Error {
    using Error::Error;
};

struct UnboundedBandwidthError : Error {
    using Error::Error;
};

/// SPDC/SHG process families of the poled fiber. The pump (and the second
/// harmonic) is V-polarized in all three.
enum class ProcessType { Type0, TypeI, TypeII };

inline const char* to_string(ProcessType p) {
    switch (p) {
        case ProcessType::Type0: return "type0";
        case ProcessType::TypeI: return "type1";
        default: return "type2";
    }
}

/// (signal axis, idler axis) of the down-converted pair.
inline std::pair<PolarizationAxis, PolarizationAxis> daughter_axes(ProcessType p) {
    switch (p) {
        case ProcessType::Type0: return {PolarizationAxis::V, PolarizationAxis::V};
        case ProcessType::TypeI: return {PolarizationAxis::H, PolarizationAxis::H};
        default: return {PolarizationAxis::H, PolarizationAxis::V};
    }
}

/// k_V(omega_s + omega_i) - k_B(omega_s) - k_C(omega_i) - 2*pi/Lambda, rad/m.
inline double phase_mismatch(const StepIndexFiber& fiber, ProcessType process, double omega_s,
                             double omega_i) {
    const auto [bx, cx] = daughter_axes(process);
    const double kp = wavenumber_at_omega(fiber, omega_s + omega_i, PolarizationAxis::V);
    return kp - wavenumber_at_omega(fiber, omega_s, bx) - wavenumber_at_omega(fiber, omega_i, cx) -
           fiber.grating_wavevector();
}

namespace detail {

/// Degenerate type-II mismatch at the given pump wavelength: the QPM condition
/// k_p - k_H(omega_p/2) - k_V(omega_p/2) - 2*pi/Lambda.
inline double degenerate_typeII_mismatch(const StepIndexFiber& fiber, double pump_m) {
    const double wp = omega_from_wavelength(pump_m);
    return phase_mismatch(fiber, ProcessType::TypeII, 0.5 * wp, 0.5 * wp);
}

inline double degenerate_mismatch(const StepIndexFiber& fiber, ProcessType p, double pump_m) {
    const double wp = omega_from_wavelength(pump_m);
    return phase_mismatch(fiber, p, 0.5 * wp, 0.5 * wp);
}

}  // namespace detail

/// Solves for the slow-axis index offset dn that puts the degenerate type-II
/// QPM condition exactly at the target pump wavelength (default 653.3 nm).
/// dn is searched in the physical bracket [0, 1e-3] by bisection.
inline double calibrate_birefringence(const StepIndexFiber& fiber,
                                      double target_typeII_peak_nm = 653.3) {
    const double pump_m = target_typeII_peak_nm * 1e-9;

    // The grating-assisted type-0 condition must hold somewhere near the
    // target regardless of dn, otherwise the poling period and the material
    // model are inconsistent and no dn can fix it.
    {
        StepIndexFiber probe = fiber;
        probe.birefringence_dn = 0.0;
        const double window_nm = 5.0;
        const double lo = (target_typeII_peak_nm - window_nm) * 1e-9;
        const double hi = (target_typeII_peak_nm + window_nm) * 1e-9;
        const double mlo = detail::degenerate_mismatch(probe, ProcessType::Type0, lo);
        const double mhi = detail::degenerate_mismatch(probe, ProcessType::Type0, hi);
        if ((mlo > 0.0) == (mhi > 0.0)) {
            throw CalibrationError(
                "calibrate_birefringence: type-0 QPM has no solution within " +
                std::to_string(window_nm) + " nm of the target; check poling period");
        }
    }

    auto mismatch_of_dn = [&](double dn) {
        StepIndexFiber trial = fiber;
        trial.birefringence_dn = dn;
        return detail::degenerate_typeII_mismatch(trial, pump_m);
    };
    const double m0 = mismatch_of_dn(0.0);
    // Already phase-matched at dn = 0 (to well below any physical scale).
    if (std::abs(m0) < 1e-3) return 0.0;
    if (m0 > 0.0) {
        throw CalibrationError(
            "calibrate_birefringence: type-II mismatch already positive at dn = 0 (" +
            std::to_string(m0) + " rad/m); no root in [0, 1e-3]");
    }
    try {
        return bisect(mismatch_of_dn, 0.0, 1e-3, 1e-16, "calibrate_birefringence");
    } catch (const NotFoundError& e) {
        throw CalibrationError(std::string("calibrate_birefringence: ") + e.what());
    }
}

/// Copy of the fiber with birefringence_dn set by calibrate_birefringence.
inline StepIndexFiber calibrated_fiber(const StepIndexFiber& fiber,
                                       double target_typeII_peak_nm = 653.3) {
    StepIndexFiber out = fiber;
    out.birefringence_dn = calibrate_birefringence(fiber, target_typeII_peak_nm);
    return out;
}

/// Detuning grid: `points` samples spanning [-span_rad_s, +span_rad_s].
struct GridSpec {
    int points = 4096;
    double span_rad_s = 2.0 * pi * 60e12;
};

struct SpdcConfig {
    StepIndexFiber fiber;
    ProcessType process = ProcessType::TypeII;
    double pump_nm = 653.3;
    GridSpec grid;
    double pump_linewidth_ghz = 0.0;  // reserved; the pump is modeled as monochromatic

    void validate() const {
        fiber.validate();
        if (pump_nm <= 0.0) throw InputError("SpdcConfig: pump wavelength must be > 0");
        if (grid.points < 8) throw InputError("SpdcConfig: grid too small");
        if (grid.span_rad_s <= 0.0) throw InputError("SpdcConfig: grid span must be > 0");
    }
};

/// Peak-normalized spectral intensity over a symmetric detuning grid
/// Delta = omega_p/2 - omega_s = omega_i - omega_p/2.
struct SpectralDensity {
    std::vector<double> delta;      // rad/s, symmetric about 0, strictly increasing
    std::vector<double> intensity;  // in [0, 1], max exactly 1
    double pump_nm = 0.0;
    ProcessType process = ProcessType::TypeII;
    std::string fiber_id;
    int grid_points = 0;
    double grid_span_rad_s = 0.0;

    double center_omega() const { return 0.5 * omega_from_wavelength(pump_nm * 1e-9); }

    /// Signal/idler vacuum wavelengths (nm) at a grid detuning.
    std::pair<double, double> wavelengths_nm(double d) const {
        const double wc = center_omega();
        return {wavelength_from_omega(wc - d) * 1e9, wavelength_from_omega(wc + d) * 1e9};
    }
};

namespace detail {

inline void normalize_peak(std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    if (m <= 0.0) throw NumericalError("normalize_peak: all-zero spectrum");
    for (double& x : v) x /= m;
}

}  // namespace detail

/// Eq.-style spectral brightness I(Delta) = sinc^2[(L/2) * phase_mismatch],
/// with the signal at omega_p/2 - Delta and the idler at omega_p/2 + Delta.
inline SpectralDensity spdc_spectral_density(const SpdcConfig& cfg) {
    cfg.validate();
    const auto& fiber = cfg.fiber;
    const double wp = omega_from_wavelength(cfg.pump_nm * 1e-9);
    const double wc = 0.5 * wp;
    const double halfL = 0.5 * fiber.length_m;
    const auto [bx, cx] = daughter_axes(cfg.process);
    const double kp = wavenumber_at_omega(fiber, wp, PolarizationAxis::V);
    const double grating = fiber.grating_wavevector();

    SpectralDensity s;
    s.delta = linspace(-cfg.grid.span_rad_s, cfg.grid.span_rad_s,
                       static_cast<std::size_t>(cfg.grid.points));
    s.intensity.resize(s.delta.size());
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
        const double d = s.delta[i];
        const double mm = kp - wavenumber_at_omega(fiber, wc - d, bx) -
                          wavenumber_at_omega(fiber, wc + d, cx) - grating;
        const double amp = sinc(halfL * mm);
        s.intensity[i] = amp * amp;
    }
    detail::normalize_peak(s.intensity);
    s.pump_nm = cfg.pump_nm;
    s.process = cfg.process;
    s.fiber_id = fiber.id;
    s.grid_points = cfg.grid.points;
    s.grid_span_rad_s = cfg.grid.span_rad_s;
    return s;
}

/// Second-order expansion of the same spectrum around degeneracy:
/// I(Delta) = sinc^2[ (1/2) M L Delta + (1/2) k2 L Delta^2 ], peak-normalized.
inline SpectralDensity taylor_spectral_density(const SpdcConfig& cfg, double gv_mismatch,
                                               double k2) {
    cfg.validate();
    const double L = cfg.fiber.length_m;
    SpectralDensity s;
    s.delta = linspace(-cfg.grid.span_rad_s, cfg.grid.span_rad_s,
                       static_cast<std::size_t>(cfg.grid.points));
    s.intensity.resize(s.delta.size());
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
        const double d = s.delta[i];
        const double amp = sinc(0.5 * gv_mismatch * L * d + 0.5 * k2 * L * d * d);
        s.intensity[i] = amp * amp;
    }
    detail::normalize_peak(s.intensity);
    s.pump_nm = cfg.pump_nm;
    s.process = cfg.process;
    s.fiber_id = cfg.fiber.id;
    s.grid_points = cfg.grid.points;
    s.grid_span_rad_s = cfg.grid.span_rad_s;
    return s;
}

/// Simulated SHG response. Curves are sinc^2 in the degenerate mismatch of
/// each process at the fundamental wavelength, scaled by the theoretical
/// 9 : 1 : 4 weights (type 0 : I : II). Peak positions are the exact QPM
/// roots, reported both at the fundamental and at the second harmonic.
struct ShgSpectrum {
    std::vector<double> fundamental_nm;
    std::vector<double> type0;
    std::vector<double> type1;
    std::vector<double> type2;
    double weight0 = 9.0, weight1 = 1.0, weight2 = 4.0;
    double peak0_fundamental_nm = 0.0, peak1_fundamental_nm = 0.0, peak2_fundamental_nm = 0.0;
    double peak0_sh_nm = 0.0, peak1_sh_nm = 0.0, peak2_sh_nm = 0.0;
};

inline ShgSpectrum shg_spectrum(const StepIndexFiber& fiber,
                                const std::vector<double>& fundamental_nm) {
    if (fundamental_nm.size() < 2)
        throw InputError("shg_spectrum: need at least two fundamental grid points");
    ShgSpectrum out;
    out.fundamental_nm = fundamental_nm;
    const double halfL = 0.5 * fiber.length_m;

    // Degenerate SHG mismatch as a function of the *second harmonic*
    // wavelength equals the degenerate SPDC mismatch at that pump wavelength.
    auto mismatch_sh = [&](ProcessType p, double sh_m) {
        return detail::degenerate_mismatch(fiber, p, sh_m);
    };

    const ProcessType procs[3] = {ProcessType::Type0, ProcessType::TypeI, ProcessType::TypeII};
    const double weights[3] = {out.weight0, out.weight1, out.weight2};
    std::vector<double>* curves[3] = {&out.type0, &out.type1, &out.type2};
    double* peak_f[3] = {&out.peak0_fundamental_nm, &out.peak1_fundamental_nm,
                         &out.peak2_fundamental_nm};
    double* peak_sh[3] = {&out.peak0_sh_nm, &out.peak1_sh_nm, &out.peak2_sh_nm};

    for (int t = 0; t < 3; ++t) {
        curves[t]->resize(fundamental_nm.size());
        for (std::size_t i = 0; i < fundamental_nm.size(); ++i) {
            const double sh_m = 0.5 * fundamental_nm[i] * 1e-9;
            const double amp = sinc(halfL * mismatch_sh(procs[t], sh_m));
            (*curves[t])[i] = weights[t] * amp * amp;
        }
        // Exact peak via the QPM root over the grid span.
        const double lo = 0.5 * fundamental_nm.front() * 1e-9;
        const double hi = 0.5 * fundamental_nm.back() * 1e-9;
        try {
            const double root =
                bisect([&](double sh) { return mismatch_sh(procs[t], sh); }, lo, hi, 1e-15,
                       "shg_peak");
            *peak_sh[t] = root * 1e9;
            *peak_f[t] = 2.0 * root * 1e9;
        } catch (const NotFoundError&) {
            // QPM not reached inside the grid: report the sampled maximum.
            std::size_t imax = 0;
            for (std::size_t i = 1; i < curves[t]->size(); ++i)
                if ((*curves[t])[i] > (*curves[t])[imax]) imax = i;
            *peak_f[t] = fundamental_nm[imax];
            *peak_sh[t] = 0.5 * fundamental_nm[imax];
        }
    }
    return out;
}

/// Threshold loci of the emission spectrum versus pump wavelength.
/// For each pump sample, the intervals of emission wavelength where the
/// peak-normalized intensity is >= threshold. Intervals below the degenerate
/// wavelength belong to the short-wavelength ("signal") branch.
struct TuningCurve {
    struct Interval {
        double lo_nm;
        double hi_nm;
        std::string branch;  // "signal" or "idler"
    };
    struct PumpSlice {
        double pump_nm;
        std::vector<Interval> intervals;  // empty when nothing clears the threshold
    };
    std::vector<PumpSlice> slices;
    double threshold = 0.5;
};

inline TuningCurve tuning_curve(const StepIndexFiber& fiber, const std::vector<double>& pump_nm,
                                double threshold = 0.5, ProcessType process = ProcessType::TypeII,
                                GridSpec grid = {}) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InputError("tuning_curve: threshold must be in (0, 1)");
    TuningCurve tc;
    tc.threshold = threshold;
    tc.slices.reserve(pump_nm.size());
    for (double p : pump_nm) {
        SpdcConfig cfg{fiber, process, p, grid};
        // Tuning loci are absolute in Eq.-(1) intensity, not re-normalized per
        // pump: renormalizing would always produce a fake unity peak.
        cfg.validate();
        const double wp = omega_from_wavelength(p * 1e-9);
        const double wc = 0.5 * wp;
        const double halfL = 0.5 * fiber.length_m;
        const auto [bx, cx] = daughter_axes(process);
        const double kp = wavenumber_at_omega(fiber, wp, PolarizationAxis::V);
        const double grating = fiber.grating_wavevector();
        const auto delta = linspace(-grid.span_rad_s, grid.span_rad_s,
                                    static_cast<std::size_t>(grid.points));
        std::vector<double> inten(delta.size());
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double d = delta[i];
            const double amp = sinc(halfL * (kp - wavenumber_at_omega(fiber, wc - d, bx) -
                                             wavenumber_at_omega(fiber, wc + d, cx) - grating));
            inten[i] = amp * amp;
        }

        TuningCurve::PumpSlice slice;
        slice.pump_nm = p;
        const double deg_nm = wavelength_from_omega(wc) * 1e9;
        // Walk the grid in omega, collect >= threshold runs, convert to nm.
        std::size_t i = 0;
        while (i < delta.size()) {
            if (inten[i] >= threshold) {
                std::size_t j = i;
                while (j + 1 < delta.size() && inten[j + 1] >= threshold) ++j;
                const double lam_a = wavelength_from_omega(wc + delta[i]) * 1e9;
                const double lam_b = wavelength_from_omega(wc + delta[j]) * 1e9;
                const double lo = std::min(lam_a, lam_b);
                const double hi = std::max(lam_a, lam_b);
                if (hi <= deg_nm) {
                    slice.intervals.push_back({lo, hi, "signal"});
                } else if (lo >= deg_nm) {
                    slice.intervals.push_back({lo, hi, "idler"});
                } else {
                    slice.intervals.push_back({lo, deg_nm, "signal"});
                    slice.intervals.push_back({deg_nm, hi, "idler"});
                }
                i = j + 1;
            } else {
                ++i;
            }
        }
        std::sort(slice.intervals.begin(), slice.intervals.end(),
                  [](const auto& a, const auto& b) { return a.lo_nm < b.lo_nm; });
        tc.slices.push_back(std::move(slice));
    }
    return tc;
}

struct Bandwidth {
    double fwhm_thz;  // full width at half maximum in ordinary frequency
    double fwhm_nm;   // the same edges mapped through lambda = 2*pi*c/omega
};

/// FWHM of the main lobe by linear interpolation between grid points.
inline Bandwidth fwhm_bandwidth(const SpectralDensity& s) {
    double xl, xr;
    try {
        std::tie(xl, xr) = half_level_crossings(s.delta, s.intensity);
    } catch (const NotFoundError& e) {
        throw UnboundedBandwidthError(std::string("fwhm_bandwidth: ") + e.what());
    }
    const double wc = s.center_omega();
    Bandwidth b;
    b.fwhm_thz = (xr - xl) / (2.0 * pi) / 1e12;
    b.fwhm_nm = (wavelength_from_omega(wc + xl) - wavelength_from_omega(wc + xr)) * 1e9;
    return b;
}

}  // namespace ppsf
