#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ppsf/common.hpp"
#include "ppsf/qpm.hpp"

namespace ppsf {

struct FitError : Error {
    using Error::Error;
};

struct NoDipError : Error {
    using Error::Error;
};

/// Hong-Ou-Mandel coincidence scan over relative H/V delay.
///
/// Delay convention: tau is the delay applied in one interferometer arm, and
/// the interference kernel is exp(-i 2 Delta tau) -- the conjugate variable
/// of the detuning Delta is 2*tau, so widths quoted here match a scan of the
/// physical arm delay. The factor of 2 is deliberate and load-bearing.
struct DelayScan {
    std::vector<double> delay_fs;
    std::vector<double> coincidence;  // plateau-normalized rate
    std::vector<double> counts;       // raw counts when simulated with noise, else empty
    double integration_s = 1.0;
    double visibility_cap = 1.0;
    std::string warning;  // non-empty when the source density was asymmetric
};

/// Coincidence probability p(tau) = 1 - V * Re[ integral S(D) e^{-i 2 D tau} dD ] / integral S(D) dD
/// by trapezoid quadrature on the density's own grid.
inline DelayScan hom_scan(const SpectralDensity& density, const std::vector<double>& delays_fs,
                          double visibility_cap) {
    if (!(visibility_cap >= 0.0 && visibility_cap <= 1.0))
        throw InputError("hom_scan: visibility cap must be in [0, 1]");
    if (density.delta.size() < 8) throw InputError("hom_scan: density grid too small");

    DelayScan scan;
    scan.delay_fs = delays_fs;
    scan.visibility_cap = visibility_cap;

    // Symmetry check: the dip shape assumes S(D) = S(-D).
    const std::size_t n = density.delta.size();
    double asym = 0.0;
    for (std::size_t i = 0; i < n / 2; ++i)
        asym = std::max(asym, std::abs(density.intensity[i] - density.intensity[n - 1 - i]));
    if (asym > 0.05)
        scan.warning = "density asymmetric in Delta (max mirror deviation " +
                       std::to_string(asym) + "); dip may be distorted";

    const double norm = trapezoid(density.intensity, density.delta);
    if (!(norm > 0.0)) throw NumericalError("hom_scan: zero-norm density");

    scan.coincidence.resize(delays_fs.size());
    std::vector<double> integrand(n);
    for (std::size_t j = 0; j < delays_fs.size(); ++j) {
        const double tau = delays_fs[j] * 1e-15;
        for (std::size_t i = 0; i < n; ++i)
            integrand[i] = density.intensity[i] * std::cos(2.0 * density.delta[i] * tau);
        scan.coincidence[j] = 1.0 - visibility_cap * trapezoid(integrand, density.delta) / norm;
    }
    return scan;
}

/// Adds per-point Poisson counting noise: counts_i ~ Poisson(plateau_counts * p_i).
inline DelayScan add_poisson_noise(const DelayScan& clean, double plateau_counts,
                                   std::uint64_t seed, double integration_s = 1.0) {
    if (!(plateau_counts > 0.0)) throw InputError("add_poisson_noise: counts must be > 0");
    DelayScan noisy = clean;
    noisy.integration_s = integration_s;
    noisy.counts.resize(clean.coincidence.size());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < clean.coincidence.size(); ++i) {
        const double mean = plateau_counts * std::max(clean.coincidence[i], 0.0);
        std::poisson_distribution<long long> poisson(mean);
        noisy.counts[i] = static_cast<double>(mean > 0.0 ? poisson(rng) : 0);
        noisy.coincidence[i] = noisy.counts[i] / plateau_counts;
    }
    return noisy;
}

enum class DipModel { FourierOfDensity, Gaussian, Sinc2 };

inline const char* to_string(DipModel m) {
    switch (m) {
        case DipModel::FourierOfDensity: return "fourier_of_density";
        case DipModel::Gaussian: return "gaussian";
        default: return "sinc2";
    }
}

struct DipFit {
    double visibility = 0.0;  // dip depth / plateau
    double width_fs = 0.0;    // FWHM of the dip
    double center_fs = 0.0;
    double visibility_err = 0.0;
    double width_err = 0.0;
    double center_err = 0.0;
    double plateau = 1.0;
    double residual_norm = 0.0;
    DipModel model = DipModel::FourierOfDensity;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

/// Normalized dip profile g(tau) of a sampled density (g(0) = 1, plateau 0).
inline double density_dip_profile(const SpectralDensity& density, double norm, double tau) {
    double s = 0.0;
    const auto& d = density.delta;
    const auto& y = density.intensity;
    for (std::size_t i = 0; i + 1 < d.size(); ++i) {
        const double fa = y[i] * std::cos(2.0 * d[i] * tau);
        const double fb = y[i + 1] * std::cos(2.0 * d[i + 1] * tau);
        s += 0.5 * (fa + fb) * (d[i + 1] - d[i]);
    }
    return s / norm;
}

/// Dip profile of the QPM family S(D) = sinc^2(a D^2), by quadrature on an
/// internal grid wide enough that the truncated tail is negligible.
inline double qpm_family_dip_profile(double a, double tau) {
    const double smax = 25.0;  // dimensionless; sinc^2 tail beyond contributes < 1e-5
    const int npts = 8192;
    const double span = smax / std::sqrt(a);
    double num = 0.0, den = 0.0;
    const double h = 2.0 * span / (npts - 1);
    for (int i = 0; i < npts; ++i) {
        const double d = -span + h * i;
        const double amp = sinc(a * d * d);
        const double s = amp * amp;
        const double weight = (i == 0 || i == npts - 1) ? 0.5 : 1.0;
        num += weight * s * std::cos(2.0 * d * tau);
        den += weight * s;
    }
    return num / den;
}

struct LmResult {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance;
    double rss = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Small dense Levenberg-Marquardt with numeric Jacobian and scaled covariance.
inline LmResult levenberg_marquardt(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
    Eigen::VectorXd theta, int max_iterations = 200, double ftol = 1e-12) {
    LmResult out;
    const int p = static_cast<int>(theta.size());
    Eigen::VectorXd r = residuals(theta);
    double rss = r.squaredNorm();
    double lambda = 1e-3;

    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        Eigen::MatrixXd jac(r.size(), p);
        for (int k = 0; k < p; ++k) {
            const double h = 1e-7 * (1.0 + std::abs(theta[k]));
            Eigen::VectorXd tp = theta, tm = theta;
            tp[k] += h;
            tm[k] -= h;
            jac.col(k) = (residuals(tp) - residuals(tm)) / (2.0 * h);
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r;

        bool stepped = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
            const Eigen::VectorXd cand = theta + step;
            const Eigen::VectorXd rc = residuals(cand);
            const double rss_c = rc.squaredNorm();
            if (rss_c < rss) {
                theta = cand;
                r = rc;
                const double drop = rss - rss_c;
                rss = rss_c;
                lambda = std::max(lambda * 0.3, 1e-12);
                stepped = true;
                if (drop < ftol * (1.0 + rss)) {
                    out.converged = true;
                    it = max_iterations;  // done
                }
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
        if (!stepped) {
            out.converged = true;  // stuck at a minimum to within damping limits
            break;
        }
    }

    // Scaled covariance from the final Jacobian.
    Eigen::MatrixXd jac(r.size(), p);
    for (int k = 0; k < p; ++k) {
        const double h = 1e-7 * (1.0 + std::abs(theta[k]));
        Eigen::VectorXd tp = theta, tm = theta;
        tp[k] += h;
        tm[k] -= h;
        jac.col(k) = (residuals(tp) - residuals(tm)) / (2.0 * h);
    }
    const int dof = std::max<int>(1, static_cast<int>(r.size()) - p);
    const double s2 = rss / dof;
    out.covariance = s2 * (jac.transpose() * jac).ldlt().solve(
                              Eigen::MatrixXd::Identity(p, p));
    out.params = theta;
    out.rss = rss;
    return out;
}

}  // namespace detail

/// Least-squares fit of a dip model to a delay scan.
///
/// Model p(tau) = B * (1 - v * g((tau - t0))), where g is the model family's
/// normalized dip profile. FourierOfDensity uses the transform of `density`
/// (required for that model); Gaussian and Sinc2 carry their own scale
/// parameter. Points are weighted by 1/sqrt(counts) when raw counts exist.
inline DipFit fit_dip(const DelayScan& scan, DipModel model,
                      const SpectralDensity* density = nullptr) {
    const std::size_t n = scan.delay_fs.size();
    if (n < 10) throw InputError("fit_dip: need at least 10 scan points");
    if (model == DipModel::FourierOfDensity && density == nullptr)
        throw InputError("fit_dip: fourier_of_density model needs the source density");

    // Plateau estimate from the outer 20% of delays, noise from its scatter.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(scan.delay_fs[a]) > std::abs(scan.delay_fs[b]);
    });
    const std::size_t n_out = std::max<std::size_t>(4, n / 5);
    double plateau0 = 0.0;
    for (std::size_t i = 0; i < n_out; ++i) plateau0 += scan.coincidence[order[i]];
    plateau0 /= static_cast<double>(n_out);
    double noise2 = 0.0;
    for (std::size_t i = 0; i < n_out; ++i) {
        const double d = scan.coincidence[order[i]] - plateau0;
        noise2 += d * d;
    }
    const double noise = std::sqrt(noise2 / static_cast<double>(n_out));

    std::size_t imin = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (scan.coincidence[i] < scan.coincidence[imin]) imin = i;
    const double depth0 = plateau0 - scan.coincidence[imin];
    if (depth0 < 3.0 * noise)
        throw NoDipError("fit_dip: dip depth " + std::to_string(depth0) + " below 3x noise " +
                         std::to_string(noise));

    // Crude initial width from the half-depth crossings of the inverted scan.
    double width0_fs = 0.0;
    {
        std::vector<double> inv(n);
        for (std::size_t i = 0; i < n; ++i) inv[i] = plateau0 - scan.coincidence[i];
        try {
            auto [xl, xr] = half_level_crossings(scan.delay_fs, inv);
            width0_fs = xr - xl;
        } catch (const NotFoundError&) {
            width0_fs = 0.25 * (scan.delay_fs.back() - scan.delay_fs.front());
        }
    }

    const double density_norm =
        density != nullptr ? trapezoid(density->intensity, density->delta) : 1.0;

    // theta layout: [B, v, t0_fs, (scale)]
    auto profile = [&](const Eigen::VectorXd& th, double tau_fs) {
        const double tau = (tau_fs - th[2]) * 1e-15;
        switch (model) {
            case DipModel::FourierOfDensity:
                return detail::density_dip_profile(*density, density_norm, tau);
            case DipModel::Gaussian: {
                const double sigma = th[3];  // rad/s spectral rms width
                return std::exp(-2.0 * sigma * sigma * tau * tau);
            }
            default: {
                const double a = th[3];  // s^2, the QPM-family curvature scale
                return detail::qpm_family_dip_profile(a, tau);
            }
        }
    };

    std::vector<double> weights(n, 1.0);
    if (!scan.counts.empty()) {
        for (std::size_t i = 0; i < n; ++i)
            weights[i] = 1.0 / std::sqrt(std::max(scan.counts[i], 1.0));
        // Counts and coincidence differ by the plateau scale; weights only
        // need to be proportional to 1/sigma_i.
    }

    auto residuals = [&](const Eigen::VectorXd& th) {
        Eigen::VectorXd r(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = th[0] * (1.0 - th[1] * profile(th, scan.delay_fs[i]));
            r[static_cast<int>(i)] = weights[i] * (m - scan.coincidence[i]);
        }
        return r;
    };

    const int np = model == DipModel::FourierOfDensity ? 3 : 4;
    Eigen::VectorXd theta(np);
    theta[0] = plateau0;
    theta[1] = std::min(depth0 / std::max(plateau0, 1e-12), 1.0);
    theta[2] = scan.delay_fs[imin];
    if (model == DipModel::Gaussian) {
        // FWHM_dip = sqrt(2 ln 2) / sigma for the Gaussian family.
        theta[3] = std::sqrt(2.0 * std::log(2.0)) / (width0_fs * 1e-15);
    } else if (model == DipModel::Sinc2) {
        // FWHM_dip ~ 1.479 * sqrt(a) for the QPM family (see tests).
        theta[3] = std::pow(width0_fs * 1e-15 / 1.479, 2.0);
    }

    auto lm = detail::levenberg_marquardt(residuals, theta);
    if (!lm.converged || !std::isfinite(lm.rss))
        throw FitError("fit_dip: Levenberg-Marquardt did not converge, rss=" +
                       std::to_string(lm.rss));

    DipFit fit;
    fit.model = model;
    fit.iterations = lm.iterations;
    fit.converged = lm.converged;
    fit.plateau = lm.params[0];
    fit.visibility = std::clamp(lm.params[1], 0.0, 1.0);
    fit.center_fs = lm.params[2];
    fit.residual_norm = std::sqrt(lm.rss);
    fit.visibility_err = std::sqrt(std::max(lm.covariance(1, 1), 0.0));
    fit.center_err = std::sqrt(std::max(lm.covariance(2, 2), 0.0));

    // FWHM of the fitted dip profile: g = 1/2 crossing found numerically.
    auto half_crossing_fs = [&](double hint_fs) {
        double hi = std::max(hint_fs, 1.0);
        Eigen::VectorXd th = lm.params;
        th[2] = 0.0;
        auto g = [&](double tau_fs) { return profile(th, tau_fs); };
        int guard = 0;
        while (g(hi) > 0.5 && guard++ < 60) hi *= 1.5;
        if (g(hi) > 0.5) throw NumericalError("fit_dip: dip half width not bracketed");
        return bisect([&](double t) { return g(t) - 0.5; }, 0.0, hi, hi * 1e-10, "dip half width");
    };
    const double tau_h = half_crossing_fs(0.75 * width0_fs);
    fit.width_fs = 2.0 * tau_h;

    switch (model) {
        case DipModel::Gaussian:
            fit.width_err = fit.width_fs * std::sqrt(std::max(lm.covariance(3, 3), 0.0)) /
                            std::max(lm.params[3], 1e-300);
            break;
        case DipModel::Sinc2:
            fit.width_err = 0.5 * fit.width_fs * std::sqrt(std::max(lm.covariance(3, 3), 0.0)) /
                            std::max(lm.params[3], 1e-300);
            break;
        default:
            fit.width_err = 0.0;  // shape fixed by the reference density
            break;
    }
    return fit;
}

/// Parametric spectral families used for dip-width <-> bandwidth inversion.
enum class SpectralFamily { FlatTop, Gaussian, QpmSinc2 };

inline const char* to_string(SpectralFamily f) {
    switch (f) {
        case SpectralFamily::FlatTop: return "flat_top";
        case SpectralFamily::Gaussian: return "gaussian";
        default: return "qpm_sinc2";
    }
}

namespace detail {

/// Dip FWHM (s) of a family member whose spectral FWHM is `fwhm_rad_s`.
inline double family_dip_fwhm(SpectralFamily family, double fwhm_rad_s) {
    auto g = [&](double tau) -> double {
        switch (family) {
            case SpectralFamily::FlatTop:
                return sinc(fwhm_rad_s * tau);  // cos-transform of the rect, at lag 2*tau
            case SpectralFamily::Gaussian: {
                const double sigma = fwhm_rad_s / (2.0 * std::sqrt(2.0 * std::log(2.0)));
                return std::exp(-2.0 * sigma * sigma * tau * tau);
            }
            default: {
                const double x_half = 1.39155737825151;  // sinc^2(x) = 1/2
                const double a = 4.0 * x_half / (fwhm_rad_s * fwhm_rad_s);
                return qpm_family_dip_profile(a, tau);
            }
        }
    };
    double hi = 2.0 / fwhm_rad_s;
    int guard = 0;
    while (g(hi) > 0.5 && guard++ < 80) hi *= 1.5;
    if (g(hi) > 0.5) throw NumericalError("family_dip_fwhm: half depth not bracketed");
    const double tau_h = bisect([&](double t) { return g(t) - 0.5; }, 0.0, hi, hi * 1e-12,
                                "family_dip_fwhm");
    return 2.0 * tau_h;
}

}  // namespace detail

/// Spectral bandwidth (nm at the given band center) a transform-limited
/// biphoton spectrum of the chosen family must have for its hom_scan dip to
/// show the given FWHM. The flat-top family is the default convention for
/// quoting a transform-limited bandwidth from a dip width alone.
inline double transform_limited_bandwidth(double dip_width_fs, double center_nm,
                                          SpectralFamily family = SpectralFamily::FlatTop) {
    if (!(dip_width_fs > 0.0)) throw InputError("transform_limited_bandwidth: width must be > 0");
    const double target = dip_width_fs * 1e-15;
    // Fourier reciprocity: dip width is monotone decreasing in spectral width.
    double lo = 1e9, hi = 1e16;  // rad/s bracket on the spectral FWHM
    if (detail::family_dip_fwhm(family, lo) < target ||
        detail::family_dip_fwhm(family, hi) > target)
        throw NumericalError("transform_limited_bandwidth: inversion bracket failure");
    const double fwhm_rad_s = bisect(
        [&](double f) { return detail::family_dip_fwhm(family, f) - target; }, lo, hi, 1.0,
        "transform_limited_bandwidth");
    const double wc = omega_from_wavelength(center_nm * 1e-9);
    return (wavelength_from_omega(wc - 0.5 * fwhm_rad_s) -
            wavelength_from_omega(wc + 0.5 * fwhm_rad_s)) *
           1e9;
}

}  // namespace ppsf
