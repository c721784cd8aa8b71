#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppsf {

inline constexpr double speed_of_light = 299792458.0;  // m/s
inline constexpr double pi = 3.141592653589793238462643383279502884;

/// Angular frequency (rad/s) of light at vacuum wavelength lambda (m).
inline double omega_from_wavelength(double lambda_m) {
    return 2.0 * pi * speed_of_light / lambda_m;
}

inline double wavelength_from_omega(double omega) {
    return 2.0 * pi * speed_of_light / omega;
}

/// sinc(x) = sin(x)/x with sinc(0) = 1 (unnormalized convention).
inline double sinc(double x) {
    if (std::abs(x) < 1e-8) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

// ---------------------------------------------------------------------------
// Error types shared across modules.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input outside a model's validity range (wavelength ranges, bad arguments).
struct DomainError : Error {
    using Error::Error;
};

/// A numeric procedure failed (bracketing, inversion, non-finite values).
struct NumericalError : Error {
    using Error::Error;
};

/// A requested root/feature does not exist in the given bracket.
struct NotFoundError : Error {
    using Error::Error;
};

/// Malformed user input (files, configs, parameters).
struct InputError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Small numeric helpers.

/// Bracketed bisection for f(lambda) = 0. Requires a sign change on [lo, hi].
/// Runs until the interval is below xtol (plus a hard iteration cap).
inline double bisect(const std::function<double(double)>& f, double lo, double hi,
                     double xtol, const char* what = "bisect") {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) {
        throw NotFoundError(std::string(what) + ": no sign change in bracket");
    }
    for (int it = 0; it < 200 && (hi - lo) > xtol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (fhi > 0.0)) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    return 0.5 * (lo + hi);
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> x(n);
    if (n == 1) {
        x[0] = lo;
        return x;
    }
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + step * static_cast<double>(i);
    x.back() = hi;
    return x;
}

/// Trapezoid rule over samples y(x); x need not be uniform.
inline double trapezoid(const std::vector<double>& y, const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < x.size(); ++i) {
        s += 0.5 * (y[i] + y[i + 1]) * (x[i + 1] - x[i]);
    }
    return s;
}

/// Full width of y(x) at level y = half, by linear interpolation around the
/// maximum. Throws NotFoundError if a crossing is missing on either side.
inline std::pair<double, double> half_level_crossings(const std::vector<double>& x,
                                                      const std::vector<double>& y) {
    std::size_t imax = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
        if (y[i] > y[imax]) imax = i;
    const double half = 0.5 * y[imax];

    std::size_t i = imax;
    while (i > 0 && y[i] > half) --i;
    if (y[i] > half) throw NotFoundError("half_level_crossings: left edge not crossed");
    const double xl = x[i] + (x[i + 1] - x[i]) * (half - y[i]) / (y[i + 1] - y[i]);

    std::size_t j = imax;
    while (j + 1 < y.size() && y[j] > half) ++j;
    if (y[j] > half) throw NotFoundError("half_level_crossings: right edge not crossed");
    const double xr = x[j - 1] + (x[j] - x[j - 1]) * (half - y[j - 1]) / (y[j] - y[j - 1]);
    return {xl, xr};
}

}  // namespace ppsf
