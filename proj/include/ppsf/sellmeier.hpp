#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ppsf/common.hpp"

namespace ppsf {

struct SellmeierTerm {
    double strength;       // dimensionless oscillator strength B_i >= 0
    double resonance_um;   // resonance wavelength lambda_i > 0, in um
};

/// n(lambda)^2 = 1 + sum_i B_i lambda^2 / (lambda^2 - lambda_i^2), lambda in um.
struct SellmeierModel {
    std::string name;
    std::string version;
    std::vector<SellmeierTerm> terms;
    double lambda_min_um = 0.0;
    double lambda_max_um = 0.0;

    void validate() const {
        if (lambda_min_um <= 0.0 || lambda_max_um <= lambda_min_um)
            throw InputError("SellmeierModel: invalid validity range");
        for (const auto& t : terms) {
            if (t.strength < 0.0) throw InputError("SellmeierModel: negative oscillator strength");
            if (t.resonance_um <= 0.0) throw InputError("SellmeierModel: non-positive resonance");
        }
    }
};

/// Refractive index at lambda (um). Pure evaluation of the Sellmeier sum.
inline double refractive_index(const SellmeierModel& m, double lambda_um) {
    if (!(lambda_um >= m.lambda_min_um && lambda_um <= m.lambda_max_um)) {
        throw DomainError("refractive_index: " + std::to_string(lambda_um) +
                          " um outside [" + std::to_string(m.lambda_min_um) + ", " +
                          std::to_string(m.lambda_max_um) + "] um for " + m.name);
    }
    const double l2 = lambda_um * lambda_um;
    double s = 1.0;
    for (const auto& t : m.terms) {
        const double denom = l2 - t.resonance_um * t.resonance_um;
        if (denom == 0.0) throw DomainError("refractive_index: wavelength at a resonance pole");
        s += t.strength * l2 / denom;
    }
    if (!(s > 0.0)) throw DomainError("refractive_index: n^2 <= 0 inside validity range");
    return std::sqrt(s);
}

/// Fused silica at 20 C (Malitson 1965 coefficients), valid 0.21..3.7 um.
inline SellmeierModel fused_silica() {
    SellmeierModel m;
    m.name = "fused-silica-malitson-1965";
    m.version = "1";
    m.terms = {{0.6961663, 0.0684043}, {0.4079426, 0.1162414}, {0.8974794, 9.896161}};
    m.lambda_min_um = 0.21;
    m.lambda_max_um = 3.7;
    return m;
}

}  // namespace ppsf
