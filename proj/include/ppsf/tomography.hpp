#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ppsf/common.hpp"
#include "ppsf/fiber.hpp"

namespace ppsf {

using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;
using Vec4 = Eigen::Vector4cd;
using cplx = std::complex<double>;

struct InvalidStateError : Error {
    using Error::Error;
};

struct ReliabilityError : Error {
    using Error::Error;
};

/// Measurement settings do not span the 16-dimensional operator space.
struct IllPosedError : Error {
    int nullspace_dim;
    IllPosedError(const std::string& msg, int dim) : Error(msg), nullspace_dim(dim) {}
};

// ---------------------------------------------------------------------------
// States

/// Two-qubit polarization state in the {HH, HV, VH, VV} basis.
struct DensityMatrix {
    Mat4 rho = Mat4::Zero();

    static constexpr double hermiticity_tol = 1e-12;
    static constexpr double trace_tol = 1e-10;
    static constexpr double eigenvalue_floor = -1e-9;

    void validate() const {
        if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > hermiticity_tol)
            throw InvalidStateError("DensityMatrix: not Hermitian");
        if (std::abs(rho.trace().real() - 1.0) > trace_tol || std::abs(rho.trace().imag()) > trace_tol)
            throw InvalidStateError("DensityMatrix: trace != 1");
        Eigen::SelfAdjointEigenSolver<Mat4> es(rho);
        if (es.eigenvalues().minCoeff() < eigenvalue_floor)
            throw InvalidStateError("DensityMatrix: negative eigenvalue " +
                                    std::to_string(es.eigenvalues().minCoeff()));
    }

    static DensityMatrix pure(const Vec4& ket) {
        DensityMatrix d;
        const Vec4 psi = ket / ket.norm();
        d.rho = psi * psi.adjoint();
        return d;
    }

    /// p |psi(phase)><psi(phase)| + (1-p) I/4 with psi = (|HV> + e^{i phase}|VH>)/sqrt(2).
    static DensityMatrix werner(double p, double phase = 0.0) {
        Vec4 psi;
        psi << 0.0, 1.0 / std::sqrt(2.0), std::exp(cplx(0.0, phase)) / std::sqrt(2.0), 0.0;
        DensityMatrix d;
        d.rho = p * (psi * psi.adjoint()) + (1.0 - p) * 0.25 * Mat4::Identity();
        return d;
    }

    static DensityMatrix maximally_mixed() {
        DensityMatrix d;
        d.rho = 0.25 * Mat4::Identity();
        return d;
    }
};

inline Vec4 psi_plus_ket() {
    Vec4 v;
    v << 0.0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0), 0.0;
    return v;
}

inline Vec4 psi_minus_ket() {
    Vec4 v;
    v << 0.0, 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0), 0.0;
    return v;
}

// ---------------------------------------------------------------------------
// Polarization analyzer model

/// Zero-order waveplate: retardance scales as design_wavelength / lambda and
/// equals pi/2 (quarter) or pi (half) exactly at the design wavelength.
struct WaveplateSpec {
    enum class Order { Quarter, Half };
    Order order = Order::Quarter;
    double design_nm = 1550.0;

    double nominal_retardance() const { return order == Order::Quarter ? 0.5 * pi : pi; }

    double retardance(double lambda_nm) const {
        if (!(lambda_nm > 0.0)) throw InputError("WaveplateSpec: wavelength must be > 0");
        return nominal_retardance() * design_nm / lambda_nm;
    }
};

/// One polarization analyzer arm: quarter-wave plate, then half-wave plate,
/// then polarizer, with everything evaluated at the arm's operating wavelength.
struct ArmSetting {
    double qwp_angle_rad = 0.0;  // fast-axis angles in [0, pi)
    double hwp_angle_rad = 0.0;
    PolarizationAxis polarizer = PolarizationAxis::H;
    double wavelength_nm = 1550.0;
    WaveplateSpec qwp{WaveplateSpec::Order::Quarter, 1550.0};
    WaveplateSpec hwp{WaveplateSpec::Order::Half, 1550.0};

    void validate() const {
        if (qwp_angle_rad < 0.0 || qwp_angle_rad >= pi || hwp_angle_rad < 0.0 ||
            hwp_angle_rad >= pi)
            throw InputError("ArmSetting: waveplate angles must lie in [0, pi)");
        if (!(wavelength_nm > 0.0)) throw InputError("ArmSetting: wavelength must be > 0");
    }
};

struct MeasurementSetting {
    std::string id;
    ArmSetting signal;
    ArmSetting idler;
};

namespace detail {

inline Mat2 rotation2(double theta) {
    Mat2 r;
    r << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return r;
}

/// Retarder with the given fast-axis angle: R(theta) diag(1, e^{i phi}) R(-theta).
inline Mat2 waveplate_jones(double theta, double retardance) {
    Mat2 d = Mat2::Zero();
    d(0, 0) = 1.0;
    d(1, 1) = std::exp(cplx(0.0, retardance));
    return rotation2(theta) * d * rotation2(-theta);
}

inline Mat4 kron2(const Mat2& a, const Mat2& b) {
    Mat4 out;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
    return out;
}

}  // namespace detail

/// Rank-1 projector measured by one analyzer arm: light passes the QWP, the
/// HWP, then the polarizer, so the measurement operator in the input space is
/// Q^dag H^dag |pol><pol| H Q with the retardances taken at the arm wavelength.
inline Mat2 projector(const ArmSetting& arm) {
    arm.validate();
    const Mat2 q = detail::waveplate_jones(arm.qwp_angle_rad, arm.qwp.retardance(arm.wavelength_nm));
    const Mat2 h = detail::waveplate_jones(arm.hwp_angle_rad, arm.hwp.retardance(arm.wavelength_nm));
    Mat2 pol = Mat2::Zero();
    pol(arm.polarizer == PolarizationAxis::H ? 0 : 1,
        arm.polarizer == PolarizationAxis::H ? 0 : 1) = 1.0;
    return q.adjoint() * h.adjoint() * pol * h * q;
}

inline Mat4 setting_projector(const MeasurementSetting& s) {
    return detail::kron2(projector(s.signal), projector(s.idler));
}

/// Tr[rho (P_signal x P_idler)], clamped to [0, 1] against roundoff.
inline double born_probability(const DensityMatrix& state, const MeasurementSetting& setting) {
    const cplx tr = (state.rho * setting_projector(setting)).trace();
    return std::clamp(tr.real(), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Default tomography setting sets

namespace detail {

struct ArmBasis {
    const char* label;
    double qwp_deg;
    double hwp_deg;
};

/// Waveplate angles that project onto H/V/D/A/R/L at the design wavelength
/// (polarizer fixed to H).
inline const std::vector<ArmBasis>& six_state_bases() {
    static const std::vector<ArmBasis> b = {
        {"H", 0.0, 0.0},  {"V", 0.0, 45.0},  {"D", 45.0, 22.5},
        {"A", 45.0, 157.5}, {"R", 45.0, 45.0}, {"L", 45.0, 0.0},
    };
    return b;
}

inline ArmSetting make_arm(const ArmBasis& basis, double lambda_nm, double design_nm) {
    ArmSetting arm;
    arm.qwp_angle_rad = basis.qwp_deg * pi / 180.0;
    arm.hwp_angle_rad = basis.hwp_deg * pi / 180.0;
    arm.polarizer = PolarizationAxis::H;
    arm.wavelength_nm = lambda_nm;
    arm.qwp = {WaveplateSpec::Order::Quarter, design_nm};
    arm.hwp = {WaveplateSpec::Order::Half, design_nm};
    return arm;
}

}  // namespace detail

/// The 36-setting mutually-unbiased-bases set: all pairs of H/V/D/A/R/L.
inline std::vector<MeasurementSetting> mub36_settings(double lambda_s_nm, double lambda_i_nm,
                                                      double design_nm = 1550.0) {
    std::vector<MeasurementSetting> out;
    out.reserve(36);
    for (const auto& bs : detail::six_state_bases())
        for (const auto& bi : detail::six_state_bases()) {
            MeasurementSetting m;
            m.id = std::string(bs.label) + bi.label;
            m.signal = detail::make_arm(bs, lambda_s_nm, design_nm);
            m.idler = detail::make_arm(bi, lambda_i_nm, design_nm);
            out.push_back(std::move(m));
        }
    return out;
}

/// Minimal 16-setting set: all pairs of H/V/D/L.
inline std::vector<MeasurementSetting> minimal16_settings(double lambda_s_nm, double lambda_i_nm,
                                                          double design_nm = 1550.0) {
    const int pick[4] = {0, 1, 2, 5};  // H, V, D, L
    std::vector<MeasurementSetting> out;
    out.reserve(16);
    const auto& bases = detail::six_state_bases();
    for (int i : pick)
        for (int j : pick) {
            MeasurementSetting m;
            m.id = std::string(bases[i].label) + bases[j].label;
            m.signal = detail::make_arm(bases[i], lambda_s_nm, design_nm);
            m.idler = detail::make_arm(bases[j], lambda_i_nm, design_nm);
            out.push_back(std::move(m));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Forward model

struct CountRecord {
    std::string setting_id;
    double coincidences = 0.0;  // integer-valued when simulated
    double accidentals = 0.0;   // estimated accidental contribution
    double integration_s = 1.0;
};

inline double expected_coincidence_mean(const DensityMatrix& state,
                                        const MeasurementSetting& setting,
                                        double pairs_per_setting, double accidental_rate_hz,
                                        double efficiency, double integration_s = 1.0) {
    return pairs_per_setting * efficiency * efficiency * born_probability(state, setting) +
           accidental_rate_hz * integration_s;
}

/// Poisson coincidence counts for every setting; deterministic for fixed seed.
inline std::vector<CountRecord> simulate_counts(const DensityMatrix& state,
                                                const std::vector<MeasurementSetting>& settings,
                                                double pairs_per_setting,
                                                double accidental_rate_hz, double efficiency,
                                                std::uint64_t seed, double integration_s = 1.0) {
    if (!(pairs_per_setting > 0.0)) throw InputError("simulate_counts: pairs must be > 0");
    if (accidental_rate_hz < 0.0) throw InputError("simulate_counts: accidental rate must be >= 0");
    if (!(efficiency > 0.0 && efficiency <= 1.0))
        throw InputError("simulate_counts: efficiency must be in (0, 1]");
    state.validate();

    std::mt19937_64 rng(seed);
    std::vector<CountRecord> records;
    records.reserve(settings.size());
    for (const auto& s : settings) {
        const double mean = expected_coincidence_mean(state, s, pairs_per_setting,
                                                      accidental_rate_hz, efficiency,
                                                      integration_s);
        CountRecord r;
        r.setting_id = s.id;
        if (mean > 0.0) {
            std::poisson_distribution<long long> poisson(mean);
            r.coincidences = static_cast<double>(poisson(rng));
        }
        r.accidentals = accidental_rate_hz * integration_s;
        r.integration_s = integration_s;
        records.push_back(std::move(r));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Reconstruction

namespace detail {

inline const std::vector<Mat2>& pauli_basis2() {
    static const std::vector<Mat2> p = [] {
        std::vector<Mat2> v(4);
        v[0] = Mat2::Identity();
        v[1] << 0, 1, 1, 0;
        v[2] << 0, cplx(0, -1), cplx(0, 1), 0;
        v[3] << 1, 0, 0, -1;
        return v;
    }();
    return p;
}

/// 16 Hermitian basis operators sigma_i (x) sigma_j.
inline const std::vector<Mat4>& pauli_basis4() {
    static const std::vector<Mat4> p = [] {
        std::vector<Mat4> v;
        v.reserve(16);
        for (const auto& a : pauli_basis2())
            for (const auto& b : pauli_basis2()) v.push_back(kron2(a, b));
        return v;
    }();
    return p;
}

inline std::vector<Mat4> projectors_for(const std::vector<MeasurementSetting>& settings) {
    std::vector<Mat4> out;
    out.reserve(settings.size());
    for (const auto& s : settings) out.push_back(setting_projector(s));
    return out;
}

/// Design matrix A_{m,k} = Tr[Pi_m sigma_k]; probabilities are A * r / 4 with
/// rho = (1/4) sum_k r_k sigma_k.
inline Eigen::MatrixXd design_matrix(const std::vector<Mat4>& projectors) {
    const auto& basis = pauli_basis4();
    Eigen::MatrixXd a(projectors.size(), 16);
    for (std::size_t m = 0; m < projectors.size(); ++m)
        for (int k = 0; k < 16; ++k)
            a(static_cast<int>(m), k) = (projectors[m] * basis[k]).trace().real();
    return a;
}

inline void check_rank16(const Eigen::MatrixXd& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& sv = svd.singularValues();
    const double thresh = sv(0) * 1e-10;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > thresh) ++rank;
    if (rank < 16)
        throw IllPosedError("settings span only a " + std::to_string(rank) +
                                "-dimensional operator subspace (need 16); nullspace dim " +
                                std::to_string(16 - rank),
                            16 - rank);
}

inline std::vector<Mat4> match_records_to_settings(
    const std::vector<CountRecord>& records, const std::vector<MeasurementSetting>& settings) {
    std::map<std::string, const MeasurementSetting*> by_id;
    for (const auto& s : settings) by_id[s.id] = &s;
    std::vector<Mat4> projs;
    projs.reserve(records.size());
    for (const auto& r : records) {
        auto it = by_id.find(r.setting_id);
        if (it == by_id.end())
            throw InputError("no setting with id '" + r.setting_id + "' for a count record");
        projs.push_back(setting_projector(*it->second));
    }
    return projs;
}

}  // namespace detail

struct LinearInversionResult {
    Mat4 rho;                  // Hermitian, unit trace; PSD NOT guaranteed
    double min_eigenvalue;     // most negative eigenvalue, flags unphysical output
    bool physical;
};

/// Least-squares inversion of the Born probabilities over the Pauli basis.
/// The overall count scale is estimated jointly, so records may be raw counts.
inline LinearInversionResult linear_inversion(const std::vector<CountRecord>& records,
                                              const std::vector<MeasurementSetting>& settings) {
    if (records.size() < 16) {
        throw IllPosedError("need at least 16 count records, got " +
                                std::to_string(records.size()),
                            16 - static_cast<int>(records.size()));
    }
    const auto projs = detail::match_records_to_settings(records, settings);
    const Eigen::MatrixXd a = detail::design_matrix(projs);
    detail::check_rank16(a);

    Eigen::VectorXd c(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) c(static_cast<int>(i)) = records[i].coincidences;

    // c ~ s * p = (s/4) A r ; solve for y = (s/4) r and renormalize by trace.
    const Eigen::VectorXd y = a.colPivHouseholderQr().solve(c);
    const auto& basis = detail::pauli_basis4();
    Mat4 raw = Mat4::Zero();
    for (int k = 0; k < 16; ++k) raw += y(k) * basis[k];
    raw = 0.5 * (raw + raw.adjoint().eval());
    const double tr = raw.trace().real();
    if (std::abs(tr) < 1e-300) throw NumericalError("linear_inversion: zero-trace solution");
    raw /= tr;

    LinearInversionResult out;
    out.rho = raw;
    Eigen::SelfAdjointEigenSolver<Mat4> es(raw);
    out.min_eigenvalue = es.eigenvalues().minCoeff();
    out.physical = out.min_eigenvalue >= DensityMatrix::eigenvalue_floor;
    return out;
}

// ---------------------------------------------------------------------------
// Entanglement metrics

/// Wootters concurrence: C = max(0, l1 - l2 - l3 - l4) where l_i are the
/// decreasingly sorted square roots of the eigenvalues of rho * rho_tilde,
/// rho_tilde = (sy x sy) conj(rho) (sy x sy).
inline double concurrence(const DensityMatrix& state) {
    state.validate();
    Mat4 yy = Mat4::Zero();
    yy(0, 3) = -1.0;
    yy(1, 2) = 1.0;
    yy(2, 1) = 1.0;
    yy(3, 0) = -1.0;
    const Mat4 rho_tilde = yy * state.rho.conjugate() * yy;
    Eigen::ComplexEigenSolver<Mat4> es(state.rho * rho_tilde);
    std::vector<double> lam(4);
    for (int i = 0; i < 4; ++i) lam[i] = std::sqrt(std::max(es.eigenvalues()(i).real(), 0.0));
    std::sort(lam.begin(), lam.end(), std::greater<>());
    return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

/// <psi| rho |psi> for a normalized pure target.
inline double fidelity_to_pure(const DensityMatrix& state, const Vec4& target) {
    if (std::abs(target.norm() - 1.0) > 1e-10)
        throw InputError("fidelity_to_pure: target ket is not normalized");
    const cplx f = target.adjoint() * state.rho * target;
    if (std::abs(f.imag()) > 1e-10)
        throw NumericalError("fidelity_to_pure: non-real overlap, imag " +
                             std::to_string(f.imag()));
    return f.real();
}

struct PhaseFidelity {
    double fidelity;
    double phase;  // radians in [0, 2 pi)
};

/// Maximum fidelity over the phase family |psi(phi)> = (|HV> + e^{i phi}|VH>)/sqrt(2),
/// by a 1-D scan with golden-section refinement. Returns phi = 0 on flat input.
inline PhaseFidelity best_maximally_entangled_fidelity(const DensityMatrix& state) {
    state.validate();
    auto overlap = [&](double phi) {
        Vec4 psi;
        psi << 0.0, 1.0 / std::sqrt(2.0), std::exp(cplx(0.0, phi)) / std::sqrt(2.0), 0.0;
        return (psi.adjoint() * state.rho * psi)(0, 0).real();
    };
    const int n = 720;
    double best_phi = 0.0, best = overlap(0.0), worst = best;
    for (int i = 1; i < n; ++i) {
        const double phi = 2.0 * pi * i / n;
        const double f = overlap(phi);
        worst = std::min(worst, f);
        if (f > best) {
            best = f;
            best_phi = phi;
        }
    }
    if (best - worst < 1e-14) return {best, 0.0};  // flat family: tie-break at 0

    double lo = best_phi - 2.0 * pi / n;
    double hi = best_phi + 2.0 * pi / n;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = overlap(x1), f2 = overlap(x2);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = overlap(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = overlap(x1);
        }
    }
    double phi = 0.5 * (lo + hi);
    phi = std::fmod(phi + 2.0 * pi, 2.0 * pi);
    return {overlap(phi), phi};
}

// ---------------------------------------------------------------------------
// Maximum-likelihood reconstruction

struct MleOptions {
    double ll_tol = 1e-9;        // stop when the log-likelihood gain drops below this
    double step_tol = 1e-8;      // ... or the accepted parameter step is smaller
    long max_evaluations = 100000;
    bool subtract_accidentals = false;  // opt-in; reconstruction uses raw counts by default
};

struct TomographyResult {
    DensityMatrix rho;
    double concurrence = 0.0;
    double fidelity = 0.0;        // phase-optimized maximally-entangled fidelity
    double fidelity_psi_plus = 0.0;
    double optimal_phase = 0.0;
    double concurrence_sigma = 0.0;  // filled by uncertainty_mc
    double fidelity_sigma = 0.0;
    double log_likelihood = 0.0;
    long evaluations = 0;
    int iterations = 0;
    bool converged = false;
};

/// MLE hit the evaluation cap; carries the best iterate found.
struct MleNonConvergence : Error {
    TomographyResult best;
    MleNonConvergence(const std::string& msg, TomographyResult b)
        : Error(msg), best(std::move(b)) {}
};

namespace detail {

/// rho = T^dag T / Tr(T^dag T) with T lower triangular: 4 real diagonal
/// entries followed by Re/Im pairs of the 6 sub-diagonal entries.
inline Mat4 rho_from_t_params(const Eigen::Matrix<double, 16, 1>& t) {
    Mat4 T = Mat4::Zero();
    T(0, 0) = t(0);
    T(1, 1) = t(1);
    T(2, 2) = t(2);
    T(3, 3) = t(3);
    T(1, 0) = cplx(t(4), t(5));
    T(2, 0) = cplx(t(6), t(7));
    T(2, 1) = cplx(t(8), t(9));
    T(3, 0) = cplx(t(10), t(11));
    T(3, 1) = cplx(t(12), t(13));
    T(3, 2) = cplx(t(14), t(15));
    Mat4 rho = T.adjoint() * T;
    const double tr = rho.trace().real();
    if (tr < 1e-300) {
        return 0.25 * Mat4::Identity();
    }
    return rho / tr;
}

/// Lower-triangular T with T^dag T = rho (an "upper Cholesky" via the
/// antidiagonal exchange trick).
inline Eigen::Matrix<double, 16, 1> t_params_from_rho(const Mat4& rho) {
    Mat4 x = Mat4::Zero();
    for (int i = 0; i < 4; ++i) x(i, 3 - i) = 1.0;
    const Mat4 flipped = x * rho * x;
    Eigen::LLT<Mat4> llt(flipped);
    Mat4 g = llt.matrixL();
    const Mat4 T = (x * g * x).adjoint();

    Eigen::Matrix<double, 16, 1> t;
    t(0) = T(0, 0).real();
    t(1) = T(1, 1).real();
    t(2) = T(2, 2).real();
    t(3) = T(3, 3).real();
    t(4) = T(1, 0).real();
    t(5) = T(1, 0).imag();
    t(6) = T(2, 0).real();
    t(7) = T(2, 0).imag();
    t(8) = T(2, 1).real();
    t(9) = T(2, 1).imag();
    t(10) = T(3, 0).real();
    t(11) = T(3, 0).imag();
    t(12) = T(3, 1).real();
    t(13) = T(3, 1).imag();
    t(14) = T(3, 2).real();
    t(15) = T(3, 2).imag();
    return t;
}

}  // namespace detail

/// Poisson maximum-likelihood reconstruction over the physical parametrization
/// rho = T^dag T / Tr(T^dag T). The count scale is profiled analytically, and
/// the ascent uses numeric gradients with a backtracking line search, seeded
/// from a PSD-projected linear inversion.
inline TomographyResult mle_reconstruct(const std::vector<CountRecord>& records,
                                        const std::vector<MeasurementSetting>& settings,
                                        const MleOptions& options = {}) {
    const auto projs = detail::match_records_to_settings(records, settings);
    detail::check_rank16(detail::design_matrix(projs));

    std::vector<double> counts(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        double c = records[i].coincidences;
        if (c < 0.0) throw InputError("mle_reconstruct: negative count");
        if (options.subtract_accidentals) c = std::max(c - records[i].accidentals, 0.0);
        counts[i] = c;
    }

    long evaluations = 0;
    auto log_likelihood = [&](const Eigen::Matrix<double, 16, 1>& t) {
        ++evaluations;
        const Mat4 rho = detail::rho_from_t_params(t);
        double sum_p = 0.0, sum_c = 0.0;
        std::vector<double> p(projs.size());
        for (std::size_t m = 0; m < projs.size(); ++m) {
            p[m] = std::max((rho * projs[m]).trace().real(), 1e-15);
            sum_p += p[m];
            sum_c += counts[m];
        }
        const double scale = sum_c / sum_p;
        double ll = 0.0;
        for (std::size_t m = 0; m < projs.size(); ++m) {
            const double mu = scale * p[m];
            ll += (counts[m] > 0.0 ? counts[m] * std::log(mu) : 0.0) - mu;
        }
        return ll;
    };

    // Seed: PSD-projected linear inversion, mixed slightly toward I/4 so the
    // Cholesky factor is well conditioned.
    Eigen::Matrix<double, 16, 1> t;
    {
        const auto li = linear_inversion(records, settings);
        Eigen::SelfAdjointEigenSolver<Mat4> es(li.rho);
        Eigen::Vector4d ev = es.eigenvalues().cwiseMax(1e-6);
        Mat4 psd = es.eigenvectors() * ev.asDiagonal().toDenseMatrix().cast<cplx>() *
                   es.eigenvectors().adjoint();
        psd /= psd.trace().real();
        const Mat4 seed = 0.98 * psd + 0.02 * 0.25 * Mat4::Identity();
        t = detail::t_params_from_rho(seed);
    }

    // Quasi-second-order (BFGS) ascent with numeric gradients and a
    // backtracking (Armijo) line search.
    auto gradient = [&](const Eigen::Matrix<double, 16, 1>& x) {
        Eigen::Matrix<double, 16, 1> g;
        for (int k = 0; k < 16; ++k) {
            const double h = 1e-6 * (1.0 + std::abs(x(k)));
            Eigen::Matrix<double, 16, 1> xp = x, xm = x;
            xp(k) += h;
            xm(k) -= h;
            g(k) = (log_likelihood(xp) - log_likelihood(xm)) / (2.0 * h);
        }
        return g;
    };

    double ll = log_likelihood(t);
    Eigen::Matrix<double, 16, 16> hinv = Eigen::Matrix<double, 16, 16>::Identity();
    Eigen::Matrix<double, 16, 1> grad = gradient(t);
    int iterations = 0;
    bool converged = false;

    while (evaluations < options.max_evaluations) {
        ++iterations;
        if (grad.norm() < 1e-12) {
            converged = true;
            break;
        }
        Eigen::Matrix<double, 16, 1> dir = hinv * grad;
        if (dir.dot(grad) <= 0.0) {  // curvature estimate went bad: reset
            hinv.setIdentity();
            dir = grad;
        }

        double alpha = 1.0;
        bool accepted = false;
        const double slope = dir.dot(grad);
        Eigen::Matrix<double, 16, 1> t_new;
        double ll_new = ll;
        for (int bt = 0; bt < 60 && evaluations < options.max_evaluations; ++bt) {
            t_new = t + alpha * dir;
            ll_new = log_likelihood(t_new);
            if (ll_new >= ll + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            converged = true;  // no uphill step resolvable at double precision
            break;
        }

        const Eigen::Matrix<double, 16, 1> step = alpha * dir;
        const double gain = ll_new - ll;
        const Eigen::Matrix<double, 16, 1> grad_new = gradient(t_new);
        const Eigen::Matrix<double, 16, 1> y = grad - grad_new;  // minimization convention
        const double sy = step.dot(y);
        if (sy > 1e-12) {
            const Eigen::Matrix<double, 16, 16> eye = Eigen::Matrix<double, 16, 16>::Identity();
            const double rho_bfgs = 1.0 / sy;
            hinv = (eye - rho_bfgs * step * y.transpose()) * hinv *
                       (eye - rho_bfgs * y * step.transpose()) +
                   rho_bfgs * step * step.transpose();
        }
        t = t_new;
        ll = ll_new;
        grad = grad_new;
        if (gain < options.ll_tol || step.norm() < options.step_tol) {
            converged = true;
            break;
        }
    }

    TomographyResult result;
    result.rho.rho = detail::rho_from_t_params(t);
    result.log_likelihood = ll;
    result.evaluations = evaluations;
    result.iterations = iterations;
    result.converged = converged;
    result.concurrence = concurrence(result.rho);
    const auto pf = best_maximally_entangled_fidelity(result.rho);
    result.fidelity = pf.fidelity;
    result.optimal_phase = pf.phase;
    result.fidelity_psi_plus = fidelity_to_pure(result.rho, psi_plus_ket());

    if (!converged) {
        throw MleNonConvergence("mle_reconstruct: evaluation cap " +
                                    std::to_string(options.max_evaluations) +
                                    " reached before convergence",
                                result);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Monte-Carlo uncertainties

struct McUncertainty {
    double concurrence_sigma = 0.0;
    double fidelity_sigma = 0.0;           // phase-optimized fidelity
    double fidelity_psi_plus_sigma = 0.0;  // fixed |psi+> target
    int resamples = 0;
    int excluded = 0;
};

/// Poisson-resamples every count (mean = observed), re-runs the MLE per
/// resample, and returns the sample standard deviations of concurrence and
/// phase-optimized fidelity. Per-resample seeds derive from `seed`, so results
/// do not depend on the thread count.
inline McUncertainty uncertainty_mc(const std::vector<CountRecord>& records,
                                    const std::vector<MeasurementSetting>& settings,
                                    int n_resamples, std::uint64_t seed,
                                    const MleOptions& options = {}, int threads = 1) {
    if (n_resamples < 100) throw InputError("uncertainty_mc: need at least 100 resamples");
    std::vector<double> conc(n_resamples, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> fid(n_resamples, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> fid_pp(n_resamples, std::numeric_limits<double>::quiet_NaN());

    auto run_range = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(i + 1));
            std::vector<CountRecord> resampled = records;
            for (auto& r : resampled) {
                if (r.coincidences > 0.0) {
                    std::poisson_distribution<long long> poisson(r.coincidences);
                    r.coincidences = static_cast<double>(poisson(rng));
                }
            }
            try {
                const auto res = mle_reconstruct(resampled, settings, options);
                conc[i] = res.concurrence;
                fid[i] = res.fidelity;
                fid_pp[i] = res.fidelity_psi_plus;
            } catch (const MleNonConvergence&) {
                // left as NaN and counted below
            }
        }
    };

    const int nthreads = std::max(1, threads);
    if (nthreads == 1) {
        run_range(0, n_resamples);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n_resamples + nthreads - 1) / nthreads;
        for (int k = 0; k < nthreads; ++k) {
            const int b = k * chunk;
            const int e = std::min(n_resamples, b + chunk);
            if (b < e) pool.emplace_back(run_range, b, e);
        }
        for (auto& th : pool) th.join();
    }

    McUncertainty out;
    out.resamples = n_resamples;
    std::vector<double> cs, fs, fps;
    for (int i = 0; i < n_resamples; ++i) {
        if (std::isnan(conc[i])) {
            ++out.excluded;
        } else {
            cs.push_back(conc[i]);
            fs.push_back(fid[i]);
            fps.push_back(fid_pp[i]);
        }
    }
    if (out.excluded > 0.05 * n_resamples)
        throw ReliabilityError("uncertainty_mc: " + std::to_string(out.excluded) + " of " +
                               std::to_string(n_resamples) + " resamples failed to converge");

    auto stddev = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double s2 = 0.0;
        for (double x : v) s2 += (x - mean) * (x - mean);
        return std::sqrt(s2 / static_cast<double>(v.size() - 1));
    };
    out.concurrence_sigma = stddev(cs);
    out.fidelity_sigma = stddev(fs);
    out.fidelity_psi_plus_sigma = stddev(fps);
    return out;
}

}  // namespace ppsf
