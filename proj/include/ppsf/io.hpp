#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ppsf/fiber.hpp"
#include "ppsf/hom.hpp"
#include "ppsf/qpm.hpp"
#include "ppsf/tomography.hpp"

namespace ppsf {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Small formatting helpers (fixed formats keep outputs byte-reproducible).

namespace detail {

inline std::string fmt_g(double v, int digits = 12) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw InputError("write failed: " + path.string());
}

}  // namespace detail

/// Fixed-precision float formatting used in all text artifacts.
inline std::string io_fmt(double v, int digits = 12) { return detail::fmt_g(v, digits); }

// ---------------------------------------------------------------------------
// Sellmeier / fiber files

inline json sellmeier_to_json(const SellmeierModel& m) {
    json terms = json::array();
    for (const auto& t : m.terms)
        terms.push_back({{"strength", t.strength}, {"resonance_um", t.resonance_um}});
    return {{"name", m.name},
            {"version", m.version},
            {"terms", terms},
            {"valid_range_um", {m.lambda_min_um, m.lambda_max_um}}};
}

inline SellmeierModel sellmeier_from_json(const json& j) {
    if (j.is_string()) {
        const std::string name = j.get<std::string>();
        if (name == "fused-silica-malitson-1965" || name == "fused_silica") return fused_silica();
        throw InputError("unknown material preset '" + name + "'");
    }
    SellmeierModel m;
    m.name = j.value("name", "custom");
    m.version = j.value("version", "1");
    for (const auto& t : j.at("terms"))
        m.terms.push_back({t.at("strength").get<double>(), t.at("resonance_um").get<double>()});
    const auto& range = j.at("valid_range_um");
    m.lambda_min_um = range.at(0).get<double>();
    m.lambda_max_um = range.at(1).get<double>();
    m.validate();
    return m;
}

inline json fiber_to_json(const StepIndexFiber& f) {
    return {{"schema", "ppsf-fiber/1"},
            {"id", f.id},
            {"core_radius_um", f.core_radius_um},
            {"numerical_aperture", f.numerical_aperture},
            {"na_reference_wavelength_um", f.na_reference_um},
            {"cladding_material", sellmeier_to_json(f.cladding_material)},
            {"birefringence_dn", f.birefringence_dn},
            {"length_m", f.length_m},
            {"poling_period_um", f.poling_period_um}};
}

inline StepIndexFiber fiber_from_json(const json& j) {
    if (j.value("schema", "") != "ppsf-fiber/1")
        throw InputError("fiber file: missing or unsupported schema tag (want ppsf-fiber/1)");
    auto f = make_step_index_fiber(
        j.at("core_radius_um").get<double>(), j.at("numerical_aperture").get<double>(),
        j.at("na_reference_wavelength_um").get<double>(), sellmeier_from_json(j.at("cladding_material")),
        j.at("birefringence_dn").get<double>(), j.at("length_m").get<double>(),
        j.at("poling_period_um").get<double>(), j.value("id", "ppsf"));
    return f;
}

inline StepIndexFiber load_fiber(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open fiber file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError("fiber file " + path.string() + ": " + e.what());
    }
    return fiber_from_json(j);
}

inline void save_fiber(const std::filesystem::path& path, const StepIndexFiber& f) {
    detail::write_text_file(path, fiber_to_json(f).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV artifacts

/// Columns: lambda_nm,axis,n_eff,beta1_s_per_m,k2_s2_per_m
inline void write_dispersion_csv(const std::filesystem::path& path,
                                 const std::vector<ModalDispersion>& curves) {
    std::ostringstream out;
    out << "lambda_nm,axis,n_eff,beta1_s_per_m,k2_s2_per_m\n";
    for (const auto& md : curves)
        for (std::size_t i = 0; i < md.lambda_nm.size(); ++i)
            out << detail::fmt_g(md.lambda_nm[i]) << ',' << to_string(md.axis) << ','
                << detail::fmt_g(md.n_eff[i], 15) << ',' << detail::fmt_g(md.beta1[i], 15) << ','
                << detail::fmt_g(md.k2[i]) << '\n';
    detail::write_text_file(path, out.str());
}

/// Columns: delta_rad_per_s,signal_nm,idler_nm,intensity
inline void write_spectrum_csv(const std::filesystem::path& path, const SpectralDensity& s) {
    std::ostringstream out;
    out << "delta_rad_per_s,signal_nm,idler_nm,intensity\n";
    for (std::size_t i = 0; i < s.delta.size(); ++i) {
        const auto [sig, idl] = s.wavelengths_nm(s.delta[i]);
        out << detail::fmt_g(s.delta[i]) << ',' << detail::fmt_g(sig) << ',' << detail::fmt_g(idl)
            << ',' << detail::fmt_g(s.intensity[i]) << '\n';
    }
    detail::write_text_file(path, out.str());
}

inline json spectrum_metadata_json(const SpectralDensity& s) {
    return {{"fiber_id", s.fiber_id},
            {"process", to_string(s.process)},
            {"pump_nm", s.pump_nm},
            {"grid", {{"points", s.grid_points}, {"span_rad_per_s", s.grid_span_rad_s}}}};
}

/// Columns: pump_nm,branch,wavelength_nm (rows are the threshold-interval edges)
inline void write_tuning_csv(const std::filesystem::path& path, const TuningCurve& tc) {
    std::ostringstream out;
    out << "pump_nm,branch,wavelength_nm\n";
    for (const auto& slice : tc.slices)
        for (const auto& iv : slice.intervals) {
            out << detail::fmt_g(slice.pump_nm) << ',' << iv.branch << ','
                << detail::fmt_g(iv.lo_nm) << '\n';
            out << detail::fmt_g(slice.pump_nm) << ',' << iv.branch << ','
                << detail::fmt_g(iv.hi_nm) << '\n';
        }
    detail::write_text_file(path, out.str());
}

/// Columns: delay_fs,coincidence,counts,integration_s
inline void write_scan_csv(const std::filesystem::path& path, const DelayScan& scan) {
    std::ostringstream out;
    out << "delay_fs,coincidence,counts,integration_s\n";
    for (std::size_t i = 0; i < scan.delay_fs.size(); ++i) {
        const double counts = scan.counts.empty() ? 0.0 : scan.counts[i];
        out << detail::fmt_g(scan.delay_fs[i]) << ',' << detail::fmt_g(scan.coincidence[i], 15)
            << ',' << detail::fmt_g(counts) << ',' << detail::fmt_g(scan.integration_s) << '\n';
    }
    detail::write_text_file(path, out.str());
}

inline json dip_fit_to_json(const DipFit& fit) {
    return {{"visibility", fit.visibility},
            {"visibility_err", fit.visibility_err},
            {"width_fs", fit.width_fs},
            {"width_err_fs", fit.width_err},
            {"center_fs", fit.center_fs},
            {"center_err_fs", fit.center_err},
            {"plateau", fit.plateau},
            {"model", to_string(fit.model)},
            {"residual_norm", fit.residual_norm},
            {"iterations", fit.iterations},
            {"converged", fit.converged}};
}

// ---------------------------------------------------------------------------
// Tomography artifacts

inline double to_degrees(double rad) { return rad * 180.0 / pi; }

/// Columns: setting_id,qwp_s_deg,hwp_s_deg,pol_s,qwp_i_deg,hwp_i_deg,pol_i,
///          lambda_s_nm,lambda_i_nm,coincidences,accidentals,integration_s
inline void write_counts_csv(const std::filesystem::path& path,
                             const std::vector<MeasurementSetting>& settings,
                             const std::vector<CountRecord>& records) {
    if (settings.size() != records.size())
        throw InputError("write_counts_csv: settings/records size mismatch");
    std::ostringstream out;
    out << "setting_id,qwp_s_deg,hwp_s_deg,pol_s,qwp_i_deg,hwp_i_deg,pol_i,"
           "lambda_s_nm,lambda_i_nm,coincidences,accidentals,integration_s\n";
    for (std::size_t i = 0; i < settings.size(); ++i) {
        const auto& s = settings[i];
        const auto& r = records[i];
        if (s.id != r.setting_id) throw InputError("write_counts_csv: record order mismatch");
        out << s.id << ',' << detail::fmt_g(to_degrees(s.signal.qwp_angle_rad)) << ','
            << detail::fmt_g(to_degrees(s.signal.hwp_angle_rad)) << ','
            << to_string(s.signal.polarizer) << ','
            << detail::fmt_g(to_degrees(s.idler.qwp_angle_rad)) << ','
            << detail::fmt_g(to_degrees(s.idler.hwp_angle_rad)) << ','
            << to_string(s.idler.polarizer) << ',' << detail::fmt_g(s.signal.wavelength_nm) << ','
            << detail::fmt_g(s.idler.wavelength_nm) << ',' << detail::fmt_g(r.coincidences) << ','
            << detail::fmt_g(r.accidentals) << ',' << detail::fmt_g(r.integration_s) << '\n';
    }
    detail::write_text_file(path, out.str());
}

struct CountsFile {
    std::vector<MeasurementSetting> settings;
    std::vector<CountRecord> records;
};

/// Reads a counts CSV written by write_counts_csv (waveplate designs default
/// to 1550 nm zero-order plates).
inline CountsFile read_counts_csv(const std::filesystem::path& path, double design_nm = 1550.0) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open counts file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw InputError("counts file empty: " + path.string());
    CountsFile out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 12)
            throw InputError("counts file " + path.string() + ": line " + std::to_string(lineno) +
                             " has " + std::to_string(cells.size()) + " columns (want 12)");
        auto axis = [&](const std::string& s) {
            if (s == "H") return PolarizationAxis::H;
            if (s == "V") return PolarizationAxis::V;
            throw InputError("counts file: bad polarizer '" + s + "'");
        };
        MeasurementSetting m;
        m.id = cells[0];
        m.signal.qwp_angle_rad = std::stod(cells[1]) * pi / 180.0;
        m.signal.hwp_angle_rad = std::stod(cells[2]) * pi / 180.0;
        m.signal.polarizer = axis(cells[3]);
        m.idler.qwp_angle_rad = std::stod(cells[4]) * pi / 180.0;
        m.idler.hwp_angle_rad = std::stod(cells[5]) * pi / 180.0;
        m.idler.polarizer = axis(cells[6]);
        m.signal.wavelength_nm = std::stod(cells[7]);
        m.idler.wavelength_nm = std::stod(cells[8]);
        m.signal.qwp = {WaveplateSpec::Order::Quarter, design_nm};
        m.signal.hwp = {WaveplateSpec::Order::Half, design_nm};
        m.idler.qwp = {WaveplateSpec::Order::Quarter, design_nm};
        m.idler.hwp = {WaveplateSpec::Order::Half, design_nm};
        out.settings.push_back(m);
        out.records.push_back(
            {cells[0], std::stod(cells[9]), std::stod(cells[10]), std::stod(cells[11])});
    }
    return out;
}

/// FNV-1a digest of the canonical settings description.
inline std::string settings_digest(const std::vector<MeasurementSetting>& settings) {
    std::uint64_t h = 14695981039346656037ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& s : settings) {
        mix(s.id);
        mix(detail::fmt_g(s.signal.qwp_angle_rad, 17));
        mix(detail::fmt_g(s.signal.hwp_angle_rad, 17));
        mix(detail::fmt_g(s.signal.wavelength_nm, 17));
        mix(detail::fmt_g(s.idler.qwp_angle_rad, 17));
        mix(detail::fmt_g(s.idler.hwp_angle_rad, 17));
        mix(detail::fmt_g(s.idler.wavelength_nm, 17));
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline json density_matrix_to_json(const Mat4& rho) {
    json re = json::array(), im = json::array();
    for (int i = 0; i < 4; ++i) {
        json rrow = json::array(), irow = json::array();
        for (int j = 0; j < 4; ++j) {
            rrow.push_back(rho(i, j).real());
            irow.push_back(rho(i, j).imag());
        }
        re.push_back(rrow);
        im.push_back(irow);
    }
    return {{"real", re}, {"imag", im}};
}

inline json tomography_result_to_json(const TomographyResult& res, const McUncertainty* mc,
                                      const std::string& digest) {
    json j{{"rho", density_matrix_to_json(res.rho.rho)},
           {"concurrence", res.concurrence},
           {"fidelity", res.fidelity},
           {"fidelity_psi_plus", res.fidelity_psi_plus},
           {"optimal_phase_rad", res.optimal_phase},
           {"log_likelihood", res.log_likelihood},
           {"optimizer", {{"iterations", res.iterations},
                          {"evaluations", res.evaluations},
                          {"converged", res.converged}}},
           {"settings_digest", digest}};
    if (mc != nullptr) {
        j["concurrence_sigma"] = mc->concurrence_sigma;
        j["fidelity_sigma"] = mc->fidelity_sigma;
        j["fidelity_psi_plus_sigma"] = mc->fidelity_psi_plus_sigma;
        j["mc"] = {{"resamples", mc->resamples}, {"excluded", mc->excluded}};
    }
    return j;
}

}  // namespace ppsf
