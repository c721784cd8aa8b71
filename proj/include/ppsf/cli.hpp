#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "ppsf/io.hpp"

namespace ppsf {

/// One config drives every subcommand; unused sections are simply ignored.
struct ExperimentConfig {
    StepIndexFiber fiber;
    bool calibrate = true;  // solve dn before any spectral computation
    double calibrate_target_nm = 653.3;
    ProcessType process = ProcessType::TypeII;
    double pump_nm = 653.3;
    GridSpec grid;
    double pump_linewidth_ghz = 0.0;  // reserved, not used by the cw model

    struct HomSpec {
        double delay_span_fs = 80.0;
        int delay_points = 801;
        double visibility = 0.832;
        double plateau_counts = 0.0;  // 0 => noiseless scan
        DipModel model = DipModel::FourierOfDensity;
    } hom;

    struct ShgSpec {
        double fundamental_lo_nm = 1306.0;
        double fundamental_hi_nm = 1307.2;
        int points = 601;
    } shg;

    struct TuningSpec {
        double pump_lo_nm = 651.4;
        double pump_hi_nm = 653.5;
        int pump_points = 43;
        double threshold = 0.5;
    } tuning;

    struct TomoSpec {
        std::string settings = "mub36";  // or "minimal16"
        double lambda_s_nm = 1330.0;
        double lambda_i_nm = 1290.0;
        double waveplate_design_nm = 1550.0;
        std::string state = "werner";  // werner | pure_phase | product_hv
        double werner_p = 0.95;
        double phase_rad = 0.0;
        double pairs_per_setting = 1e4;
        double accidental_rate_hz = 0.0;
        double efficiency = 1.0;
        double integration_s = 1.0;
        int mc_resamples = 200;
        bool subtract_accidentals = false;
    } tomo;

    std::uint64_t seed = 0;
    int threads = 1;
    std::filesystem::path out_dir = "out";

    DensityMatrix true_state() const {
        if (tomo.state == "werner") return DensityMatrix::werner(tomo.werner_p, tomo.phase_rad);
        if (tomo.state == "pure_phase") {
            Vec4 psi;
            psi << 0.0, 1.0 / std::sqrt(2.0), std::exp(cplx(0.0, tomo.phase_rad)) / std::sqrt(2.0),
                0.0;
            return DensityMatrix::pure(psi);
        }
        if (tomo.state == "product_hv") {
            Vec4 psi;
            psi << 0.0, 1.0, 0.0, 0.0;
            return DensityMatrix::pure(psi);
        }
        throw InputError("unknown tomo state '" + tomo.state + "'");
    }

    std::vector<MeasurementSetting> tomo_settings() const {
        if (tomo.settings == "mub36")
            return mub36_settings(tomo.lambda_s_nm, tomo.lambda_i_nm, tomo.waveplate_design_nm);
        if (tomo.settings == "minimal16")
            return minimal16_settings(tomo.lambda_s_nm, tomo.lambda_i_nm, tomo.waveplate_design_nm);
        throw InputError("unknown settings set '" + tomo.settings + "'");
    }

    void validate() const {
        fiber.validate();
        if (pump_nm <= 0.0) throw InputError("config: pump_nm must be > 0");
        if (grid.points < 8 || grid.span_rad_s <= 0.0) throw InputError("config: bad grid");
        if (hom.delay_points < 10) throw InputError("config: hom needs >= 10 delay points");
        if (!(hom.visibility >= 0.0 && hom.visibility <= 1.0))
            throw InputError("config: hom visibility must be in [0, 1]");
        if (shg.points < 2 || shg.fundamental_hi_nm <= shg.fundamental_lo_nm)
            throw InputError("config: bad shg grid");
        if (tuning.pump_points < 1 || tuning.pump_hi_nm <= tuning.pump_lo_nm)
            throw InputError("config: bad tuning pump range");
        if (!(tuning.threshold > 0.0 && tuning.threshold < 1.0))
            throw InputError("config: tuning threshold must be in (0, 1)");
        if (tomo.pairs_per_setting <= 0.0) throw InputError("config: tomo pairs must be > 0");
        if (!(tomo.efficiency > 0.0 && tomo.efficiency <= 1.0))
            throw InputError("config: tomo efficiency must be in (0, 1]");
        if (tomo.mc_resamples < 0) throw InputError("config: negative mc_resamples");
        if (threads < 1) throw InputError("config: threads must be >= 1");
        true_state();   // validates the state spec
        tomo_settings();  // validates the settings choice
    }
};

inline ExperimentConfig experiment_config_from_json(const json& j,
                                                    const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    const auto& jf = j.at("fiber");
    if (jf.is_string()) {
        std::filesystem::path p = jf.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        cfg.fiber = load_fiber(p);
    } else {
        cfg.fiber = fiber_from_json(jf);
    }
    cfg.calibrate = j.value("calibrate", true);
    cfg.calibrate_target_nm = j.value("calibrate_target_nm", 653.3);
    const std::string proc = j.value("process", "type2");
    if (proc == "type0")
        cfg.process = ProcessType::Type0;
    else if (proc == "type1")
        cfg.process = ProcessType::TypeI;
    else if (proc == "type2")
        cfg.process = ProcessType::TypeII;
    else
        throw InputError("config: unknown process '" + proc + "'");
    cfg.pump_nm = j.value("pump_nm", 653.3);
    if (j.contains("grid")) {
        cfg.grid.points = j["grid"].value("points", 4096);
        cfg.grid.span_rad_s = 2.0 * pi * 1e12 * j["grid"].value("span_thz", 60.0);
    }
    cfg.pump_linewidth_ghz = j.value("pump_linewidth_ghz", 0.0);
    if (j.contains("hom")) {
        const auto& jh = j["hom"];
        cfg.hom.delay_span_fs = jh.value("delay_span_fs", cfg.hom.delay_span_fs);
        cfg.hom.delay_points = jh.value("delay_points", cfg.hom.delay_points);
        cfg.hom.visibility = jh.value("visibility", cfg.hom.visibility);
        cfg.hom.plateau_counts = jh.value("plateau_counts", cfg.hom.plateau_counts);
        const std::string m = jh.value("model", "fourier_of_density");
        if (m == "fourier_of_density")
            cfg.hom.model = DipModel::FourierOfDensity;
        else if (m == "gaussian")
            cfg.hom.model = DipModel::Gaussian;
        else if (m == "sinc2")
            cfg.hom.model = DipModel::Sinc2;
        else
            throw InputError("config: unknown hom model '" + m + "'");
    }
    if (j.contains("shg")) {
        const auto& js = j["shg"];
        cfg.shg.fundamental_lo_nm = js.value("fundamental_lo_nm", cfg.shg.fundamental_lo_nm);
        cfg.shg.fundamental_hi_nm = js.value("fundamental_hi_nm", cfg.shg.fundamental_hi_nm);
        cfg.shg.points = js.value("points", cfg.shg.points);
    }
    if (j.contains("tuning")) {
        const auto& jt = j["tuning"];
        cfg.tuning.pump_lo_nm = jt.value("pump_lo_nm", cfg.tuning.pump_lo_nm);
        cfg.tuning.pump_hi_nm = jt.value("pump_hi_nm", cfg.tuning.pump_hi_nm);
        cfg.tuning.pump_points = jt.value("pump_points", cfg.tuning.pump_points);
        cfg.tuning.threshold = jt.value("threshold", cfg.tuning.threshold);
    }
    if (j.contains("tomo")) {
        const auto& jt = j["tomo"];
        cfg.tomo.settings = jt.value("settings", cfg.tomo.settings);
        cfg.tomo.lambda_s_nm = jt.value("lambda_s_nm", cfg.tomo.lambda_s_nm);
        cfg.tomo.lambda_i_nm = jt.value("lambda_i_nm", cfg.tomo.lambda_i_nm);
        cfg.tomo.waveplate_design_nm = jt.value("waveplate_design_nm", cfg.tomo.waveplate_design_nm);
        cfg.tomo.state = jt.value("state", cfg.tomo.state);
        cfg.tomo.werner_p = jt.value("werner_p", cfg.tomo.werner_p);
        cfg.tomo.phase_rad = jt.value("phase_rad", cfg.tomo.phase_rad);
        cfg.tomo.pairs_per_setting = jt.value("pairs_per_setting", cfg.tomo.pairs_per_setting);
        cfg.tomo.accidental_rate_hz = jt.value("accidental_rate_hz", cfg.tomo.accidental_rate_hz);
        cfg.tomo.efficiency = jt.value("efficiency", cfg.tomo.efficiency);
        cfg.tomo.integration_s = jt.value("integration_s", cfg.tomo.integration_s);
        cfg.tomo.mc_resamples = jt.value("mc_resamples", cfg.tomo.mc_resamples);
        cfg.tomo.subtract_accidentals = jt.value("subtract_accidentals", cfg.tomo.subtract_accidentals);
    }
    cfg.seed = j.value("seed", 0);
    cfg.threads = j.value("threads", 1);
    cfg.out_dir = j.value("out_dir", std::string("out"));
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError("config " + path.string() + ": " + e.what());
    }
    return experiment_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Subcommands. Each validates up front, computes, then writes artifacts.
// Wall-clock timestamps go only to the sidecar run.log.

namespace detail {

inline void write_run_log(const std::filesystem::path& out_dir, const std::string& command) {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[64];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    std::ofstream log(out_dir / "run.log", std::ios::app);
    log << stamp << ' ' << command << '\n';
}

inline StepIndexFiber working_fiber(const ExperimentConfig& cfg) {
    if (!cfg.calibrate) return cfg.fiber;
    return calibrated_fiber(cfg.fiber, cfg.calibrate_target_nm);
}

}  // namespace detail

/// calibrate: writes fiber_calibrated.json + dispersion.csv, prints dn, the
/// residual mismatch and the dispersion anchors at the degenerate wavelength.
inline int cmd_calibrate(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
    std::filesystem::create_directories(cfg.out_dir);
    const double dn = calibrate_birefringence(cfg.fiber, cfg.calibrate_target_nm);
    StepIndexFiber cal = cfg.fiber;
    cal.birefringence_dn = dn;

    const double deg_nm = 2.0 * cfg.calibrate_target_nm;
    const double residual = detail::degenerate_typeII_mismatch(cal, cfg.calibrate_target_nm * 1e-9);
    const auto dh = dispersion_derivatives(cal, deg_nm * 1e-9, PolarizationAxis::H);
    const auto dv = dispersion_derivatives(cal, deg_nm * 1e-9, PolarizationAxis::V);
    const double k2 = 0.5 * (dh.k2 + dv.k2);
    const double gvm = dh.beta1 - dv.beta1;

    save_fiber(cfg.out_dir / "fiber_calibrated.json", cal);
    const auto grid_nm = linspace(1240.0, 1380.0, 36);
    write_dispersion_csv(cfg.out_dir / "dispersion.csv",
                         {sample_modal_dispersion(cal, grid_nm, PolarizationAxis::H),
                          sample_modal_dispersion(cal, grid_nm, PolarizationAxis::V)});

    out << "birefringence_dn = " << io_fmt(dn) << "\n"
        << "residual_mismatch_rad_per_m = " << io_fmt(residual) << "\n"
        << "k2_s2_per_m(" << deg_nm << " nm) = " << io_fmt(k2) << "  (|k2| = " << io_fmt(std::abs(k2) * 1e27)
        << " ps^2/km)\n"
        << "M_s_per_m(" << deg_nm << " nm) = " << io_fmt(gvm) << "\n";
    detail::write_run_log(cfg.out_dir, "calibrate");
    return 0;
}

/// spectrum: Fig-1(c)-style biphoton spectrum artifact (CSV + JSON metadata).
inline int cmd_spectrum(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto fiber = detail::working_fiber(cfg);
    const auto density = spdc_spectral_density({fiber, cfg.process, cfg.pump_nm, cfg.grid});
    const auto bw = fwhm_bandwidth(density);
    write_spectrum_csv(cfg.out_dir / "spectrum.csv", density);
    json meta = spectrum_metadata_json(density);
    meta["fwhm_thz"] = bw.fwhm_thz;
    meta["fwhm_nm"] = bw.fwhm_nm;
    meta["birefringence_dn"] = fiber.birefringence_dn;
    detail::write_text_file(cfg.out_dir / "spectrum.json", meta.dump(2) + "\n");
    out << "fwhm_thz = " << io_fmt(bw.fwhm_thz) << "\nfwhm_nm = " << io_fmt(bw.fwhm_nm) << "\n";
    detail::write_run_log(cfg.out_dir, "spectrum");
    return 0;
}

/// shg: Fig-1(a)-style three-peak SHG artifact.
inline int cmd_shg(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto fiber = detail::working_fiber(cfg);
    const auto grid = linspace(cfg.shg.fundamental_lo_nm, cfg.shg.fundamental_hi_nm,
                               static_cast<std::size_t>(cfg.shg.points));
    const auto shg = shg_spectrum(fiber, grid);
    std::ostringstream csv;
    csv << "fundamental_nm,type0,type1,type2\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
        csv << io_fmt(grid[i]) << ',' << io_fmt(shg.type0[i]) << ',' << io_fmt(shg.type1[i]) << ','
            << io_fmt(shg.type2[i]) << '\n';
    detail::write_text_file(cfg.out_dir / "shg.csv", csv.str());
    const json meta = {{"peaks_sh_nm", {shg.peak0_sh_nm, shg.peak1_sh_nm, shg.peak2_sh_nm}},
                       {"peaks_fundamental_nm",
                        {shg.peak0_fundamental_nm, shg.peak1_fundamental_nm, shg.peak2_fundamental_nm}},
                       {"weights", {shg.weight0, shg.weight1, shg.weight2}},
                       {"birefringence_dn", fiber.birefringence_dn}};
    detail::write_text_file(cfg.out_dir / "shg.json", meta.dump(2) + "\n");
    out << "type2_peak_sh_nm = " << io_fmt(shg.peak2_sh_nm) << "\n";
    detail::write_run_log(cfg.out_dir, "shg");
    return 0;
}

/// tuning: Fig-1(b)-style tuning curve artifact.
inline int cmd_tuning(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto fiber = detail::working_fiber(cfg);
    const auto pumps = linspace(cfg.tuning.pump_lo_nm, cfg.tuning.pump_hi_nm,
                                static_cast<std::size_t>(cfg.tuning.pump_points));
    const auto tc = tuning_curve(fiber, pumps, cfg.tuning.threshold, cfg.process, cfg.grid);
    write_tuning_csv(cfg.out_dir / "tuning.csv", tc);
    int nonempty = 0;
    for (const auto& s : tc.slices)
        if (!s.intervals.empty()) ++nonempty;
    const json meta = {{"threshold", tc.threshold},
                       {"pump_points", cfg.tuning.pump_points},
                       {"nonempty_slices", nonempty}};
    detail::write_text_file(cfg.out_dir / "tuning.json", meta.dump(2) + "\n");
    out << "nonempty_slices = " << nonempty << "\n";
    detail::write_run_log(cfg.out_dir, "tuning");
    return 0;
}

/// hom: Fig-2(b)-style scan + fit artifact.
inline int cmd_hom(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto fiber = detail::working_fiber(cfg);
    const auto density = spdc_spectral_density({fiber, cfg.process, cfg.pump_nm, cfg.grid});
    const auto delays = linspace(-cfg.hom.delay_span_fs, cfg.hom.delay_span_fs,
                                 static_cast<std::size_t>(cfg.hom.delay_points));
    DelayScan scan = hom_scan(density, delays, cfg.hom.visibility);
    if (cfg.hom.plateau_counts > 0.0)
        scan = add_poisson_noise(scan, cfg.hom.plateau_counts, cfg.seed);
    const auto fit = fit_dip(scan, cfg.hom.model, &density);
    write_scan_csv(cfg.out_dir / "hom_scan.csv", scan);
    detail::write_text_file(cfg.out_dir / "hom_fit.json", dip_fit_to_json(fit).dump(2) + "\n");
    out << "visibility = " << io_fmt(fit.visibility) << " +- " << io_fmt(fit.visibility_err)
        << "\nwidth_fs = " << io_fmt(fit.width_fs) << " +- " << io_fmt(fit.width_err) << "\n";
    detail::write_run_log(cfg.out_dir, "hom");
    return 0;
}

/// tomo: Table-1-style counts + reconstruction artifact.
inline int cmd_tomo(const ExperimentConfig& cfg, std::ostream& out = std::cout) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto settings = cfg.tomo_settings();
    const auto truth = cfg.true_state();
    const auto records =
        simulate_counts(truth, settings, cfg.tomo.pairs_per_setting, cfg.tomo.accidental_rate_hz,
                        cfg.tomo.efficiency, cfg.seed, cfg.tomo.integration_s);
    MleOptions options;
    options.subtract_accidentals = cfg.tomo.subtract_accidentals;
    const auto result = mle_reconstruct(records, settings, options);
    std::optional<McUncertainty> mc;
    if (cfg.tomo.mc_resamples >= 100)
        mc = uncertainty_mc(records, settings, cfg.tomo.mc_resamples, cfg.seed + 1, options,
                            cfg.threads);
    write_counts_csv(cfg.out_dir / "tomo_counts.csv", settings, records);
    const json jr = tomography_result_to_json(result, mc ? &*mc : nullptr, settings_digest(settings));
    detail::write_text_file(cfg.out_dir / "tomo_result.json", jr.dump(2) + "\n");
    out << "concurrence = " << io_fmt(result.concurrence);
    if (mc) out << " +- " << io_fmt(mc->concurrence_sigma);
    out << "\nfidelity = " << io_fmt(result.fidelity);
    if (mc) out << " +- " << io_fmt(mc->fidelity_sigma);
    out << "\n";
    detail::write_run_log(cfg.out_dir, "tomo");
    return 0;
}

}  // namespace ppsf
