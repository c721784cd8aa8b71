// Command-line front end: wires the dispersion/QPM/HOM/tomography modules
// into reproducible figure- and table-style pipelines.
//
// Exit codes: 0 ok, 1 computation failure, 2 input error.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "ppsf/cli.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;  // -1: keep the config's seed
    int threads = 0;         // 0: keep the config's thread count
};

void add_common(CLI::App* sub, CommonOpts& opts) {
    sub->add_option("--config", opts.config_path, "experiment config file (JSON)")->required();
    sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", opts.seed, "RNG seed (overrides config)");
    sub->add_option("--threads", opts.threads, "worker threads (overrides config)");
}

ppsf::ExperimentConfig resolve(const CommonOpts& opts) {
    auto cfg = ppsf::load_experiment_config(opts.config_path);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
    if (opts.threads > 0) cfg.threads = opts.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PPSF entangled photon-pair source simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    int (*run)(const ppsf::ExperimentConfig&, std::ostream&) = nullptr;

    for (const auto& [name, desc, fn] :
         {std::tuple{"calibrate", "solve the slow-axis index offset from the type-II QPM target",
                     &ppsf::cmd_calibrate},
          std::tuple{"spectrum", "biphoton spectral density and bandwidth", &ppsf::cmd_spectrum},
          std::tuple{"shg", "three-peak SHG spectrum", &ppsf::cmd_shg},
          std::tuple{"tuning", "emission loci versus pump wavelength", &ppsf::cmd_tuning},
          std::tuple{"hom", "Hong-Ou-Mandel scan and dip fit", &ppsf::cmd_hom},
          std::tuple{"tomo", "simulated tomography and reconstruction", &ppsf::cmd_tomo}}) {
        auto* sub = app.add_subcommand(name, desc);
        add_common(sub, opts);
        sub->callback([&run, fn] { run = fn; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // usage problems are input errors; --help is not
    }

    try {
        const auto cfg = resolve(opts);
        return run(cfg, std::cout);
    } catch (const ppsf::InputError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return 2;
    } catch (const ppsf::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
