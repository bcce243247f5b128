// chi-exit: command-line runner for the exit-rate experiments.

#include "chi_exit/config.hpp"
#include "chi_exit/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

namespace {

using namespace chi_exit;

void print_report(const ExitRateReport& r) {
    std::cout << report_csv_header() << '\n' << report_csv_row(r) << '\n';
    if (!r.has_rate()) std::cerr << "warning: " << r.diagnostic << '\n';
}

int run(const std::string& command, ExperimentConfig config) {
    const OutputDir out = std::filesystem::path(config.output_dir);
    if (command == "idea1") {
        print_report(run_idea1(config, out).report);
    } else if (command == "idea2") {
        const auto r = run_idea2(config, out);
        for (const auto& w : r.pcca.warnings) std::cerr << "warning: " << w << '\n';
        print_report(r.report);
    } else if (command == "idea3") {
        print_report(run_idea3(config, out).report);
    } else if (command == "idea4") {
        print_report(run_idea4(config, out).report);
    } else if (command == "compare-mht") {
        const auto r = run_compare_mht(config, out);
        std::printf("set_cells=%zu max_t_chi_where_t_set_zero=%.6g pearson_chi_above_0.4=%.6g median_t_set_minus_t_chi=%.6g\n",
                    r.region_size, r.boundary_fuzzy_time, r.correlation_core, r.median_difference);
    } else if (command == "validate") {
        const auto r = run_validate(config, out);
        if (r.fully_censored) std::cerr << "warning: every exit time is censored; no rate fitted\n";
        std::printf("start_points=%zu pearson_chi_exit_time=%.6g set_rate=%.6g eps1_reference=%.6g ratio=%.6g\n",
                    r.start_cells.size(), r.correlation, r.fit.fitted ? r.fit.rate : std::nan(""),
                    r.reference.eps1, r.ratio);
    } else if (command == "dump-generator") {
        dump_generator(config, out);
    } else if (command == "dump-eigen") {
        dump_eigen(config, out);
    } else if (command == "dump-chi") {
        dump_chi(config, out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exit rates of fuzzy metastable sets for diffusion in a 2D potential"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    std::size_t workers = 0;
    std::string norm;

    const char* commands[] = {"idea1",    "idea2",          "idea3",      "idea4",   "compare-mht",
                              "validate", "dump-generator", "dump-eigen", "dump-chi"};
    for (const char* name : commands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "config file (section.key = value lines)")->required();
        sub->add_option("--seed", seed, "master seed; overrides the config");
        sub->add_option("--out", out_dir, "output directory; overrides the config");
        sub->add_option("--workers", workers, "worker threads; never changes results")->check(CLI::PositiveNumber);
        sub->add_option("--norm", norm, "regression norm")->check(CLI::IsMember({"ls", "lad"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    const auto* sub = app.get_subcommands().front();
    try {
        ExperimentConfig config = load_config(config_path);
        config.experiment = command;
        if (sub->count("--seed")) config.seed = seed;
        if (sub->count("--out")) config.output_dir = out_dir;
        if (sub->count("--workers")) config.workers = workers;
        if (sub->count("--norm")) config.rates.norm = norm_from_string(norm);
        config.check();
        return run(command, std::move(config));
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure in stage '" << (e.stage().empty() ? "unknown" : e.stage()) << "': " << e.what()
                  << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure in stage 'unknown': " << e.what() << '\n';
        return 3;
    }
}
