#include "chi_exit/config.hpp"
#include "chi_exit/experiments.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace chi_exit;
namespace fs = std::filesystem;

namespace {

const char* const kSmall = R"(
grid.nx = 10
grid.ny = 10
membership.core_weight_threshold = 0.03
membership.n_traj = 10
membership.max_steps = 50
rates.n_points = 12
rates.ptau_n_traj = 10
validate.n_starts = 4
validate.n_traj = 5
validate.horizon_steps = 500
seed = 17
)";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("chi_exit_test_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_binary(const std::string& args, const fs::path& stdout_file) {
    const std::string cmd = std::string(CHI_EXIT_BINARY) + " " + args + " > " + stdout_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "run.cfg";
    std::ofstream(p) << text;
    return p;
}

}  // namespace

TEST_CASE("config defaults and parsing") {
    const ExperimentConfig d = parse_config("");
    CHECK(d.grid.nx == 50);
    CHECK(d.sde.sigma == 0.8);
    CHECK(d.rates.tau_grid == 100.0);
    CHECK(d.rates.norm == NormKind::least_squares);
    CHECK_FALSE(d.seed.has_value());
    CHECK_THROWS_AS(d.require_seed(), ConfigError);

    const auto c = parse_config("# comment\ngrid.nx = 12   # trailing\nrates.norm = lad\nmembership.core_box = 0.1, 0.3, 0.2, 0.6\n"
                                "membership.pcca_optimize = false\nseed = 99\n");
    CHECK(c.grid.nx == 12);
    CHECK(c.rates.norm == NormKind::least_absolute);
    CHECK(c.membership.core_box.lower == Vec2(0.1, 0.2));
    CHECK(c.membership.core_box.upper == Vec2(0.3, 0.6));
    CHECK_FALSE(c.membership.pcca_optimize);
    CHECK(c.require_seed() == 99);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("grid.nz = 3"), ConfigError);
    CHECK_THROWS_AS(parse_config("grid.nx = ten"), ConfigError);
    CHECK_THROWS_AS(parse_config("grid.nx"), ConfigError);
    CHECK_THROWS_AS(parse_config("grid.kbt = -1"), ConfigError);
    CHECK_THROWS_AS(parse_config("rates.norm = l2"), ConfigError);
    CHECK_THROWS_AS(parse_config("sde.boundary = reflect"), ConfigError);
    CHECK_THROWS_AS(parse_config("membership.kind = voronoi"), ConfigError);
    CHECK_THROWS_AS(parse_config("membership.core_box = 0.5, 0.2, 0.1, 0.3"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("config hash tracks result-relevant settings only") {
    const auto a = parse_config("seed = 1");
    auto b = a;
    b.workers = 8;
    b.output_dir = "elsewhere";
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    auto c = a;
    c.seed = 2;
    CHECK(a.hash() != c.hash());
    auto d = a;
    d.sde.sigma = 0.81;
    CHECK(a.hash() != d.hash());
}

TEST_CASE("runners on a small grid") {
    const auto cfg = parse_config(kSmall);
    const auto one = run_idea1(cfg);
    CHECK(one.report.eps1 > 0.0);
    CHECK(one.chi.values().minCoeff() == doctest::Approx(0.0).scale(1.0));
    CHECK(one.chi.values().maxCoeff() == doctest::Approx(1.0));
    const auto two = run_idea2(cfg);
    CHECK(two.pcca.memberships.size() == 3);
    const auto three = run_idea3(cfg);
    CHECK(three.report.tau == 100.0);
    const fs::path dir = scratch("runners");
    run_idea1(cfg, dir);
    for (const char* f : {"chi.csv", "eigen.csv", "report.csv"}) CHECK(fs::exists(dir / f));
}

TEST_CASE("runner failures") {
    auto flat = parse_config("grid.nx = 6\ngrid.ny = 6\ngrid.potential = flat");
    try {
        run_idea1(flat);
        FAIL("expected a NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.stage() == "pcca");
    }
    auto zero_tau = parse_config(std::string(kSmall) + "rates.tau_grid = 0\n");
    CHECK_THROWS_AS(run_idea3(zero_tau), ConfigError);
    CHECK_THROWS_AS(run_idea4(parse_config("grid.nx = 10\ngrid.ny = 10")), ConfigError);
}

TEST_CASE("short-trajectory route is reproducible") {
    auto cfg = parse_config(kSmall);
    const auto a = run_idea4(cfg);
    cfg.workers = 3;
    const auto b = run_idea4(cfg);
    CHECK(a.points == b.points);
    CHECK(a.chi == b.chi);
    CHECK(a.ptau_chi == b.ptau_chi);
    CHECK(report_csv_row(a.report) == report_csv_row(b.report));
    cfg.seed = 18;
    CHECK(run_idea4(cfg).ptau_chi != a.ptau_chi);

    cfg.membership.n_traj = 1;
    cfg.rates.ptau_n_traj = 1;
    const auto single = run_idea4(cfg);
    for (double v : single.chi) CHECK((v == 0.0 || v == 1.0));
    CHECK(single.regression.n_points == 12);
}

TEST_CASE("mean holding time comparison depends on the threshold") {
    auto cfg = parse_config("");
    const GeneratorMatrix gen = make_generator(cfg);
    const auto idea1 = run_idea1(cfg, gen, std::nullopt);
    cfg.compare.threshold = 0.5;
    CHECK(run_compare_mht(cfg, idea1, gen, std::nullopt).median_difference < 0.0);
    cfg.compare.threshold = 0.1;
    CHECK(run_compare_mht(cfg, idea1, gen, std::nullopt).median_difference > 0.0);
    cfg.compare.threshold = 1.1;
    CHECK_THROWS_AS(run_compare_mht(cfg, idea1, gen, std::nullopt), ConfigError);
}

TEST_CASE("validation run") {
    auto cfg = parse_config(kSmall);
    cfg.validate.horizon_steps = 0;
    const auto censored = run_validate(cfg);
    CHECK(censored.fully_censored);
    CHECK_FALSE(censored.fit.fitted);
    CHECK(std::isnan(censored.ratio));

    auto full = parse_config("seed = 2024");
    const auto r = run_validate(full);
    CHECK(r.start_cells.size() == 40);
    CHECK(r.correlation > 0.8);
}

TEST_CASE("command line exit codes and CSV layout") {
    const fs::path dir = scratch("binary");
    const fs::path log = dir / "stdout.txt";
    const fs::path cfg = write_config(dir, kSmall);
    const std::string base = " --config " + cfg.string() + " --out " + (dir / "out").string();

    CHECK(run_binary("idea1" + base, log) == 0);
    const std::string stdout_text = read_file(log);
    CHECK(stdout_text.rfind(report_csv_header(), 0) == 0);

    const std::string chi = read_file(dir / "out" / "chi.csv");
    const auto hash = parse_config(std::string(kSmall) + "experiment = idea1\n").hash();
    CHECK(chi.rfind("# config_hash=" + hash + " seed=17\n", 0) == 0);
    const std::string second_line = chi.substr(chi.find('\n') + 1, chi.find('\n', chi.find('\n') + 1) - chi.find('\n') - 1);
    CHECK(second_line.find(',') != std::string::npos);
    CHECK(second_line.find('#') == std::string::npos);

    CHECK(run_binary("idea1 --config /nonexistent.cfg", log) == 2);
    CHECK(run_binary("no-such-command" + base, log) == 2);
    CHECK(run_binary("idea1" + base + " --norm l7", log) == 2);
    CHECK(run_binary("idea1" + base + " --workers 0", log) == 2);

    const fs::path flat = write_config(dir, "grid.nx = 6\ngrid.ny = 6\ngrid.potential = flat\n");
    CHECK(run_binary("idea1 --config " + flat.string() + " --out " + (dir / "flat").string(), log) == 3);
    CHECK(read_file(log).find("numerical failure in stage 'pcca'") != std::string::npos);
}
