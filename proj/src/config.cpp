#include "chi_exit/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace chi_exit {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(parse_u64(key, v));
}

Box parse_box(const std::string& key, const std::string& v) {
    std::vector<double> parts;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(parse_double(key, trim(item)));
    if (parts.size() != 4) throw ConfigError(key + ": expected x1_min, x1_max, x2_min, x2_max");
    return Box{{parts[0], parts[2]}, {parts[1], parts[3]}};
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"experiment", [](auto& c, auto&, auto& v) { c.experiment = v; }},
        {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_u64(k, v); }},
        {"workers", [](auto& c, auto& k, auto& v) { c.workers = parse_size(k, v); }},
        {"output_dir", [](auto& c, auto&, auto& v) { c.output_dir = v; }},
        {"grid.nx", [](auto& c, auto& k, auto& v) { c.grid.nx = parse_size(k, v); }},
        {"grid.ny", [](auto& c, auto& k, auto& v) { c.grid.ny = parse_size(k, v); }},
        {"grid.kbt", [](auto& c, auto& k, auto& v) { c.grid.kbt = parse_double(k, v); }},
        {"grid.potential", [](auto& c, auto&, auto& v) { c.grid.potential = v; }},
        {"sde.sigma", [](auto& c, auto& k, auto& v) { c.sde.sigma = parse_double(k, v); }},
        {"sde.dt", [](auto& c, auto& k, auto& v) { c.sde.dt = parse_double(k, v); }},
        {"sde.boundary", [](auto& c, auto&, auto& v) { c.sde.boundary = v; }},
        {"membership.kind", [](auto& c, auto&, auto& v) { c.membership.kind = v; }},
        {"membership.pcca_optimize",
         [](auto& c, auto& k, auto& v) { c.membership.pcca_optimize = parse_bool(k, v); }},
        {"membership.eigen_index", [](auto& c, auto& k, auto& v) { c.membership.eigen_index = parse_size(k, v); }},
        {"membership.n_clusters", [](auto& c, auto& k, auto& v) { c.membership.n_clusters = parse_size(k, v); }},
        {"membership.target_weight",
         [](auto& c, auto& k, auto& v) { c.membership.target_weight = parse_double(k, v); }},
        {"membership.core_weight_threshold",
         [](auto& c, auto& k, auto& v) { c.membership.core_weight_threshold = parse_double(k, v); }},
        {"membership.core_box", [](auto& c, auto& k, auto& v) { c.membership.core_box = parse_box(k, v); }},
        {"membership.n_traj", [](auto& c, auto& k, auto& v) { c.membership.n_traj = parse_size(k, v); }},
        {"membership.max_steps", [](auto& c, auto& k, auto& v) { c.membership.max_steps = parse_size(k, v); }},
        {"rates.tau_grid", [](auto& c, auto& k, auto& v) { c.rates.tau_grid = parse_double(k, v); }},
        {"rates.tau_mc", [](auto& c, auto& k, auto& v) { c.rates.tau_mc = parse_double(k, v); }},
        {"rates.n_points", [](auto& c, auto& k, auto& v) { c.rates.n_points = parse_size(k, v); }},
        {"rates.ptau_n_traj", [](auto& c, auto& k, auto& v) { c.rates.ptau_n_traj = parse_size(k, v); }},
        {"rates.norm", [](auto& c, auto&, auto& v) { c.rates.norm = norm_from_string(v); }},
        {"compare.threshold", [](auto& c, auto& k, auto& v) { c.compare.threshold = parse_double(k, v); }},
        {"validate.threshold", [](auto& c, auto& k, auto& v) { c.validate.threshold = parse_double(k, v); }},
        {"validate.n_starts", [](auto& c, auto& k, auto& v) { c.validate.n_starts = parse_size(k, v); }},
        {"validate.n_traj", [](auto& c, auto& k, auto& v) { c.validate.n_traj = parse_size(k, v); }},
        {"validate.horizon_steps",
         [](auto& c, auto& k, auto& v) { c.validate.horizon_steps = parse_size(k, v); }},
    };
    return table;
}

}  // namespace

void ExperimentConfig::check() const {
    static const char* experiments[] = {"",         "idea1",          "idea2",      "idea3",   "idea4",
                                        "compare-mht", "validate", "dump-generator", "dump-eigen", "dump-chi"};
    if (std::find(std::begin(experiments), std::end(experiments), experiment) == std::end(experiments))
        throw ConfigError("unknown experiment '" + experiment + "'");
    if (grid.nx * grid.ny < 2) throw ConfigError("grid needs at least two cells");
    if (!(grid.kbt > 0.0)) throw ConfigError("grid.kbt must be positive");
    if (grid.potential != "paper2d" && grid.potential != "flat")
        throw ConfigError("unknown potential '" + grid.potential + "'");
    if (!(sde.sigma >= 0.0)) throw ConfigError("sde.sigma must be non-negative");
    if (!(sde.dt > 0.0)) throw ConfigError("sde.dt must be positive");
    if (sde.boundary != "clamp") throw ConfigError("sde.boundary: only 'clamp' is supported");
    if (membership.kind != "pcca_single" && membership.kind != "pcca_multi" && membership.kind != "committor" &&
        membership.kind != "mc")
        throw ConfigError("membership.kind must be pcca_single, pcca_multi, committor or mc");
    if (membership.eigen_index < 2) throw ConfigError("membership.eigen_index must be at least 2");
    if (membership.n_clusters < 1) throw ConfigError("membership.n_clusters must be positive");
    if (!membership.core_box.inside(unit_box()) || (membership.core_box.upper - membership.core_box.lower).minCoeff() < 0.0)
        throw ConfigError("membership.core_box must be a non-empty box inside the unit square");
    if (membership.n_traj == 0) throw ConfigError("membership.n_traj must be positive");
    if (rates.n_points < 2) throw ConfigError("rates.n_points must be at least 2");
    if (rates.ptau_n_traj == 0) throw ConfigError("rates.ptau_n_traj must be positive");
    if (validate.n_starts == 0 || validate.n_traj == 0) throw ConfigError("validate sample counts must be positive");
    if (workers == 0) throw ConfigError("workers must be positive");
}

std::string ExperimentConfig::canonical() const {
    std::ostringstream os;
    const Box& b = membership.core_box;
    os << "experiment=" << experiment << '\n'
       << "seed=" << (seed ? std::to_string(*seed) : "none") << '\n'
       << "grid.nx=" << grid.nx << "\ngrid.ny=" << grid.ny << "\ngrid.kbt=" << num(grid.kbt)
       << "\ngrid.potential=" << grid.potential << '\n'
       << "sde.sigma=" << num(sde.sigma) << "\nsde.dt=" << num(sde.dt) << "\nsde.boundary=" << sde.boundary << '\n'
       << "membership.kind=" << membership.kind << "\nmembership.pcca_optimize=" << membership.pcca_optimize
       << "\nmembership.eigen_index=" << membership.eigen_index << "\nmembership.n_clusters=" << membership.n_clusters
       << "\nmembership.target_weight=" << num(membership.target_weight)
       << "\nmembership.core_weight_threshold=" << num(membership.core_weight_threshold)
       << "\nmembership.core_box=" << num(b.lower[0]) << ',' << num(b.upper[0]) << ',' << num(b.lower[1]) << ','
       << num(b.upper[1]) << "\nmembership.n_traj=" << membership.n_traj
       << "\nmembership.max_steps=" << membership.max_steps << '\n'
       << "rates.tau_grid=" << num(rates.tau_grid) << "\nrates.tau_mc=" << num(rates.tau_mc)
       << "\nrates.n_points=" << rates.n_points << "\nrates.ptau_n_traj=" << rates.ptau_n_traj
       << "\nrates.norm=" << to_string(rates.norm) << '\n'
       << "compare.threshold=" << num(compare.threshold) << '\n'
       << "validate.threshold=" << num(validate.threshold) << "\nvalidate.n_starts=" << validate.n_starts
       << "\nvalidate.n_traj=" << validate.n_traj << "\nvalidate.horizon_steps=" << validate.horizon_steps << '\n';
    return os.str();
}

std::string ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t ExperimentConfig::require_seed() const {
    if (!seed) throw ConfigError("this experiment runs Monte Carlo stages and needs a seed (config key 'seed' or --seed)");
    return *seed;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + key + "'");
        if (value.empty()) throw ConfigError("line " + std::to_string(number) + ": empty value for '" + key + "'");
        it->second(config, key, value);
    }
    config.check();
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

}  // namespace chi_exit
