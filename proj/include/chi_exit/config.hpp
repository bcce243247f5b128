#pragma once

#include "chi_exit/common.hpp"
#include "chi_exit/rates.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace chi_exit {

struct GridSection {
    std::size_t nx = 50;
    std::size_t ny = 50;
    double kbt = 1.0;
    std::string potential = "paper2d";
};

struct SdeSection {
    double sigma = 0.8;
    double dt = 0.001;
    std::string boundary = "clamp";
};

struct MembershipSection {
    /// Membership written by dump-chi: pcca_single, pcca_multi, committor or mc.
    std::string kind = "pcca_single";
    /// Crispness optimisation after the inner-simplex start in PCCA+.
    bool pcca_optimize = true;
    std::size_t eigen_index = 3;
    std::size_t n_clusters = 3;
    double target_weight = 0.4452;
    double core_weight_threshold = 0.0025;
    Box core_box{{0.2, 0.4}, {0.3, 0.5}};
    std::size_t n_traj = 100;
    std::size_t max_steps = 100;
};

struct RatesSection {
    double tau_grid = 100.0;
    double tau_mc = 0.05;
    std::size_t n_points = 50;
    std::size_t ptau_n_traj = 100;
    NormKind norm = NormKind::least_squares;
};

struct CompareSection {
    double threshold = 0.22;
};

struct ValidateSection {
    double threshold = 0.22;
    std::size_t n_starts = 40;
    std::size_t n_traj = 50;
    std::size_t horizon_steps = 20000;
};

/// Everything an experiment reads. Defaults reproduce the benchmark runs.
struct ExperimentConfig {
    std::string experiment;
    GridSection grid;
    SdeSection sde;
    MembershipSection membership;
    RatesSection rates;
    CompareSection compare;
    ValidateSection validate;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
    std::string output_dir = "out";

    /// Throws ConfigError when values are out of range.
    void check() const;

    /// Normalised `key = value` listing of every setting that affects
    /// results (workers and output_dir excluded).
    std::string canonical() const;
    /// FNV-1a hash of canonical(), as 16 hex digits.
    std::string hash() const;

    std::uint64_t require_seed() const;
};

/// Parses `section.key = value` lines; `#` starts a comment. Unknown keys
/// and malformed values raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace chi_exit
