#pragma once

#include "chi_exit/config.hpp"
#include "chi_exit/grid_generator.hpp"
#include "chi_exit/membership.hpp"
#include "chi_exit/rates.hpp"
#include "chi_exit/sde.hpp"
#include "chi_exit/spectral.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace chi_exit {

/// Where runners write their CSV files; nullopt writes nothing.
using OutputDir = std::optional<std::filesystem::path>;

GeneratorMatrix make_generator(const ExperimentConfig& config);
SdeConfig make_sde(const ExperimentConfig& config, std::uint64_t seed);

struct Idea1Result {
    EigenSystem eig;
    Membership chi;
    ExitRateReport report;
};

/// Eigenpair route: chi from eigenfunction membership.eigen_index.
Idea1Result run_idea1(const ExperimentConfig& config, const OutputDir& out = std::nullopt);
Idea1Result run_idea1(const ExperimentConfig& config, const GeneratorMatrix& gen, const OutputDir& out);

struct Idea2Result {
    EigenSystem eig;
    PccaResult pcca;
    std::size_t selected = 0;
    std::vector<double> weights;
    ExitRateReport report;
};

/// Multi-cluster PCCA+ followed by regression of L* chi on (chi, 1).
Idea2Result run_idea2(const ExperimentConfig& config, const OutputDir& out = std::nullopt);
Idea2Result run_idea2(const ExperimentConfig& config, const GeneratorMatrix& gen, const OutputDir& out);

struct Idea3Result {
    std::vector<CoreSet> cores;
    Membership chi;
    Eigen::VectorXd propagated;
    RegressionResult regression;
    ExitRateReport report;
};

/// Committor between the outermost weight-threshold cores, propagated
/// exactly over rates.tau_grid.
Idea3Result run_idea3(const ExperimentConfig& config, const OutputDir& out = std::nullopt);
Idea3Result run_idea3(const ExperimentConfig& config, const GeneratorMatrix& gen, const Propagator& propagator,
                      const OutputDir& out);

struct Idea4Result {
    std::vector<Vec2> points;
    std::vector<double> chi;
    std::vector<double> ptau_chi;
    RegressionResult regression;
    ExitRateReport report;
};

/// Short-trajectory route: Monte Carlo hitting membership and P^tau chi at
/// uniformly sampled points. Always writes the scatter, even when the
/// regression yields no rate.
Idea4Result run_idea4(const ExperimentConfig& config, const OutputDir& out = std::nullopt);

struct CompareResult {
    Eigen::VectorXd chi;
    Eigen::VectorXd set_time;   // t(x)
    Eigen::VectorXd fuzzy_time; // t1(x) = chi(x) / eps1
    std::size_t region_size = 0;
    double boundary_fuzzy_time = 0.0; // max t1 over cells with t = 0
    double correlation_core = 0.0;    // Pearson r over cells with chi > 0.4
    double median_difference = 0.0;   // median of t - t1 over the region
    ExitRateReport report;
};

CompareResult run_compare_mht(const ExperimentConfig& config, const OutputDir& out = std::nullopt);
CompareResult run_compare_mht(const ExperimentConfig& config, const Idea1Result& idea1, const GeneratorMatrix& gen,
                              const OutputDir& out);

struct ValidateResult {
    std::vector<std::size_t> start_cells;
    std::vector<double> chi;
    std::vector<double> mean_exit_time;
    std::vector<double> censored_fraction;
    double correlation = 0.0;
    SurvivalFit fit;
    bool fully_censored = false;
    ExitRateReport reference; // idea-4 report of the same run
    double ratio = 0.0;       // fitted set rate / reference eps1
};

ValidateResult run_validate(const ExperimentConfig& config, const OutputDir& out = std::nullopt);

void dump_generator(const ExperimentConfig& config, const OutputDir& out);
void dump_eigen(const ExperimentConfig& config, const OutputDir& out);
void dump_chi(const ExperimentConfig& config, const OutputDir& out);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace chi_exit
