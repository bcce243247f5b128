#pragma once

#include "chi_exit/grid_generator.hpp"
#include "chi_exit/membership.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace chi_exit {

enum class NormKind { least_squares, least_absolute };

std::string to_string(NormKind norm);
/// Accepts "ls" and "lad"; throws ConfigError otherwise.
NormKind norm_from_string(const std::string& text);

/// Fit ys ~ gamma1 xs + gamma2.
struct RegressionResult {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    /// Euclidean norm of the residual for least squares, sum of absolute
    /// residuals for least absolute deviations.
    double residual_norm = 0.0;
    std::size_t n_points = 0;
    NormKind norm_kind = NormKind::least_squares;
};

RegressionResult regress(std::span<const double> xs, std::span<const double> ys,
                         NormKind norm = NormKind::least_squares);

enum class RateStatus { ok, no_decay, noise_dominated };

std::string to_string(RateStatus status);

/// L* chi = alpha chi + beta, eps1 = alpha + beta, eps2 = -beta.
struct ExitRateReport {
    std::string provenance;
    RateStatus status = RateStatus::ok;
    std::string diagnostic;

    double alpha = 0.0;
    double beta = 0.0;
    double eps1 = 0.0;
    double eps2 = 0.0;
    double pi_chi = 0.0;
    bool meaningful = false;

    double tau = 0.0;
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double residual_norm = 0.0;
    std::size_t n_points = 0;
    NormKind norm = NormKind::least_squares;

    bool has_rate() const noexcept { return status == RateStatus::ok; }
};

/// alpha = -ln(gamma1)/tau, beta = alpha gamma2/(gamma1 - 1). gamma1 outside
/// (0,1) yields a report with status set and NaN rates.
ExitRateReport gammas_to_rate(const RegressionResult& reg, double tau);

/// eps1 = eps_bar (1 - beta_bar), eps2 = eps_bar beta_bar, pi_chi = beta_bar.
ExitRateReport rate_from_eigenpair(double eps_bar, double beta_bar);

/// Regresses L* chi against (chi, 1) over all cells.
ExitRateReport regress_generator_action(const GeneratorMatrix& gen, const Membership& chi,
                                        NormKind norm = NormKind::least_squares);

/// chi(x) exp(-eps1 t).
double holding_probability(const ExitRateReport& report, double chi_at_x, double t);

/// chi(x) / eps1.
double chi_mean_holding_time(const ExitRateReport& report, double chi_at_x);

/// Solves L* t = 1 on the region cells with t = 0 elsewhere.
Eigen::VectorXd set_mean_holding_time(const GeneratorMatrix& gen, const std::vector<std::size_t>& region_cells);

/// Central-difference gradient of per-cell values at a cell (one-sided on
/// the domain edge).
Vec2 lattice_gradient(const RegularGrid& grid, const Eigen::VectorXd& values, std::size_t cell);

/// Unit vector along -grad chi at the cell containing x. For memberships
/// carrying PCCA+ metadata the eigenfunction gradient is checked for
/// collinearity.
Vec2 exit_path_direction(const Membership& chi, const Vec2& x);

/// -ln(chi) chi / ((1 - chi) eps2).
double dominance_timescale(double chi_level, double eps2);

std::string report_csv_header();
std::string report_csv_row(const ExitRateReport& report);

}  // namespace chi_exit
