#pragma once

#include "chi_exit/dynamics.hpp"
#include "chi_exit/grid_generator.hpp"
#include "chi_exit/membership.hpp"
#include "chi_exit/spectral.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace chi_exit {

/// Guard for the (1 - chi)/chi occupation penalty: states with chi below it
/// contribute an infinite penalty, i.e. weight exp(-inf) = 0.
inline constexpr double kChiMin = 1e-6;

/// Per-trajectory statistics of one ensemble started at `start`.
struct TrajectoryStats {
    Vec2 start{0.0, 0.0};
    std::size_t horizon_steps = 0;
    std::vector<Vec2> endpoints;
    std::vector<std::optional<std::size_t>> hit_steps;
    /// First step outside the region; nullopt when censored at the horizon.
    std::vector<std::optional<std::size_t>> exit_steps;

    std::size_t size() const noexcept;
    double censored_fraction() const;
    /// Mean of min(exit step, horizon) in steps; censored samples count as
    /// the horizon, so this is a lower bound whenever censoring occurred.
    double censored_mean_exit_steps() const;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

/// Endpoints of n_traj trajectories of n_steps steps each from x.
TrajectoryStats sample_endpoints(const SdeConfig& config, const Vec2& x, std::size_t n_steps, std::size_t n_traj);

/// Per-trajectory first entry step into the core, up to max_steps.
TrajectoryStats sample_core_hitting(const SdeConfig& config, const CoreSet& core, const Vec2& x,
                                    std::size_t n_traj, std::size_t max_steps);

/// Mean of chi over the endpoints of n_traj trajectories of length tau.
double estimate_ptau_chi(const SdeConfig& config, const Membership& chi, const Vec2& x, double tau,
                         std::size_t n_traj);

/// estimate_ptau_chi at many points, fanned out over (point, trajectory)
/// pairs on config.workers threads.
std::vector<double> estimate_ptau_chi_batch(const SdeConfig& config, const Membership& chi,
                                            std::span<const Vec2> points, double tau, std::size_t n_traj);

/// Evaluates chi at many points in parallel.
std::vector<double> evaluate_batch(const Membership& chi, std::span<const Vec2> points, std::size_t workers);

/// Monte Carlo chi-holding probability along Euler-Maruyama paths:
/// E[chi(x_t) exp(-eps2 sum_r dt (1 - chi(x_r))/chi(x_r))].
McEstimate feynman_kac_holding_mc(const SdeConfig& config, const Membership& chi, double eps2, const Vec2& x,
                                  double t, std::size_t n_traj, double chi_min = kChiMin);

/// Monte Carlo chi-holding probability of the jump process generated by
/// the grid operator, started in `cell`. Holding times are exponential, so
/// the penalty integral is exact along each path.
McEstimate feynman_kac_holding_jump(const GeneratorMatrix& gen, const Membership& chi, double eps2,
                                    std::size_t cell, double t, std::size_t n_traj, std::uint64_t seed,
                                    double chi_min = kChiMin);

/// Grid solution of dp/dt = -L* p - eps2 (1 - chi)/chi p, p(0) = chi. Cells
/// with chi < chi_min are absorbing with p = 0. The operator is symmetrised
/// by diag(sqrt(pi)) and exponentiated exactly.
class HoldingProbabilityGrid {
public:
    HoldingProbabilityGrid(const GeneratorMatrix& gen, const Membership& chi, double eps2,
                           double chi_min = kChiMin, const SpectralOptions& options = {});

    Eigen::VectorXd at(double t) const;

private:
    std::vector<Eigen::Index> active_;
    Eigen::VectorXd sqrt_weights_;
    Eigen::VectorXd initial_;
    std::size_t n_;
    std::optional<SymmetricSemigroup> semigroup_;
};

Eigen::VectorXd feynman_kac_holding_grid(const GeneratorMatrix& gen, const Membership& chi, double eps2,
                                         double t, double chi_min = kChiMin);

using RegionPredicate = std::function<bool(const Vec2&)>;

/// First exit step from `region` for n_traj trajectories from x, censored
/// at horizon_steps.
TrajectoryStats sample_set_exit_times(const SdeConfig& config, const RegionPredicate& region, const Vec2& x,
                                      std::size_t n_traj, std::size_t horizon_steps);

struct SurvivalFit {
    bool fitted = false;
    double rate = 0.0;
    double intercept = 0.0;
    std::size_t exits = 0;
    std::size_t censored = 0;
};

/// Least-squares fit of ln S(t) = c - eps t to the pooled empirical
/// survival curve. Not fitted when every sample is censored.
SurvivalFit fit_survival_rate(std::span<const TrajectoryStats> ensembles, double dt);

}  // namespace chi_exit
