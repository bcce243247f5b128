#pragma once

#include "chi_exit/dynamics.hpp"
#include "chi_exit/grid_generator.hpp"
#include "chi_exit/spectral.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace chi_exit {

enum class MembershipSource { pcca_single, pcca_multi, committor, mc_hitting, custom };

std::string to_string(MembershipSource source);

/// Pointwise membership evaluator. Implementations must be safe to call
/// concurrently.
class PointEvaluator {
public:
    virtual ~PointEvaluator() = default;
    virtual double evaluate(const Vec2& x) const = 0;
};

/// Metadata of chi = alpha_bar f + beta_bar 1.
struct PccaSingleInfo {
    double alpha_bar = 0.0;
    double beta_bar = 0.0;
    double eps_bar = 0.0;
    std::size_t eigen_index = 0;  // 1-based; 1 is the constant eigenfunction
    Eigen::VectorXd eigenfunction;
};

/// A fuzzy set chi: Gamma -> [0,1], stored per grid cell or evaluated
/// pointwise by a sampler.
class Membership {
public:
    static Membership on_grid(const RegularGrid& grid, Eigen::VectorXd values, MembershipSource source);
    static Membership sampled(std::shared_ptr<const PointEvaluator> sampler, MembershipSource source);

    bool is_grid() const noexcept { return grid_.has_value(); }
    MembershipSource source() const noexcept { return source_; }

    /// Per-cell values; throws std::logic_error for sampler memberships.
    const Eigen::VectorXd& values() const;
    const RegularGrid& grid() const;

    /// Grid memberships read the cell containing x (clamped into the domain).
    double operator()(const Vec2& x) const;

    const std::optional<PccaSingleInfo>& pcca_info() const noexcept { return pcca_; }
    void set_pcca_info(PccaSingleInfo info) { pcca_ = std::move(info); }

private:
    Membership() = default;

    MembershipSource source_ = MembershipSource::custom;
    std::optional<RegularGrid> grid_;
    Eigen::VectorXd values_;
    std::shared_ptr<const PointEvaluator> sampler_;
    std::optional<PccaSingleInfo> pcca_;
};

/// Sum_i chi_i pi_i / Sum_i pi_i for a grid membership.
double stationary_weight_of(const Membership& chi, const GeneratorMatrix& gen);

/// Core region: a set of grid cells or a box in position space.
class CoreSet {
public:
    static CoreSet cells(const RegularGrid& grid, std::vector<std::size_t> indices, std::string label);
    static CoreSet box(const Box& region, const Box& domain, std::string label);

    const std::string& label() const noexcept { return label_; }
    bool contains(const Vec2& x) const;
    /// Cells of `grid` belonging to the core (box cores: cells whose centre
    /// lies in the box).
    std::vector<std::size_t> cells_on(const RegularGrid& grid) const;
    /// Mean of the member cell centres.
    Vec2 centroid(const RegularGrid& grid) const;
    const std::optional<Box>& region() const noexcept { return box_; }

private:
    CoreSet() = default;

    std::string label_;
    std::optional<Box> box_;
    std::optional<RegularGrid> grid_;
    std::vector<std::size_t> cells_;  // sorted
};

/// chi = alpha_bar f + beta_bar 1 rescaled to [0,1] from eigenfunction
/// number `which` (1-based, >= 2). Rejects constant or degenerate
/// eigenfunctions, whose PCCA+ membership is not unique.
Membership pcca_single(const GeneratorMatrix& gen, const EigenSystem& eig, std::size_t which);

struct PccaOptions {
    /// Improve the inner-simplex start by maximising the crispness objective.
    bool optimize = true;
    std::size_t max_iterations = 20000;
    std::size_t restarts = 10;
    double size_tolerance = 1e-12;
};

struct PccaResult {
    std::vector<Membership> memberships;
    /// chi = X A with X = [1, f_2, ..., f_k] (pi-orthonormal eigenvectors).
    Eigen::MatrixXd coefficients;
    /// Grid cells picked as simplex vertices, in cluster order.
    std::vector<std::size_t> vertex_cells;
    double crispness = 0.0;
    std::vector<std::string> warnings;
};

/// PCCA+ on the first n_clusters eigenvectors: inner-simplex vertex
/// selection, optionally followed by Nelder-Mead maximisation of
/// trace(diag(1/A_0j) A^T A) over feasible transformations.
PccaResult pcca_multi(const GeneratorMatrix& gen, const EigenSystem& eig, std::size_t n_clusters,
                      const PccaOptions& options = {});

/// Solves L* q = 0 off the cores with q = 1 on core_a and q = 0 on core_b.
Membership committor(const GeneratorMatrix& gen, const CoreSet& core_a, const CoreSet& core_b);

/// Connected components (4-neighbour) of the cells with weight above the
/// threshold, ordered by the x1 coordinate of their centroids.
std::vector<CoreSet> cores_from_weight_threshold(const GeneratorMatrix& gen, double threshold);

/// Fraction of n_traj Euler-Maruyama trajectories from x that are in the
/// core at any of the positions x_0, ..., x_{max_steps}. Memoised per
/// coordinate pair; streams keyed by (seed, position, trajectory).
class HittingSampler final : public PointEvaluator {
public:
    HittingSampler(SdeConfig dynamics, CoreSet core, std::size_t n_traj, std::size_t max_steps);
    ~HittingSampler() override;

    double evaluate(const Vec2& x) const override;

    std::size_t n_traj() const noexcept { return n_traj_; }
    std::size_t max_steps() const noexcept { return max_steps_; }
    std::size_t memo_size() const;

private:
    struct Memo;

    SdeConfig dynamics_;
    CoreSet core_;
    std::size_t n_traj_;
    std::size_t max_steps_;
    std::unique_ptr<Memo> memo_;
};

/// Point-sampler membership backed by a HittingSampler; `seed` replaces
/// dynamics.seed.
Membership mc_hitting_membership(const SdeConfig& dynamics, const CoreSet& core, std::size_t n_traj,
                                 std::size_t max_steps, std::uint64_t seed);

}  // namespace chi_exit
