#pragma once

#include "chi_exit/common.hpp"
#include "chi_exit/potential.hpp"

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstddef>
#include <optional>
#include <vector>

namespace chi_exit {

/// Uniform nx-by-ny cell decomposition of a box. Cells are indexed row-major,
/// i.e. index = iy * nx + ix, with ix running along x1.
class RegularGrid {
public:
    RegularGrid(std::size_t nx, std::size_t ny, Box domain = unit_box());

    std::size_t nx() const noexcept { return nx_; }
    std::size_t ny() const noexcept { return ny_; }
    std::size_t size() const noexcept { return nx_ * ny_; }
    const Box& domain() const noexcept { return domain_; }
    Vec2 spacing() const;

    std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }
    std::size_t ix_of(std::size_t cell) const { return cell % nx_; }
    std::size_t iy_of(std::size_t cell) const { return cell / nx_; }

    Vec2 center(std::size_t cell) const;

    /// Cell containing x; points on the upper domain edge belong to the last
    /// cell. Returns nullopt outside the domain.
    std::optional<std::size_t> cell_of(const Vec2& x) const;

    /// Von Neumann (4-point) neighbours in the order -x1, +x1, -x2, +x2.
    std::vector<std::size_t> neighbors(std::size_t cell) const;

private:
    std::size_t nx_;
    std::size_t ny_;
    Box domain_;
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Square-root approximation of the generator L* on a grid, together with
/// its stationary (Boltzmann) weights. Immutable after construction.
class GeneratorMatrix {
public:
    GeneratorMatrix(RegularGrid grid, SparseRowMatrix rates, Eigen::VectorXd weights);

    std::size_t n() const noexcept { return static_cast<std::size_t>(weights_.size()); }
    const RegularGrid& grid() const noexcept { return grid_; }
    const SparseRowMatrix& rates() const noexcept { return rates_; }
    /// Stationary distribution, normalised to sum 1.
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return rates_ * v; }

    /// D L* D^{-1} with D = diag(sqrt(pi)). Symmetric for reversible rates.
    SparseRowMatrix symmetrized() const;

    /// max_ij |pi_i L_ij - pi_j L_ji| / max_ij |pi_i L_ij|.
    double detailed_balance_residual() const;
    double max_abs_row_sum() const;

private:
    RegularGrid grid_;
    SparseRowMatrix rates_;
    Eigen::VectorXd weights_;
};

struct GeneratorOptions {
    double kbt = 1.0;
    /// Largest admissible (max V - min V) / kbt over the cell centres.
    double max_log_span = 700.0;
};

/// -L*_ij = sqrt(pi_j / pi_i) for neighbouring cells, pi_i = exp(-V(c_i)/kbt).
/// Edge cells simply have fewer neighbours (no-flux boundary).
GeneratorMatrix build_sqrt_generator(const PotentialSurface& potential, const RegularGrid& grid,
                                     const GeneratorOptions& options = {});

/// Sum_i chi_i pi_i / Sum_i pi_i.
double stationary_weight_of(const Eigen::VectorXd& chi, const GeneratorMatrix& gen);

/// Builds the rate matrix of a grid given explicit cell energies; used by
/// build_sqrt_generator and handy for hand-checked fixtures.
GeneratorMatrix sqrt_generator_from_energies(const RegularGrid& grid,
                                             const Eigen::VectorXd& energies,
                                             const GeneratorOptions& options = {});

}  // namespace chi_exit
