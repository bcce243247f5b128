#include "chi_exit/grid_generator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace chi_exit {

RegularGrid::RegularGrid(std::size_t nx, std::size_t ny, Box domain)
    : nx_(nx), ny_(ny), domain_(domain) {
    if (nx == 0 || ny == 0 || nx * ny < 2)
        throw std::invalid_argument("grid needs at least two cells");
    if (!(domain.upper[0] > domain.lower[0] && domain.upper[1] > domain.lower[1]))
        throw std::invalid_argument("grid domain is empty");
}

Vec2 RegularGrid::spacing() const {
    const Vec2 extent = domain_.upper - domain_.lower;
    return {extent[0] / static_cast<double>(nx_), extent[1] / static_cast<double>(ny_)};
}

Vec2 RegularGrid::center(std::size_t cell) const {
    const Vec2 h = spacing();
    return {domain_.lower[0] + (static_cast<double>(ix_of(cell)) + 0.5) * h[0],
            domain_.lower[1] + (static_cast<double>(iy_of(cell)) + 0.5) * h[1]};
}

std::optional<std::size_t> RegularGrid::cell_of(const Vec2& x) const {
    if (!domain_.contains(x)) return std::nullopt;
    const Vec2 h = spacing();
    auto axis = [](double offset, double width, std::size_t count) {
        auto i = static_cast<std::size_t>(std::floor(offset / width));
        return std::min(i, count - 1);
    };
    const std::size_t ix = axis(x[0] - domain_.lower[0], h[0], nx_);
    const std::size_t iy = axis(x[1] - domain_.lower[1], h[1], ny_);
    return index(ix, iy);
}

std::vector<std::size_t> RegularGrid::neighbors(std::size_t cell) const {
    std::vector<std::size_t> out;
    out.reserve(4);
    const std::size_t ix = ix_of(cell);
    const std::size_t iy = iy_of(cell);
    if (ix > 0) out.push_back(index(ix - 1, iy));
    if (ix + 1 < nx_) out.push_back(index(ix + 1, iy));
    if (iy > 0) out.push_back(index(ix, iy - 1));
    if (iy + 1 < ny_) out.push_back(index(ix, iy + 1));
    return out;
}

GeneratorMatrix::GeneratorMatrix(RegularGrid grid, SparseRowMatrix rates, Eigen::VectorXd weights)
    : grid_(grid), rates_(std::move(rates)), weights_(std::move(weights)) {
    if (static_cast<std::size_t>(rates_.rows()) != grid_.size() || rates_.rows() != rates_.cols() ||
        weights_.size() != rates_.rows())
        throw std::invalid_argument("generator dimensions do not match the grid");
    rates_.makeCompressed();
}

SparseRowMatrix GeneratorMatrix::symmetrized() const {
    const Eigen::VectorXd d = weights_.cwiseSqrt();
    SparseRowMatrix s = rates_;
    for (Eigen::Index i = 0; i < s.outerSize(); ++i) {
        for (SparseRowMatrix::InnerIterator it(s, i); it; ++it) {
            it.valueRef() *= d[i] / d[it.col()];
        }
    }
    return s;
}

double GeneratorMatrix::detailed_balance_residual() const {
    double worst = 0.0;
    double scale = 0.0;
    // rates_ is row-major, so look up the transposed entry via coeff().
    for (Eigen::Index i = 0; i < rates_.outerSize(); ++i) {
        for (SparseRowMatrix::InnerIterator it(rates_, i); it; ++it) {
            const Eigen::Index j = it.col();
            if (j == i) continue;
            const double forward = weights_[i] * it.value();
            const double backward = weights_[j] * rates_.coeff(j, i);
            worst = std::max(worst, std::abs(forward - backward));
            scale = std::max(scale, std::abs(forward));
        }
    }
    return scale > 0.0 ? worst / scale : 0.0;
}

double GeneratorMatrix::max_abs_row_sum() const {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < rates_.outerSize(); ++i) {
        double sum = 0.0;
        for (SparseRowMatrix::InnerIterator it(rates_, i); it; ++it) sum += it.value();
        worst = std::max(worst, std::abs(sum));
    }
    return worst;
}

GeneratorMatrix sqrt_generator_from_energies(const RegularGrid& grid,
                                             const Eigen::VectorXd& energies,
                                             const GeneratorOptions& options) {
    const std::size_t n = grid.size();
    if (static_cast<std::size_t>(energies.size()) != n)
        throw std::invalid_argument("energy vector does not match the grid");
    if (!(options.kbt > 0.0)) throw std::invalid_argument("kbt must be positive");
    if (!energies.allFinite())
        throw NumericalError("potential is not finite on every cell centre", "generator");

    const double vmin = energies.minCoeff();
    const double vmax = energies.maxCoeff();
    if ((vmax - vmin) / options.kbt > options.max_log_span) {
        std::ostringstream msg;
        msg << "potential range too large for Boltzmann weights: span "
            << (vmax - vmin) / options.kbt << " exceeds " << options.max_log_span;
        throw NumericalError(msg.str(), "generator");
    }

    Eigen::VectorXd weights(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        weights[static_cast<Eigen::Index>(i)] =
            std::exp(-(energies[static_cast<Eigen::Index>(i)] - vmin) / options.kbt);
    weights /= weights.sum();

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(5 * n);
    for (std::size_t i = 0; i < n; ++i) {
        double diagonal = 0.0;
        const double vi = energies[static_cast<Eigen::Index>(i)];
        // sqrt(pi_j/pi_i) = exp(-(V_j - V_i) / (2 kbt))
        for (std::size_t j : grid.neighbors(i)) {
            const double rate =
                std::exp(-(energies[static_cast<Eigen::Index>(j)] - vi) / (2.0 * options.kbt));
            triplets.emplace_back(i, j, -rate);
            diagonal += rate;
        }
        triplets.emplace_back(i, i, diagonal);
    }
    SparseRowMatrix rates(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    rates.setFromTriplets(triplets.begin(), triplets.end());
    return GeneratorMatrix(grid, std::move(rates), std::move(weights));
}

GeneratorMatrix build_sqrt_generator(const PotentialSurface& potential, const RegularGrid& grid,
                                     const GeneratorOptions& options) {
    Eigen::VectorXd energies(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i)
        energies[static_cast<Eigen::Index>(i)] = potential.energy(grid.center(i));
    return sqrt_generator_from_energies(grid, energies, options);
}

double stationary_weight_of(const Eigen::VectorXd& chi, const GeneratorMatrix& gen) {
    if (static_cast<std::size_t>(chi.size()) != gen.n())
        throw std::invalid_argument("membership vector does not match the generator dimension");
    return chi.dot(gen.weights()) / gen.weights().sum();
}

}  // namespace chi_exit
