#pragma once

#include "chi_exit/grid_generator.hpp"

#include <Eigen/Core>

#include <cstddef>

namespace chi_exit {

struct SpectralOptions {
    /// Up to this dimension the full dense decomposition is used.
    std::size_t dense_threshold = 400;
    /// Relative tolerance of the iterative eigensolver and of the Krylov
    /// exponential used above the threshold.
    double tolerance = 1e-12;
    std::size_t max_iterations = 1000;
    std::size_t krylov_dimension = 40;
};

/// Smallest eigenpairs of L*, ascending. Eigenvectors are pi-orthonormal
/// (sum_i f_j(i) f_k(i) pi_i = delta_jk) and each is signed so that its
/// largest-magnitude entry is positive (near-ties within 1e-6 go to the
/// lowest index).
struct EigenSystem {
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;

    std::size_t count() const noexcept { return static_cast<std::size_t>(eigenvalues.size()); }
    Eigen::VectorXd vector(std::size_t k) const { return eigenvectors.col(static_cast<Eigen::Index>(k)); }
};

/// The k smallest eigenpairs of L*, computed on the symmetrised matrix.
/// Throws std::invalid_argument when detailed balance does not hold and
/// NumericalError when the iterative solver does not converge.
EigenSystem eigensolve(const GeneratorMatrix& gen, std::size_t k, const SpectralOptions& options = {});

/// exp(-t A) for a symmetric positive semidefinite sparse matrix A.
class SymmetricSemigroup {
public:
    explicit SymmetricSemigroup(const SparseRowMatrix& a, const SpectralOptions& options = {});

    /// Reuses an existing full orthonormal eigenbasis of A.
    SymmetricSemigroup(const SparseRowMatrix& a, Eigen::VectorXd eigenvalues,
                       Eigen::MatrixXd orthonormal_vectors, const SpectralOptions& options = {});

    Eigen::VectorXd apply(const Eigen::VectorXd& v, double t) const;
    bool uses_dense_basis() const noexcept { return basis_.size() > 0; }

private:
    Eigen::VectorXd krylov_apply(const Eigen::VectorXd& v, double t) const;

    SparseRowMatrix a_;
    SpectralOptions options_;
    Eigen::VectorXd lambda_;
    Eigen::MatrixXd basis_;
};

/// Transfer operator P^tau = exp(-tau L*) acting on observables.
class Propagator {
public:
    explicit Propagator(const GeneratorMatrix& gen, const SpectralOptions& options = {});
    /// Uses a complete eigensystem (count == n) instead of recomputing one.
    Propagator(const GeneratorMatrix& gen, const EigenSystem& full, const SpectralOptions& options = {});

    Eigen::VectorXd apply(const Eigen::VectorXd& v, double tau) const;
    bool exact() const noexcept { return semigroup_.uses_dense_basis(); }

private:
    Eigen::VectorXd sqrt_weights_;
    SymmetricSemigroup semigroup_;
};

/// One-shot exp(-tau L*) v. Prefer Propagator for repeated application.
Eigen::VectorXd propagate(const GeneratorMatrix& gen, const Eigen::VectorXd& v, double tau,
                          const SpectralOptions& options = {});

/// <u, v>_pi = sum_i u_i v_i pi_i
double pi_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const Eigen::VectorXd& weights);

}  // namespace chi_exit
