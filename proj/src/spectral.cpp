#include "chi_exit/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace chi_exit {

namespace {

constexpr double kDetailedBalanceTolerance = 1e-10;

Eigen::MatrixXd dense_symmetric(const SparseRowMatrix& a) {
    Eigen::MatrixXd d = Eigen::MatrixXd(a);
    return 0.5 * (d + d.transpose());
}

// Full eigendecomposition of a dense symmetric matrix, eigenvalues ascending.
void dense_eigen(const Eigen::MatrixXd& a, Eigen::VectorXd& values, Eigen::MatrixXd& vectors, const char* stage) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) throw NumericalError("dense symmetric eigensolver failed", stage);
    values = solver.eigenvalues();
    vectors = solver.eigenvectors();
}

// Largest-magnitude entry positive. Entries within a relative 1e-6 of the
// maximum count as ties (mirror-antisymmetric vectors have exact ones) and
// are resolved by the lowest index.
void fix_signs(Eigen::MatrixXd& vectors) {
    for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
        const double top = vectors.col(k).cwiseAbs().maxCoeff();
        Eigen::Index arg = 0;
        while (std::abs(vectors(arg, k)) < top * (1.0 - 1e-6)) ++arg;
        if (vectors(arg, k) < 0.0) vectors.col(k) *= -1.0;
    }
}

double inf_norm(const SparseRowMatrix& a) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.outerSize(); ++i) {
        double row = 0.0;
        for (SparseRowMatrix::InnerIterator it(a, i); it; ++it) row += std::abs(it.value());
        worst = std::max(worst, row);
    }
    return worst;
}

// Shift-invert block subspace iteration with Rayleigh-Ritz, for the k
// smallest eigenpairs of a sparse symmetric positive semidefinite matrix.
void iterative_smallest(const SparseRowMatrix& s, std::size_t k, const SpectralOptions& options,
                        Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
    const Eigen::Index n = s.rows();
    const Eigen::Index block = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(k + std::max<std::size_t>(k, 8)));
    const double norm = std::max(1.0, inf_norm(s));
    const double shift = 1e-8 * norm;

    Eigen::SparseMatrix<double> shifted = s;
    for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> factor(shifted);
    if (factor.info() != Eigen::Success)
        throw NumericalError("factorisation of the shifted generator failed", "eigensolve");

    Eigen::MatrixXd x(n, block);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < block; ++j)
            x(i, j) = std::cos(1.0 + 0.7548776662466927 * static_cast<double>(i + 1) * static_cast<double>(j + 1));

    Eigen::VectorXd residuals = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(k), 1.0);
    for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
        x = factor.solve(x);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
        Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, block);
        Eigen::MatrixXd sq = s * q;
        Eigen::MatrixXd h = q.transpose() * sq;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(0.5 * (h + h.transpose()));
        x = q * small.eigenvectors();
        Eigen::MatrixXd sx = sq * small.eigenvectors();
        for (std::size_t j = 0; j < k; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            residuals[jj] = (sx.col(jj) - small.eigenvalues()[jj] * x.col(jj)).norm();
        }
        if (residuals.maxCoeff() <= options.tolerance * norm) {
            values = small.eigenvalues().head(static_cast<Eigen::Index>(k));
            vectors = x.leftCols(static_cast<Eigen::Index>(k));
            return;
        }
    }
    std::ostringstream msg;
    msg << "eigensolver did not converge; residual norms:";
    for (Eigen::Index j = 0; j < residuals.size(); ++j) msg << ' ' << residuals[j];
    throw NumericalError(msg.str(), "eigensolve");
}

}  // namespace

double pi_inner(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const Eigen::VectorXd& weights) {
    return (u.array() * v.array() * weights.array()).sum();
}

EigenSystem eigensolve(const GeneratorMatrix& gen, std::size_t k, const SpectralOptions& options) {
    const std::size_t n = gen.n();
    if (k == 0 || k > n) throw std::invalid_argument("eigensolve: need 1 <= k <= n");
    if (gen.detailed_balance_residual() > kDetailedBalanceTolerance)
        throw std::invalid_argument("eigensolve: generator violates detailed balance");

    const SparseRowMatrix s = gen.symmetrized();
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;
    if (n <= options.dense_threshold) {
        dense_eigen(dense_symmetric(s), values, vectors, "eigensolve");
        values.conservativeResize(static_cast<Eigen::Index>(k));
        vectors.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(k));
    } else {
        iterative_smallest(s, k, options, values, vectors);
    }

    // back to L* eigenvectors: f = D^{-1} u is pi-orthonormal
    const Eigen::VectorXd inv_sqrt = gen.weights().cwiseSqrt().cwiseInverse();
    vectors = inv_sqrt.asDiagonal() * vectors;
    fix_signs(vectors);
    return EigenSystem{std::move(values), std::move(vectors)};
}

SymmetricSemigroup::SymmetricSemigroup(const SparseRowMatrix& a, const SpectralOptions& options)
    : a_(a), options_(options) {
    if (static_cast<std::size_t>(a.rows()) <= options.dense_threshold) {
        dense_eigen(dense_symmetric(a), lambda_, basis_, "propagate");
    }
}

SymmetricSemigroup::SymmetricSemigroup(const SparseRowMatrix& a, Eigen::VectorXd eigenvalues,
                                       Eigen::MatrixXd orthonormal_vectors,
                                       const SpectralOptions& options)
    : a_(a), options_(options), lambda_(std::move(eigenvalues)), basis_(std::move(orthonormal_vectors)) {
    if (basis_.rows() != a.rows() || basis_.cols() != a.rows() || lambda_.size() != a.rows())
        throw std::invalid_argument("semigroup basis must be complete");
}

Eigen::VectorXd SymmetricSemigroup::apply(const Eigen::VectorXd& v, double t) const {
    if (!(t >= 0.0)) throw std::invalid_argument("propagation time must be non-negative");
    if (v.size() != a_.rows()) throw std::invalid_argument("vector does not match the operator");
    if (t == 0.0) return v;
    if (uses_dense_basis()) {
        const Eigen::VectorXd decay = (-t * lambda_).array().exp().matrix();
        return basis_ * (decay.asDiagonal() * (basis_.transpose() * v));
    }
    return krylov_apply(v, t);
}

// Lanczos approximation of exp(-t A) v with full reorthogonalisation and
// adaptive sub-stepping driven by the usual a-posteriori error estimate
// beta_{m} * |[exp(-h T)]_{m,1}|.
Eigen::VectorXd SymmetricSemigroup::krylov_apply(const Eigen::VectorXd& v, double t) const {
    const Eigen::Index n = a_.rows();
    const auto m_max = static_cast<Eigen::Index>(std::min<std::size_t>(options_.krylov_dimension, static_cast<std::size_t>(n)));
    Eigen::VectorXd w = v;
    double remaining = t;
    double h = t;
    const double tol = options_.tolerance;

    while (remaining > 0.0) {
        h = std::min(h, remaining);
        const double beta0 = w.norm();
        if (beta0 == 0.0) return w;

        Eigen::MatrixXd basis(n, m_max + 1);
        Eigen::VectorXd alpha = Eigen::VectorXd::Zero(m_max);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(m_max);
        basis.col(0) = w / beta0;
        Eigen::Index m = 0;
        bool breakdown = false;
        for (; m < m_max; ++m) {
            Eigen::VectorXd z = a_ * basis.col(m);
            alpha[m] = basis.col(m).dot(z);
            for (int pass = 0; pass < 2; ++pass)
                z -= basis.leftCols(m + 1) * (basis.leftCols(m + 1).transpose() * z);
            beta[m] = z.norm();
            if (beta[m] <= 1e-14 * std::max(1.0, std::abs(alpha[m]))) {
                ++m;
                breakdown = true;
                break;
            }
            basis.col(m + 1) = z / beta[m];
        }

        for (;;) {
            Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                tri(i, i) = alpha[i];
                if (i + 1 < m) tri(i, i + 1) = tri(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
            const Eigen::VectorXd decay = (-h * es.eigenvalues()).array().exp().matrix();
            const Eigen::VectorXd e1 = es.eigenvectors().row(0).transpose();
            const Eigen::VectorXd coeffs = es.eigenvectors() * (decay.asDiagonal() * e1);
            const double err = breakdown ? 0.0 : beta0 * beta[m - 1] * std::abs(coeffs[m - 1]);
            if (err <= tol * std::max(beta0, 1e-300) || h < 1e-14 * t) {
                w = beta0 * (basis.leftCols(m) * coeffs);
                remaining -= h;
                if (err < 0.1 * tol * beta0) h *= 2.0;
                break;
            }
            h *= 0.5;
        }
    }
    return w;
}

Propagator::Propagator(const GeneratorMatrix& gen, const SpectralOptions& options)
    : sqrt_weights_(gen.weights().cwiseSqrt()), semigroup_(gen.symmetrized(), options) {}

Propagator::Propagator(const GeneratorMatrix& gen, const EigenSystem& full, const SpectralOptions& options)
    : sqrt_weights_(gen.weights().cwiseSqrt()),
      semigroup_(gen.symmetrized(), full.eigenvalues,
                 sqrt_weights_.asDiagonal() * full.eigenvectors, options) {
    if (full.count() != gen.n()) throw std::invalid_argument("Propagator needs all n eigenpairs");
}

Eigen::VectorXd Propagator::apply(const Eigen::VectorXd& v, double tau) const {
    if (!(tau >= 0.0)) throw std::invalid_argument("tau must be non-negative");
    if (tau == 0.0) return v;
    const Eigen::VectorXd w = sqrt_weights_.asDiagonal() * v;
    return sqrt_weights_.cwiseInverse().asDiagonal() * semigroup_.apply(w, tau);
}

Eigen::VectorXd propagate(const GeneratorMatrix& gen, const Eigen::VectorXd& v, double tau,
                          const SpectralOptions& options) {
    if (!(tau >= 0.0)) throw std::invalid_argument("tau must be non-negative");
    return Propagator(gen, options).apply(v, tau);
}

}  // namespace chi_exit
