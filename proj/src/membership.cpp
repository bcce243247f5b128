#include "chi_exit/membership.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace chi_exit {

std::string to_string(MembershipSource source) {
    switch (source) {
        case MembershipSource::pcca_single: return "pcca_single";
        case MembershipSource::pcca_multi: return "pcca_multi";
        case MembershipSource::committor: return "committor";
        case MembershipSource::mc_hitting: return "mc_hitting";
        case MembershipSource::custom: return "custom";
    }
    return "custom";
}

// --- Membership -------------------------------------------------------------

Membership Membership::on_grid(const RegularGrid& grid, Eigen::VectorXd values, MembershipSource source) {
    if (static_cast<std::size_t>(values.size()) != grid.size())
        throw std::invalid_argument("membership vector does not match the grid");
    Membership m;
    m.source_ = source;
    m.grid_ = grid;
    m.values_ = std::move(values);
    return m;
}

Membership Membership::sampled(std::shared_ptr<const PointEvaluator> sampler, MembershipSource source) {
    if (!sampler) throw std::invalid_argument("null membership sampler");
    Membership m;
    m.source_ = source;
    m.sampler_ = std::move(sampler);
    return m;
}

const Eigen::VectorXd& Membership::values() const {
    if (!grid_) throw std::logic_error("membership has no grid representation");
    return values_;
}

const RegularGrid& Membership::grid() const {
    if (!grid_) throw std::logic_error("membership has no grid representation");
    return *grid_;
}

double Membership::operator()(const Vec2& x) const {
    if (sampler_) return sampler_->evaluate(x);
    const auto cell = grid_->cell_of(grid_->domain().clamp(x));
    return values_[static_cast<Eigen::Index>(*cell)];
}

double stationary_weight_of(const Membership& chi, const GeneratorMatrix& gen) {
    return stationary_weight_of(chi.values(), gen);
}

// --- CoreSet ----------------------------------------------------------------

CoreSet CoreSet::cells(const RegularGrid& grid, std::vector<std::size_t> indices, std::string label) {
    if (indices.empty()) throw std::invalid_argument("core set '" + label + "' is empty");
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    if (indices.back() >= grid.size()) throw std::invalid_argument("core cell index out of range");
    CoreSet core;
    core.label_ = std::move(label);
    core.grid_ = grid;
    core.cells_ = std::move(indices);
    return core;
}

CoreSet CoreSet::box(const Box& region, const Box& domain, std::string label) {
    if (!(region.upper[0] > region.lower[0] && region.upper[1] > region.lower[1]))
        throw std::invalid_argument("core box '" + label + "' is empty");
    if (!region.inside(domain)) throw std::invalid_argument("core box '" + label + "' leaves the domain");
    CoreSet core;
    core.label_ = std::move(label);
    core.box_ = region;
    return core;
}

bool CoreSet::contains(const Vec2& x) const {
    if (box_) return box_->contains(x);
    const auto cell = grid_->cell_of(x);
    return cell && std::binary_search(cells_.begin(), cells_.end(), *cell);
}

std::vector<std::size_t> CoreSet::cells_on(const RegularGrid& grid) const {
    if (!box_) {
        if (grid.nx() != grid_->nx() || grid.ny() != grid_->ny())
            throw std::invalid_argument("core set was defined on a different grid");
        return cells_;
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (box_->contains(grid.center(i))) out.push_back(i);
    return out;
}

Vec2 CoreSet::centroid(const RegularGrid& grid) const {
    const auto members = cells_on(grid);
    if (members.empty()) throw std::invalid_argument("core '" + label_ + "' covers no grid cell");
    Vec2 c{0.0, 0.0};
    for (std::size_t i : members) c += grid.center(i);
    return c / static_cast<double>(members.size());
}

// --- PCCA+ ------------------------------------------------------------------

Membership pcca_single(const GeneratorMatrix& gen, const EigenSystem& eig, std::size_t which) {
    if (which < 2) throw std::invalid_argument("pcca_single needs a non-constant eigenfunction (which >= 2)");
    if (which > eig.count()) throw std::invalid_argument("pcca_single: eigen index beyond computed pairs");
    if (static_cast<std::size_t>(eig.eigenvectors.rows()) != gen.n())
        throw std::invalid_argument("eigensystem does not match the generator");

    const Eigen::Index k = static_cast<Eigen::Index>(which - 1);
    const double eps_bar = eig.eigenvalues[k];
    const double scale = std::max(1e-300, eig.eigenvalues.cwiseAbs().maxCoeff());
    if (std::abs(eps_bar) <= 1e-12 * scale)
        throw NumericalError("eigenvalue of the selected eigenfunction is zero", "pcca");
    constexpr double kDegenerate = 1e-6;
    for (Eigen::Index nb : {k - 1, k + 1}) {
        if (nb < 0 || nb >= eig.eigenvalues.size()) continue;
        if (std::abs(eig.eigenvalues[nb] - eps_bar) <= kDegenerate * std::abs(eps_bar)) {
            std::ostringstream msg;
            msg << "eigenvalue " << eps_bar << " (index " << which
                << ") is degenerate; no unique slow eigenfunction to build a membership from";
            throw NumericalError(msg.str(), "pcca");
        }
    }

    const Eigen::VectorXd f = eig.vector(static_cast<std::size_t>(k));
    const double fmax = f.maxCoeff();
    const double fmin = f.minCoeff();
    if (!(fmax - fmin > 1e-14 * std::max(std::abs(fmax), std::abs(fmin))))
        throw NumericalError("selected eigenfunction is constant", "pcca");

    const double alpha_bar = 1.0 / (fmax - fmin);
    const double beta_bar = -fmin / (fmax - fmin);
    Eigen::VectorXd chi = ((f.array() - fmin) / (fmax - fmin)).matrix();

    Membership m = Membership::on_grid(gen.grid(), std::move(chi), MembershipSource::pcca_single);
    m.set_pcca_info(PccaSingleInfo{alpha_bar, beta_bar, eps_bar, which, f});
    return m;
}

namespace {

std::vector<std::size_t> inner_simplex_vertices(const Eigen::MatrixXd& x) {
    const Eigen::Index k = x.cols();
    std::vector<std::size_t> vertices;
    Eigen::Index arg = 0;
    x.rowwise().squaredNorm().maxCoeff(&arg);
    vertices.push_back(static_cast<std::size_t>(arg));
    Eigen::MatrixXd y = x.rowwise() - x.row(arg);
    for (Eigen::Index j = 1; j < k; ++j) {
        const double best = y.rowwise().squaredNorm().maxCoeff(&arg);
        vertices.push_back(static_cast<std::size_t>(arg));
        const Eigen::RowVectorXd v = y.row(arg) / std::sqrt(best);
        y -= (y * v.transpose()) * v;
    }
    return vertices;
}

struct PccaProblem {
    const Eigen::MatrixXd* x = nullptr;  // n x k, first column ones
    Eigen::MatrixXd start;               // k x k
    Eigen::Index k = 0;

    // Completes A from its lower-right block so that X A is nonnegative with
    // rows summing to one. Returns the sum of the minimal first-row entries;
    // a value above 1 means no feasible completion exists.
    double fill(Eigen::MatrixXd& a) const {
        for (Eigen::Index i = 1; i < k; ++i) a(i, 0) = -a.row(i).tail(k - 1).sum();
        const Eigen::MatrixXd lower = x->rightCols(k - 1) * a.bottomRows(k - 1);
        for (Eigen::Index j = 0; j < k; ++j) a(0, j) = -lower.col(j).minCoeff();
        return a.row(0).sum();
    }

    Eigen::MatrixXd assemble(const double* params) const {
        Eigen::MatrixXd a = start;
        for (Eigen::Index i = 1; i < k; ++i)
            for (Eigen::Index j = 1; j < k; ++j) a(i, j) = params[(i - 1) * (k - 1) + (j - 1)];
        return a;
    }

    static double crispness(const Eigen::MatrixXd& a) {
        double value = 0.0;
        for (Eigen::Index j = 0; j < a.cols(); ++j) value += a.col(j).squaredNorm() / a(0, j);
        return value;
    }

    double objective(const double* params) const {
        Eigen::MatrixXd a = assemble(params);
        const double s = fill(a);
        if (!(s <= 1.0)) return 1e3 * (1.0 + s);
        if (!(a.row(0).minCoeff() > 0.0)) return 1e6;
        a.row(0) /= s;
        return -crispness(a);
    }
};

double pcca_objective(const gsl_vector* v, void* params) {
    const auto* problem = static_cast<const PccaProblem*>(params);
    return problem->objective(gsl_vector_const_ptr(v, 0));
}

Eigen::VectorXd nelder_mead(const PccaProblem& problem, Eigen::VectorXd p, const PccaOptions& options) {
    const auto dim = static_cast<std::size_t>(p.size());
    gsl_multimin_function fn{&pcca_objective, dim, const_cast<PccaProblem*>(&problem)};
    gsl_vector* x = gsl_vector_alloc(dim);
    gsl_vector* step = gsl_vector_alloc(dim);
    gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);

    double previous = problem.objective(p.data());
    for (std::size_t restart = 0; restart <= options.restarts; ++restart) {
        for (std::size_t i = 0; i < dim; ++i) {
            gsl_vector_set(x, i, p[static_cast<Eigen::Index>(i)]);
            const double mag = std::abs(p[static_cast<Eigen::Index>(i)]);
            gsl_vector_set(step, i, mag > 0.0 ? 0.05 * mag : 2.5e-4);
        }
        gsl_multimin_fminimizer_set(solver, &fn, x, step);
        for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
            if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), options.size_tolerance) ==
                GSL_SUCCESS)
                break;
        }
        const double value = gsl_multimin_fminimizer_minimum(solver);
        if (value < previous) {
            for (std::size_t i = 0; i < dim; ++i)
                p[static_cast<Eigen::Index>(i)] = gsl_vector_get(gsl_multimin_fminimizer_x(solver), i);
        }
        const bool stalled = !(value < previous - 1e-13 * std::abs(previous));
        previous = std::min(previous, value);
        if (stalled) break;
    }
    gsl_multimin_fminimizer_free(solver);
    gsl_vector_free(step);
    gsl_vector_free(x);
    return p;
}

}  // namespace

PccaResult pcca_multi(const GeneratorMatrix& gen, const EigenSystem& eig, std::size_t n_clusters,
                      const PccaOptions& options) {
    if (n_clusters == 0 || n_clusters > eig.count())
        throw std::invalid_argument("pcca_multi: need 1 <= n_clusters <= computed eigenpairs");
    if (static_cast<std::size_t>(eig.eigenvectors.rows()) != gen.n())
        throw std::invalid_argument("eigensystem does not match the generator");

    const auto k = static_cast<Eigen::Index>(n_clusters);
    const auto n = static_cast<Eigen::Index>(gen.n());
    PccaResult result;

    if (k == 1) {
        result.memberships.push_back(
            Membership::on_grid(gen.grid(), Eigen::VectorXd::Ones(n), MembershipSource::pcca_multi));
        result.coefficients = Eigen::MatrixXd::Ones(1, 1);
        result.vertex_cells.push_back(0);
        result.crispness = 1.0;
        return result;
    }

    if (static_cast<std::size_t>(k) < eig.count()) {
        const double lk = eig.eigenvalues[k - 1];
        const double next = eig.eigenvalues[k];
        if (next - lk <= 1e-6 * std::max(std::abs(next), 1e-300)) {
            std::ostringstream msg;
            msg << "no spectral gap after eigenvalue " << k << " (" << lk << " vs " << next << ")";
            result.warnings.push_back(msg.str());
        }
    }

    Eigen::MatrixXd x = eig.eigenvectors.leftCols(k);
    x.col(0).setOnes();

    const auto vertices = inner_simplex_vertices(x);
    Eigen::MatrixXd vertex_rows(k, k);
    for (Eigen::Index j = 0; j < k; ++j) vertex_rows.row(j) = x.row(static_cast<Eigen::Index>(vertices[static_cast<std::size_t>(j)]));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(vertex_rows);
    const double cond = svd.singularValues()(0) / svd.singularValues()(k - 1);
    if (!std::isfinite(cond) || cond > 1e12) {
        std::ostringstream msg;
        msg << "PCCA+ vertex matrix is singular (condition number " << cond << ")";
        throw NumericalError(msg.str(), "pcca");
    }

    PccaProblem problem;
    problem.x = &x;
    problem.start = vertex_rows.inverse();
    problem.k = k;

    Eigen::VectorXd params((k - 1) * (k - 1));
    for (Eigen::Index i = 1; i < k; ++i)
        for (Eigen::Index j = 1; j < k; ++j) params[(i - 1) * (k - 1) + (j - 1)] = problem.start(i, j);
    // shrink towards the always-feasible A = [1/k, 0] until a completion exists
    for (int attempt = 0; attempt < 200; ++attempt) {
        Eigen::MatrixXd trial = problem.assemble(params.data());
        if (problem.fill(trial) <= 1.0) break;
        params *= 0.9;
    }

    if (options.optimize) params = nelder_mead(problem, params, options);

    Eigen::MatrixXd a = problem.assemble(params.data());
    const double s = problem.fill(a);
    if (!(s > 0.0 && s <= 1.0 + 1e-12))
        throw NumericalError("PCCA+ found no feasible transformation", "pcca");
    a.row(0) /= s;

    const Eigen::MatrixXd chi = x * a;
    for (Eigen::Index j = 0; j < k; ++j)
        result.memberships.push_back(Membership::on_grid(gen.grid(), chi.col(j), MembershipSource::pcca_multi));
    result.coefficients = a;
    result.vertex_cells = vertices;
    result.crispness = PccaProblem::crispness(a) / static_cast<double>(k);
    return result;
}

// --- committor --------------------------------------------------------------

Membership committor(const GeneratorMatrix& gen, const CoreSet& core_a, const CoreSet& core_b) {
    const RegularGrid& grid = gen.grid();
    const std::size_t n = gen.n();
    const auto cells_a = core_a.cells_on(grid);
    const auto cells_b = core_b.cells_on(grid);
    if (cells_a.empty() || cells_b.empty()) throw std::invalid_argument("committor cores must cover grid cells");

    // 0 = free, 1 = core a, 2 = core b
    std::vector<int> role(n, 0);
    for (std::size_t i : cells_a) role[i] = 1;
    for (std::size_t i : cells_b) {
        if (role[i] == 1) throw std::invalid_argument("committor cores overlap");
        role[i] = 2;
    }

    // every free component must touch a core, otherwise L*_II is singular
    std::vector<char> reached(n, 0);
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i)
        if (role[i] != 0) {
            reached[i] = 1;
            queue.push_back(i);
        }
    while (!queue.empty()) {
        const std::size_t i = queue.front();
        queue.pop_front();
        for (std::size_t j : grid.neighbors(i))
            if (!reached[j] && gen.rates().coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0) {
                reached[j] = 1;
                queue.push_back(j);
            }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!reached[i]) {
            std::size_t size = 0;
            for (std::size_t j = 0; j < n; ++j) size += reached[j] ? 0 : 1;
            std::ostringstream msg;
            msg << "committor system is singular: " << size
                << " free cells are disconnected from both cores (first cell " << i << ")";
            throw NumericalError(msg.str(), "committor");
        }

    std::vector<Eigen::Index> position(n, -1);
    Eigen::Index free_count = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (role[i] == 0) position[i] = free_count++;

    Eigen::VectorXd q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i : cells_a) q[static_cast<Eigen::Index>(i)] = 1.0;

    if (free_count > 0) {
        std::vector<Eigen::Triplet<double>> triplets;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(free_count);
        const auto& rates = gen.rates();
        for (std::size_t i = 0; i < n; ++i) {
            if (role[i] != 0) continue;
            for (SparseRowMatrix::InnerIterator it(rates, static_cast<Eigen::Index>(i)); it; ++it) {
                const auto j = static_cast<std::size_t>(it.col());
                if (role[j] == 0)
                    triplets.emplace_back(position[i], position[j], it.value());
                else if (role[j] == 1)
                    rhs[position[i]] -= it.value();
            }
        }
        Eigen::SparseMatrix<double> restricted(free_count, free_count);
        restricted.setFromTriplets(triplets.begin(), triplets.end());
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.compute(restricted);
        if (lu.info() != Eigen::Success) throw NumericalError("committor factorisation failed", "committor");
        const Eigen::VectorXd solution = lu.solve(rhs);
        for (std::size_t i = 0; i < n; ++i)
            if (role[i] == 0) q[static_cast<Eigen::Index>(i)] = std::clamp(solution[position[i]], 0.0, 1.0);
    }
    return Membership::on_grid(grid, std::move(q), MembershipSource::committor);
}

std::vector<CoreSet> cores_from_weight_threshold(const GeneratorMatrix& gen, double threshold) {
    const RegularGrid& grid = gen.grid();
    const std::size_t n = gen.n();
    std::vector<char> in(n, 0);
    for (std::size_t i = 0; i < n; ++i) in[i] = gen.weights()[static_cast<Eigen::Index>(i)] > threshold;

    std::vector<std::vector<std::size_t>> components;
    std::vector<char> seen(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!in[i] || seen[i]) continue;
        std::vector<std::size_t> comp;
        std::deque<std::size_t> queue{i};
        seen[i] = 1;
        while (!queue.empty()) {
            const std::size_t c = queue.front();
            queue.pop_front();
            comp.push_back(c);
            for (std::size_t j : grid.neighbors(c))
                if (in[j] && !seen[j]) {
                    seen[j] = 1;
                    queue.push_back(j);
                }
        }
        components.push_back(std::move(comp));
    }

    std::vector<CoreSet> cores;
    for (std::size_t c = 0; c < components.size(); ++c)
        cores.push_back(CoreSet::cells(grid, components[c], "core" + std::to_string(c)));
    std::stable_sort(cores.begin(), cores.end(), [&](const CoreSet& a, const CoreSet& b) {
        return a.centroid(grid)[0] < b.centroid(grid)[0];
    });
    return cores;
}

// --- Monte Carlo hitting membership -----------------------------------------

struct HittingSampler::Memo {
    mutable std::mutex mutex;
    std::map<std::pair<std::uint64_t, std::uint64_t>, double> values;
};

HittingSampler::HittingSampler(SdeConfig dynamics, CoreSet core, std::size_t n_traj, std::size_t max_steps)
    : dynamics_(std::move(dynamics)),
      core_(std::move(core)),
      n_traj_(n_traj),
      max_steps_(max_steps),
      memo_(std::make_unique<Memo>()) {
    if (n_traj == 0) throw std::invalid_argument("hitting sampler needs at least one trajectory");
    if (max_steps == 0) throw std::invalid_argument("hitting sampler needs at least one step");
    dynamics_.validate();
}

HittingSampler::~HittingSampler() = default;

std::size_t HittingSampler::memo_size() const {
    std::lock_guard lock(memo_->mutex);
    return memo_->values.size();
}

double HittingSampler::evaluate(const Vec2& x) const {
    const std::pair key{std::bit_cast<std::uint64_t>(x[0]), std::bit_cast<std::uint64_t>(x[1])};
    {
        std::lock_guard lock(memo_->mutex);
        if (auto it = memo_->values.find(key); it != memo_->values.end()) return it->second;
    }
    const std::uint64_t point = position_id(x);
    const auto inside = [this](const Vec2& p) { return core_.contains(p); };
    std::size_t hits = 0;
    for (std::size_t t = 0; t < n_traj_; ++t) {
        const auto stream = stream_key(dynamics_.seed, {tag(StreamTag::hitting), point, t});
        if (first_step_where(dynamics_, x, max_steps_, stream, inside)) ++hits;
    }
    const double value = static_cast<double>(hits) / static_cast<double>(n_traj_);
    std::lock_guard lock(memo_->mutex);
    memo_->values.emplace(key, value);
    return value;
}

Membership mc_hitting_membership(const SdeConfig& dynamics, const CoreSet& core, std::size_t n_traj,
                                 std::size_t max_steps, std::uint64_t seed) {
    SdeConfig config = dynamics;
    config.seed = seed;
    return Membership::sampled(std::make_shared<HittingSampler>(std::move(config), core, n_traj, max_steps),
                               MembershipSource::mc_hitting);
}

}  // namespace chi_exit
