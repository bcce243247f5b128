#include "chi_exit/sde.hpp"

#include "chi_exit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace chi_exit {

std::size_t TrajectoryStats::size() const noexcept {
    return std::max({endpoints.size(), hit_steps.size(), exit_steps.size()});
}

double TrajectoryStats::censored_fraction() const {
    if (exit_steps.empty()) return 0.0;
    const auto censored = std::count_if(exit_steps.begin(), exit_steps.end(), [](const auto& s) { return !s; });
    return static_cast<double>(censored) / static_cast<double>(exit_steps.size());
}

double TrajectoryStats::censored_mean_exit_steps() const {
    if (exit_steps.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : exit_steps) total += static_cast<double>(s ? *s : horizon_steps);
    return total / static_cast<double>(exit_steps.size());
}

namespace {

McEstimate summarize(const std::vector<double>& samples) {
    McEstimate est;
    est.samples = samples.size();
    if (samples.empty()) return est;
    double sum = 0.0;
    for (double v : samples) sum += v;
    est.mean = sum / static_cast<double>(samples.size());
    if (samples.size() > 1) {
        double ss = 0.0;
        for (double v : samples) ss += (v - est.mean) * (v - est.mean);
        const double var = ss / static_cast<double>(samples.size() - 1);
        est.std_error = std::sqrt(var / static_cast<double>(samples.size()));
    }
    return est;
}

void require_holding_args(double eps2, double t) {
    if (!(eps2 >= 0.0)) throw std::invalid_argument("penalty rate eps2 must be non-negative");
    if (!(t >= 0.0)) throw std::invalid_argument("holding time horizon must be non-negative");
}

}  // namespace

TrajectoryStats sample_endpoints(const SdeConfig& config, const Vec2& x, std::size_t n_steps, std::size_t n_traj) {
    config.validate();
    TrajectoryStats stats;
    stats.start = x;
    stats.horizon_steps = n_steps;
    stats.endpoints.resize(n_traj);
    const std::uint64_t point = position_id(x);
    parallel_for(n_traj, config.workers, [&](std::size_t k) {
        stats.endpoints[k] = run_steps(config, x, n_steps, stream_key(config.seed, {tag(StreamTag::endpoints), point, k}));
    });
    return stats;
}

TrajectoryStats sample_core_hitting(const SdeConfig& config, const CoreSet& core, const Vec2& x,
                                    std::size_t n_traj, std::size_t max_steps) {
    config.validate();
    TrajectoryStats stats;
    stats.start = x;
    stats.horizon_steps = max_steps;
    stats.hit_steps.resize(n_traj);
    const std::uint64_t point = position_id(x);
    parallel_for(n_traj, config.workers, [&](std::size_t k) {
        stats.hit_steps[k] = first_step_where(config, x, max_steps,
                                              stream_key(config.seed, {tag(StreamTag::hitting), point, k}),
                                              [&](const Vec2& p) { return core.contains(p); });
    });
    return stats;
}

std::vector<double> evaluate_batch(const Membership& chi, std::span<const Vec2> points, std::size_t workers) {
    std::vector<double> out(points.size());
    parallel_for(points.size(), workers, [&](std::size_t i) { out[i] = chi(points[i]); });
    return out;
}

std::vector<double> estimate_ptau_chi_batch(const SdeConfig& config, const Membership& chi,
                                            std::span<const Vec2> points, double tau, std::size_t n_traj) {
    config.validate();
    if (n_traj == 0) throw std::invalid_argument("estimate_ptau_chi needs at least one trajectory");
    const std::size_t steps = steps_for(tau, config.dt);
    std::vector<double> values(points.size() * n_traj);
    parallel_for(values.size(), config.workers, [&](std::size_t idx) {
        const std::size_t p = idx / n_traj;
        const std::size_t k = idx % n_traj;
        const auto key = stream_key(config.seed, {tag(StreamTag::endpoints), position_id(points[p]), k});
        values[idx] = chi(run_steps(config, points[p], steps, key));
    });
    std::vector<double> means(points.size(), 0.0);
    for (std::size_t p = 0; p < points.size(); ++p) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n_traj; ++k) sum += values[p * n_traj + k];
        means[p] = sum / static_cast<double>(n_traj);
    }
    return means;
}

double estimate_ptau_chi(const SdeConfig& config, const Membership& chi, const Vec2& x, double tau,
                         std::size_t n_traj) {
    const Vec2 point[1] = {x};
    return estimate_ptau_chi_batch(config, chi, point, tau, n_traj).front();
}

McEstimate feynman_kac_holding_mc(const SdeConfig& config, const Membership& chi, double eps2, const Vec2& x,
                                  double t, std::size_t n_traj, double chi_min) {
    config.validate();
    require_holding_args(eps2, t);
    if (n_traj == 0) throw std::invalid_argument("feynman_kac_holding_mc needs at least one trajectory");
    const std::size_t steps = steps_for(t, config.dt);
    const std::uint64_t point = position_id(x);
    std::vector<double> weights(n_traj, 0.0);
    parallel_for(n_traj, config.workers, [&](std::size_t k) {
        GaussianStream noise(stream_key(config.seed, {tag(StreamTag::holding), point, k}));
        Vec2 pos = x;
        double penalty = 0.0;
        for (std::size_t r = 0; r < steps; ++r) {
            const double c = chi(pos);
            if (c < chi_min) return;  // exp(-inf) = 0
            penalty += config.dt * (1.0 - c) / c;
            pos = step(config, pos, noise.next2());
        }
        weights[k] = chi(pos) * std::exp(-eps2 * penalty);
    });
    return summarize(weights);
}

McEstimate feynman_kac_holding_jump(const GeneratorMatrix& gen, const Membership& chi, double eps2,
                                    std::size_t cell, double t, std::size_t n_traj, std::uint64_t seed,
                                    double chi_min) {
    require_holding_args(eps2, t);
    if (cell >= gen.n()) throw std::invalid_argument("start cell out of range");
    if (n_traj == 0) throw std::invalid_argument("feynman_kac_holding_jump needs at least one trajectory");
    const Eigen::VectorXd& values = chi.values();
    if (static_cast<std::size_t>(values.size()) != gen.n())
        throw std::invalid_argument("membership does not match the generator");
    const auto& rates = gen.rates();

    std::vector<double> weights(n_traj, 0.0);
    for (std::size_t k = 0; k < n_traj; ++k) {
        CounterStream rng(stream_key(seed, {tag(StreamTag::jump_process), cell, k}));
        auto i = static_cast<Eigen::Index>(cell);
        double clock = 0.0;
        double penalty = 0.0;
        bool killed = false;
        for (;;) {
            const double c = values[i];
            if (c < chi_min) {
                killed = true;
                break;
            }
            const double out_rate = rates.coeff(i, i);
            const double hold = out_rate > 0.0 ? -std::log1p(-rng.uniform()) / out_rate
                                               : std::numeric_limits<double>::infinity();
            const double stay = std::min(hold, t - clock);
            penalty += stay * (1.0 - c) / c;
            clock += stay;
            if (clock >= t) break;
            double u = rng.uniform() * out_rate;
            Eigen::Index next = i;
            for (SparseRowMatrix::InnerIterator it(rates, i); it; ++it) {
                if (it.col() == i) continue;
                next = it.col();
                u += it.value();  // off-diagonal entries are -rate
                if (u < 0.0) break;
            }
            i = next;
        }
        if (!killed) weights[k] = values[i] * std::exp(-eps2 * penalty);
    }
    return summarize(weights);
}

HoldingProbabilityGrid::HoldingProbabilityGrid(const GeneratorMatrix& gen, const Membership& chi, double eps2,
                                               double chi_min, const SpectralOptions& options)
    : n_(gen.n()) {
    require_holding_args(eps2, 0.0);
    const Eigen::VectorXd& values = chi.values();
    if (static_cast<std::size_t>(values.size()) != gen.n())
        throw std::invalid_argument("membership does not match the generator");

    std::vector<Eigen::Index> position(n_, -1);
    for (std::size_t i = 0; i < n_; ++i)
        if (values[static_cast<Eigen::Index>(i)] >= chi_min) {
            position[i] = static_cast<Eigen::Index>(active_.size());
            active_.push_back(static_cast<Eigen::Index>(i));
        }
    const auto m = static_cast<Eigen::Index>(active_.size());
    sqrt_weights_.resize(m);
    initial_.resize(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        sqrt_weights_[a] = std::sqrt(gen.weights()[active_[static_cast<std::size_t>(a)]]);
        initial_[a] = values[active_[static_cast<std::size_t>(a)]];
    }
    if (m == 0) return;

    const SparseRowMatrix sym = gen.symmetrized();
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index a = 0; a < m; ++a) {
        const Eigen::Index i = active_[static_cast<std::size_t>(a)];
        const double c = values[i];
        triplets.emplace_back(a, a, eps2 * (1.0 - c) / c);
        for (SparseRowMatrix::InnerIterator it(sym, i); it; ++it) {
            const Eigen::Index b = position[static_cast<std::size_t>(it.col())];
            if (b >= 0) triplets.emplace_back(a, b, it.value());
        }
    }
    SparseRowMatrix op(m, m);
    op.setFromTriplets(triplets.begin(), triplets.end());
    semigroup_.emplace(op, options);
}

Eigen::VectorXd HoldingProbabilityGrid::at(double t) const {
    if (!(t >= 0.0)) throw std::invalid_argument("holding time horizon must be non-negative");
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    if (!semigroup_) return p;
    const Eigen::VectorXd w =
        t == 0.0 ? initial_ : Eigen::VectorXd(semigroup_->apply(sqrt_weights_.cwiseProduct(initial_), t)
                                                  .cwiseQuotient(sqrt_weights_));
    for (std::size_t a = 0; a < active_.size(); ++a) p[active_[a]] = w[static_cast<Eigen::Index>(a)];
    return p;
}

Eigen::VectorXd feynman_kac_holding_grid(const GeneratorMatrix& gen, const Membership& chi, double eps2,
                                         double t, double chi_min) {
    require_holding_args(eps2, t);
    return HoldingProbabilityGrid(gen, chi, eps2, chi_min).at(t);
}

TrajectoryStats sample_set_exit_times(const SdeConfig& config, const RegionPredicate& region, const Vec2& x,
                                      std::size_t n_traj, std::size_t horizon_steps) {
    config.validate();
    if (!region(x)) throw std::invalid_argument("exit-time start point lies outside the region");
    TrajectoryStats stats;
    stats.start = x;
    stats.horizon_steps = horizon_steps;
    stats.exit_steps.resize(n_traj);
    const std::uint64_t point = position_id(x);
    parallel_for(n_traj, config.workers, [&](std::size_t k) {
        stats.exit_steps[k] = first_step_where(config, x, horizon_steps,
                                               stream_key(config.seed, {tag(StreamTag::exit_times), point, k}),
                                               [&](const Vec2& p) { return !region(p); });
    });
    return stats;
}

SurvivalFit fit_survival_rate(std::span<const TrajectoryStats> ensembles, double dt) {
    SurvivalFit fit;
    std::vector<double> exits;
    std::size_t total = 0;
    for (const auto& e : ensembles)
        for (const auto& s : e.exit_steps) {
            ++total;
            if (s)
                exits.push_back(static_cast<double>(*s) * dt);
            else
                ++fit.censored;
        }
    fit.exits = exits.size();
    if (exits.empty()) return fit;
    std::sort(exits.begin(), exits.end());

    // survival just after each distinct exit time
    std::vector<double> ts;
    std::vector<double> logs;
    for (std::size_t i = 0; i < exits.size(); ++i) {
        if (i + 1 < exits.size() && exits[i + 1] == exits[i]) continue;
        const double surviving = static_cast<double>(total - (i + 1));
        if (surviving <= 0.0) break;
        ts.push_back(exits[i]);
        logs.push_back(std::log(surviving / static_cast<double>(total)));
    }
    if (ts.empty()) return fit;
    if (ts.size() == 1) {
        fit.rate = -logs[0] / std::max(ts[0], dt);
        fit.fitted = true;
        return fit;
    }
    const double m = static_cast<double>(ts.size());
    double st = 0.0, sl = 0.0, stt = 0.0, stl = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        st += ts[i];
        sl += logs[i];
        stt += ts[i] * ts[i];
        stl += ts[i] * logs[i];
    }
    const double denom = m * stt - st * st;
    if (denom <= 0.0) return fit;
    const double slope = (m * stl - st * sl) / denom;
    fit.rate = -slope;
    fit.intercept = (sl - slope * st) / m;
    fit.fitted = true;
    return fit;
}

}  // namespace chi_exit
