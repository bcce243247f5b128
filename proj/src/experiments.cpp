#include "chi_exit/experiments.hpp"

#include "chi_exit/parallel.hpp"
#include "chi_exit/potential.hpp"
#include "chi_exit/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace chi_exit {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvFile {
public:
    CsvFile(const OutputDir& dir, const std::string& name, const ExperimentConfig& config, const std::string& header) {
        if (!dir) return;
        std::filesystem::create_directories(*dir);
        const auto path = *dir / name;
        out_.open(path);
        if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
        out_ << "# config_hash=" << config.hash() << " seed=" << (config.seed ? std::to_string(*config.seed) : "none")
             << '\n'
             << header << '\n';
    }

    template <class... Fields>
    void row(const Fields&... fields) {
        if (!out_.is_open()) return;
        std::size_t i = 0;
        ((out_ << (i++ ? "," : "") << cell(fields)), ...);
        out_ << '\n';
    }

private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }

    std::ofstream out_;
};

void write_report(const OutputDir& dir, const std::string& name, const ExperimentConfig& config,
                  const ExitRateReport& report) {
    if (!dir) return;
    CsvFile file(dir, name, config, report_csv_header());
    file.row(report_csv_row(report));
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

void require_grid_lag(double tau) {
    if (!(tau > 0.0)) throw ConfigError("rates.tau_grid must be positive; no decay is measurable at zero lag");
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("pearson needs two equal series of length >= 2");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

GeneratorMatrix make_generator(const ExperimentConfig& config) {
    const RegularGrid grid(config.grid.nx, config.grid.ny);
    GeneratorOptions options;
    options.kbt = config.grid.kbt;
    return build_sqrt_generator(potential_by_name(config.grid.potential), grid, options);
}

SdeConfig make_sde(const ExperimentConfig& config, std::uint64_t seed) {
    SdeConfig sde;
    sde.potential = potential_by_name(config.grid.potential);
    sde.sigma = config.sde.sigma;
    sde.dt = config.sde.dt;
    sde.seed = seed;
    sde.workers = config.workers;
    sde.validate();
    return sde;
}

// --- idea 1 -----------------------------------------------------------------

Idea1Result run_idea1(const ExperimentConfig& config, const OutputDir& out) {
    return run_idea1(config, make_generator(config), out);
}

Idea1Result run_idea1(const ExperimentConfig& config, const GeneratorMatrix& gen, const OutputDir& out) {
    const std::size_t which = config.membership.eigen_index;
    if (which > gen.n()) throw ConfigError("membership.eigen_index exceeds the number of grid cells");
    // One extra pair so that a degenerate selected eigenvalue is detected.
    EigenSystem eig = eigensolve(gen, std::min(which + 1, gen.n()));
    Membership chi = pcca_single(gen, eig, which);
    const PccaSingleInfo& info = *chi.pcca_info();
    ExitRateReport report = rate_from_eigenpair(info.eps_bar, info.beta_bar);
    report.provenance = "idea1";

    if (out) {
        const RegularGrid& grid = gen.grid();
        CsvFile chi_csv(out, "chi.csv", config, "cell,ix,iy,x1,x2,chi,eigenfunction");
        for (std::size_t i = 0; i < gen.n(); ++i) {
            const Vec2 c = grid.center(i);
            const auto e = static_cast<Eigen::Index>(i);
            chi_csv.row(i, grid.ix_of(i), grid.iy_of(i), c[0], c[1], chi.values()[e], info.eigenfunction[e]);
        }
        CsvFile eig_csv(out, "eigen.csv", config, "index,eigenvalue");
        for (std::size_t k = 0; k < eig.count(); ++k) eig_csv.row(k + 1, eig.eigenvalues[static_cast<Eigen::Index>(k)]);
        write_report(out, "report.csv", config, report);
    }
    return {std::move(eig), std::move(chi), report};
}

// --- idea 2 -----------------------------------------------------------------

Idea2Result run_idea2(const ExperimentConfig& config, const OutputDir& out) {
    return run_idea2(config, make_generator(config), out);
}

Idea2Result run_idea2(const ExperimentConfig& config, const GeneratorMatrix& gen, const OutputDir& out) {
    const std::size_t k = config.membership.n_clusters;
    if (k > gen.n()) throw ConfigError("membership.n_clusters exceeds the number of grid cells");
    EigenSystem eig = eigensolve(gen, std::min(k + 1, gen.n()));
    PccaOptions options;
    options.optimize = config.membership.pcca_optimize;
    PccaResult pcca = pcca_multi(gen, eig, k, options);

    std::vector<double> weights;
    for (const auto& m : pcca.memberships) weights.push_back(stationary_weight_of(m, gen));
    std::size_t selected = 0;
    for (std::size_t j = 1; j < weights.size(); ++j)
        if (std::abs(weights[j] - config.membership.target_weight) <
            std::abs(weights[selected] - config.membership.target_weight))
            selected = j;

    ExitRateReport report = regress_generator_action(gen, pcca.memberships[selected], config.rates.norm);
    report.provenance = "idea2";

    if (out) {
        CsvFile clusters(out, "clusters.csv", config, "cluster,weight,selected,vertex_cell");
        for (std::size_t j = 0; j < weights.size(); ++j)
            clusters.row(j, weights[j], j == selected, pcca.vertex_cells[j]);
        // Eigenvector coefficients in the pi-orthonormal basis and for unit
        // Euclidean eigenvectors; the constant term is not rescaled.
        CsvFile coeffs(out, "coefficients.csv", config, "cluster,eigen_index,coefficient_pi,coefficient_euclidean");
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t r = 0; r < k; ++r) {
                const double a = pcca.coefficients(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
                const double scale = r == 0 ? 1.0 : eig.vector(r).norm();
                coeffs.row(j, r + 1, a, a * scale);
            }
        CsvFile chi_csv(out, "chi.csv", config, "cell,x1,x2,chi");
        const auto& values = pcca.memberships[selected].values();
        for (std::size_t i = 0; i < gen.n(); ++i) {
            const Vec2 c = gen.grid().center(i);
            chi_csv.row(i, c[0], c[1], values[static_cast<Eigen::Index>(i)]);
        }
        CsvFile eig_csv(out, "eigen.csv", config, "index,eigenvalue");
        for (std::size_t r = 0; r < eig.count(); ++r) eig_csv.row(r + 1, eig.eigenvalues[static_cast<Eigen::Index>(r)]);
        write_report(out, "report.csv", config, report);
    }
    return {std::move(eig), std::move(pcca), selected, std::move(weights), report};
}

// --- idea 3 -----------------------------------------------------------------

Idea3Result run_idea3(const ExperimentConfig& config, const OutputDir& out) {
    require_grid_lag(config.rates.tau_grid);
    const GeneratorMatrix gen = make_generator(config);
    return run_idea3(config, gen, Propagator(gen), out);
}

Idea3Result run_idea3(const ExperimentConfig& config, const GeneratorMatrix& gen, const Propagator& propagator,
                      const OutputDir& out) {
    require_grid_lag(config.rates.tau_grid);
    std::vector<CoreSet> cores = cores_from_weight_threshold(gen, config.membership.core_weight_threshold);
    if (cores.size() < 2) {
        std::ostringstream msg;
        msg << "weight threshold " << config.membership.core_weight_threshold << " yields " << cores.size()
            << " core(s); two are needed";
        throw NumericalError(msg.str(), "cores");
    }
    // Leftmost core is the target (chi = 1), rightmost the reference.
    Membership chi = committor(gen, cores.front(), cores.back());
    Eigen::VectorXd propagated = propagator.apply(chi.values(), config.rates.tau_grid);
    const RegressionResult reg = regress(as_span(chi.values()), as_span(propagated), config.rates.norm);
    ExitRateReport report = gammas_to_rate(reg, config.rates.tau_grid);
    report.provenance = "idea3";

    if (out) {
        CsvFile cores_csv(out, "cores.csv", config, "core,cells,centroid_x1,centroid_x2");
        for (const auto& c : cores) {
            const Vec2 centroid = c.centroid(gen.grid());
            cores_csv.row(c.label(), c.cells_on(gen.grid()).size(), centroid[0], centroid[1]);
        }
        CsvFile scatter(out, "scatter.csv", config, "cell,x1,x2,chi,ptau_chi");
        for (std::size_t i = 0; i < gen.n(); ++i) {
            const Vec2 c = gen.grid().center(i);
            const auto e = static_cast<Eigen::Index>(i);
            scatter.row(i, c[0], c[1], chi.values()[e], propagated[e]);
        }
        write_report(out, "report.csv", config, report);
    }
    return {std::move(cores), std::move(chi), std::move(propagated), reg, report};
}

// --- idea 4 -----------------------------------------------------------------

namespace {

struct McMembership {
    Membership chi;
    std::shared_ptr<const HittingSampler> sampler;
};

McMembership idea4_membership(const ExperimentConfig& config, std::uint64_t seed) {
    const SdeConfig sde = make_sde(config, seed);
    const CoreSet core = CoreSet::box(config.membership.core_box, sde.potential.domain(), "core");
    auto sampler = std::make_shared<const HittingSampler>(sde, core, config.membership.n_traj,
                                                          config.membership.max_steps);
    return {Membership::sampled(sampler, MembershipSource::mc_hitting), sampler};
}

}  // namespace

Idea4Result run_idea4(const ExperimentConfig& config, const OutputDir& out) {
    const std::uint64_t seed = config.require_seed();
    if (!(config.rates.tau_mc > 0.0)) throw ConfigError("rates.tau_mc must be positive");
    const SdeConfig sde = make_sde(config, seed);
    steps_for(config.rates.tau_mc, sde.dt);  // rejects lags that are not a multiple of dt

    Idea4Result result;
    CounterStream points_rng(stream_key(seed, {tag(StreamTag::sample_points)}));
    const Box domain = sde.potential.domain();
    for (std::size_t p = 0; p < config.rates.n_points; ++p) {
        const double u = points_rng.uniform();
        const double v = points_rng.uniform();
        result.points.emplace_back(domain.lower[0] + u * (domain.upper[0] - domain.lower[0]),
                                   domain.lower[1] + v * (domain.upper[1] - domain.lower[1]));
    }

    const McMembership mc = idea4_membership(config, seed);
    result.chi = evaluate_batch(mc.chi, result.points, config.workers);
    result.ptau_chi = estimate_ptau_chi_batch(sde, mc.chi, result.points, config.rates.tau_mc, config.rates.ptau_n_traj);

    if (out) {
        CsvFile scatter(out, "scatter.csv", config, "point,x1,x2,chi,ptau_chi");
        for (std::size_t p = 0; p < result.points.size(); ++p)
            scatter.row(p, result.points[p][0], result.points[p][1], result.chi[p], result.ptau_chi[p]);
    }

    const auto [lo, hi] = std::minmax_element(result.chi.begin(), result.chi.end());
    if (*lo == *hi) {
        result.report.provenance = "idea4";
        result.report.status = RateStatus::noise_dominated;
        result.report.diagnostic = "membership is constant over the sample points; nothing to regress";
        result.report.tau = config.rates.tau_mc;
        result.report.n_points = result.points.size();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        result.report.alpha = result.report.beta = result.report.eps1 = result.report.eps2 = result.report.pi_chi = nan;
    } else {
        result.regression = regress(result.chi, result.ptau_chi, config.rates.norm);
        result.report = gammas_to_rate(result.regression, config.rates.tau_mc);
        result.report.provenance = "idea4";
    }
    write_report(out, "report.csv", config, result.report);
    return result;
}

// --- mean holding time comparison -------------------------------------------

CompareResult run_compare_mht(const ExperimentConfig& config, const OutputDir& out) {
    const GeneratorMatrix gen = make_generator(config);
    return run_compare_mht(config, run_idea1(config, gen, std::nullopt), gen, out);
}

CompareResult run_compare_mht(const ExperimentConfig& config, const Idea1Result& idea1, const GeneratorMatrix& gen,
                              const OutputDir& out) {
    const double threshold = config.compare.threshold;
    const Eigen::VectorXd& chi = idea1.chi.values();
    std::vector<std::size_t> region;
    for (std::size_t i = 0; i < gen.n(); ++i)
        if (chi[static_cast<Eigen::Index>(i)] > threshold) region.push_back(i);
    if (region.empty()) throw ConfigError("compare.threshold leaves the set {chi > threshold} empty");
    if (region.size() == gen.n()) throw ConfigError("compare.threshold puts every cell in the set");

    CompareResult r;
    r.chi = chi;
    r.report = idea1.report;
    r.region_size = region.size();
    r.set_time = set_mean_holding_time(gen, region);
    r.fuzzy_time.resize(chi.size());
    for (Eigen::Index i = 0; i < chi.size(); ++i) r.fuzzy_time[i] = chi_mean_holding_time(idea1.report, chi[i]);

    std::vector<double> core_t, core_t1, diff;
    for (Eigen::Index i = 0; i < chi.size(); ++i) {
        if (r.set_time[i] == 0.0) r.boundary_fuzzy_time = std::max(r.boundary_fuzzy_time, r.fuzzy_time[i]);
        if (chi[i] > 0.4) {
            core_t.push_back(r.set_time[i]);
            core_t1.push_back(r.fuzzy_time[i]);
        }
    }
    for (std::size_t c : region) {
        const auto e = static_cast<Eigen::Index>(c);
        diff.push_back(r.set_time[e] - r.fuzzy_time[e]);
    }
    r.correlation_core = core_t.size() >= 2 ? pearson(core_t, core_t1) : std::numeric_limits<double>::quiet_NaN();
    r.median_difference = median(diff);

    if (out) {
        CsvFile scatter(out, "mht_scatter.csv", config, "cell,x1,x2,chi,in_set,t_set,t_chi");
        std::vector<char> in(gen.n(), 0);
        for (std::size_t c : region) in[c] = 1;
        for (std::size_t i = 0; i < gen.n(); ++i) {
            const Vec2 c = gen.grid().center(i);
            const auto e = static_cast<Eigen::Index>(i);
            scatter.row(i, c[0], c[1], chi[e], in[i] != 0, r.set_time[e], r.fuzzy_time[e]);
        }
        CsvFile summary(out, "mht_summary.csv", config,
                        "threshold,set_cells,eps1,max_t_chi_where_t_set_zero,pearson_chi_above_0.4,median_t_set_minus_t_chi");
        summary.row(threshold, r.region_size, idea1.report.eps1, r.boundary_fuzzy_time, r.correlation_core,
                    r.median_difference);
    }
    return r;
}

// --- validation -------------------------------------------------------------

ValidateResult run_validate(const ExperimentConfig& config, const OutputDir& out) {
    const std::uint64_t seed = config.require_seed();
    const SdeConfig sde = make_sde(config, seed);
    ValidateResult r;
    r.reference = run_idea4(config, std::nullopt).report;

    // Grid realisation of the sampled membership.
    const RegularGrid grid(config.grid.nx, config.grid.ny, sde.potential.domain());
    std::vector<Vec2> centers(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) centers[i] = grid.center(i);
    const McMembership mc = idea4_membership(config, seed);
    const std::vector<double> chi_cells = evaluate_batch(mc.chi, centers, config.workers);

    std::vector<char> in_set(grid.size(), 0);
    std::vector<std::size_t> region;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (chi_cells[i] > config.validate.threshold) {
            in_set[i] = 1;
            region.push_back(i);
        }
    if (region.empty()) throw ConfigError("validate.threshold leaves the set {chi > threshold} empty");

    // Evenly spaced start cells from the region, in index order.
    const std::size_t n_starts = std::min(config.validate.n_starts, region.size());
    for (std::size_t s = 0; s < n_starts; ++s) r.start_cells.push_back(region[s * region.size() / n_starts]);

    const RegionPredicate inside = [&](const Vec2& x) {
        const auto cell = grid.cell_of(grid.domain().clamp(x));
        return cell && in_set[*cell] != 0;
    };
    std::vector<TrajectoryStats> ensembles;
    std::size_t censored = 0, total = 0;
    for (std::size_t c : r.start_cells) {
        ensembles.push_back(
            sample_set_exit_times(sde, inside, centers[c], config.validate.n_traj, config.validate.horizon_steps));
        const auto& e = ensembles.back();
        r.chi.push_back(chi_cells[c]);
        r.mean_exit_time.push_back(e.censored_mean_exit_steps() * sde.dt);
        r.censored_fraction.push_back(e.censored_fraction());
        for (const auto& s : e.exit_steps) {
            ++total;
            if (!s) ++censored;
        }
    }
    r.fully_censored = censored == total;
    r.fit = fit_survival_rate(ensembles, sde.dt);
    r.correlation = r.chi.size() >= 2 ? pearson(r.chi, r.mean_exit_time) : std::numeric_limits<double>::quiet_NaN();
    r.ratio = r.fit.fitted && r.reference.has_rate() ? r.fit.rate / r.reference.eps1
                                                      : std::numeric_limits<double>::quiet_NaN();

    if (out) {
        CsvFile points(out, "validate_points.csv", config, "cell,x1,x2,chi,mean_exit_time,censored_fraction");
        for (std::size_t s = 0; s < r.start_cells.size(); ++s) {
            const Vec2& c = centers[r.start_cells[s]];
            points.row(r.start_cells[s], c[0], c[1], r.chi[s], r.mean_exit_time[s], r.censored_fraction[s]);
        }
        CsvFile summary(out, "validate_summary.csv", config,
                        "set_cells,start_points,samples,censored,fully_censored,fitted,set_rate,eps1_reference,"
                        "rate_ratio,within_factor_3,pearson_chi_exit_time");
        const bool within = std::isfinite(r.ratio) && r.ratio > 0.0 && r.ratio <= 3.0 && r.ratio >= 1.0 / 3.0;
        summary.row(region.size(), r.start_cells.size(), total, censored, r.fully_censored, r.fit.fitted,
                    r.fit.fitted ? r.fit.rate : std::numeric_limits<double>::quiet_NaN(), r.reference.eps1, r.ratio,
                    within, r.correlation);
    }
    return r;
}

// --- dumps ------------------------------------------------------------------

void dump_generator(const ExperimentConfig& config, const OutputDir& out) {
    const GeneratorMatrix gen = make_generator(config);
    CsvFile entries(out, "generator.csv", config, "row,col,value");
    const auto& rates = gen.rates();
    for (Eigen::Index i = 0; i < rates.outerSize(); ++i)
        for (SparseRowMatrix::InnerIterator it(rates, i); it; ++it)
            entries.row(static_cast<std::size_t>(it.row()), static_cast<std::size_t>(it.col()), it.value());
    CsvFile weights(out, "weights.csv", config, "cell,x1,x2,pi");
    for (std::size_t i = 0; i < gen.n(); ++i) {
        const Vec2 c = gen.grid().center(i);
        weights.row(i, c[0], c[1], gen.weights()[static_cast<Eigen::Index>(i)]);
    }
}

void dump_eigen(const ExperimentConfig& config, const OutputDir& out) {
    const GeneratorMatrix gen = make_generator(config);
    const std::size_t k = std::min<std::size_t>(std::max(config.membership.eigen_index, config.membership.n_clusters) + 1,
                                                gen.n());
    const EigenSystem eig = eigensolve(gen, k);
    CsvFile values(out, "eigenvalues.csv", config, "index,eigenvalue");
    for (std::size_t r = 0; r < k; ++r) values.row(r + 1, eig.eigenvalues[static_cast<Eigen::Index>(r)]);
    std::string header = "cell,x1,x2";
    for (std::size_t r = 0; r < k; ++r) header += ",f" + std::to_string(r + 1);
    CsvFile vectors(out, "eigenvectors.csv", config, header);
    for (std::size_t i = 0; i < gen.n(); ++i) {
        const Vec2 c = gen.grid().center(i);
        std::string line = std::to_string(i) + "," + fmt(c[0]) + "," + fmt(c[1]);
        for (std::size_t r = 0; r < k; ++r)
            line += "," + fmt(eig.eigenvectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)));
        vectors.row(line);
    }
}

void dump_chi(const ExperimentConfig& config, const OutputDir& out) {
    const GeneratorMatrix gen = make_generator(config);
    const std::string& kind = config.membership.kind;
    Eigen::VectorXd chi;
    if (kind == "pcca_single") {
        chi = run_idea1(config, gen, std::nullopt).chi.values();
    } else if (kind == "pcca_multi") {
        const Idea2Result r = run_idea2(config, gen, std::nullopt);
        chi = r.pcca.memberships[r.selected].values();
    } else if (kind == "committor") {
        const auto cores = cores_from_weight_threshold(gen, config.membership.core_weight_threshold);
        if (cores.size() < 2) throw NumericalError("weight threshold yields fewer than two cores", "cores");
        chi = committor(gen, cores.front(), cores.back()).values();
    } else {
        std::vector<Vec2> centers(gen.n());
        for (std::size_t i = 0; i < gen.n(); ++i) centers[i] = gen.grid().center(i);
        const McMembership mc = idea4_membership(config, config.require_seed());
        const auto values = evaluate_batch(mc.chi, centers, config.workers);
        chi = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
    }
    CsvFile file(out, "chi_" + kind + ".csv", config, "cell,x1,x2,chi");
    for (std::size_t i = 0; i < gen.n(); ++i) {
        const Vec2 c = gen.grid().center(i);
        file.row(i, c[0], c[1], chi[static_cast<Eigen::Index>(i)]);
    }
}

}  // namespace chi_exit
