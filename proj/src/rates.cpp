#include "chi_exit/rates.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace chi_exit {

std::string to_string(NormKind norm) {
    return norm == NormKind::least_squares ? "ls" : "lad";
}

NormKind norm_from_string(const std::string& text) {
    if (text == "ls") return NormKind::least_squares;
    if (text == "lad") return NormKind::least_absolute;
    throw ConfigError("unknown regression norm '" + text + "' (expected ls or lad)");
}

std::string to_string(RateStatus status) {
    switch (status) {
    case RateStatus::ok: return "ok";
    case RateStatus::no_decay: return "no_decay";
    case RateStatus::noise_dominated: return "noise_dominated";
    }
    return "unknown";
}

namespace {

double median_of(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

// LAD objective for a fixed slope, with the optimal (median) intercept.
std::pair<double, double> lad_at(std::span<const double> xs, std::span<const double> ys, double slope) {
    std::vector<double> r(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) r[i] = ys[i] - slope * xs[i];
    const double intercept = median_of(r);
    double total = 0.0;
    for (double v : r) total += std::abs(v - intercept);
    return {total, intercept};
}

RegressionResult fit_lad(std::span<const double> xs, std::span<const double> ys) {
    // The objective is convex and piecewise linear in the slope; its kinks
    // are pairwise slopes, so the minimiser lies between the extreme ones.
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
            if (xs[i] == xs[j]) continue;
            const double s = (ys[j] - ys[i]) / (xs[j] - xs[i]);
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = lad_at(xs, ys, c).first, fd = lad_at(xs, ys, d).first;
    for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = lad_at(xs, ys, c).first;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = lad_at(xs, ys, d).first;
        }
    }
    RegressionResult out;
    out.gamma1 = 0.5 * (a + b);
    const auto [total, intercept] = lad_at(xs, ys, out.gamma1);
    out.gamma2 = intercept;
    out.residual_norm = total;
    return out;
}

RegressionResult fit_ls(std::span<const double> xs, std::span<const double> ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    RegressionResult out;
    out.gamma1 = sxy / sxx;
    out.gamma2 = my - out.gamma1 * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - out.gamma1 * xs[i] - out.gamma2;
        ss += r * r;
    }
    out.residual_norm = std::sqrt(ss);
    return out;
}

void finish(ExitRateReport& r) {
    r.eps1 = r.alpha + r.beta;
    r.eps2 = -r.beta;
    r.meaningful = r.eps2 < r.eps1;
}

}  // namespace

RegressionResult regress(std::span<const double> xs, std::span<const double> ys, NormKind norm) {
    if (xs.size() != ys.size()) throw std::invalid_argument("regression inputs differ in length");
    if (xs.size() < 2) throw std::invalid_argument("regression needs at least two points");
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    if (*mn == *mx) throw std::invalid_argument("regression predictor has zero variance");
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw NumericalError("non-finite regression input", "regression");

    RegressionResult out = norm == NormKind::least_squares ? fit_ls(xs, ys) : fit_lad(xs, ys);
    out.n_points = xs.size();
    out.norm_kind = norm;
    return out;
}

ExitRateReport gammas_to_rate(const RegressionResult& reg, double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("lag time tau must be positive");
    ExitRateReport r;
    r.provenance = "algorithm1";
    r.tau = tau;
    r.gamma1 = reg.gamma1;
    r.gamma2 = reg.gamma2;
    r.residual_norm = reg.residual_norm;
    r.n_points = reg.n_points;
    r.norm = reg.norm_kind;

    if (reg.gamma1 >= 1.0 || reg.gamma1 <= 0.0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.alpha = r.beta = r.eps1 = r.eps2 = r.pi_chi = nan;
        r.meaningful = false;
        if (reg.gamma1 >= 1.0) {
            r.status = RateStatus::no_decay;
            r.diagnostic = "no decay detected (gamma1 >= 1)";
        } else {
            r.status = RateStatus::noise_dominated;
            r.diagnostic = "lag time too long / noise dominated (gamma1 <= 0)";
        }
        return r;
    }
    r.alpha = -std::log(reg.gamma1) / tau;
    r.beta = r.alpha * reg.gamma2 / (reg.gamma1 - 1.0);
    finish(r);
    r.pi_chi = r.eps2 / (r.eps1 + r.eps2);
    return r;
}

ExitRateReport rate_from_eigenpair(double eps_bar, double beta_bar) {
    if (!(eps_bar > 0.0)) throw std::invalid_argument("eigenvalue must be positive");
    if (!(beta_bar >= 0.0 && beta_bar <= 1.0)) throw std::invalid_argument("beta_bar must lie in [0,1]");
    ExitRateReport r;
    r.provenance = "eigenpair";
    r.alpha = eps_bar;
    r.beta = -eps_bar * beta_bar;
    r.eps1 = eps_bar * (1.0 - beta_bar);
    r.eps2 = eps_bar * beta_bar;
    r.meaningful = r.eps2 < r.eps1;
    r.pi_chi = beta_bar;
    return r;
}

ExitRateReport regress_generator_action(const GeneratorMatrix& gen, const Membership& chi, NormKind norm) {
    const Eigen::VectorXd& x = chi.values();
    if (static_cast<std::size_t>(x.size()) != gen.n())
        throw std::invalid_argument("membership does not match the generator");
    const Eigen::VectorXd y = gen.apply(x);
    const RegressionResult reg = regress(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                                         std::span<const double>(y.data(), static_cast<std::size_t>(y.size())), norm);
    ExitRateReport r;
    r.provenance = "generator_regression";
    r.alpha = reg.gamma1;
    r.beta = reg.gamma2;
    finish(r);
    r.pi_chi = r.eps2 / (r.eps1 + r.eps2);
    r.gamma1 = reg.gamma1;
    r.gamma2 = reg.gamma2;
    r.residual_norm = reg.residual_norm;
    r.n_points = reg.n_points;
    r.norm = reg.norm_kind;
    return r;
}

double holding_probability(const ExitRateReport& report, double chi_at_x, double t) {
    if (!report.has_rate()) throw std::invalid_argument("report carries no exit rate: " + report.diagnostic);
    if (!(t >= 0.0)) throw std::invalid_argument("time must be non-negative");
    return chi_at_x * std::exp(-report.eps1 * t);
}

double chi_mean_holding_time(const ExitRateReport& report, double chi_at_x) {
    if (!report.has_rate() || !(report.eps1 > 0.0))
        throw std::invalid_argument("mean holding time needs a positive exit rate");
    return chi_at_x / report.eps1;
}

Eigen::VectorXd set_mean_holding_time(const GeneratorMatrix& gen, const std::vector<std::size_t>& region_cells) {
    const std::size_t n = gen.n();
    std::vector<Eigen::Index> position(n, -1);
    Eigen::Index m = 0;
    for (std::size_t c : region_cells) {
        if (c >= n) throw std::invalid_argument("region cell out of range");
        if (position[c] < 0) position[c] = m++;
    }
    if (m == 0) throw std::invalid_argument("region is empty");
    if (static_cast<std::size_t>(m) == n) throw std::invalid_argument("region has an empty complement");

    std::vector<Eigen::Index> cells(static_cast<std::size_t>(m));
    for (std::size_t c = 0; c < n; ++c)
        if (position[c] >= 0) cells[static_cast<std::size_t>(position[c])] = static_cast<Eigen::Index>(c);

    std::vector<Eigen::Triplet<double>> triplets;
    const auto& rates = gen.rates();
    for (Eigen::Index a = 0; a < m; ++a)
        for (SparseRowMatrix::InnerIterator it(rates, cells[static_cast<std::size_t>(a)]); it; ++it) {
            const Eigen::Index b = position[static_cast<std::size_t>(it.col())];
            if (b >= 0) triplets.emplace_back(a, b, it.value());
        }
    Eigen::SparseMatrix<double> sys(m, m);
    sys.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(sys);
    if (lu.info() != Eigen::Success)
        throw NumericalError("restricted generator is singular (region without an exit?)", "mean_holding_time");
    const Eigen::VectorXd t = lu.solve(Eigen::VectorXd::Ones(m));
    if (lu.info() != Eigen::Success || !t.allFinite())
        throw NumericalError("mean holding time solve failed", "mean_holding_time");

    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (Eigen::Index a = 0; a < m; ++a) out[cells[static_cast<std::size_t>(a)]] = t[a];
    return out;
}

Vec2 lattice_gradient(const RegularGrid& grid, const Eigen::VectorXd& values, std::size_t cell) {
    const std::size_t ix = grid.ix_of(cell), iy = grid.iy_of(cell);
    const Vec2 h = grid.spacing();
    auto diff = [&](std::size_t i, std::size_t count, double step, auto index_of) {
        if (count < 2) return 0.0;
        const std::size_t lo = i == 0 ? i : i - 1;
        const std::size_t hi = i + 1 == count ? i : i + 1;
        return (values[static_cast<Eigen::Index>(index_of(hi))] - values[static_cast<Eigen::Index>(index_of(lo))]) /
               (static_cast<double>(hi - lo) * step);
    };
    return {diff(ix, grid.nx(), h[0], [&](std::size_t k) { return grid.index(k, iy); }),
            diff(iy, grid.ny(), h[1], [&](std::size_t k) { return grid.index(ix, k); })};
}

Vec2 exit_path_direction(const Membership& chi, const Vec2& x) {
    const RegularGrid& grid = chi.grid();
    const auto cell = grid.cell_of(grid.domain().clamp(x));
    if (!cell) throw std::invalid_argument("position outside the grid");
    const Vec2 g = lattice_gradient(grid, chi.values(), *cell);
    const double norm = g.norm();
    if (norm < 1e-10) throw NumericalError("exit path undefined: at a critical point of chi", "exit_path");

    if (const auto& info = chi.pcca_info(); info && info->eigenfunction.size() == chi.values().size()) {
        const Vec2 gf = lattice_gradient(grid, info->eigenfunction, *cell);
        const double cross = g[0] * gf[1] - g[1] * gf[0];
        if (std::abs(cross) > 1e-8 * norm * gf.norm())
            throw NumericalError("membership and eigenfunction gradients are not collinear", "exit_path");
    }
    return -g / norm;
}

double dominance_timescale(double chi_level, double eps2) {
    if (!(chi_level > 0.0 && chi_level < 1.0)) throw std::invalid_argument("chi level must lie in (0,1)");
    if (!(eps2 > 0.0)) throw std::invalid_argument("penalty rate eps2 must be positive");
    return -std::log(chi_level) * chi_level / ((1.0 - chi_level) * eps2);
}

std::string report_csv_header() {
    return "provenance,status,alpha,beta,eps1,eps2,pi_chi,meaningful,tau,gamma1,gamma2,residual_norm,n_points,norm";
}

std::string report_csv_row(const ExitRateReport& r) {
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    std::ostringstream os;
    os << r.provenance << ',' << to_string(r.status) << ',' << num(r.alpha) << ',' << num(r.beta) << ','
       << num(r.eps1) << ',' << num(r.eps2) << ',' << num(r.pi_chi) << ',' << (r.meaningful ? "true" : "false")
       << ',' << num(r.tau) << ',' << num(r.gamma1) << ',' << num(r.gamma2) << ',' << num(r.residual_norm) << ','
       << r.n_points << ',' << to_string(r.norm);
    return os.str();
}

}  // namespace chi_exit
