#include "chi_exit/rates.hpp"
#include "chi_exit/sde.hpp"

#include <doctest.h>

#include <cmath>

using namespace chi_exit;

namespace {

SdeConfig flat_config(double sigma = 0.8) {
    SdeConfig c;
    c.potential = flat_potential();
    c.sigma = sigma;
    return c;
}

struct PccaFixture {
    GeneratorMatrix gen = build_sqrt_generator(benchmark_potential(), RegularGrid(50, 50));
    EigenSystem eig = eigensolve(gen, 4);
    Membership chi = pcca_single(gen, eig, 3);
};

const PccaFixture& pcca() {
    static const PccaFixture f;
    return f;
}

}  // namespace

TEST_CASE("Euler-Maruyama step") {
    const SdeConfig flat = flat_config(0.8);
    const Vec2 x{0.4, 0.6};
    const Vec2 noise{0.3, -1.2};
    const Vec2 y = step(flat, x, noise);
    CHECK(y[0] == doctest::Approx(0.4 + 0.8 * std::sqrt(0.001) * 0.3).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.6 - 0.8 * std::sqrt(0.001) * 1.2).epsilon(1e-15));
    CHECK(step(flat_config(0.0), x, noise) == x);
    // clamping at the boundary
    CHECK(step(flat, {0.999, 0.001}, {10.0, -10.0}) == Vec2(1.0, 0.0));

    SdeConfig bad;
    bad.potential = PotentialSurface("nan", [](const Vec2&) { return 0.0; },
                                     [](const Vec2&) { return Vec2{std::nan(""), 0.0}; }, unit_box());
    try {
        step(bad, x, noise);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(e.stage() == "sde");
    }
}

TEST_CASE("zero noise descends into the right deep well") {
    SdeConfig still;
    still.sigma = 0.0;
    const Vec2 end = run_steps(still, {0.74, 0.5}, 20000, 0);
    // independent minimiser: fine grid search around the well
    const auto p = benchmark_potential();
    Vec2 best{0.75, 0.5};
    for (int i = -200; i <= 200; ++i)
        for (int j = -200; j <= 200; ++j) {
            const Vec2 q{0.75 + i * 1e-4, 0.5 + j * 1e-4};
            if (p.energy(q) < p.energy(best)) best = q;
        }
    CHECK((end - best).norm() < 2e-4);
}

TEST_CASE("steps_for") {
    CHECK(steps_for(0.05, 0.001) == 50);
    CHECK(steps_for(0.0, 0.001) == 0);
    CHECK(steps_for(100.0, 0.001) == 100000);
    CHECK_THROWS_AS(steps_for(0.0505, 0.001), std::invalid_argument);
    CHECK_THROWS_AS(steps_for(-0.1, 0.001), std::invalid_argument);
}

TEST_CASE("weak-order check on the flat potential") {
    SdeConfig flat = flat_config(0.8);
    flat.seed = 11;
    const std::size_t k = 10;
    const Vec2 x{0.5, 0.5};
    const auto stats = sample_endpoints(flat, x, k, 100000);
    Vec2 mean = Vec2::Zero();
    for (const auto& e : stats.endpoints) mean += e;
    mean /= 1e5;
    Vec2 var = Vec2::Zero();
    for (const auto& e : stats.endpoints) var += (e - mean).cwiseProduct(e - mean);
    var /= (1e5 - 1);
    const double expected = 0.8 * 0.8 * k * 0.001;
    CHECK(std::abs(var[0] / expected - 1) < 0.05);
    CHECK(std::abs(var[1] / expected - 1) < 0.05);
    CHECK((mean - x).norm() < 5 * std::sqrt(expected / 1e5) * 2);
}

TEST_CASE("ensembles are independent of the worker count") {
    SdeConfig a;
    a.seed = 5;
    SdeConfig b = a;
    b.workers = 4;
    const auto sa = sample_endpoints(a, {0.3, 0.5}, 30, 64);
    const auto sb = sample_endpoints(b, {0.3, 0.5}, 30, 64);
    CHECK(sa.endpoints == sb.endpoints);

    const Membership chi = pcca().chi;
    const std::vector<Vec2> pts{{0.2, 0.5}, {0.5, 0.5}, {0.7, 0.4}};
    CHECK(estimate_ptau_chi_batch(a, chi, pts, 0.02, 20) == estimate_ptau_chi_batch(b, chi, pts, 0.02, 20));
    CHECK(evaluate_batch(chi, pts, 1) == evaluate_batch(chi, pts, 3));

    const auto core = CoreSet::box(Box{{0.2, 0.4}, {0.3, 0.5}}, unit_box(), "core");
    const auto ha = sample_core_hitting(a, core, {0.35, 0.45}, 40, 100);
    const auto hb = sample_core_hitting(b, core, {0.35, 0.45}, 40, 100);
    CHECK(ha.hit_steps == hb.hit_steps);
}

TEST_CASE("estimate_ptau_chi") {
    const SdeConfig c;
    const RegularGrid grid(10, 10);
    const auto one = Membership::on_grid(grid, Eigen::VectorXd::Ones(100), MembershipSource::custom);
    CHECK(estimate_ptau_chi(c, one, {0.3, 0.3}, 0.05, 17) == 1.0);
    const auto& chi = pcca().chi;
    CHECK(estimate_ptau_chi(c, chi, {0.3, 0.3}, 0.0, 5) == chi({0.3, 0.3}));
    CHECK_THROWS_AS(estimate_ptau_chi(c, chi, {0.3, 0.3}, 0.0015, 5), std::invalid_argument);
}

TEST_CASE("grid Feynman-Kac matches the exponential decay law for PCCA+ chi") {
    const auto& f = pcca();
    const auto& info = *f.chi.pcca_info();
    const ExitRateReport report = rate_from_eigenpair(info.eps_bar, info.beta_bar);
    const HoldingProbabilityGrid grid(f.gen, f.chi, report.eps2);
    const Eigen::VectorXd& chi = f.chi.values();
    CHECK((grid.at(0.0) - chi).cwiseAbs().maxCoeff() < 1e-12);
    for (double t : {50.0, 100.0, 200.0}) {
        const Eigen::VectorXd p = grid.at(t);
        double worst = 0;
        for (Eigen::Index i = 0; i < chi.size(); ++i) {
            const double expected = chi[i] * std::exp(-report.eps1 * t);
            if (chi[i] >= kChiMin) worst = std::max(worst, std::abs(p[i] - expected) / expected);
            else CHECK(p[i] == 0.0);
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("Feynman-Kac basics") {
    const auto gen = build_sqrt_generator(benchmark_potential(), RegularGrid(12, 12));
    const auto one = Membership::on_grid(gen.grid(), Eigen::VectorXd::Ones(144), MembershipSource::custom);
    for (double t : {0.0, 10.0, 500.0})
        CHECK((feynman_kac_holding_grid(gen, one, 0.3, t).array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK(feynman_kac_holding_jump(gen, one, 0.3, 5, 50.0, 20, 1).mean == 1.0);

    Eigen::VectorXd v(144);
    for (Eigen::Index i = 0; i < 144; ++i) v[i] = 0.05 + 0.9 * static_cast<double>(i % 12) / 11.0;
    const auto chi = Membership::on_grid(gen.grid(), v, MembershipSource::custom);
    CHECK((feynman_kac_holding_grid(gen, chi, 0.01, 0.0) - v).cwiseAbs().maxCoeff() == 0.0);
    CHECK(feynman_kac_holding_jump(gen, chi, 0.01, 7, 0.0, 10, 3).mean == doctest::Approx(v[7]).epsilon(1e-15));
    SdeConfig sde;
    CHECK(feynman_kac_holding_mc(sde, chi, 0.01, gen.grid().center(7), 0.0, 10).mean ==
          doctest::Approx(v[7]).epsilon(1e-15));

    CHECK_THROWS_AS(feynman_kac_holding_grid(gen, chi, -1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(feynman_kac_holding_grid(gen, chi, 0.1, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(feynman_kac_holding_mc(sde, chi, 0.1, {0.5, 0.5}, -1.0, 10), std::invalid_argument);
}

TEST_CASE("the penalty only removes probability") {
    // 0 <= p(t) <= P^t chi, with equality at eps2 = 0
    const auto gen = build_sqrt_generator(benchmark_potential(), RegularGrid(12, 12));
    Eigen::VectorXd v(144);
    for (Eigen::Index i = 0; i < 144; ++i) v[i] = 0.02 + 0.96 * static_cast<double>(i % 12) / 11.0;
    const auto chi = Membership::on_grid(gen.grid(), v, MembershipSource::custom);
    const HoldingProbabilityGrid grid(gen, chi, 0.05);
    const HoldingProbabilityGrid free(gen, chi, 0.0);
    const Propagator propagator(gen);
    for (double t : {0.5, 2.0, 20.0}) {
        const Eigen::VectorXd p = grid.at(t);
        const Eigen::VectorXd upper = propagator.apply(v, t);
        CHECK(p.minCoeff() >= -1e-12);
        CHECK((p - upper).maxCoeff() <= 1e-12);
        CHECK((p - upper).minCoeff() < -1e-6);
        CHECK((free.at(t) - upper).cwiseAbs().maxCoeff() < 1e-10);

        const std::size_t cell = 100;
        const auto est = feynman_kac_holding_jump(gen, chi, 0.05, cell, t, 4000, 9);
        CHECK(est.mean <= upper[static_cast<Eigen::Index>(cell)] + 3 * est.std_error);
    }
}

TEST_CASE("holding probability of an eigenspace membership decays monotonically") {
    const auto& f = pcca();
    const auto& info = *f.chi.pcca_info();
    const HoldingProbabilityGrid grid(f.gen, f.chi, info.eps_bar * info.beta_bar);
    Eigen::VectorXd previous = grid.at(0.0);
    for (double t = 25.0; t <= 200.0; t += 25.0) {
        const Eigen::VectorXd p = grid.at(t);
        CHECK((p - previous).maxCoeff() <= 1e-14);
        previous = p;
    }
}

TEST_CASE("jump-process Feynman-Kac agrees with the grid solution") {
    const auto gen = build_sqrt_generator(benchmark_potential(), RegularGrid(12, 12));
    Eigen::VectorXd v(144);
    for (Eigen::Index i = 0; i < 144; ++i) v[i] = 0.05 + 0.9 * static_cast<double>(i % 12) / 11.0;
    const auto chi = Membership::on_grid(gen.grid(), v, MembershipSource::custom);
    const Eigen::VectorXd exact = feynman_kac_holding_grid(gen, chi, 0.2, 3.0);
    for (std::size_t cell : {13u, 70u, 130u}) {
        const auto est = feynman_kac_holding_jump(gen, chi, 0.2, cell, 3.0, 20000, 21);
        CHECK(std::abs(est.mean - exact[static_cast<Eigen::Index>(cell)]) < 4 * est.std_error);
    }
}

TEST_CASE("chi below the guard kills the trajectory") {
    const auto gen = build_sqrt_generator(flat_potential(), RegularGrid(3, 1));
    Eigen::VectorXd v(3);
    v << 1.0, 0.5, 0.0;
    const auto chi = Membership::on_grid(gen.grid(), v, MembershipSource::custom);
    const Eigen::VectorXd p = feynman_kac_holding_grid(gen, chi, 0.1, 2.0);
    CHECK(p[2] == 0.0);
    CHECK(p[0] > 0.0);
    CHECK(feynman_kac_holding_jump(gen, chi, 0.1, 2, 1.0, 10, 1).mean == 0.0);
}

TEST_CASE("set exit times") {
    const SdeConfig c;
    const auto whole = [](const Vec2&) { return true; };
    const auto all = sample_set_exit_times(c, whole, {0.5, 0.5}, 20, 200);
    CHECK(all.censored_fraction() == 1.0);
    CHECK(all.censored_mean_exit_steps() == 200.0);

    SdeConfig loud;
    loud.sigma = 20.0;
    const auto tiny = [](const Vec2& x) { return std::abs(x[0] - 0.5) < 0.01 && std::abs(x[1] - 0.5) < 0.01; };
    const auto quick = sample_set_exit_times(loud, tiny, {0.5, 0.5}, 200, 1000);
    CHECK(quick.censored_fraction() == 0.0);
    CHECK(quick.censored_mean_exit_steps() < 3.0);
    CHECK_THROWS_AS(sample_set_exit_times(c, tiny, {0.2, 0.2}, 5, 10), std::invalid_argument);
}

TEST_CASE("survival rate fit") {
    // exit steps at the exponential quantiles of rate 2 (dt = 0.001)
    TrajectoryStats stats;
    const std::size_t n = 2000;
    for (std::size_t k = 0; k < n; ++k) {
        const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
        stats.exit_steps.push_back(static_cast<std::size_t>(std::llround(-std::log(1 - u) / 2.0 / 0.001)));
    }
    const std::vector<TrajectoryStats> ens{stats};
    const auto fit = fit_survival_rate(ens, 0.001);
    CHECK(fit.fitted);
    CHECK(fit.rate == doctest::Approx(2.0).epsilon(0.03));
    CHECK(fit.exits == n);

    TrajectoryStats censored;
    censored.exit_steps.assign(10, std::nullopt);
    const std::vector<TrajectoryStats> none{censored};
    const auto empty = fit_survival_rate(none, 0.001);
    CHECK_FALSE(empty.fitted);
    CHECK(empty.censored == 10);
}
