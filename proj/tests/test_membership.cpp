#include "chi_exit/membership.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace chi_exit;

namespace {

const GeneratorMatrix& benchmark() {
    static const GeneratorMatrix gen = build_sqrt_generator(benchmark_potential(), RegularGrid(50, 50));
    return gen;
}

const EigenSystem& benchmark_eig() {
    static const EigenSystem eig = eigensolve(benchmark(), 4);
    return eig;
}

// Hand-made chain generator: cells 0..n-1 in a row with the given rates
// between i and i+1 (symmetric, uniform weights).
GeneratorMatrix chain(const std::vector<double>& links) {
    const std::size_t n = links.size() + 1;
    std::vector<Eigen::Triplet<double>> t;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto a = static_cast<Eigen::Index>(i), b = a + 1;
        if (links[i] == 0.0) continue;
        t.emplace_back(a, b, -links[i]);
        t.emplace_back(b, a, -links[i]);
        diag[a] += links[i];
        diag[b] += links[i];
    }
    for (Eigen::Index i = 0; i < diag.size(); ++i) t.emplace_back(i, i, diag[i]);
    SparseRowMatrix l(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    l.setFromTriplets(t.begin(), t.end());
    return GeneratorMatrix(RegularGrid(n, 1), l, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
}

}  // namespace

TEST_CASE("pcca_single on the benchmark third eigenfunction") {
    const auto chi = pcca_single(benchmark(), benchmark_eig(), 3);
    const auto& info = *chi.pcca_info();
    CHECK(info.beta_bar == doctest::Approx(0.1965).epsilon(0.005 / 0.1965));
    CHECK(info.eps_bar == doctest::Approx(0.0086).epsilon(0.0005 / 0.0086));
    CHECK(info.eigen_index == 3);
    CHECK(chi.values().minCoeff() == 0.0);
    CHECK(chi.values().maxCoeff() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(stationary_weight_of(chi, benchmark()) == doctest::Approx(info.beta_bar).epsilon(1e-10));

    // shift-scale identity L* chi = eps_bar chi - eps_bar beta_bar
    const Eigen::VectorXd residual =
        benchmark().apply(chi.values()) - info.eps_bar * chi.values() + Eigen::VectorXd::Constant(2500, info.eps_bar * info.beta_bar);
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("pcca_single of -f is 1 - chi") {
    EigenSystem flipped = benchmark_eig();
    flipped.eigenvectors.col(2) *= -1.0;
    const auto chi = pcca_single(benchmark(), benchmark_eig(), 3);
    const auto anti = pcca_single(benchmark(), flipped, 3);
    CHECK((chi.values() + anti.values() - Eigen::VectorXd::Ones(2500)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("pcca_single rejections") {
    CHECK_THROWS_AS(pcca_single(benchmark(), benchmark_eig(), 1), std::invalid_argument);
    CHECK_THROWS_AS(pcca_single(benchmark(), benchmark_eig(), 9), std::invalid_argument);
    // the flat square has a doubly degenerate second eigenvalue
    const auto flat = build_sqrt_generator(flat_potential(), RegularGrid(10, 10));
    const auto eig = eigensolve(flat, 4);
    CHECK_THROWS_AS(pcca_single(flat, eig, 2), NumericalError);
    CHECK_THROWS_AS(pcca_single(flat, eig, 3), NumericalError);
    EigenSystem constant = eigensolve(flat, 2);
    constant.eigenvectors.col(1).setConstant(1.0);
    constant.eigenvalues[1] = 0.5;
    CHECK_THROWS_AS(pcca_single(flat, constant, 2), NumericalError);
}

TEST_CASE("pcca_multi with three clusters") {
    const auto result = pcca_multi(benchmark(), benchmark_eig(), 3);
    REQUIRE(result.memberships.size() == 3);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(2500);
    std::vector<double> weights;
    for (const auto& m : result.memberships) {
        CHECK(m.values().minCoeff() >= -1e-10);
        total += m.values();
        weights.push_back(stationary_weight_of(m, benchmark()));
    }
    CHECK((total.array() - 1.0).abs().maxCoeff() < 1e-10);

    // the constant coefficient of each cluster is its stationary weight,
    // since every other eigenvector is pi-orthogonal to 1
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(result.coefficients(0, static_cast<Eigen::Index>(j)) == doctest::Approx(weights[j]).epsilon(1e-9));

    // one deep well; which one depends on the eigenvector signs
    std::size_t best = 0;
    for (std::size_t j = 1; j < 3; ++j)
        if (std::abs(weights[j] - 0.4452) < std::abs(weights[best] - 0.4452)) best = j;
    CHECK(weights[best] == doctest::Approx(0.4452).epsilon(0.01 / 0.4452));
    const RegularGrid& grid = benchmark().grid();
    const double left = result.memberships[best](Vec2{0.25, 0.5});
    const double right = result.memberships[best](Vec2{0.75, 0.5});
    CHECK(std::max(left, right) > 0.9);
    CHECK(std::min(left, right) < 0.1);
    CHECK(grid.size() == 2500);
}

TEST_CASE("pcca_multi without optimisation still partitions unity") {
    PccaOptions plain;
    plain.optimize = false;
    const auto result = pcca_multi(benchmark(), benchmark_eig(), 3, plain);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(2500);
    for (const auto& m : result.memberships) total += m.values();
    CHECK((total.array() - 1.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("pcca_multi edge cases") {
    const auto one = pcca_multi(benchmark(), benchmark_eig(), 1);
    REQUIRE(one.memberships.size() == 1);
    CHECK((one.memberships[0].values().array() == 1.0).all());
    CHECK_THROWS_AS(pcca_multi(benchmark(), benchmark_eig(), 5), std::invalid_argument);
    CHECK_THROWS_AS(pcca_multi(benchmark(), benchmark_eig(), 0), std::invalid_argument);
}

TEST_CASE("committor on a flat three-cell chain") {
    const auto gen = build_sqrt_generator(flat_potential(), RegularGrid(3, 1));
    const auto q = committor(gen, CoreSet::cells(gen.grid(), {0}, "a"), CoreSet::cells(gen.grid(), {2}, "b"));
    CHECK(q.values()[0] == 1.0);
    CHECK(q.values()[2] == 0.0);
    CHECK(q.values()[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("committor errors") {
    const auto gen = build_sqrt_generator(flat_potential(), RegularGrid(3, 1));
    const auto& grid = gen.grid();
    CHECK_THROWS_AS(committor(gen, CoreSet::cells(grid, {0, 1}, "a"), CoreSet::cells(grid, {1}, "b")), std::invalid_argument);
    // cells 2 and 3 only talk to each other
    const auto cut = chain({1.0, 0.0, 1.0});
    CHECK_THROWS_AS(committor(cut, CoreSet::cells(cut.grid(), {0}, "a"), CoreSet::cells(cut.grid(), {1}, "b")), NumericalError);
}

TEST_CASE("benchmark cores and committor") {
    const auto cores = cores_from_weight_threshold(benchmark(), 0.0025);
    REQUIRE(cores.size() == 2);
    const auto& grid = benchmark().grid();
    CHECK(cores[0].centroid(grid)[0] < 0.5);
    CHECK(cores[1].centroid(grid)[0] > 0.5);
    CHECK(cores[0].cells_on(grid).size() == cores[1].cells_on(grid).size());

    const auto q = committor(benchmark(), cores[0], cores[1]);
    const Eigen::VectorXd lq = benchmark().apply(q.values());
    std::vector<char> in_core(2500, 0);
    for (const auto& c : cores)
        for (std::size_t i : c.cells_on(grid)) in_core[i] = 1;
    double worst = 0;
    for (Eigen::Index i = 0; i < 2500; ++i)
        if (!in_core[static_cast<std::size_t>(i)]) worst = std::max(worst, std::abs(lq[i]));
    CHECK(worst < 1e-8);
    for (std::size_t i : cores[0].cells_on(grid)) CHECK(q.values()[static_cast<Eigen::Index>(i)] == 1.0);
    for (std::size_t i : cores[1].cells_on(grid)) CHECK(q.values()[static_cast<Eigen::Index>(i)] == 0.0);
    // mirror symmetry puts exactly half the weight on each side
    CHECK(stationary_weight_of(q, benchmark()) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("grid membership evaluation clamps into the domain") {
    const RegularGrid grid(4, 4);
    Eigen::VectorXd v(16);
    for (Eigen::Index i = 0; i < 16; ++i) v[i] = static_cast<double>(i) / 15.0;
    const auto m = Membership::on_grid(grid, v, MembershipSource::custom);
    CHECK(m({0.1, 0.1}) == 0.0);
    CHECK(m({-3.0, -3.0}) == 0.0);
    CHECK(m({0.99, 0.99}) == 1.0);
    CHECK(m({2.0, 0.9}) == v[15]);
    CHECK_THROWS_AS(Membership::on_grid(grid, Eigen::VectorXd::Zero(3), MembershipSource::custom), std::invalid_argument);
}

TEST_CASE("core sets") {
    const Box domain = unit_box();
    const auto core = CoreSet::box(Box{{0.2, 0.4}, {0.3, 0.5}}, domain, "left");
    CHECK(core.contains({0.25, 0.45}));
    CHECK_FALSE(core.contains({0.31, 0.45}));
    CHECK(core.cells_on(RegularGrid(50, 50)).size() == 25);
    CHECK_THROWS_AS(CoreSet::box(Box{{0.9, 0.9}, {1.2, 1.0}}, domain, "out"), std::invalid_argument);
    CHECK_THROWS_AS(CoreSet::cells(RegularGrid(2, 2), {}, "none"), std::invalid_argument);
}

namespace {

// Deterministic gradient flow with the same step size, written out longhand.
bool flow_enters(const Vec2& start, const Box& box, int steps, double dt) {
    const auto p = benchmark_potential();
    Vec2 x = start;
    for (int s = 0; s <= steps; ++s) {
        if (box.contains(x)) return true;
        x = (x - dt * p.gradient(x)).cwiseMax(0.0).cwiseMin(1.0);
    }
    return false;
}

}  // namespace

TEST_CASE("Monte Carlo hitting membership") {
    SdeConfig dyn;
    const Box box{{0.2, 0.4}, {0.3, 0.5}};
    const auto core = CoreSet::box(box, unit_box(), "core");
    const auto chi = mc_hitting_membership(dyn, core, 100, 100, 7);
    CHECK(chi.source() == MembershipSource::mc_hitting);
    CHECK(chi({0.25, 0.45}) == 1.0);
    CHECK(chi({0.9, 0.9}) == 0.0);

    const double a = chi({0.45, 0.45});
    CHECK(a > 0.0);
    CHECK(a < 1.0);
    CHECK(chi({0.45, 0.45}) == a);
    const auto again = mc_hitting_membership(dyn, core, 100, 100, 7);
    CHECK(again({0.45, 0.45}) == a);
    const auto other = mc_hitting_membership(dyn, core, 100, 100, 8);
    CHECK(other({0.45, 0.45}) != a);

    const auto sampler = std::make_shared<HittingSampler>(dyn, core, 10, 10);
    sampler->evaluate({0.5, 0.5});
    sampler->evaluate({0.5, 0.5});
    sampler->evaluate({0.5, 0.6});
    CHECK(sampler->memo_size() == 2);
    CHECK_THROWS_AS(HittingSampler(dyn, core, 0, 10), std::invalid_argument);
}

TEST_CASE("zero-noise hitting follows the gradient flow") {
    SdeConfig still;
    still.sigma = 0.0;
    const Box box{{0.2, 0.4}, {0.3, 0.5}};
    const auto core = CoreSet::box(box, unit_box(), "core");
    const auto chi = mc_hitting_membership(still, core, 5, 100, 1);
    int hits = 0, misses = 0;
    for (double x1 : {0.15, 0.33, 0.6, 0.8})
        for (double x2 : {0.33, 0.36, 0.55}) {
            const bool enters = flow_enters({x1, x2}, box, 100, still.dt);
            CHECK(chi({x1, x2}) == (enters ? 1.0 : 0.0));
            (enters ? hits : misses)++;
        }
    CHECK(hits > 0);
    CHECK(misses > 0);
}
