#include "chi_exit/potential.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace chi_exit {

PotentialSurface::PotentialSurface(std::string name, EnergyFn energy, GradientFn gradient,
                                   Box domain)
    : name_(std::move(name)),
      energy_(std::move(energy)),
      gradient_(std::move(gradient)),
      domain_(domain) {}

namespace {

struct GaussianTerm {
    double amplitude;
    double c1;  // centre of 4*x1
    double c2;  // centre of 4*x2
};

constexpr std::array<GaussianTerm, 4> kWells{{
    {3.0, 2.0, 7.0 / 3.0},
    {-3.0, 2.0, 11.0 / 3.0},
    {-5.0, 3.0, 2.0},
    {-5.0, 1.0, 2.0},
}};

constexpr double kQuarticScale = 0.2;
constexpr double kQuarticC1 = 2.0;
constexpr double kQuarticC2 = 7.0 / 3.0;

double benchmark_energy(const Vec2& x) {
    const double s1 = 4.0 * x[0];
    const double s2 = 4.0 * x[1];
    double v = 0.0;
    for (const auto& g : kWells) {
        const double d1 = s1 - g.c1;
        const double d2 = s2 - g.c2;
        v += g.amplitude * std::exp(-d1 * d1 - d2 * d2);
    }
    const double q1 = s1 - kQuarticC1;
    const double q2 = s2 - kQuarticC2;
    v += kQuarticScale * (q1 * q1 * q1 * q1 + q2 * q2 * q2 * q2);
    return v;
}

Vec2 benchmark_gradient(const Vec2& x) {
    const double s1 = 4.0 * x[0];
    const double s2 = 4.0 * x[1];
    Vec2 g{0.0, 0.0};
    for (const auto& w : kWells) {
        const double d1 = s1 - w.c1;
        const double d2 = s2 - w.c2;
        const double e = w.amplitude * std::exp(-d1 * d1 - d2 * d2);
        // chain rule through s = 4x
        g[0] += e * (-8.0 * d1);
        g[1] += e * (-8.0 * d2);
    }
    const double q1 = s1 - kQuarticC1;
    const double q2 = s2 - kQuarticC2;
    g[0] += kQuarticScale * 16.0 * q1 * q1 * q1;
    g[1] += kQuarticScale * 16.0 * q2 * q2 * q2;
    return g;
}

}  // namespace

PotentialSurface benchmark_potential() {
    return PotentialSurface("paper2d", benchmark_energy, benchmark_gradient, unit_box());
}

PotentialSurface flat_potential(double level) {
    if (!std::isfinite(level)) throw std::invalid_argument("flat potential level must be finite");
    return PotentialSurface(
        "flat", [level](const Vec2&) { return level; },
        [](const Vec2&) { return Vec2{0.0, 0.0}; }, unit_box());
}

PotentialSurface potential_by_name(std::string_view name) {
    if (name == "paper2d") return benchmark_potential();
    if (name == "flat") return flat_potential(0.0);
    throw ConfigError("unknown potential '" + std::string(name) + "' (expected paper2d or flat)");
}

}  // namespace chi_exit
