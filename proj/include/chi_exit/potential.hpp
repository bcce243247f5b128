#pragma once

#include "chi_exit/common.hpp"

#include <functional>
#include <string>
#include <string_view>

namespace chi_exit {

/// Potential energy V over a box, in units of k_bT. Evaluators are pure
/// functions and may be called concurrently.
class PotentialSurface {
public:
    using EnergyFn = std::function<double(const Vec2&)>;
    using GradientFn = std::function<Vec2(const Vec2&)>;

    PotentialSurface(std::string name, EnergyFn energy, GradientFn gradient, Box domain);

    double energy(const Vec2& x) const { return energy_(x); }
    Vec2 gradient(const Vec2& x) const { return gradient_(x); }
    const Box& domain() const noexcept { return domain_; }
    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
    EnergyFn energy_;
    GradientFn gradient_;
    Box domain_;
};

/// Two deep wells at (1/4, 1/2) and (3/4, 1/2), a shallower well near
/// (1/2, 11/12) and a barrier bump at (1/2, 7/12), confined by a quartic
/// centred at (1/2, 7/12). Domain [0,1]^2.
PotentialSurface benchmark_potential();

/// Constant potential with zero gradient on [0,1]^2.
PotentialSurface flat_potential(double level = 0.0);

/// Looks up a registered potential ("paper2d" or "flat").
PotentialSurface potential_by_name(std::string_view name);

}  // namespace chi_exit
