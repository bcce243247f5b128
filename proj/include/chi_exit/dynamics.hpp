#pragma once

#include "chi_exit/common.hpp"
#include "chi_exit/potential.hpp"
#include "chi_exit/random.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>

namespace chi_exit {

enum class Boundary { clamp };

/// Euler-Maruyama setup for dx = -grad V dt + sigma dB.
struct SdeConfig {
    PotentialSurface potential = benchmark_potential();
    double sigma = 0.8;
    double dt = 0.001;
    std::uint64_t seed = 0;
    Boundary boundary = Boundary::clamp;
    /// Caps parallelism only; results never depend on it.
    std::size_t workers = 1;
    /// Reserved; antithetic sampling is not implemented and must stay off.
    bool antithetic = false;

    void validate() const;
};

/// x - grad V(x) dt + sigma sqrt(dt) noise, clamped to the potential's
/// domain. Throws NumericalError on a non-finite gradient.
Vec2 step(const SdeConfig& config, const Vec2& x, const Vec2& noise);

/// Number of Euler steps covering time tau; tau must be a non-negative
/// multiple of dt to within 1e-9 (relative to dt).
std::size_t steps_for(double tau, double dt);

/// Runs n_steps Euler steps from start on the counter stream `key`.
Vec2 run_steps(const SdeConfig& config, const Vec2& start, std::size_t n_steps, std::uint64_t key);

/// Index of the first position x_0 = start, x_1, ..., x_{max_steps} along
/// the trajectory on stream `key` for which pred holds; nullopt if none.
template <class Pred>
std::optional<std::size_t> first_step_where(const SdeConfig& config, const Vec2& start,
                                            std::size_t max_steps, std::uint64_t key, Pred&& pred) {
    if (pred(start)) return 0;
    GaussianStream noise(key);
    Vec2 x = start;
    for (std::size_t s = 1; s <= max_steps; ++s) {
        x = step(config, x, noise.next2());
        if (pred(x)) return s;
    }
    return std::nullopt;
}

}  // namespace chi_exit
