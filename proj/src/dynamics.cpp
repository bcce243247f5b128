#include "chi_exit/dynamics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace chi_exit {

void SdeConfig::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sde sigma must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("sde dt must be > 0");
    if (antithetic) throw std::invalid_argument("antithetic sampling is not supported");
}

Vec2 step(const SdeConfig& config, const Vec2& x, const Vec2& noise) {
    const Vec2 grad = config.potential.gradient(x);
    if (!grad.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite potential gradient at (" << x[0] << ", " << x[1] << ")";
        throw NumericalError(msg.str(), "sde");
    }
    const Vec2 next = x - grad * config.dt + config.sigma * std::sqrt(config.dt) * noise;
    return config.potential.domain().clamp(next);
}

std::size_t steps_for(double tau, double dt) {
    if (!(tau >= 0.0)) throw std::invalid_argument("lag time must be non-negative");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    const double ratio = tau / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, rounded))
        throw std::invalid_argument("lag time is not a multiple of the time step");
    return static_cast<std::size_t>(rounded);
}

Vec2 run_steps(const SdeConfig& config, const Vec2& start, std::size_t n_steps, std::uint64_t key) {
    GaussianStream noise(key);
    Vec2 x = start;
    for (std::size_t s = 0; s < n_steps; ++s) x = step(config, x, noise.next2());
    return x;
}

}  // namespace chi_exit
