#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace chi_exit {

using Vec2 = Eigen::Vector2d;

/// Axis-aligned box in the plane.
struct Box {
    Vec2 lower{0.0, 0.0};
    Vec2 upper{1.0, 1.0};

    bool contains(const Vec2& x) const {
        return x[0] >= lower[0] && x[0] <= upper[0] && x[1] >= lower[1] && x[1] <= upper[1];
    }

    Vec2 clamp(const Vec2& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    bool inside(const Box& outer) const {
        return outer.contains(lower) && outer.contains(upper);
    }
};

inline Box unit_box() { return Box{}; }

/// Rejected configuration or input file. Maps to exit code 2 in the CLI.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical stage failed (singular system, no convergence, overflow).
/// Maps to exit code 3 in the CLI.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, std::string stage = {})
        : std::runtime_error(what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace chi_exit
