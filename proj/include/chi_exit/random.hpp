#pragma once

#include "chi_exit/common.hpp"

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace chi_exit {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Folds a master seed and a list of identifiers into one stream key.
inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t key = mix64(seed ^ 0x6A09E667F3BCC909ULL);
    for (std::uint64_t id : ids) key = mix64(key + 0x9E3779B97F4A7C15ULL + mix64(id));
    return key;
}

/// Hash of a position's bit pattern, so that per-point streams depend only
/// on the coordinates.
inline std::uint64_t position_id(const Vec2& x) noexcept {
    return mix64(std::bit_cast<std::uint64_t>(x[0]) ^ mix64(std::bit_cast<std::uint64_t>(x[1])));
}

/// Counter-based generator: the i-th output is mix64(key + i * gamma), so a
/// stream is fully determined by its key. Satisfies UniformRandomBitGenerator.
class CounterStream {
public:
    using result_type = std::uint64_t;

    explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return mix64(key_ + counter_);
    }

    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Standard normal pairs drawn from one counter stream.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t key) : bits_(key) {}

    Vec2 next2() { return {normal_(bits_), normal_(bits_)}; }
    double uniform() { return bits_.uniform(); }

private:
    CounterStream bits_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Purpose tags separating the streams of different estimators.
enum class StreamTag : std::uint64_t {
    hitting = 1,
    endpoints = 2,
    holding = 3,
    exit_times = 4,
    sample_points = 5,
    jump_process = 6,
    generic = 7,
};

inline std::uint64_t tag(StreamTag t) noexcept { return static_cast<std::uint64_t>(t); }

}  // namespace chi_exit
