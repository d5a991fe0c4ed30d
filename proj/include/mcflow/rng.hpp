#pragma once

#include <cstdint>
#include <limits>

#include "mcflow/tensor.hpp"

namespace mcflow {

/// Counter-based 64-bit generator: output i is splitmix64(key + i * golden).
/// State is a (key, counter) pair so streams can be forked without sharing
/// anything mutable. Distributions are computed here, not via <random>, so
/// streams are bit-identical across standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return next_u64(); }
    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Uniform in (0, 1); never returns 0.
    double uniform_open() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal via Box-Muller (two uniforms per draw).
    double normal() noexcept;

    /// Independent child stream; does not advance this generator.
    Rng fork(std::uint64_t stream) const noexcept;

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

Tensor randn(const Shape& shape, Rng& rng, double stddev = 1.0);
Tensor rand_uniform(const Shape& shape, Rng& rng, double lo = 0.0, double hi = 1.0);

}  // namespace mcflow
