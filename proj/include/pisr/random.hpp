#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace pisr {

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) noexcept;
// FNV-1a, stable across platforms.
std::uint64_t hash_string(std::string_view s) noexcept;

/// Portable random stream: mt19937_64 is fully specified by the standard and
/// the distributions below are implemented here, so sequences are identical
/// across standard libraries (std::*_distribution is not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    bool chance(double p) { return uniform() < p; }
    // Box-Muller, one variate per call.
    double normal(double mean = 0.0, double stddev = 1.0);

private:
    std::mt19937_64 engine_;
};

}  // namespace pisr
