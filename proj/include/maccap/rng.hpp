#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace maccap {

// splitmix64 finalizer. Used everywhere a derived stream seed is needed so
// that every random draw in the toolkit can be reproduced from a documented
// integer recipe.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic random stream with a fully specified draw rule:
//   next_u64  : one mt19937_64 output
//   uniform01 : (next_u64 >> 11) * 2^-53, in [0, 1)
//   gaussian  : Box-Muller, sqrt(-2 ln u1) * cos(2 pi u2), exactly two
//               uniform01 draws per call, u1 redrawn while zero.
// Test oracles re-derive values from this recipe without going through the
// library code under test.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        double u1 = uniform01();
        while (u1 == 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Zero-mean uniform draw with standard deviation `sigma`,
    // i.e. uniform on [-sqrt(3) sigma, sqrt(3) sigma].
    double uniform_centered(double sigma) {
        const double half_width = std::sqrt(3.0) * sigma;
        return (2.0 * uniform01() - 1.0) * half_width;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace maccap
