#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include "cfi/common.hpp"

namespace cfi {

// Deterministic random source. mt19937_64 is fully specified by the standard;
// uniforms and normals are derived here by hand (bit shift + Box-Muller) so that
// a fixed seed yields identical streams on every platform, which the std::
// distribution classes do not guarantee.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t raw() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in [a, b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Integer in [0, n).
    uint64_t below(uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller, one value cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so the log is finite.
        const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vec normal_vec(int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Point drawn uniformly from the ball { l : ||l||^2 <= delta } in R^k.
Vec ball_sample(int k, double delta, Rng& rng);

// Gray-code Sobol sequence on [0,1)^d, d <= 8 (Joe-Kuo direction numbers).
// Deterministic; successive calls to next() walk the sequence.
class SobolSeq {
public:
    explicit SobolSeq(int dim);
    Vec next();

private:
    int dim_;
    uint64_t index_ = 0;
    std::vector<std::array<uint64_t, 64>> dirs_;  // per dimension
    std::vector<uint64_t> x_;
};

}  // namespace cfi
