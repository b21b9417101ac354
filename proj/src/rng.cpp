#include "cfi/rng.hpp"

#include <stdexcept>

namespace cfi {

Vec ball_sample(int k, double delta, Rng& rng) {
    if (k <= 0) throw ConfigError("ball_sample: dimension must be positive");
    if (delta < 0.0) throw ConfigError("ball_sample: delta must be >= 0");
    // Direction from an isotropic Gaussian, radius from the inverse-CDF of the
    // radial distribution in k dimensions: r = R * U^(1/k) with R = sqrt(delta).
    Vec z;
    double norm = 0.0;
    do {
        z = rng.normal_vec(k);
        norm = z.norm();
    } while (norm == 0.0);
    const double r = std::sqrt(delta) * std::pow(rng.uniform(), 1.0 / k);
    return z * (r / norm);
}

namespace {

// Primitive-polynomial parameters for Sobol dimensions 2..8 (dimension 1 is the
// van der Corput sequence): polynomial degree s, coefficient bits a, and the
// first s odd initial direction integers m_1..m_s.
struct SobolPoly {
    int s;
    uint64_t a;
    uint64_t m[8];
};

constexpr SobolPoly kPolys[] = {
    {1, 0, {1, 0, 0, 0, 0, 0, 0, 0}},
    {2, 1, {1, 3, 0, 0, 0, 0, 0, 0}},
    {3, 1, {1, 3, 1, 0, 0, 0, 0, 0}},
    {3, 2, {1, 1, 1, 0, 0, 0, 0, 0}},
    {4, 1, {1, 1, 3, 3, 0, 0, 0, 0}},
    {4, 4, {1, 3, 5, 13, 0, 0, 0, 0}},
    {5, 2, {1, 1, 5, 5, 17, 0, 0, 0}},
};
constexpr int kMaxDim = 1 + static_cast<int>(sizeof(kPolys) / sizeof(kPolys[0]));
constexpr int kBits = 64;

}  // namespace

SobolSeq::SobolSeq(int dim) : dim_(dim) {
    if (dim < 1 || dim > kMaxDim)
        throw ConfigError("SobolSeq: dimension must be in [1, " +
                                    std::to_string(kMaxDim) + "]");
    dirs_.resize(dim);
    x_.assign(dim, 0);
    // First dimension: v_j = 2^(kBits - j).
    for (int j = 0; j < kBits; ++j) dirs_[0][j] = uint64_t(1) << (kBits - 1 - j);
    for (int d = 1; d < dim; ++d) {
        const SobolPoly& p = kPolys[d - 1];
        auto& v = dirs_[d];
        for (int j = 0; j < p.s; ++j) v[j] = p.m[j] << (kBits - 1 - j);
        // Recurrence v_j = v_{j-s} ^ (v_{j-s} >> s) ^ sum of a-masked v_{j-i}.
        for (int j = p.s; j < kBits; ++j) {
            v[j] = v[j - p.s] ^ (v[j - p.s] >> p.s);
            for (int i = 1; i < p.s; ++i)
                if ((p.a >> (p.s - 1 - i)) & 1) v[j] ^= v[j - i];
        }
    }
}

Vec SobolSeq::next() {
    Vec out(dim_);
    for (int d = 0; d < dim_; ++d) out[d] = static_cast<double>(x_[d] >> 11) * 0x1.0p-53;
    // Gray-code step: flip the direction of the lowest zero bit of the index.
    uint64_t n = index_++;
    int c = 0;
    while (n & 1) {
        n >>= 1;
        ++c;
    }
    for (int d = 0; d < dim_; ++d) x_[d] ^= dirs_[d][c];
    return out;
}

}  // namespace cfi
