#pragma once

#include "cfi/common.hpp"
#include "cfi/rng.hpp"

namespace cfi {

struct DenseLayer {
    Mat W;
    Vec b;
};

// Fully connected net, ReLU after every layer except the last (last is linear).
// All arithmetic in double; gradients below are exact reverse-mode, no AD library.
struct Mlp {
    std::vector<DenseLayer> layers;

    int in_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
    int out_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
};

// Values cached by the forward pass that the backward pass needs.
struct MlpCache {
    Vec input;
    std::vector<Vec> pre;  // pre[i] = W_i * a_i + b_i
};

// Per-layer parameter gradients, same shapes as the layers. Accumulated (+=) so one
// struct can gather gradients over a whole batch.
struct MlpGrads {
    std::vector<DenseLayer> g;

    void init_like(const Mlp& net);
    void zero();
};

// hidden layers get He-uniform weights; the output layer starts near zero so a fresh
// coupling block is close to a pure rescaling.
Mlp make_mlp(int in, int hidden, int n_hidden, int out, Rng& rng);

// y = net(x); fills *cache when given.
Vec mlp_forward(const Mlp& net, const Vec& x, MlpCache* cache = nullptr);

// Given dL/dy, accumulates parameter gradients into acc and returns dL/dx.
// ReLU subgradient at exactly 0 is taken as 0.
Vec mlp_backward(const Mlp& net, const MlpCache& cache, const Vec& gy, MlpGrads& acc);

}  // namespace cfi
