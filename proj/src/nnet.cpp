#include "cfi/nnet.hpp"

namespace cfi {

void MlpGrads::init_like(const Mlp& net) {
    g.resize(net.layers.size());
    for (size_t i = 0; i < net.layers.size(); ++i) {
        g[i].W = Mat::Zero(net.layers[i].W.rows(), net.layers[i].W.cols());
        g[i].b = Vec::Zero(net.layers[i].b.size());
    }
}

void MlpGrads::zero() {
    for (auto& l : g) {
        l.W.setZero();
        l.b.setZero();
    }
}

Mlp make_mlp(int in, int hidden, int n_hidden, int out, Rng& rng) {
    if (in < 0 || hidden <= 0 || n_hidden < 1 || out <= 0)
        throw ConfigError("bad MLP dimensions");
    Mlp net;
    int prev = in;
    // Uniform +-1/sqrt(fan_in) for weights and biases on every layer, the
    // default dense-layer scheme in mainstream deep-learning frameworks.
    auto dense = [&rng](int rows, int cols) {
        DenseLayer l;
        const double lim = 1.0 / std::sqrt(static_cast<double>(std::max(cols, 1)));
        l.W = Mat(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) l.W(r, c) = rng.uniform(-lim, lim);
        l.b = Vec(rows);
        for (int r = 0; r < rows; ++r) l.b[r] = rng.uniform(-lim, lim);
        return l;
    };
    for (int i = 0; i < n_hidden; ++i) {
        net.layers.push_back(dense(hidden, prev));
        prev = hidden;
    }
    net.layers.push_back(dense(out, prev));
    return net;
}

Vec mlp_forward(const Mlp& net, const Vec& x, MlpCache* cache) {
    if (net.layers.empty()) throw ConfigError("empty MLP");
    if (x.size() != net.layers.front().W.cols())
        throw ConfigError("MLP input size mismatch: got " + std::to_string(x.size()) +
                          ", expected " + std::to_string(net.layers.front().W.cols()));
    if (cache) {
        cache->input = x;
        cache->pre.clear();
        cache->pre.reserve(net.layers.size());
    }
    Vec a = x;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        Vec z = net.layers[i].W * a + net.layers[i].b;
        if (cache) cache->pre.push_back(z);
        if (i + 1 < net.layers.size())
            a = z.cwiseMax(0.0);  // ReLU; derivative at 0 treated as 0 in backward
        else
            a = std::move(z);
    }
    return a;
}

Vec mlp_backward(const Mlp& net, const MlpCache& cache, const Vec& gy, MlpGrads& acc) {
    const size_t n = net.layers.size();
    if (cache.pre.size() != n) throw ConfigError("MLP cache does not match net");
    if (acc.g.size() != n) acc.init_like(net);
    Vec g = gy;  // dL/dz for the current layer
    for (size_t i = n; i-- > 0;) {
        // Activation that fed layer i.
        if (i == 0) {
            acc.g[i].W += g * cache.input.transpose();
        } else {
            acc.g[i].W += g * cache.pre[i - 1].cwiseMax(0.0).transpose();
        }
        acc.g[i].b += g;
        Vec gprev = net.layers[i].W.transpose() * g;
        if (i > 0) {
            // ReLU mask: strictly positive pre-activation passes gradient, 0 at the kink.
            for (int j = 0; j < gprev.size(); ++j)
                if (cache.pre[i - 1][j] <= 0.0) gprev[j] = 0.0;
        }
        g = std::move(gprev);
    }
    return g;
}

}  // namespace cfi
