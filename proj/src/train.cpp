#include "cfi/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cfi/io.hpp"

namespace cfi {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (scheduler_patience < 1 || earlystop_patience < 1) throw ConfigError("patiences must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
}

// Per-sample NLL and parameter gradient. The loss of one sample is
//   -log p(y|c) = k/2 log(2pi) + ||l||^2/2 - k log(scale) + sum_blocks sum_j log s_j
// with l obtained by the inverse pass. Gradients flow backwards through the chain of
// inverse blocks; the running gradient g tracks dL/d(stage vector).
static double sample_nll_grad(const ConditionalFlow& f, const Vec& y, const Vec& c,
                              std::vector<MlpGrads>* acc) {
    if (!acc) return -log_prob(f, y, c);

    const size_t nb = f.blocks.size();
    std::vector<Vec> stage(nb + 1);  // stage[i+1] feeds block i's inverse; stage[0] = latent
    std::vector<CouplingCache> cache(nb);

    stage[nb] = (y + f.preproc_shift) * f.preproc_scale;
    double logdet_terms = 0.0;  // sum_blocks sum_j log s_j
    for (size_t i = nb; i-- > 0;) {
        stage[i] = coupling_inverse(f.blocks[i], stage[i + 1], c, nullptr, &cache[i]);
        for (int j = 0; j < cache[i].s.size(); ++j) logdet_terms += std::log(cache[i].s[j]);
    }

    const Vec& l = stage[0];
    const double nll = 0.5 * f.k * std::log(2.0 * M_PI) + 0.5 * l.squaredNorm() -
                       f.k * std::log(f.preproc_scale) + logdet_terms;

    // Backward: g = dL/d(stage[i]) starting at the latent end.
    Vec g = l;  // d(||l||^2/2)/dl
    for (size_t i = 0; i < nb; ++i) {
        const auto& b = f.blocks[i];
        const auto& cc = cache[i];
        const int m = static_cast<int>(b.trans_idx.size());
        const Vec& w = stage[i + 1];  // input of the inverse step
        Vec gmlp(2 * m);              // d L / d conditioner output, layout [t ; raw]
        Vec gw = g;                   // dL/dw; transformed entries overwritten below
        for (int j = 0; j < m; ++j) {
            const int tj = b.trans_idx[j];
            const double gl = g[tj];  // dL/d stage[i][tj]
            const double s = cc.s[j];
            const double lj = (w[tj] - cc.t[j]) / s;  // = stage[i][tj]
            gw[tj] = gl / s;
            const double gt = -gl / s;
            // dL/ds: through l_j = (w - t)/s and the direct log s term.
            double gs = -gl * lj / s + 1.0 / s;
            // Through the clip (pass-through inside and at the boundary) and softplus.
            if (cc.sp[j] < b.clip_lo || cc.sp[j] > b.clip_hi) gs = 0.0;
            const double sig = 1.0 / (1.0 + std::exp(-cc.raw[j]));
            gmlp[j] = gt;
            gmlp[m + j] = gs * sig;
        }
        Vec gin = mlp_backward(b.conditioner, cc.mlp, gmlp, (*acc)[i]);
        // Kept coordinates pass through and feed the conditioner.
        for (size_t j = 0; j < b.keep_idx.size(); ++j) gw[b.keep_idx[j]] += gin[j];
        g = std::move(gw);
    }
    return nll;
}

double nll_loss(const ConditionalFlow& flow, const Mat& y, const Mat& c, Vec* grad) {
    if (y.rows() == 0) throw ConfigError("empty batch");
    if (flow.context_dim > 0 && (y.rows() != c.rows() || c.cols() < flow.context_dim))
        throw ConfigError("batch context shape mismatch");
    std::vector<MlpGrads> acc;
    if (grad) {
        acc.resize(flow.blocks.size());
        for (size_t i = 0; i < flow.blocks.size(); ++i) acc[i].init_like(flow.blocks[i].conditioner);
    }
    double total = 0.0;
    Vec ctx = Vec::Zero(flow.context_dim);
    for (int r = 0; r < y.rows(); ++r) {
        if (flow.context_dim > 0) ctx = c.row(r).head(flow.context_dim).transpose();
        total += sample_nll_grad(flow, y.row(r).transpose(), ctx, grad ? &acc : nullptr);
    }
    const double inv_n = 1.0 / static_cast<double>(y.rows());
    if (grad) {
        grad->resize(param_count(flow));
        int at = 0;
        for (const auto& a : acc) {
            for (const auto& l : a.g) {
                for (int r = 0; r < l.W.rows(); ++r)
                    for (int cc2 = 0; cc2 < l.W.cols(); ++cc2) (*grad)[at++] = l.W(r, cc2) * inv_n;
                for (int i = 0; i < l.b.size(); ++i) (*grad)[at++] = l.b[i] * inv_n;
            }
        }
    }
    return total * inv_n;
}

void clip_gradients(Vec& grads, double max_norm) {
    if (max_norm <= 0.0) throw ConfigError("max_norm must be > 0");
    const double n = grads.norm();
    if (n > max_norm) grads *= max_norm / n;
}

void adam_step(AdamState& state, Vec& params, const Vec& grads, double lr) {
    if (params.size() != grads.size()) throw ConfigError("adam: param/grad size mismatch");
    if (!grads.allFinite()) throw SolveError("adam: non-finite gradient");
    if (state.m.size() != params.size()) state.init(static_cast<int>(params.size()));
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    state.m = b1 * state.m + (1.0 - b1) * grads;
    state.v = b2 * state.v + (1.0 - b2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (int i = 0; i < params.size(); ++i) {
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

TrainResult fit(const ConditionalFlow& flow0, const Mat& y_train, const Mat& c_train,
                const Mat& y_val, const Mat& c_val, const TrainConfig& cfg) {
    cfg.validate();
    if (y_train.rows() == 0 || y_val.rows() == 0) throw ConfigError("empty train or val set");

    ConditionalFlow flow = flow0;
    Vec params = get_params(flow);
    AdamState adam;
    adam.init(static_cast<int>(params.size()));
    Rng rng(cfg.seed);

    TrainResult best;
    best.flow = flow;
    best.best_val_nll = std::numeric_limits<double>::infinity();

    double lr = cfg.lr;
    double sched_best = std::numeric_limits<double>::infinity();
    int sched_bad = 0;
    double early_best = std::numeric_limits<double>::infinity();
    int early_bad = 0;

    std::vector<int> order(y_train.rows());
    std::iota(order.begin(), order.end(), 0);
    const int n = static_cast<int>(y_train.rows());

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Deterministic Fisher-Yates shuffle per epoch.
        for (int i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.below(static_cast<uint64_t>(i) + 1)]);

        for (int start = 0; start < n; start += cfg.batch_size) {
            const int len = std::min(cfg.batch_size, n - start);  // last partial batch kept
            Mat yb(len, y_train.cols()), cb(len, c_train.cols());
            for (int i = 0; i < len; ++i) {
                yb.row(i) = y_train.row(order[start + i]);
                if (c_train.cols() > 0) cb.row(i) = c_train.row(order[start + i]);
            }
            Vec grad;
            const double loss = nll_loss(flow, yb, cb, &grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                best.stop_reason = "diverged at epoch " + std::to_string(epoch);
                throw TrainDiverged("non-finite loss/gradient in epoch " + std::to_string(epoch),
                                    std::move(best));
            }
            if (cfg.grad_clip > 0.0) clip_gradients(grad, cfg.grad_clip);
            adam_step(adam, params, grad, lr);
            set_params(flow, params);
        }

        const double train_nll = nll_loss(flow, y_train, c_train);
        const double val_nll = nll_loss(flow, y_val, c_val);
        best.history.push_back({epoch, train_nll, val_nll, lr});
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %d train %.6f val %.6f lr %.6g\n", epoch, train_nll,
                         val_nll, lr);
        if (!std::isfinite(val_nll)) {
            best.stop_reason = "diverged at epoch " + std::to_string(epoch);
            throw TrainDiverged("non-finite validation loss in epoch " + std::to_string(epoch),
                                std::move(best));
        }

        if (val_nll < best.best_val_nll) {
            best.best_val_nll = val_nll;
            best.flow = flow;
        }

        // Plateau scheduler: strict improvement required (min_delta 0).
        if (val_nll < sched_best - cfg.scheduler_min_delta) {
            sched_best = val_nll;
            sched_bad = 0;
        } else if (++sched_bad >= cfg.scheduler_patience) {
            lr *= cfg.scheduler_factor;
            sched_bad = 0;
        }

        // Early stopping: needs an improvement of at least earlystop_min_delta.
        if (val_nll < early_best - cfg.earlystop_min_delta) {
            early_best = val_nll;
            early_bad = 0;
        } else if (++early_bad >= cfg.earlystop_patience) {
            best.stop_reason = "early stop at epoch " + std::to_string(epoch);
            return best;
        }
    }
    best.stop_reason = "max epochs";
    return best;
}

std::string history_csv(const History& h) {
    std::ostringstream ss;
    ss << "epoch,train_nll,val_nll,lr\n";
    for (const auto& e : h)
        ss << e.epoch << ',' << fmt_num(e.train_nll) << ',' << fmt_num(e.val_nll) << ','
           << fmt_num(e.lr) << '\n';
    return ss.str();
}

}  // namespace cfi
