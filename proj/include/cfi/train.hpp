#pragma once

#include "cfi/flow.hpp"

namespace cfi {

struct TrainConfig {
    double lr = 0.005;
    double scheduler_factor = 0.5;
    int scheduler_patience = 10;       // epochs without val improvement before an LR drop
    double scheduler_min_delta = 0.0;  // strict plateau
    double earlystop_min_delta = 0.001;
    int earlystop_patience = 20;
    double grad_clip = 0.5;  // global L2 norm cap; <= 0 disables
    int batch_size = 8192;
    int max_epochs = 500;
    uint64_t seed = 0;
    bool verbose = false;

    void validate() const;
};

struct AdamState {
    Vec m, v;  // first/second moment accumulators
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    void init(int n) {
        m = Vec::Zero(n);
        v = Vec::Zero(n);
        step = 0;
    }
};

struct EpochStats {
    int epoch;  // 1-based
    double train_nll;
    double val_nll;
    double lr;
};
using History = std::vector<EpochStats>;

struct TrainResult {
    ConditionalFlow flow;  // snapshot with the best validation loss
    History history;
    double best_val_nll = 0.0;
    std::string stop_reason;
};

// Training diverged (non-finite loss or gradient); carries the last good snapshot.
struct TrainDiverged : SolveError {
    TrainDiverged(const std::string& msg, TrainResult r)
        : SolveError(msg), result(std::move(r)) {}
    TrainResult result;
};

// Mean negative log-likelihood of the batch (rows of y / c). When grad is given it
// receives d(mean NLL)/d(params) for the flat parameter vector of get_params(flow),
// computed by exact reverse-mode differentiation through the inverse pass.
double nll_loss(const ConditionalFlow& flow, const Mat& y, const Mat& c, Vec* grad = nullptr);

// In-place global L2-norm clipping; direction preserved.
void clip_gradients(Vec& grads, double max_norm);

// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, Vec& params, const Vec& grads, double lr);

// Full training loop: shuffled mini-batches, Adam, plateau LR scheduler, early
// stopping, best-validation snapshot.
TrainResult fit(const ConditionalFlow& flow, const Mat& y_train, const Mat& c_train,
                const Mat& y_val, const Mat& c_val, const TrainConfig& cfg);

std::string history_csv(const History& h);

}  // namespace cfi
