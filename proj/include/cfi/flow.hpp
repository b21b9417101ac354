#pragma once

#include "cfi/nnet.hpp"

namespace cfi {

// One conditional coupling step. Coordinates in keep_idx pass through unchanged and,
// concatenated with the context vector, feed the conditioner MLP; the conditioner
// output splits into [translation t ; raw scale r] for the transformed coordinates:
//   s   = clip(softplus(r) + scale_bias, clip_lo, clip_hi)
//   out = l[trans] .* s + t
// The Jacobian is triangular, so log|det| = sum(log s).
struct CouplingBlock {
    std::vector<int> keep_idx;
    std::vector<int> trans_idx;
    Mlp conditioner;
    double scale_bias = 1e-3;
    double clip_lo = 0.0;
    double clip_hi = 3.0;
};

// Intermediates needed to back-propagate through one block.
struct CouplingCache {
    MlpCache mlp;
    Vec t;    // translation
    Vec raw;  // conditioner output, scale half
    Vec sp;   // softplus(raw) + scale_bias (before clipping)
    Vec s;    // clipped scale
};

// Stack of coupling blocks plus a fixed (non-trainable) pre-scaling of the data,
//   u = (y + preproc_shift) * preproc_scale,
// applied before the inverse pass; the forward pass ends with its inverse,
//   y = u / preproc_scale - preproc_shift.
// Its log-determinant (k * log(preproc_scale)) is part of log_prob.
struct ConditionalFlow {
    int k = 0;
    int context_dim = 0;
    Vec preproc_shift;           // size k
    double preproc_scale = 1.0;
    std::vector<CouplingBlock> blocks;
};

double softplus(double x);

// Scale/translation from the kept coordinates + context; fills *cache when given.
void coupling_params(const CouplingBlock& b, const Vec& kept, const Vec& c, Vec& t, Vec& s,
                     CouplingCache* cache = nullptr);

Vec coupling_forward(const CouplingBlock& b, const Vec& l, const Vec& c, double* logdet = nullptr);
Vec coupling_inverse(const CouplingBlock& b, const Vec& y, const Vec& c, double* logdet = nullptr,
                     CouplingCache* cache = nullptr);

// Alternating contiguous half-split masks: even blocks keep the first ceil(k/2)
// coordinates, odd blocks keep the rest, so the set kept at block i is exactly the
// set transformed at block i+1.
ConditionalFlow make_flow(int k, int context_dim, int n_blocks, int hidden, int n_hidden,
                          Rng& rng, Vec preproc_shift = Vec(), double preproc_scale = 1.0);

// latent -> data. *logdet gets log|det d y / d l|.
Vec flow_forward(const ConditionalFlow& f, const Vec& l, const Vec& c, double* logdet = nullptr);
// data -> latent. *logdet gets log|det d l / d y|.
Vec flow_inverse(const ConditionalFlow& f, const Vec& y, const Vec& c, double* logdet = nullptr);

// Exact log density of y given context (change of variables through the flow).
double log_prob(const ConditionalFlow& f, const Vec& y, const Vec& c);

// n draws from the model distribution for context c, one sample per row.
Mat sample(const ConditionalFlow& f, int n, const Vec& c, Rng& rng);

// Trainable parameters (all conditioner weights/biases) as one flat vector,
// in a fixed order shared by the gradient code.
int param_count(const ConditionalFlow& f);
Vec get_params(const ConditionalFlow& f);
void set_params(ConditionalFlow& f, const Vec& p);

// Model file round-trip (JSON, schema version 1).
void save_flow(const ConditionalFlow& f, const std::string& path);
ConditionalFlow load_flow(const std::string& path);
std::string flow_to_json(const ConditionalFlow& f);
ConditionalFlow flow_from_json(const std::string& text);

}  // namespace cfi
