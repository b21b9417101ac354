#pragma once

#include "cfi/data.hpp"
#include "cfi/flow.hpp"

namespace cfi {

// Regularized lower incomplete gamma P(k/2, x/2): probability that a chi-square
// variable with k degrees of freedom is <= x.
double chi2_cdf(int k, double x);

// Probability mass of the latent ball ||l||^2 <= delta under the standard Gaussian
// base density; by measure preservation this is the model-coverage of the mapped set.
double analytical_coverage(int k, double delta);

// Admissible set in latent space: { y : ||f^-1(y, c)||^2 <= delta }. delta is the
// squared radius.
struct LatentBall {
    const ConditionalFlow* flow = nullptr;
    double delta = 0.0;
};

// Admissible set in data space: { y : ||y - center||_inf <= delta }. delta is the
// half-width.
struct HypercubeSet {
    Vec center;
    double delta = 0.0;
};

struct Membership {
    bool member = false;
    double slack = 0.0;  // delta - (squared norm | inf norm); member <=> slack >= 0
};

Membership membership(const LatentBall& set, const Vec& y, const Vec& c);
Membership membership(const HypercubeSet& set, const Vec& y);

// Fraction of sample rows inside the set.
double empirical_coverage(const LatentBall& set, const Mat& samples, const Vec& c);
double empirical_coverage(const HypercubeSet& set, const Mat& samples);

}  // namespace cfi
