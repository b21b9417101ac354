#pragma once

#include <functional>
#include <thread>
#include <vector>

#include "cfi/common.hpp"

namespace cfi {

struct NmResult {
    Vec x;
    double value = 0.0;
    int evals = 0;
};

// Derivative-free simplex (Nelder-Mead) maximization of fn starting at x0 with
// initial per-coordinate displacement `step`. Stops when the evaluation budget is
// spent or the simplex collapses (value spread < ftol and vertex spread < xtol).
// Fully deterministic; the returned point is the best vertex ever kept.
NmResult nelder_mead_max(const std::function<double(const Vec&)>& fn, const Vec& x0,
                         double step, int max_evals, double ftol = 1e-12,
                         double xtol = 1e-10);

// Two-level comparison used by the setpoint search: maximize `primary`, break ties
// (exact equality) by larger `secondary`.
struct LexScore {
    double primary = 0.0;
    double secondary = 0.0;
};
inline bool lex_better(const LexScore& a, const LexScore& b) {
    if (a.primary != b.primary) return a.primary > b.primary;
    return a.secondary > b.secondary;
}

struct PatternResult {
    Vec x;
    LexScore score;
    int evals = 0;
};

// Coordinate pattern search maximizing a lexicographic objective over the box
// [lo, hi]: poll +/- step on each coordinate, accept strict improvements, sweep to
// a fixed point, then shrink the step `levels` times by `shrink`. Deterministic.
PatternResult pattern_search_max(const std::function<LexScore(const Vec&)>& fn,
                                 const Vec& x0, const Vec& lo, const Vec& hi, Vec step,
                                 int levels, double shrink);

// Runs fn(i) for i in [0, n) on up to `threads` workers over contiguous index
// chunks. Each call must write only to its own index's slot in caller-owned
// storage, so any later reduction happens in index order and is deterministic.
template <typename F>
void parallel_for(int n, int threads, F&& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk;
        const int end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([begin, end, &fn] {
            for (int i = begin; i < end; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace cfi
