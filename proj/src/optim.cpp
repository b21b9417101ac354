#include "cfi/optim.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace cfi {

NmResult nelder_mead_max(const std::function<double(const Vec&)>& fn, const Vec& x0,
                         double step, int max_evals, double ftol, double xtol) {
    const int n = static_cast<int>(x0.size());
    if (n < 1) throw ConfigError("nelder_mead_max: empty start point");
    if (max_evals < 1) throw ConfigError("nelder_mead_max: zero evaluation budget");

    int evals = 0;
    // Internally minimize -fn.
    auto eval = [&](const Vec& x) {
        ++evals;
        return -fn(x);
    };

    std::vector<Vec> pts;
    std::vector<double> val;
    pts.reserve(n + 1);
    pts.push_back(x0);
    val.push_back(eval(x0));
    for (int i = 0; i < n && evals < max_evals; ++i) {
        Vec p = x0;
        p[i] += (step != 0.0) ? step : 1.0;
        pts.push_back(p);
        val.push_back(eval(p));
    }

    // order[0] = best (lowest -fn), order.back() = worst.
    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    auto sort_order = [&] {
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return val[a] < val[b]; });
    };
    sort_order();

    constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

    while (evals < max_evals && pts.size() == static_cast<size_t>(n) + 1) {
        const int best = order.front();
        const int worst = order.back();
        const int second = order[order.size() - 2];

        double spread_f = val[worst] - val[best];
        double spread_x = 0.0;
        for (int i : order)
            spread_x = std::max(spread_x, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
        if (spread_f < ftol && spread_x < xtol) break;

        Vec centroid = Vec::Zero(n);
        for (int i : order)
            if (i != worst) centroid += pts[i];
        centroid /= n;

        const Vec xr = centroid + kReflect * (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < val[best]) {
            if (evals < max_evals) {
                const Vec xe = centroid + kExpand * (xr - centroid);
                const double fe = eval(xe);
                if (fe < fr) {
                    pts[worst] = xe;
                    val[worst] = fe;
                } else {
                    pts[worst] = xr;
                    val[worst] = fr;
                }
            } else {
                pts[worst] = xr;
                val[worst] = fr;
            }
        } else if (fr < val[second]) {
            pts[worst] = xr;
            val[worst] = fr;
        } else {
            bool contracted = false;
            if (evals < max_evals) {
                if (fr < val[worst]) {
                    const Vec xc = centroid + kContract * (xr - centroid);
                    const double fc = eval(xc);
                    if (fc <= fr) {
                        pts[worst] = xc;
                        val[worst] = fc;
                        contracted = true;
                    }
                } else {
                    const Vec xc = centroid - kContract * (centroid - pts[worst]);
                    const double fc = eval(xc);
                    if (fc < val[worst]) {
                        pts[worst] = xc;
                        val[worst] = fc;
                        contracted = true;
                    }
                }
            }
            if (!contracted) {
                // Shrink every vertex toward the best.
                for (int i : order) {
                    if (i == best) continue;
                    if (evals >= max_evals) break;
                    pts[i] = pts[best] + kShrink * (pts[i] - pts[best]);
                    val[i] = eval(pts[i]);
                }
            }
        }
        sort_order();
    }

    const int best = order.front();
    return {pts[best], -val[best], evals};
}

PatternResult pattern_search_max(const std::function<LexScore(const Vec&)>& fn,
                                 const Vec& x0, const Vec& lo, const Vec& hi, Vec step,
                                 int levels, double shrink) {
    const int n = static_cast<int>(x0.size());
    if (lo.size() != n || hi.size() != n || step.size() != n)
        throw ConfigError("pattern_search_max: dimension mismatch");
    if (shrink <= 0.0 || shrink >= 1.0)
        throw ConfigError("pattern_search_max: shrink must be in (0, 1)");

    Vec x = x0.cwiseMax(lo).cwiseMin(hi);
    LexScore score = fn(x);
    int evals = 1;
    // A strict-improvement sweep terminates on its own for well-behaved objectives;
    // the sweep cap only guards against floating-point limit cycles.
    constexpr int kMaxSweeps = 200;

    for (int level = 0; level < levels; ++level) {
        for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
            bool improved = false;
            for (int i = 0; i < n; ++i) {
                for (double sgn : {1.0, -1.0}) {
                    const double xi = mid3(lo[i], x[i] + sgn * step[i], hi[i]);
                    if (xi == x[i]) continue;
                    Vec cand = x;
                    cand[i] = xi;
                    const LexScore s = fn(cand);
                    ++evals;
                    if (lex_better(s, score)) {
                        x = std::move(cand);
                        score = s;
                        improved = true;
                    }
                }
            }
            if (!improved) break;
        }
        step *= shrink;
    }
    return {x, score, evals};
}

}  // namespace cfi
