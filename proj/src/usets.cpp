#include "cfi/usets.hpp"

#include <cmath>

namespace cfi {

// Regularized lower incomplete gamma P(a, x), series for x < a+1 and continued
// fraction otherwise; absolute tolerance 1e-12. Textbook-stable at these scales.
static double gamma_p(double a, double x) {
    if (x < 0.0) throw ConfigError("incomplete gamma needs x >= 0");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        // Series: P(a,x) = x^a e^-x / Gamma(a) * sum x^n / (a (a+1) ... (a+n)).
        double ap = a;
        double sum = 1.0 / a;
        double term = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < 1e-16 * std::abs(sum)) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Continued fraction for Q(a,x) (modified Lentz).
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-14) break;
    }
    const double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

double chi2_cdf(int k, double x) {
    if (k < 1) throw ConfigError("chi2_cdf needs k >= 1");
    if (x < 0.0) throw ConfigError("chi2_cdf needs x >= 0");
    return gamma_p(0.5 * k, 0.5 * x);
}

double analytical_coverage(int k, double delta) { return chi2_cdf(k, delta); }

Membership membership(const LatentBall& set, const Vec& y, const Vec& c) {
    if (!set.flow) throw ConfigError("latent ball has no flow");
    const Vec l = flow_inverse(*set.flow, y, c);
    const double slack = set.delta - l.squaredNorm();
    return {slack >= 0.0, slack};
}

Membership membership(const HypercubeSet& set, const Vec& y) {
    if (y.size() != set.center.size()) throw ConfigError("hypercube dimension mismatch");
    const double slack = set.delta - (y - set.center).lpNorm<Eigen::Infinity>();
    return {slack >= 0.0, slack};
}

double empirical_coverage(const LatentBall& set, const Mat& samples, const Vec& c) {
    if (samples.rows() == 0) throw ConfigError("empirical coverage needs samples");
    long hits = 0;
    for (long i = 0; i < samples.rows(); ++i)
        if (membership(set, samples.row(i).transpose(), c).member) ++hits;
    return static_cast<double>(hits) / static_cast<double>(samples.rows());
}

double empirical_coverage(const HypercubeSet& set, const Mat& samples) {
    if (samples.rows() == 0) throw ConfigError("empirical coverage needs samples");
    long hits = 0;
    for (long i = 0; i < samples.rows(); ++i)
        if (membership(set, samples.row(i).transpose()).member) ++hits;
    return static_cast<double>(hits) / static_cast<double>(samples.rows());
}

}  // namespace cfi
