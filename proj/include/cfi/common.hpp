#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Bad option / config file / argument combination. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or out-of-range input data. CLI maps this to exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
    DataError(const std::string& file, long line, const std::string& msg)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg) {}
};

// Solver failed to reach its termination criterion. CLI maps this to exit code 4.
struct SolveError : std::runtime_error {
    explicit SolveError(const std::string& msg) : std::runtime_error(msg) {}
};

// Fixed formatting for every numeric value that ends up in an output file:
// 9 significant digits, locale-independent.
std::string fmt_num(double v);

inline double sqr(double x) { return x * x; }

inline double mid3(double lo, double x, double hi) {
    return std::max(lo, std::min(x, hi));
}

}  // namespace cfi
