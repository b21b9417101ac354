#pragma once

#include <array>
#include <functional>
#include <optional>

#include "cfi/data.hpp"
#include "cfi/grid.hpp"
#include "cfi/optim.hpp"
#include "cfi/usets.hpp"

namespace cfi {

// Semi-infinite feasibility problem
//     max delta  s.t.  max_l min{ g(x, map(l)), alpha * (delta - size(l)) } <= tol
// over an uncertainty set parametrized by delta: either the image of the latent
// ball { size(l) = ||l||^2 <= delta } under a flow, or a hypercube
// { size(l) = ||l||_inf <= delta } around a center. `map` takes the search point
// to the uncertain parameter y; `g` is the (design, realization) constraint
// oracle in problem units (x is null when there is nothing to design).
struct SipProblem {
    int k = 0;
    double alpha = 1.0;
    double tol_feas = 0.05;
    double delta_max = 25.0;
    bool cube = false;
    std::function<Vec(const Vec&)> map;
    std::function<double(const Vec&)> size;
    std::function<double(const Schedule*, const Vec&)> g;

    void validate() const;
    double phi(const Schedule* x, const Vec& l, double delta) const {
        return std::min(g(x, map(l)), alpha * (delta - size(l)));
    }
};

// Solver knobs (problem-defining scalars live in SipProblem).
struct SipConfig {
    int n_sobol = 32;          // lower-level quasi-random starts
    int nm_evals = 200;        // simplex budget per start
    bool grid_certify = true;  // dense-grid check for k <= 3
    int grid_per_axis = 200;
    int max_iter = 40;         // discretization iterations
    bool upper_uses_tol = false;  // loosen upper-level cuts by tol_feas/alpha
    int ps_starts = 20;        // setpoint pattern-search starts
    int ps_levels = 6;
    double ps_shrink = 0.5;
    int cert_samples = 10000;
    double cert_margin = 1e-3;
    uint64_t seed = 0;
    int threads = 1;
};

// A cut accumulated by the discretization loop.
struct Scenario {
    Vec l;             // search-space point
    Vec y;             // map(l)
    double size = 0;   // size(l)
    double value = 0;  // lower-level value when appended (> tol_feas)
    int iteration = 0;
};

struct DiscretizationState {
    std::vector<Scenario> scenarios;
    std::vector<double> delta_history;  // non-increasing
    std::vector<double> ll_values;      // lower-level value per iteration
    std::vector<Vec> x_history;         // setpoints per iteration (empty if fixed design)
    int iterations = 0;
    bool converged = false;
    std::string diagnostic;
};

struct LowerLevelResult {
    Vec l;
    Vec y;
    double size = 0;
    double value = 0;
    bool grid_checked = false;
    int evals = 0;
};

struct Certificate {
    int n_samples = 0;
    double max_g = 0;
    bool ok = false;
};

struct CfiResult {
    double delta = 0.0;
    double coverage = 0.0;  // chi-square mass of the latent ball; NaN for cubes
    std::optional<Schedule> schedule;
    DiscretizationState state;
    Certificate certificate;
};

// Analytic constraint oracles.
// g(y) = 10 - h(y) with the shifted/scaled Himmelblau polynomial h; g > 0 is the
// bounded infeasible pocket.
double himmelblau_g(const Vec& y);
// Infeasible inside the disk of radius 0.5: g(y) = 0.25 - ||y||^2.
double annulus_g(const Vec& y);

// Problem factories. Scalars: alpha, tol_feas, delta_max.
SipProblem make_ball_problem(const ConditionalFlow& flow, Vec context,
                             std::function<double(const Vec&)> g, double alpha,
                             double tol_feas, double delta_max);
SipProblem make_cube_problem(Vec center, std::function<double(const Vec&)> g, double alpha,
                             double tol_feas, double delta_max);
// SCUC variants: y is the capacity-factor vector; renewable injection is
// max(0, y) .* ren_cap for the flow set, and the cube lives in cf-space with the
// box [0,1]^N intersected (map clamps into the box).
SipProblem make_scuc_ball_problem(const GridModel& grid, const ConditionalFlow& flow,
                                  Vec context, double alpha, double tol_feas,
                                  double delta_max);
SipProblem make_scuc_cube_problem(const GridModel& grid, Vec center, double alpha,
                                  double tol_feas, double delta_max);

// Worst-case realization inside the delta-set: maximize phi over the origin plus
// n_sobol quasi-random starts in [-r, r]^k (r = sqrt(delta_max) + 1 for balls,
// delta_max for cubes), each refined by Nelder-Mead (<= nm_evals); for k <= 3 a
// dense grid over the set's bounding box additionally certifies the value (a grid
// point exceeding it is adopted and polished). Ties: value, then smaller size,
// then lower start index.
LowerLevelResult lower_level_solve(const SipProblem& p, const Schedule* x, double delta,
                                   const SipConfig& cfg);

// Largest delta honoring every cut: min(delta_max, min_k(size_k + tol_feas/alpha)).
double upper_level_fixed_design(const std::vector<Scenario>& scenarios, double delta_max,
                                double alpha, double tol_feas);

struct UpperScucResult {
    Schedule schedule;
    double delta = 0;
    std::string diagnostic;
};

// Maximize delta(P_set) over the box [0, P_max] by multi-start coordinate pattern
// search (>= 20 starts, halving steps); cuts that x deactivates (g <= tol) do not
// bind. Ties between equal-delta setpoints break toward smaller total cut
// violation. The returned schedule is re-validated against every scenario.
UpperScucResult upper_level_scuc(const GridModel& grid, const SipProblem& p,
                                 const std::vector<Scenario>& scenarios,
                                 const Vec* warm_pset, const SipConfig& cfg);

using UpperSolver = std::function<std::pair<std::optional<Schedule>, double>(
    const std::vector<Scenario>&)>;

struct BfResult {
    double delta = 0;
    std::optional<Schedule> schedule;
    DiscretizationState state;
};

// Adaptive discretization: alternate the upper solver with the worst-case lower
// level, appending each violating realization as a cut, until the certified
// lower-level value drops to tol_feas. delta_history is clamped non-increasing.
BfResult blankenship_falk(const SipProblem& p, const UpperSolver& upper,
                          const SipConfig& cfg);

// Samples cert_samples points uniformly in the delta-set and records the worst
// value of the enforced constraint min{g, alpha * (delta - size)}; ok iff
// max_g <= tol_feas + cert_margin. (Raw g may exceed tol_feas inside the
// boundary shell of width tol_feas/alpha; that slack is part of the constraint
// semantics, so certification checks the same quantity the solver bounds.)
Certificate certify(const SipProblem& p, const Schedule* x, double delta,
                    const SipConfig& cfg);

// Fixed-design solve (analytic ball or cube); attaches the chi-square coverage
// for ball sets and the sampling certificate.
CfiResult solve_cfi(const SipProblem& p, const SipConfig& cfg);
// SCUC solve: jointly picks setpoints via upper_level_scuc inside the loop.
CfiResult solve_cfi_scuc(const GridModel& grid, const SipProblem& p, const SipConfig& cfg);
// Hypercube convenience wrapper around solve_cfi.
CfiResult solve_hypercube(Vec center, std::function<double(const Vec&)> g, double alpha,
                          double tol_feas, double delta_max, const SipConfig& cfg);

// --- schedule benchmarking over a held-out capacity-factor table ---

struct BenchmarkMethod {
    std::string name;  // PREV | PREV_T | PREV_TD | CUBE | CUBE@NF-center
    const ConditionalFlow* flow = nullptr;  // solves the latent-ball problem if set
    ContextMode mode = ContextMode::Prev;   // context columns fed to `flow`
    bool cube = false;
    const ConditionalFlow* center_flow = nullptr;  // cube center = this flow at l = 0
    ContextMode center_mode = ContextMode::PrevTD;
};

struct BenchmarkConfig {
    SipConfig sip;
    double alpha_flow = 500.0;
    double alpha_cube = 50000.0;
    double tol_feas = 25.0;  // also the evaluation tolerance [MW]
    double delta_max_flow = 25.0;
    double delta_max_cube = 1.0;
};

struct MethodStats {
    std::string name;
    int n = 0;
    int feasible = 0;
    std::array<int, 24> n_hour{};
    std::array<int, 24> feas_hour{};
    int infeas_over = 0;   // window failed low: forced overproduction
    int infeas_under = 0;  // window failed high: cannot cover net demand
    int infeas_line = 0;   // window held but a line limit broke
    std::vector<double> deltas;  // per evaluated row
    std::vector<Vec> p_set;      // per evaluated row

    double share() const { return n ? static_cast<double>(feasible) / n : 0.0; }
    double share_hour(int h) const {
        return n_hour[h] ? static_cast<double>(feas_hour[h]) / n_hour[h] : 0.0;
    }
};

struct BenchmarkReport {
    std::vector<MethodStats> methods;
    std::vector<int> hour;  // hour of day per evaluated row
    double tol = 0.0;

    const MethodStats& by_name(const std::string& name) const;
};

// For each held-out hour, re-solves the day-ahead problem per method and checks
// the schedule against the realized capacity factors; reports overall and
// per-hour feasible shares plus infeasibility causes.
BenchmarkReport benchmark_schedules(const GridModel& grid,
                                    const std::vector<BenchmarkMethod>& methods,
                                    const CfTable& test_table, const BenchmarkConfig& cfg);

// Mean over datapoints at each hour of sum_n(P_set,A - P_set,B).
std::array<double, 24> delta_pset_curve(const BenchmarkReport& report,
                                        const std::string& a, const std::string& b);

}  // namespace cfi
