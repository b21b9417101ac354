#pragma once

#include "cfi/flow.hpp"

namespace cfi {

struct Line {
    int from = 0;           // originating bus o(li), 0-based
    int to = 0;             // terminating bus t(li)
    double admittance = 0;  // h_li [MW/rad]
    double capacity = 0;    // P_nom,li [MW]
};

struct GridModel {
    std::vector<Line> lines;
    Vec conv_cap;       // P_max,n [MW]
    Vec ren_cap;        // P_ren,nom,n [MW]
    Vec participation;  // c_g,n, sums to 1
    Vec demand;         // P_dem,n [MW]

    int n() const { return static_cast<int>(conv_cap.size()); }
    void validate() const;
};

// Reduced three-bus German grid (triangle topology); line capacities multiplied by
// line_scale for the stressed variants.
GridModel german_3bus(double line_scale = 1.0);

GridModel grid_from_json(const std::string& text);
std::string grid_to_json(const GridModel& g);
GridModel load_grid(const std::string& path);

struct Schedule {
    Vec p_set;  // [MW]
    Vec p_ub;   // min(P_set + 0.05 P_max, P_max)
    Vec p_lb;   // max(0, P_set - 0.05 P_max)
};

// (P_ub, P_lb) from the 5%-of-rated-capacity adjustment band.
std::pair<Vec, Vec> bounds(const Vec& p_set, const Vec& p_max);

Schedule make_schedule(const GridModel& g, const Vec& p_set);

// P_ren,n = max(0, f(l,c)_n) * P_ren,nom,n — negative flow outputs clipped, values
// above 1 deliberately not (the model may slightly overshoot).
Vec renewable_from_latent(const ConditionalFlow& f, const Vec& l, const Vec& c,
                          const GridModel& g);

struct AggWindow {
    bool ok = false;
    double slack_lo = 0.0;  // sum(P_dem - P_ren) - sum(P_lb)
    double slack_hi = 0.0;  // sum(P_ub) - sum(P_dem - P_ren)
};

AggWindow aggregate_feasible(const Schedule& s, const Vec& p_ren, const Vec& p_dem);

struct DispatchResult {
    bool balance_ok = false;
    Vec p_gen;         // [MW]
    Vec p_line;        // [MW], aligned with GridModel::lines
    Vec theta;         // [rad], reference bus 0 fixed at 0
    double delta_inj = 0.0;  // Delta_inj,inc [MW]
};

// Proportional redistribution dispatch: find Delta_inj,inc with
//   sum_n mid(P_lb, P_set + c_g * Delta, P_ub) = sum(P_dem - P_ren)
// (monotone piecewise-linear; ties resolved at the solution-interval midpoint), then
// solve DC nodal balances P_line,li = h_li (theta_t - theta_o). If the aggregate
// window check fails, the disjunction applies: all line flows are exactly 0.
DispatchResult dispatch(const GridModel& g, const Schedule& s, const Vec& p_ren);

// g(x,y,z) = max{ sum(P_lb - P_dem + P_ren), sum(P_dem - P_ren - P_ub),
//                 max_li(|P_line,li| - P_nom,li) }  [MW]
double constraint_g(const GridModel& g, const Schedule& s, const Vec& p_ren,
                    const DispatchResult& d);
double constraint_g(const GridModel& g, const Schedule& s, const Vec& p_ren);

// Feasible <=> g <= tol with P_ren = cf .* P_ren,nom (inclusive at the boundary).
bool evaluate_schedule(const GridModel& g, const Schedule& s, const Vec& cf, double tol,
                       double* g_out = nullptr);

}  // namespace cfi
