#include "cfi/grid.hpp"

#include <nlohmann/json.hpp>

#include "cfi/io.hpp"

namespace cfi {

using nlohmann::json;

void GridModel::validate() const {
    const int nb = n();
    if (nb < 1) throw ConfigError("grid needs at least one bus");
    if (ren_cap.size() != nb || participation.size() != nb || demand.size() != nb)
        throw ConfigError("grid vectors must all have one entry per bus");
    if ((conv_cap.array() < 0).any() || (ren_cap.array() < 0).any())
        throw ConfigError("capacities must be >= 0");
    if (std::abs(participation.sum() - 1.0) > 1e-9 || (participation.array() < 0).any())
        throw ConfigError("participation factors must be >= 0 and sum to 1");
    for (const auto& l : lines) {
        if (l.from < 0 || l.from >= nb || l.to < 0 || l.to >= nb || l.from == l.to)
            throw ConfigError("line endpoints out of range");
        if (l.admittance <= 0.0) throw ConfigError("admittances must be > 0");
        if (l.capacity < 0.0) throw ConfigError("line capacities must be >= 0");
    }
    // Connectivity (needed for a unique angle solution).
    if (nb > 1) {
        std::vector<char> seen(nb, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const int b = stack.back();
            stack.pop_back();
            for (const auto& l : lines) {
                const int other = l.from == b ? l.to : (l.to == b ? l.from : -1);
                if (other >= 0 && !seen[other]) {
                    seen[other] = 1;
                    stack.push_back(other);
                }
            }
        }
        for (int b = 0; b < nb; ++b)
            if (!seen[b]) throw ConfigError("grid graph is disconnected");
    }
}

GridModel german_3bus(double line_scale) {
    GridModel g;
    g.conv_cap = Vec(3);
    g.conv_cap << 19400, 9886, 38126;
    g.ren_cap = Vec(3);
    g.ren_cap << 58421, 22144, 37179;
    g.lines = {{0, 1, 8030, 10189 * line_scale},
               {0, 2, 18653, 17741 * line_scale},
               {1, 2, 24791, 22612 * line_scale}};
    g.participation = g.conv_cap / g.conv_cap.sum();
    g.demand = Vec::Zero(3);
    return g;
}

static Vec vec_from_json(const json& j) {
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Vec>(v.data(), v.size());
}

GridModel grid_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("grid file is not valid JSON: ") + e.what());
    }
    try {
        GridModel g;
        g.conv_cap = vec_from_json(doc.at("conv_capacity"));
        g.ren_cap = vec_from_json(doc.at("ren_capacity"));
        if (doc.contains("participation"))
            g.participation = vec_from_json(doc.at("participation"));
        else
            g.participation = g.conv_cap / g.conv_cap.sum();
        if (doc.contains("demand"))
            g.demand = vec_from_json(doc.at("demand"));
        else
            g.demand = Vec::Zero(g.conv_cap.size());
        const double scale = doc.value("line_scale", 1.0);
        for (const auto& jl : doc.at("lines")) {
            Line l;
            l.from = jl.at("from").get<int>() - 1;  // buses are 1-based in files
            l.to = jl.at("to").get<int>() - 1;
            l.admittance = jl.at("admittance").get<double>();
            l.capacity = jl.at("capacity").get<double>() * scale;
            g.lines.push_back(l);
        }
        g.validate();
        return g;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad grid file: ") + e.what());
    }
}

std::string grid_to_json(const GridModel& g) {
    json doc;
    auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    doc["conv_capacity"] = vec(g.conv_cap);
    doc["ren_capacity"] = vec(g.ren_cap);
    doc["participation"] = vec(g.participation);
    doc["demand"] = vec(g.demand);
    doc["lines"] = json::array();
    for (const auto& l : g.lines)
        doc["lines"].push_back({{"from", l.from + 1},
                                {"to", l.to + 1},
                                {"admittance", l.admittance},
                                {"capacity", l.capacity}});
    return doc.dump(1);
}

GridModel load_grid(const std::string& path) { return grid_from_json(read_file(path)); }

std::pair<Vec, Vec> bounds(const Vec& p_set, const Vec& p_max) {
    if (p_set.size() != p_max.size()) throw ConfigError("bounds: size mismatch");
    if ((p_set.array() < 0).any() || (p_set.array() > p_max.array()).any())
        throw ConfigError("P_set must lie in [0, P_max]");
    Vec ub = (p_set + 0.05 * p_max).cwiseMin(p_max);
    Vec lb = (p_set - 0.05 * p_max).cwiseMax(0.0);
    return {std::move(ub), std::move(lb)};
}

Schedule make_schedule(const GridModel& g, const Vec& p_set) {
    Schedule s;
    s.p_set = p_set;
    std::tie(s.p_ub, s.p_lb) = bounds(p_set, g.conv_cap);
    return s;
}

Vec renewable_from_latent(const ConditionalFlow& f, const Vec& l, const Vec& c,
                          const GridModel& g) {
    if (f.k != g.n()) throw ConfigError("flow dimension must match bus count");
    const Vec cf = flow_forward(f, l, c);
    return cf.cwiseMax(0.0).cwiseProduct(g.ren_cap);
}

AggWindow aggregate_feasible(const Schedule& s, const Vec& p_ren, const Vec& p_dem) {
    AggWindow w;
    const double net = (p_dem - p_ren).sum();
    w.slack_lo = net - s.p_lb.sum();
    w.slack_hi = s.p_ub.sum() - net;
    w.ok = w.slack_lo >= 0.0 && w.slack_hi >= 0.0;
    return w;
}

// Total generation at a given redistribution level.
static double gen_sum(const Schedule& s, const Vec& cg, double delta) {
    double total = 0.0;
    for (int i = 0; i < s.p_set.size(); ++i)
        total += mid3(s.p_lb[i], s.p_set[i] + cg[i] * delta, s.p_ub[i]);
    return total;
}

DispatchResult dispatch(const GridModel& g, const Schedule& s, const Vec& p_ren) {
    const int nb = g.n();
    if (s.p_set.size() != nb || p_ren.size() != nb) throw ConfigError("dispatch: size mismatch");
    DispatchResult r;
    r.p_gen = Vec::Zero(nb);
    r.p_line = Vec::Zero(g.lines.size());
    r.theta = Vec::Zero(nb);

    const AggWindow w = aggregate_feasible(s, p_ren, g.demand);
    if (!w.ok) return r;  // disjunction branch: all flows stay 0
    r.balance_ok = true;

    const double target = (g.demand - p_ren).sum();
    // Bracket that saturates every generator at P_lb (left) / P_ub (right).
    double lo = 0.0, hi = 0.0;
    for (int i = 0; i < nb; ++i) {
        if (g.participation[i] <= 0.0) continue;
        lo = std::min(lo, (s.p_lb[i] - s.p_set[i]) / g.participation[i]);
        hi = std::max(hi, (s.p_ub[i] - s.p_set[i]) / g.participation[i]);
    }
    // gen_sum is monotone non-decreasing; the root set is an interval. Bisect for
    // both endpoints and take the midpoint.
    auto bisect = [&](bool left_end) {
        double a = lo, b = hi;
        const double width_tol = 1e-11 * std::max({1.0, std::abs(lo), std::abs(hi)});
        for (int it = 0; it < 120 && b - a > width_tol; ++it) {
            const double m = 0.5 * (a + b);
            const double v = gen_sum(s, g.participation, m);
            if (left_end ? (v >= target) : (v > target))
                b = m;
            else
                a = m;
        }
        return 0.5 * (a + b);
    };
    r.delta_inj = 0.5 * (bisect(true) + bisect(false));
    for (int i = 0; i < nb; ++i)
        r.p_gen[i] = mid3(s.p_lb[i], s.p_set[i] + g.participation[i] * r.delta_inj, s.p_ub[i]);

    // DC angles: per-bus balance  sum_in P_line - sum_out P_line = P_dem - P_ren - P_gen
    // with P_line,li = h_li (theta_to - theta_from). This is a weighted-Laplacian
    // system; bus 0 is the angle reference.
    if (nb > 1) {
        // Fixed-capacity matrices keep the hot path allocation-free for small grids.
        using LapMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 16, 16>;
        LapMat lap = LapMat::Zero(nb, nb);
        if (nb > 16) throw ConfigError("grids beyond 16 buses are not supported");
        for (const auto& l : g.lines) {
            lap(l.to, l.to) += l.admittance;
            lap(l.to, l.from) -= l.admittance;
            lap(l.from, l.from) += l.admittance;
            lap(l.from, l.to) -= l.admittance;
        }
        const Vec rhs = g.demand - p_ren - r.p_gen;
        LapMat reduced = lap.bottomRightCorner(nb - 1, nb - 1);
        Eigen::FullPivLU<LapMat> lu(reduced);
        if (!lu.isInvertible()) throw ConfigError("angle system is singular (disconnected grid?)");
        r.theta.tail(nb - 1) = lu.solve(rhs.tail(nb - 1).eval());
        for (size_t li = 0; li < g.lines.size(); ++li) {
            const auto& l = g.lines[li];
            r.p_line[li] = l.admittance * (r.theta[l.to] - r.theta[l.from]);
        }
        // Nodal residuals must close to numerical precision.
        Vec resid = rhs;
        for (size_t li = 0; li < g.lines.size(); ++li) {
            resid[g.lines[li].to] -= r.p_line[li];
            resid[g.lines[li].from] += r.p_line[li];
        }
        if (resid.lpNorm<Eigen::Infinity>() > 1e-6)
            throw SolveError("nodal balance residual exceeds 1e-6 MW");
    }
    return r;
}

double constraint_g(const GridModel& g, const Schedule& s, const Vec& p_ren,
                    const DispatchResult& d) {
    const double net = (g.demand - p_ren).sum();
    const double t1 = s.p_lb.sum() - net;  // overproduction side
    const double t2 = net - s.p_ub.sum();  // underproduction side
    double t3 = -std::numeric_limits<double>::infinity();
    for (size_t li = 0; li < g.lines.size(); ++li)
        t3 = std::max(t3, std::abs(d.p_line[li]) - g.lines[li].capacity);
    return std::max({t1, t2, t3});
}

double constraint_g(const GridModel& g, const Schedule& s, const Vec& p_ren) {
    return constraint_g(g, s, p_ren, dispatch(g, s, p_ren));
}

bool evaluate_schedule(const GridModel& g, const Schedule& s, const Vec& cf, double tol,
                       double* g_out) {
    if (cf.size() != g.n()) throw ConfigError("evaluate_schedule: cf size mismatch");
    const Vec p_ren = cf.cwiseProduct(g.ren_cap);
    const double gv = constraint_g(g, s, p_ren);
    if (g_out) *g_out = gv;
    return gv <= tol;
}

}  // namespace cfi
