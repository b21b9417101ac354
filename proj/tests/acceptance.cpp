// Acceptance suite: exercises the full stack end to end and prints one
// PASS/FAIL line per criterion. Exits nonzero when any criterion fails.
// Thresholds are pinned inline next to each check.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>
#include <vector>

#include "cfi/data.hpp"
#include "cfi/grid.hpp"
#include "cfi/io.hpp"
#include "cfi/sip.hpp"
#include "cfi/train.hpp"
#include "cfi/usets.hpp"

using namespace cfi;

namespace {

struct Check {
    int id;
    std::string label;
    bool pass;
    std::string detail;
};
std::vector<Check> g_checks;

// Every flexibility-index solve performed anywhere in the suite, so the
// certification and monotonicity criteria can sweep all of them.
struct NamedSolve {
    std::string label;
    CfiResult res;
    bool two_moons = false;
};
std::vector<NamedSolve> g_solves;

void add(int id, const std::string& label, bool pass, const std::string& detail) {
    g_checks.push_back({id, label, pass, detail});
    std::fprintf(stderr, "[criterion %d] %s: %s\n", id, label.c_str(),
                 pass ? "pass" : "FAIL");
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string f3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// Same fixed standardization the CLI applies before training a fresh flow.
std::pair<Vec, double> standardizer(const Mat& y) {
    const Vec mean = y.colwise().mean();
    const Mat centered = y.rowwise() - mean.transpose();
    double rms = std::sqrt(centered.array().square().mean());
    if (!(rms > 1e-12)) rms = 1.0;
    return {-mean, 1.0 / rms};
}

TrainResult train_on(const Dataset& d, int blocks, int hidden, TrainConfig tc,
                     double val_frac, uint64_t seed) {
    Rng rng(seed);
    auto [train, val] = split(d, val_frac, rng);
    auto [shift, scale] = standardizer(train.y);
    const ConditionalFlow f =
        make_flow(static_cast<int>(d.y.cols()), static_cast<int>(d.c.cols()), blocks, hidden,
                  1, rng, shift, scale);
    tc.seed = seed;
    TrainResult r = fit(f, train.y, train.c, val.y, val.c, tc);
    std::fprintf(stderr, "  trained %dx%d: val nll %.4f after %zu epochs (%s)\n", blocks,
                 hidden, r.best_val_nll, r.history.size(), r.stop_reason.c_str());
    return r;
}

SipConfig solver_cfg(uint64_t seed) {
    SipConfig cfg;
    cfg.seed = seed;
    cfg.threads = 1;
    return cfg;
}

// --------------------------------------------------------------------------
// 1. chi-square coverage table
void c1() {
    const double a = analytical_coverage(2, 5.991);
    const double b = analytical_coverage(2, 3.12);
    const double c = analytical_coverage(2, 2.84);
    const bool ok = std::abs(a - 0.95) <= 5e-4 && std::abs(b - 0.790) <= 1e-3 &&
                    std::abs(c - 0.758) <= 1e-3;
    add(1, "coverage table", ok,
        "coverage(2,5.991)=" + f3(a) + " coverage(2,3.12)=" + f3(b) + " coverage(2,2.84)=" +
            f3(c));
}

// --------------------------------------------------------------------------
// 2. flow correctness: round trip, log-det vs finite differences, unit mass
void c2() {
    Rng rng(42);
    const ConditionalFlow f = make_flow(2, 1, 5, 12, 2, rng);

    double max_rt = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Vec y = 3.0 * rng.normal_vec(2);
        Vec c(1);
        c << rng.uniform();
        const Vec y2 = flow_forward(f, flow_inverse(f, y, c), c);
        max_rt = std::max(max_rt, (y - y2).cwiseAbs().maxCoeff());
    }

    double max_rel = 0.0;
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
        const Vec l = rng.normal_vec(2);
        Vec c(1);
        c << rng.uniform();
        double ld = 0.0;
        flow_forward(f, l, c, &ld);
        Mat J(2, 2);
        for (int j = 0; j < 2; ++j) {
            Vec lp = l, lm = l;
            lp[j] += h;
            lm[j] -= h;
            J.col(j) = (flow_forward(f, lp, c) - flow_forward(f, lm, c)) / (2.0 * h);
        }
        const double ld_fd = std::log(std::abs(J.determinant()));
        max_rel = std::max(max_rel, std::abs(ld - ld_fd) / std::max(1.0, std::abs(ld_fd)));
    }

    Vec c0(1);
    c0 << 0.3;
    const int n = 400;
    const double lim = 10.0, cell = 2.0 * lim / n;
    double mass = 0.0;
    Vec y(2);
    for (int i = 0; i < n; ++i) {
        y[0] = -lim + (i + 0.5) * cell;
        for (int j = 0; j < n; ++j) {
            y[1] = -lim + (j + 0.5) * cell;
            mass += std::exp(log_prob(f, y, c0));
        }
    }
    mass *= cell * cell;

    const bool ok = max_rt < 1e-8 && max_rel < 1e-4 && std::abs(mass - 1.0) <= 0.01;
    add(2, "flow correctness", ok,
        "round-trip " + std::to_string(max_rt) + ", log-det rel err " + std::to_string(max_rel) +
            ", density mass " + f3(mass));
}

// --------------------------------------------------------------------------
// 3. two-moons study: train 3 seeds, compare coverages, flow vs cube
void c3() {
    const double t0 = now_s();
    bool dev_ok = true;
    double flow_cov0 = 0.0, cube_cov0 = 0.0;
    std::string devs;

    for (uint64_t seed : {1001ull, 1002ull, 1003ull}) {
        Rng gen(seed);
        const Dataset d = gen_two_moons(25000, gen);  // 20000 train after the 0.2 split
        TrainConfig tc;
        tc.batch_size = 8192;
        tc.grad_clip = 0.5;
        tc.max_epochs = 200;
        const TrainResult tr = train_on(d, 5, 12, tc, 0.2, seed);

        Rng fresh_rng(seed + 500);
        const Dataset fresh = gen_two_moons(20000, fresh_rng);

        for (double cv : {0.0, 1.0}) {
            Vec c(1);
            c << cv;
            const SipProblem p =
                make_ball_problem(tr.flow, c, himmelblau_g, 1.0, 0.05, 25.0);
            const CfiResult res = solve_cfi(p, solver_cfg(seed + 7));
            const LatentBall set{&tr.flow, res.delta};
            int n = 0, inside = 0;
            for (int i = 0; i < fresh.n(); ++i) {
                if (fresh.c(i, 0) != cv) continue;
                ++n;
                inside += membership(set, fresh.y.row(i), c).member;
            }
            const double emp = static_cast<double>(inside) / n;
            dev_ok = dev_ok && std::abs(res.coverage - emp) <= 0.05;
            devs += " " + f3(res.coverage - emp);
            if (cv == 0.0) flow_cov0 += emp / 3.0;
            std::fprintf(stderr, "  seed %llu c=%g: delta %.3f anal %.3f emp %.3f (%d iters)\n",
                         static_cast<unsigned long long>(seed), cv, res.delta, res.coverage,
                         emp, res.state.iterations);
            g_solves.push_back({"two-moons flow seed " + std::to_string(seed) + " c=" +
                                    std::to_string(static_cast<int>(cv)),
                                res, true});
        }

        Vec center = Vec::Zero(2);  // cube baseline centered at the c=0 sample mean
        int n0 = 0;
        for (int i = 0; i < d.n(); ++i)
            if (d.c(i, 0) == 0.0) {
                center += d.y.row(i).transpose();
                ++n0;
            }
        center /= n0;
        const CfiResult cres =
            solve_hypercube(center, himmelblau_g, 1.0, 0.05, 25.0, solver_cfg(seed + 9));
        const HypercubeSet cset{center, cres.delta};
        int n = 0, inside = 0;
        for (int i = 0; i < fresh.n(); ++i) {
            if (fresh.c(i, 0) != 0.0) continue;
            ++n;
            inside += membership(cset, fresh.y.row(i)).member;
        }
        cube_cov0 += static_cast<double>(inside) / n / 3.0;
        std::fprintf(stderr, "  seed %llu cube: delta %.3f emp %.3f\n",
                     static_cast<unsigned long long>(seed), cres.delta,
                     static_cast<double>(inside) / n);
        g_solves.push_back({"two-moons cube seed " + std::to_string(seed), cres, true});
    }

    const double dt = now_s() - t0;
    const bool ok = dev_ok && flow_cov0 >= cube_cov0 - 0.05 && dt < 900.0;
    add(3, "two-moons study", ok,
        "coverage deviations" + devs + "; mean flow c=0 " + f3(flow_cov0) + " vs cube " +
            f3(cube_cov0) + "; " + f3(dt) + "s");
}

// --------------------------------------------------------------------------
// 5. annulus study: unconditional coverage and inner-disk exclusion
void c5() {
    const double t0 = now_s();
    Rng gen(505);
    const Dataset d = gen_annulus(25000, 0.1, gen);
    TrainConfig tc;
    tc.batch_size = 8192;
    tc.grad_clip = 0.5;
    tc.max_epochs = 200;
    const TrainResult tr = train_on(d, 5, 12, tc, 0.2, 505);

    Vec c(1);
    c << 0.0;
    const SipProblem p = make_ball_problem(tr.flow, c, annulus_g, 1.0, 0.05, 25.0);
    const CfiResult res = solve_cfi(p, solver_cfg(506));
    g_solves.push_back({"annulus flow", res, false});

    const LatentBall set{&tr.flow, res.delta};
    bool excluded = true;
    int members = 0;
    const int n = 200;
    Vec y(2);
    for (int i = 0; i < n && excluded; ++i) {
        y[0] = -1.6 + 3.2 * (i + 0.5) / n;
        for (int j = 0; j < n; ++j) {
            y[1] = -1.6 + 3.2 * (j + 0.5) / n;
            if (!membership(set, y, c).member) continue;
            ++members;
            if (y.norm() <= 0.5) {
                excluded = false;
                break;
            }
        }
    }
    const double dt = now_s() - t0;
    const bool ok = res.coverage >= 0.70 && excluded && members > 0 && dt < 300.0;
    add(5, "annulus study", ok,
        "coverage " + f3(res.coverage) + ", inner disk excluded " +
            (excluded ? "yes" : "NO") + ", " + f3(dt) + "s");
}

// --------------------------------------------------------------------------
// 7. dispatch suite: residuals, redistribution root, infeasible zeroing
void c7() {
    const GridModel g = german_3bus();
    Rng rng(7);
    int balanced = 0, infeasible = 0, scanned = 0;
    double max_resid = 0.0, max_root = 0.0;
    bool zeros_ok = true;

    for (int t = 0; t < 1000; ++t) {
        Vec p_set(3), cf(3);
        GridModel gd = g;
        for (int b = 0; b < 3; ++b) {
            p_set[b] = g.conv_cap[b] * rng.uniform();
            cf[b] = rng.uniform();
        }
        const Vec p_ren = cf.cwiseProduct(g.ren_cap);
        for (int b = 0; b < 3; ++b)
            gd.demand[b] = t < 300 ? rng.uniform(0.0, 30000.0)
                                   : p_ren[b] + p_set[b] * rng.uniform(0.96, 1.04);
        const Schedule s = make_schedule(gd, p_set);
        const DispatchResult d = dispatch(gd, s, p_ren);

        if (!d.balance_ok) {
            ++infeasible;
            zeros_ok = zeros_ok && d.p_line.cwiseAbs().maxCoeff() == 0.0;
            continue;
        }
        ++balanced;
        // Net injection per bus must equal the signed line flows out of it.
        Vec inj = d.p_gen + p_ren - gd.demand;
        for (size_t li = 0; li < gd.lines.size(); ++li) {
            inj[gd.lines[li].from] -= d.p_line[static_cast<int>(li)];
            inj[gd.lines[li].to] += d.p_line[static_cast<int>(li)];
        }
        max_resid = std::max(max_resid, inj.cwiseAbs().maxCoeff());
        max_resid = std::max(max_resid,
                             std::abs((d.p_gen + p_ren - gd.demand).sum()));

        if (scanned < 100) {
            ++scanned;
            // Two-stage scan of the monotone redistribution equation.
            const double net = (gd.demand - p_ren).sum();
            auto h = [&](double delta) {
                double tot = 0.0;
                for (int b = 0; b < 3; ++b)
                    tot += mid3(s.p_lb[b], s.p_set[b] + g.participation[b] * delta, s.p_ub[b]);
                return tot - net;
            };
            double best = -70000.0;
            for (double x = -70000.0; x <= 70000.0; x += 100.0)
                if (std::abs(h(x)) < std::abs(h(best))) best = x;
            double fine = best - 100.0;
            for (double x = best - 100.0; x <= best + 100.0; x += 0.001)
                if (std::abs(h(x)) < std::abs(h(fine))) fine = x;
            // The root can be an interval (flat segments); accept any point that
            // reproduces the balanced total within the same tolerance.
            const double err = std::min(std::abs(fine - d.delta_inj), std::abs(h(d.delta_inj)));
            max_root = std::max(max_root, err);
        }
    }
    const bool ok = max_resid < 1e-6 && max_root <= 1e-3 && zeros_ok && balanced >= 300 &&
                    infeasible >= 50;
    add(7, "dispatch suite", ok,
        "max residual " + std::to_string(max_resid) + " MW over " + std::to_string(balanced) +
            " balanced, root err " + std::to_string(max_root) + " MW, " +
            std::to_string(infeasible) + " infeasible all zero-flow: " +
            (zeros_ok ? "yes" : "NO"));
}

// --------------------------------------------------------------------------
// 8. dispatch schedule benchmark on synthetic capacity factors, 90/10 days
void c8() {
    const double t0 = now_s();
    Rng gen(808);
    const CfTable full = gen_synthetic_cf(100, 3, gen);
    const int n_train = 90 * 24;
    CfTable train_t, test_t;
    train_t.names = test_t.names = full.names;
    train_t.t.assign(full.t.begin(), full.t.begin() + n_train);
    test_t.t.assign(full.t.begin() + n_train, full.t.end());
    train_t.cf = full.cf.topRows(n_train);
    test_t.cf = full.cf.bottomRows(full.rows() - n_train);

    TrainConfig tc;
    tc.batch_size = 2048;
    tc.grad_clip = 1000.0;
    tc.max_epochs = 150;
    const TrainResult td =
        train_on(build_contexts(train_t, ContextMode::PrevTD), 4, 12, tc, 0.1, 801);
    const TrainResult pv =
        train_on(build_contexts(train_t, ContextMode::Prev), 4, 12, tc, 0.1, 802);

    GridModel grid = german_3bus();
    grid.demand = 0.42 * (grid.conv_cap + grid.ren_cap);

    std::vector<BenchmarkMethod> methods(3);
    methods[0].name = "PREV_TD";
    methods[0].flow = &td.flow;
    methods[0].mode = ContextMode::PrevTD;
    methods[1].name = "PREV";
    methods[1].flow = &pv.flow;
    methods[1].mode = ContextMode::Prev;
    methods[2].name = "CUBE@NF-center";
    methods[2].cube = true;
    methods[2].center_flow = &td.flow;
    methods[2].center_mode = ContextMode::PrevTD;

    BenchmarkConfig bc;
    bc.sip = solver_cfg(803);
    bc.sip.grid_certify = false;
    const BenchmarkReport rep = benchmark_schedules(grid, methods, test_t, bc);

    const double s_td = rep.by_name("PREV_TD").share();
    const double s_pv = rep.by_name("PREV").share();
    const double s_cb = rep.by_name("CUBE@NF-center").share();
    for (const MethodStats& m : rep.methods)
        std::fprintf(stderr, "  %s: share %.3f (%d/%d) over %d under %d line %d\n",
                     m.name.c_str(), m.share(), m.feasible, m.n, m.infeas_over,
                     m.infeas_under, m.infeas_line);

    // Spot solves over the first test rows feed the certification sweep.
    const Dataset ctx_td = build_contexts(test_t, ContextMode::PrevTD);
    for (int j : {0, 101}) {
        const Vec c = ctx_td.c.row(j).transpose();
        const CfiResult ball = solve_cfi_scuc(
            grid, make_scuc_ball_problem(grid, td.flow, c, 500.0, 25.0, 25.0),
            solver_cfg(804 + j));
        g_solves.push_back({"dispatch flow row " + std::to_string(j), ball, false});
        const Vec center = flow_forward(td.flow, Vec::Zero(3), c).cwiseMax(0.0).cwiseMin(1.0);
        const CfiResult cube = solve_cfi_scuc(
            grid, make_scuc_cube_problem(grid, center, 50000.0, 25.0, 1.0),
            solver_cfg(805 + j));
        g_solves.push_back({"dispatch cube row " + std::to_string(j), cube, false});
    }

    const double dt = now_s() - t0;
    const bool ok = s_td >= s_pv && std::abs(s_cb - s_td) <= 0.05 && dt < 1800.0;
    add(8, "schedule benchmark", ok,
        "shares PREV_TD " + f3(s_td) + " PREV " + f3(s_pv) + " CUBE@NF-center " + f3(s_cb) +
            "; " + f3(dt) + "s");
}

// --------------------------------------------------------------------------
// 9. hypercube solver vs brute-force distance on a dense grid
void c9() {
    Rng rng(909);
    bool ok = true;
    std::string detail;
    const double tol = 0.005, delta_max = 2.0;
    const int n = 400;
    const double cell = 2.0 * delta_max / (n - 1);

    for (int i = 0; i < 5; ++i) {
        Vec q(2);
        double r, dist;
        do {
            q << rng.uniform(-1.7, 1.7), rng.uniform(-1.7, 1.7);
            r = rng.uniform(0.3, 0.6);
            dist = q.cwiseAbs().maxCoeff();
        } while (dist - r < 0.15 || dist + r > 1.9);
        const double A = rng.uniform(30.0, 80.0);
        auto g = [q, r, A](const Vec& y) { return A * (r - (y - q).cwiseAbs().maxCoeff()); };

        const CfiResult res =
            solve_hypercube(Vec::Zero(2), g, 1.0, tol, delta_max, solver_cfg(910 + i));
        g_solves.push_back({"hypercube oracle " + std::to_string(i), res, false});

        double d_grid = std::numeric_limits<double>::infinity();
        Vec y(2);
        for (int a = 0; a < n; ++a) {
            y[0] = -delta_max + a * cell;
            for (int b = 0; b < n; ++b) {
                y[1] = -delta_max + b * cell;
                if (g(y) > tol) d_grid = std::min(d_grid, y.cwiseAbs().maxCoeff());
            }
        }
        const double err = std::abs(res.delta - d_grid);
        ok = ok && err <= cell;
        detail += (i ? " " : "") + f3(err);
        std::fprintf(stderr, "  cone %d: delta %.4f grid %.4f err %.4f (cell %.4f)\n", i,
                     res.delta, d_grid, err, cell);
    }
    add(9, "hypercube oracle equivalence", ok, "|delta - grid| =" + (" " + detail) +
            " vs cell " + f3(cell));
}

// --------------------------------------------------------------------------
// 4 & 6: sweeps over every solve collected above
void c4_c6() {
    bool cert_ok = true;
    std::string worst;
    for (const NamedSolve& s : g_solves) {
        if (s.res.certificate.ok && s.res.certificate.n_samples == 10000) continue;
        cert_ok = false;
        worst += " " + s.label;
    }
    add(4, "feasibility certification", cert_ok,
        std::to_string(g_solves.size()) + " solves, 10000 samples each" +
            (cert_ok ? "" : "; failed:" + worst));

    bool mono = true, tm_iters = true;
    int tm_max = 0;
    for (const NamedSolve& s : g_solves) {
        const auto& h = s.res.state.delta_history;
        for (size_t i = 1; i < h.size(); ++i) mono = mono && h[i] <= h[i - 1] + 1e-12;
        if (s.two_moons) {
            tm_max = std::max(tm_max, s.res.state.iterations);
            tm_iters = tm_iters && s.res.state.iterations <= 15;
        }
    }

    SipProblem always;
    always.k = 2;
    always.alpha = 1.0;
    always.tol_feas = 0.05;
    always.delta_max = 25.0;
    always.map = [](const Vec& l) { return l; };
    always.size = [](const Vec& l) { return l.squaredNorm(); };
    always.g = [](const Schedule*, const Vec&) { return -1.0; };
    const CfiResult res = solve_cfi(always, solver_cfg(606));
    const bool one_shot =
        res.state.iterations == 1 && res.delta == 25.0 && res.state.converged;

    add(6, "discretization loop properties", mono && one_shot && tm_iters,
        "monotone " + std::string(mono ? "yes" : "NO") + ", constant-feasible iters " +
            std::to_string(res.state.iterations) + ", max two-moons iters " +
            std::to_string(tm_max));
}

}  // namespace

int main() {
    const double t0 = now_s();
    c1();
    c2();
    c7();
    c9();
    c5();
    c3();
    c8();
    c4_c6();

    std::sort(g_checks.begin(), g_checks.end(),
              [](const Check& a, const Check& b) { return a.id < b.id; });
    bool all = true;
    for (const Check& c : g_checks) {
        all = all && c.pass;
        std::cout << (c.pass ? "PASS" : "FAIL") << "  criterion " << c.id << "  " << c.label
                  << "  (" << c.detail << ")\n";
    }
    std::cout << (all ? "ALL CRITERIA PASSED" : "CRITERIA FAILED") << " in "
              << f3(now_s() - t0) << "s\n";
    return all ? 0 : 1;
}
