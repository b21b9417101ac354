#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "cfi/grid.hpp"
#include "doctest.h"

using namespace cfi;

namespace {

GridModel two_bus(double admittance = 5.0, double cap = 100.0) {
    GridModel g;
    g.conv_cap = Vec(2);
    g.conv_cap << 100, 100;
    g.ren_cap = Vec::Zero(2);
    g.participation = Vec(2);
    g.participation << 0.5, 0.5;
    g.demand = Vec(2);
    g.demand << 0, 10;
    g.lines = {{0, 1, admittance, cap}};
    g.validate();
    return g;
}

// Reference redistribution level: fine scan for the interval where the total
// generation meets the target, midpoint of that interval.
double scan_delta(const GridModel& g, const Schedule& s, double target) {
    double lo = -1, hi = 1;
    for (int i = 0; i < g.n(); ++i) {
        if (g.participation[i] <= 0) continue;
        lo = std::min(lo, (s.p_lb[i] - s.p_set[i]) / g.participation[i]);
        hi = std::max(hi, (s.p_ub[i] - s.p_set[i]) / g.participation[i]);
    }
    auto total = [&](double d) {
        double t = 0;
        for (int i = 0; i < g.n(); ++i)
            t += mid3(s.p_lb[i], s.p_set[i] + g.participation[i] * d, s.p_ub[i]);
        return t;
    };
    const double step = (hi - lo) / 400000.0;
    double best = lo, best_err = std::abs(total(lo) - target);
    double first_hit = NAN, last_hit = NAN;
    for (double d = lo; d <= hi; d += step) {
        const double err = std::abs(total(d) - target);
        if (err < best_err - 1e-12) {
            best_err = err;
            best = d;
            first_hit = last_hit = d;
        } else if (err <= best_err + 1e-12) {
            if (std::isnan(first_hit)) first_hit = d;
            last_hit = d;
        }
    }
    (void)best;
    return 0.5 * (first_hit + last_hit);
}

}  // namespace

TEST_CASE("adjustment band bounds") {
    Vec p_max(1);
    p_max << 100.0;
    Vec p_set(1);
    p_set << 0.0;
    auto [ub0, lb0] = bounds(p_set, p_max);
    CHECK(ub0[0] == doctest::Approx(5.0));
    CHECK(lb0[0] == doctest::Approx(0.0));

    p_set << 100.0;
    auto [ub1, lb1] = bounds(p_set, p_max);
    CHECK(ub1[0] == doctest::Approx(100.0));
    CHECK(lb1[0] == doctest::Approx(95.0));

    Vec pm(1), ps(1);
    pm << 19400.0;
    ps << 9700.0;
    auto [ub2, lb2] = bounds(ps, pm);
    CHECK(ub2[0] == doctest::Approx(10670.0));
    CHECK(lb2[0] == doctest::Approx(8730.0));

    ps << -1.0;
    CHECK_THROWS_AS(bounds(ps, pm), ConfigError);
    ps << 19401.0;
    CHECK_THROWS_AS(bounds(ps, pm), ConfigError);
}

TEST_CASE("renewable production clips negative model output only") {
    GridModel g = german_3bus();
    ConditionalFlow f;
    f.k = 3;
    f.context_dim = 0;
    f.preproc_shift = Vec::Zero(3);
    f.preproc_scale = 1.0;  // y = l
    Vec l(3);
    l << 0.5, -0.1, 0.2;
    Vec p = renewable_from_latent(f, l, Vec(), g);
    CHECK(p[0] == doctest::Approx(29210.5).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(7435.8).epsilon(1e-12));

    // values above 1 deliberately pass through
    l << 1.1, 0.0, 0.0;
    p = renewable_from_latent(f, l, Vec(), g);
    CHECK(p[0] == doctest::Approx(1.1 * 58421.0).epsilon(1e-12));
}

TEST_CASE("aggregate window") {
    GridModel g = two_bus();
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    // band: lb = (5, 0), ub = (15, 5); net demand = 10
    Vec no_ren = Vec::Zero(2);
    AggWindow w = aggregate_feasible(s, no_ren, g.demand);
    CHECK(w.ok);
    CHECK(w.slack_lo == doctest::Approx(5.0));   // net - sum(lb)
    CHECK(w.slack_hi == doctest::Approx(10.0));  // sum(ub) - net

    Vec big_ren(2);
    big_ren << 20, 0;  // net = -10 < sum(lb): overproduction
    w = aggregate_feasible(s, big_ren, g.demand);
    CHECK_FALSE(w.ok);
    CHECK(w.slack_lo < 0);

    Vec dem_hi(2);
    dem_hi << 30, 10;  // net = 40 > sum(ub) = 20: underproduction
    w = aggregate_feasible(s, no_ren, dem_hi);
    CHECK_FALSE(w.ok);
    CHECK(w.slack_hi < 0);
}

TEST_CASE("balanced two-bus dispatch needs no redistribution") {
    GridModel g = two_bus();
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    DispatchResult r = dispatch(g, s, Vec::Zero(2));
    CHECK(r.balance_ok);
    CHECK(r.delta_inj == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r.p_gen[0] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(r.p_gen[1] == doctest::Approx(0.0).epsilon(1e-9));
    // All injection at bus 0, all demand at bus 1: 10 MW flow, angle gap 10/5 = 2.
    CHECK(r.p_line[0] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(std::abs(r.theta[0] - r.theta[1]) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(r.theta[0] == 0.0);  // reference bus
}

TEST_CASE("redistribution splits by participation factors") {
    GridModel g = two_bus();
    g.demand << 0, 20;
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    // target 20, set sum 10: delta = 10 with c = (1/2, 1/2) -> +5 MW each
    DispatchResult r = dispatch(g, s, Vec::Zero(2));
    CHECK(r.balance_ok);
    CHECK(r.delta_inj == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(r.p_gen[0] == doctest::Approx(15.0).epsilon(1e-6));
    CHECK(r.p_gen[1] == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(r.p_gen.sum() == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("saturated generators stay inside their band") {
    GridModel g = two_bus();
    g.demand << 0, 28;  // capped: ub = (15, 5), lb = (5, 0)
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    DispatchResult r = dispatch(g, s, Vec::Zero(2));
    // window: sum(ub) = 20 < 28 -> infeasible, flows zeroed
    CHECK_FALSE(r.balance_ok);
    CHECK(r.p_line.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.p_gen.cwiseAbs().maxCoeff() == 0.0);

    g.demand << 0, 18;
    r = dispatch(g, s, Vec::Zero(2));
    CHECK(r.balance_ok);
    for (int i = 0; i < 2; ++i) {
        CHECK(r.p_gen[i] >= s.p_lb[i] - 1e-9);
        CHECK(r.p_gen[i] <= s.p_ub[i] + 1e-9);
    }
    CHECK(r.p_gen.sum() == doctest::Approx(18.0).epsilon(1e-9));
}

TEST_CASE("bisection matches a brute-force scan") {
    Rng rng(31);
    GridModel g = german_3bus();
    for (int trial = 0; trial < 40; ++trial) {
        Vec cf(3);
        for (int b = 0; b < 3; ++b) cf[b] = rng.uniform();
        Vec p_ren = cf.cwiseProduct(g.ren_cap);
        Vec p_set(3);
        for (int b = 0; b < 3; ++b) p_set[b] = rng.uniform() * g.conv_cap[b];
        g.demand = p_ren + p_set * rng.uniform(0.9, 1.1);  // keep many cases feasible
        Schedule s = make_schedule(g, p_set);
        DispatchResult r = dispatch(g, s, p_ren);
        if (!r.balance_ok) continue;
        const double target = (g.demand - p_ren).sum();
        const double ref = scan_delta(g, s, target);
        const double scale = std::max(1.0, std::abs(ref));
        CHECK(std::abs(r.delta_inj - ref) <= 2e-3 * scale);
        CHECK(r.p_gen.sum() == doctest::Approx(target).epsilon(1e-9));
    }
}

TEST_CASE("random dispatches conserve power and close nodal balances") {
    Rng rng(77);
    GridModel g = german_3bus();
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Vec cf(3);
        for (int b = 0; b < 3; ++b) cf[b] = rng.uniform();
        Vec p_ren = cf.cwiseProduct(g.ren_cap);
        Vec p_set(3);
        for (int b = 0; b < 3; ++b) p_set[b] = rng.uniform() * g.conv_cap[b];
        if (trial < 50) {
            for (int b = 0; b < 3; ++b) g.demand[b] = rng.uniform(0.0, 30000.0);
        } else {
            // Keep net demand near the setpoints so the window mostly admits it.
            for (int b = 0; b < 3; ++b)
                g.demand[b] = p_ren[b] + p_set[b] * rng.uniform(0.96, 1.04);
        }
        Schedule s = make_schedule(g, p_set);
        DispatchResult r = dispatch(g, s, p_ren);  // residual check runs inside
        if (!r.balance_ok) {
            CHECK(r.p_line.cwiseAbs().maxCoeff() == 0.0);
            continue;
        }
        ++checked;
        CHECK(r.p_gen.sum() + p_ren.sum() == doctest::Approx(g.demand.sum()).epsilon(1e-9));
        Vec resid = g.demand - p_ren - r.p_gen;
        for (size_t li = 0; li < g.lines.size(); ++li) {
            resid[g.lines[li].to] -= r.p_line[li];
            resid[g.lines[li].from] += r.p_line[li];
        }
        CHECK(resid.lpNorm<Eigen::Infinity>() < 1e-6);
    }
    CHECK(checked > 20);
}

TEST_CASE("reversing a line's endpoints negates its flow") {
    GridModel g = two_bus();
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    DispatchResult a = dispatch(g, s, Vec::Zero(2));
    GridModel rev = g;
    std::swap(rev.lines[0].from, rev.lines[0].to);
    DispatchResult b = dispatch(rev, s, Vec::Zero(2));
    CHECK(a.p_line[0] == doctest::Approx(-b.p_line[0]).epsilon(1e-9));
}

TEST_CASE("constraint value reports the largest violation in MW") {
    GridModel g = two_bus();
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    // feasible: g <= 0
    double gv = constraint_g(g, s, Vec::Zero(2));
    CHECK(gv <= 0.0);
    CHECK(gv == doctest::Approx(-5.0).epsilon(1e-9));  // min(slack_lo, slack_hi, line slack)

    // underproduction: net = 28 vs sum(ub) = 20 -> violation 8 MW
    g.demand << 0, 28;
    gv = constraint_g(g, s, Vec::Zero(2));
    CHECK(gv == doctest::Approx(8.0).epsilon(1e-9));

    // overproduction: renewables 20 MW, net = -10 vs sum(lb) = 5 -> violation 15 MW
    g.demand << 0, 10;
    Vec ren(2);
    ren << 20, 0;
    gv = constraint_g(g, s, ren);
    CHECK(gv == doctest::Approx(15.0).epsilon(1e-9));

    // line overload: tight line cap makes |flow| - cap the active term
    GridModel tight = two_bus(5.0, 4.0);
    gv = constraint_g(tight, s, Vec::Zero(2));
    CHECK(gv == doctest::Approx(6.0).epsilon(1e-9));  // |10| - 4
}

TEST_CASE("schedule evaluation is inclusive at the tolerance") {
    GridModel g = two_bus();
    Schedule s = make_schedule(g, (Vec(2) << 10, 0).finished());
    Vec cf = Vec::Zero(2);
    double gv = 0;
    CHECK(evaluate_schedule(g, s, cf, 0.0, &gv));
    CHECK(gv <= 0.0);
    g.demand << 0, 25;  // violation 5 MW
    CHECK(evaluate_schedule(g, s, cf, 5.0, &gv));
    CHECK(gv == doctest::Approx(5.0).epsilon(1e-9));
    CHECK_FALSE(evaluate_schedule(g, s, cf, 4.9));
}

TEST_CASE("german three-bus model") {
    GridModel g = german_3bus();
    g.validate();
    REQUIRE(g.n() == 3);
    CHECK(g.conv_cap[0] == 19400);
    CHECK(g.conv_cap[1] == 9886);
    CHECK(g.conv_cap[2] == 38126);
    CHECK(g.ren_cap[0] == 58421);
    CHECK(g.ren_cap[1] == 22144);
    CHECK(g.ren_cap[2] == 37179);
    REQUIRE(g.lines.size() == 3);
    CHECK(g.lines[0].admittance == 8030);
    CHECK(g.lines[0].capacity == 10189);
    CHECK(g.lines[1].admittance == 18653);
    CHECK(g.lines[1].capacity == 17741);
    CHECK(g.lines[2].admittance == 24791);
    CHECK(g.lines[2].capacity == 22612);
    CHECK(g.participation.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.participation[2] > g.participation[0]);
    CHECK(g.demand.cwiseAbs().maxCoeff() == 0.0);

    GridModel scaled = german_3bus(0.2);
    CHECK(scaled.lines[0].capacity == doctest::Approx(10189 * 0.2));
    CHECK(scaled.lines[0].admittance == 8030);  // admittance untouched
}

TEST_CASE("grid json round trip") {
    GridModel g = german_3bus(0.5);
    g.demand << 15000, 8000, 20000;
    std::string text = grid_to_json(g);
    GridModel back = grid_from_json(text);
    CHECK((back.conv_cap - g.conv_cap).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.ren_cap - g.ren_cap).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.demand - g.demand).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.participation - g.participation).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.lines.size() == g.lines.size());
    for (size_t i = 0; i < g.lines.size(); ++i) {
        CHECK(back.lines[i].from == g.lines[i].from);
        CHECK(back.lines[i].to == g.lines[i].to);
        CHECK(back.lines[i].admittance == g.lines[i].admittance);
        CHECK(back.lines[i].capacity == g.lines[i].capacity);
    }
    CHECK_THROWS_AS(grid_from_json("{"), DataError);
    CHECK_THROWS_AS(grid_from_json("{\"conv_capacity\": [1.0]}"), DataError);
}

TEST_CASE("model validation catches structural mistakes") {
    GridModel g = german_3bus();
    GridModel bad = g;
    bad.participation[0] += 0.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = g;
    bad.lines[0].admittance = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = g;
    bad.lines.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);  // disconnected
    bad = g;
    bad.lines[0].from = 7;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = g;
    bad.conv_cap[1] = -5.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
