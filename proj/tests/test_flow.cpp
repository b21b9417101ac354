#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <set>

#include "cfi/graph.hpp"
#include "cfi/io.hpp"
#include "doctest.h"

using namespace cfi;

namespace {

CouplingBlock zero_block_2d() {
    CouplingBlock b;
    b.keep_idx = {0};
    b.trans_idx = {1};
    b.conditioner.layers.push_back({Mat::Zero(2, 1), Vec::Zero(2)});
    return b;
}

ConditionalFlow random_flow(int k, int ctx, int blocks, int hidden, uint64_t seed,
                            double wscale = 0.6) {
    Rng rng(seed);
    ConditionalFlow f = make_flow(k, ctx, blocks, hidden, 1, rng);
    // Fresh flows are near-identity; spread all weights to exercise generic paths.
    Vec p = get_params(f);
    for (int i = 0; i < p.size(); ++i) p[i] = rng.normal() * wscale;
    set_params(f, p);
    return f;
}

ConditionalFlow zero_block_flow(int k, double shift, double scale) {
    ConditionalFlow f;
    f.k = k;
    f.context_dim = 0;
    f.preproc_shift = Vec::Constant(k, shift);
    f.preproc_scale = scale;
    return f;
}

}  // namespace

TEST_CASE("zero-conditioner coupling oracle") {
    CouplingBlock b = zero_block_2d();
    Vec l(2);
    l << 1.0, 2.0;
    double logdet = 0;
    Vec out = coupling_forward(b, l, Vec(), &logdet);
    // s = softplus(0) + 0.001 = ln 2 + 0.001, t = 0
    const double s = std::log(2.0) + 0.001;
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(1.388294).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(2.0 * s).epsilon(1e-12));
    CHECK(logdet == doctest::Approx(-0.36507).epsilon(1e-4));
    CHECK(logdet == doctest::Approx(std::log(s)).epsilon(1e-12));
}

TEST_CASE("saturated raw scale clips to 3") {
    CouplingBlock b = zero_block_2d();
    b.conditioner.layers[0].b << 0.0, 100.0;  // t = 0, raw = 100
    Vec l(2);
    l << 0.5, -2.0;
    double logdet = 0;
    Vec out = coupling_forward(b, l, Vec(), &logdet);
    CHECK(out[1] == doctest::Approx(-6.0).epsilon(1e-12));
    CHECK(logdet == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("kept coordinate always passes through unchanged") {
    Rng rng(31);
    CouplingBlock b;
    b.keep_idx = {0};
    b.trans_idx = {1, 2};
    b.conditioner = make_mlp(1 + 2, 7, 1, 4, rng);
    Vec l(3);
    l << 1.7, 0.3, -0.9;
    Vec c = rng.normal_vec(2);
    Vec out = coupling_forward(b, l, c);
    CHECK(out[0] == 1.7);
}

TEST_CASE("coupling inverse undoes the oracle and negates logdet") {
    CouplingBlock b = zero_block_2d();
    Vec y(2);
    y << 1.0, 2.0 * (std::log(2.0) + 0.001);
    double logdet = 0;
    Vec l = coupling_inverse(b, y, Vec(), &logdet);
    CHECK(l[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(l[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(logdet == doctest::Approx(-std::log(std::log(2.0) + 0.001)).epsilon(1e-12));
}

TEST_CASE("transformed part equal to the translation maps to zero latent") {
    CouplingBlock b = zero_block_2d();
    b.conditioner.layers[0].b << 0.7, 0.0;  // t = 0.7
    Vec y(2);
    y << 4.2, 0.7;
    Vec l = coupling_inverse(b, y, Vec());
    CHECK(l[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("zero-block flow applies only the fixed de-scaling") {
    ConditionalFlow f = zero_block_flow(2, -0.5, 6.0);
    Vec l(2);
    l << 3.0, -3.0;
    Vec y = flow_forward(f, l, Vec());
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.0).epsilon(1e-15));
    Vec y0 = flow_forward(f, Vec::Zero(2), Vec());
    CHECK(y0[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y0[1] == doctest::Approx(0.5).epsilon(1e-15));
    Vec back = flow_inverse(f, y, Vec());
    CHECK((back - l).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("round trip over a thousand random points stays below 1e-8") {
    ConditionalFlow f = random_flow(3, 2, 4, 8, 404);
    Rng rng(1234);
    double max_err = 0;
    for (int i = 0; i < 1000; ++i) {
        Vec l = rng.normal_vec(3);
        Vec c = rng.normal_vec(2);
        Vec y = flow_forward(f, l, c);
        Vec back = flow_inverse(f, y, c);
        max_err = std::max(max_err, (back - l).cwiseAbs().maxCoeff());
    }
    CHECK(max_err < 1e-8);
}

TEST_CASE("log density of the trivial flow at the origin") {
    ConditionalFlow f = zero_block_flow(2, 0.0, 1.0);
    CHECK(log_prob(f, Vec::Zero(2), Vec()) ==
          doctest::Approx(-std::log(2 * M_PI)).epsilon(1e-9));
    CHECK(log_prob(f, Vec::Zero(2), Vec()) == doctest::Approx(-1.837877).epsilon(1e-6));
}

TEST_CASE("de-scaling contributes its change of variables to the density") {
    ConditionalFlow f = zero_block_flow(2, -0.5, 6.0);
    Rng rng(88);
    for (int i = 0; i < 20; ++i) {
        Vec y = rng.normal_vec(2);
        Vec u = 6.0 * y - Vec::Constant(2, 3.0);
        const double expect =
            -std::log(2 * M_PI) - 0.5 * u.squaredNorm() + 2 * std::log(6.0);
        CHECK(log_prob(f, y, Vec()) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("density integrates to one over a wide grid") {
    ConditionalFlow f = random_flow(2, 0, 3, 8, 2024, 0.4);
    const int m = 400;
    const double lo = -8.0, hi = 8.0, cell = (hi - lo) / m;
    double total = 0;
    Vec y(2);
    for (int i = 0; i < m; ++i) {
        y[0] = lo + (i + 0.5) * cell;
        for (int j = 0; j < m; ++j) {
            y[1] = lo + (j + 0.5) * cell;
            total += std::exp(log_prob(f, y, Vec()));
        }
    }
    total *= cell * cell;
    CHECK(total == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("analytic logdet matches a finite-difference Jacobian") {
    ConditionalFlow f = random_flow(2, 1, 3, 8, 911, 0.5);
    Rng rng(15);
    const double h = 1e-5;
    for (int i = 0; i < 100; ++i) {
        Vec l = rng.normal_vec(2);
        Vec c = rng.normal_vec(1);
        double logdet = 0;
        flow_forward(f, l, c, &logdet);
        Mat J(2, 2);
        for (int d = 0; d < 2; ++d) {
            Vec lp = l, lm = l;
            lp[d] += h;
            lm[d] -= h;
            J.col(d) = (flow_forward(f, lp, c) - flow_forward(f, lm, c)) / (2 * h);
        }
        const double fd = std::log(std::abs(J.determinant()));
        CHECK(std::abs(logdet - fd) < 1e-4);
    }
}

TEST_CASE("forward and inverse logdets cancel") {
    ConditionalFlow f = random_flow(3, 2, 4, 8, 5150);
    Rng rng(66);
    for (int i = 0; i < 50; ++i) {
        Vec l = rng.normal_vec(3);
        Vec c = rng.normal_vec(2);
        double ld_f = 0, ld_i = 0;
        Vec y = flow_forward(f, l, c, &ld_f);
        flow_inverse(f, y, c, &ld_i);
        CHECK(std::abs(ld_f + ld_i) < 1e-10);
    }
}

TEST_CASE("emitted scales stay inside (0, 3]") {
    ConditionalFlow f = random_flow(4, 2, 5, 10, 777, 1.5);
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        Vec l = rng.normal_vec(4) * 3.0;
        Vec c = rng.normal_vec(2) * 3.0;
        Vec cur = l;
        for (const auto& b : f.blocks) {
            Vec kept(b.keep_idx.size());
            for (size_t j = 0; j < b.keep_idx.size(); ++j) kept[j] = cur[b.keep_idx[j]];
            Vec t, s;
            coupling_params(b, kept, c, t, s);
            for (int j = 0; j < s.size(); ++j) {
                CHECK(s[j] > 0.0);
                CHECK(s[j] <= 3.0);
            }
            cur = coupling_forward(b, cur, c);
        }
    }
}

TEST_CASE("masks alternate: kept set of block i is transformed in block i+1") {
    for (int k : {2, 3, 5, 8}) {
        Rng rng(100 + k);
        ConditionalFlow f = make_flow(k, 1, 6, 6, 1, rng);
        REQUIRE(f.blocks.size() == 6);
        const int half = (k + 1) / 2;
        CHECK(static_cast<int>(f.blocks[0].keep_idx.size()) == half);
        for (size_t i = 0; i + 1 < f.blocks.size(); ++i) {
            std::set<int> kept(f.blocks[i].keep_idx.begin(), f.blocks[i].keep_idx.end());
            std::set<int> trans_next(f.blocks[i + 1].trans_idx.begin(),
                                     f.blocks[i + 1].trans_idx.end());
            CHECK(kept == trans_next);
        }
        for (const auto& b : f.blocks) {
            std::set<int> all(b.keep_idx.begin(), b.keep_idx.end());
            all.insert(b.trans_idx.begin(), b.trans_idx.end());
            CHECK(static_cast<int>(all.size()) == k);
        }
    }
}

TEST_CASE("sampling basics") {
    ConditionalFlow f = zero_block_flow(2, -0.5, 6.0);
    Rng rng(7);
    Mat empty = sample(f, 0, Vec(), rng);
    CHECK(empty.rows() == 0);

    Rng r1(99), r2(99);
    ConditionalFlow g = random_flow(2, 1, 3, 8, 3003);
    Vec c(1);
    c << 0.4;
    Mat a = sample(g, 50, c, r1);
    Mat b = sample(g, 50, c, r2);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    Rng r3(1);
    Mat big = sample(f, 100000, Vec(), r3);
    CHECK(big.col(0).mean() == doctest::Approx(0.5).epsilon(0.02));
    CHECK(std::abs(big.col(1).mean() - 0.5) < 0.01);
}

TEST_CASE("parameter vector round trip") {
    ConditionalFlow f = random_flow(3, 2, 4, 8, 51);
    Vec p = get_params(f);
    CHECK(p.size() == param_count(f));
    ConditionalFlow g = f;
    Vec shifted = p;
    shifted.array() += 0.25;
    set_params(g, shifted);
    CHECK((get_params(g) - shifted).cwiseAbs().maxCoeff() == 0.0);
    set_params(g, p);
    Rng rng(4);
    Vec l = rng.normal_vec(3), c = rng.normal_vec(2);
    CHECK((flow_forward(f, l, c) - flow_forward(g, l, c)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model file round trip preserves behavior exactly") {
    ConditionalFlow f = random_flow(3, 2, 4, 8, 6006);
    const std::string path = "flow_roundtrip_test.json";
    save_flow(f, path);
    ConditionalFlow g = load_flow(path);
    std::remove(path.c_str());
    CHECK(g.k == f.k);
    CHECK(g.context_dim == f.context_dim);
    CHECK(g.preproc_scale == f.preproc_scale);
    CHECK((g.preproc_shift - f.preproc_shift).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(g.blocks.size() == f.blocks.size());
    CHECK((get_params(g) - get_params(f)).cwiseAbs().maxCoeff() == 0.0);
    Rng rng(8);
    for (int i = 0; i < 10; ++i) {
        Vec l = rng.normal_vec(3), c = rng.normal_vec(2);
        CHECK((flow_forward(f, l, c) - flow_forward(g, l, c)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("malformed model text is a data error") {
    CHECK_THROWS_AS(flow_from_json("{\"version\": 1"), DataError);
    CHECK_THROWS_AS(flow_from_json("{\"version\": 99}"), DataError);
}

TEST_CASE("graph export of the trivial flow is one affine node") {
    ConditionalFlow f = zero_block_flow(2, -0.5, 6.0);
    ConstraintGraph g = export_graph(f);
    REQUIRE(g.nodes.size() == 1);
    CHECK(g.nodes[0].op == "affine");
    Vec l(2);
    l << 3.0, -3.0;
    Vec y = eval_graph(g, l, Vec());
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("graph node count for one block with one hidden layer") {
    Rng rng(12);
    ConditionalFlow f = make_flow(2, 1, 1, 6, 1, rng);
    ConstraintGraph g = export_graph(f);
    // 2 matmul + 1 relu + 2 selections + softplus + add-const + clip
    // + scatter + mul + add, plus the final affine de-scaling.
    CHECK(g.nodes.size() == 12);
    int selections = 0;
    for (const auto& n : g.nodes) selections += (n.op == "matmul" && n.select) ? 1 : 0;
    CHECK(selections == 2);
    CHECK(g.nodes.back().op == "affine");
    CHECK(g.nodes.back().output == "y");
}

TEST_CASE("graph evaluation reproduces the flow map") {
    ConditionalFlow f = random_flow(3, 2, 4, 8, 808);
    ConstraintGraph g = export_graph(f);
    Rng rng(21);
    double max_err = 0;
    for (int i = 0; i < 100; ++i) {
        Vec l = rng.normal_vec(3);
        Vec c = rng.normal_vec(2);
        Vec a = flow_forward(f, l, c);
        Vec b = eval_graph(g, l, c);
        max_err = std::max(max_err, (a - b).cwiseAbs().maxCoeff());
    }
    CHECK(max_err < 1e-10);

    const std::string path = "graph_roundtrip_test.json";
    save_graph(g, path);
    std::string text = read_file(path);
    std::remove(path.c_str());
    CHECK(text.find("\"op\"") != std::string::npos);
    CHECK(text.find("affine") != std::string::npos);
}

TEST_CASE("flow rejects dimension mismatches") {
    ConditionalFlow f = random_flow(3, 2, 2, 6, 22);
    Vec l_bad(2);
    l_bad << 0.0, 0.0;
    Vec c(2);
    c << 0.0, 0.0;
    CHECK_THROWS_AS(flow_forward(f, l_bad, c), ConfigError);
    Vec l(3);
    l << 0.0, 0.0, 0.0;
    Vec c_bad(1);
    c_bad << 0.0;
    CHECK_THROWS_AS(flow_forward(f, l, c_bad), ConfigError);
}
