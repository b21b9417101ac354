#include "cfi/sip.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "cfi/io.hpp"
#include "cfi/rng.hpp"

namespace cfi {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void SipProblem::validate() const {
    if (k < 1) throw ConfigError("SipProblem: latent dimension must be >= 1");
    if (alpha <= 0.0) throw ConfigError("SipProblem: alpha must be > 0");
    if (tol_feas <= 0.0) throw ConfigError("SipProblem: tol_feas must be > 0");
    if (delta_max <= 0.0) throw ConfigError("SipProblem: delta_max must be > 0");
    if (!map || !size || !g) throw ConfigError("SipProblem: map/size/g must be set");
}

double himmelblau_g(const Vec& y) {
    if (y.size() != 2) throw ConfigError("himmelblau_g: y must be 2-dimensional");
    // Himmelblau function in horizontally squeezed, shifted coordinates. The
    // substitution u = 0.53(y1 + 0.9) places the four infeasibility islands
    // just outside the crescents of the scaled two-moons cloud.
    const double u = 0.53 * (y[0] + 0.9);
    const double h = sqr(sqr(u) + y[1] - 11.0) + sqr(u + sqr(y[1]) - 7.0);
    return 10.0 - h;
}

double annulus_g(const Vec& y) { return 0.25 - y.squaredNorm(); }

SipProblem make_ball_problem(const ConditionalFlow& flow, Vec context,
                             std::function<double(const Vec&)> g, double alpha,
                             double tol_feas, double delta_max) {
    SipProblem p;
    p.k = flow.k;
    p.alpha = alpha;
    p.tol_feas = tol_feas;
    p.delta_max = delta_max;
    p.cube = false;
    p.map = [fp = &flow, ctx = std::move(context)](const Vec& l) {
        return flow_forward(*fp, l, ctx);
    };
    p.size = [](const Vec& l) { return l.squaredNorm(); };
    p.g = [fn = std::move(g)](const Schedule*, const Vec& y) { return fn(y); };
    p.validate();
    return p;
}

SipProblem make_cube_problem(Vec center, std::function<double(const Vec&)> g, double alpha,
                             double tol_feas, double delta_max) {
    SipProblem p;
    p.k = static_cast<int>(center.size());
    p.alpha = alpha;
    p.tol_feas = tol_feas;
    p.delta_max = delta_max;
    p.cube = true;
    p.map = [c = std::move(center)](const Vec& l) -> Vec { return c + l; };
    p.size = [](const Vec& l) { return l.cwiseAbs().maxCoeff(); };
    p.g = [fn = std::move(g)](const Schedule*, const Vec& y) { return fn(y); };
    p.validate();
    return p;
}

namespace {

double scuc_g(const GridModel& grid, const Schedule* x, const Vec& cf) {
    if (!x) throw ConfigError("SCUC constraint oracle needs a schedule");
    const Vec p_ren = cf.cwiseMax(0.0).cwiseProduct(grid.ren_cap);
    return constraint_g(grid, *x, p_ren);
}

}  // namespace

SipProblem make_scuc_ball_problem(const GridModel& grid, const ConditionalFlow& flow,
                                  Vec context, double alpha, double tol_feas,
                                  double delta_max) {
    SipProblem p;
    p.k = flow.k;
    p.alpha = alpha;
    p.tol_feas = tol_feas;
    p.delta_max = delta_max;
    p.cube = false;
    p.map = [fp = &flow, ctx = std::move(context)](const Vec& l) {
        return flow_forward(*fp, l, ctx);
    };
    p.size = [](const Vec& l) { return l.squaredNorm(); };
    p.g = [gp = &grid](const Schedule* x, const Vec& y) { return scuc_g(*gp, x, y); };
    p.validate();
    return p;
}

SipProblem make_scuc_cube_problem(const GridModel& grid, Vec center, double alpha,
                                  double tol_feas, double delta_max) {
    SipProblem p;
    p.k = static_cast<int>(center.size());
    p.alpha = alpha;
    p.tol_feas = tol_feas;
    p.delta_max = delta_max;
    p.cube = true;
    // The cube lives in capacity-factor space intersected with the box [0,1]^N.
    Vec c = std::move(center);
    p.map = [c](const Vec& l) -> Vec { return (c + l).cwiseMax(0.0).cwiseMin(1.0); };
    p.size = [c](const Vec& l) -> double {
        const Vec y = (c + l).cwiseMax(0.0).cwiseMin(1.0);
        return (y - c).cwiseAbs().maxCoeff();
    };
    p.g = [gp = &grid](const Schedule* x, const Vec& y) { return scuc_g(*gp, x, y); };
    p.validate();
    return p;
}

LowerLevelResult lower_level_solve(const SipProblem& p, const Schedule* x, double delta,
                                   const SipConfig& cfg) {
    p.validate();
    if (delta < 0.0) throw ConfigError("lower_level_solve: delta must be >= 0");
    if (cfg.nm_evals < 1)
        throw ConfigError("lower_level_solve: evaluation budget must allow at least one eval");
    if (cfg.n_sobol < 0) throw ConfigError("lower_level_solve: negative start count");

    auto phi = [&](const Vec& l) { return p.phi(x, l, delta); };

    const double r = p.cube ? p.delta_max : std::sqrt(p.delta_max) + 1.0;
    const int n_starts = 1 + cfg.n_sobol;
    std::vector<Vec> starts(n_starts);
    starts[0] = Vec::Zero(p.k);
    SobolSeq sobol(p.k);
    sobol.next();  // the all-zeros point duplicates the origin start
    for (int i = 1; i < n_starts; ++i)
        starts[i] = r * (2.0 * sobol.next().array() - 1.0).matrix();

    struct Cand {
        Vec l;
        double value = kNegInf;
        double size = 0;
        int evals = 0;
    };
    std::vector<Cand> cands(n_starts);
    parallel_for(n_starts, cfg.threads, [&](int i) {
        const NmResult nm = nelder_mead_max(phi, starts[i], r / 8.0, cfg.nm_evals);
        cands[i] = {nm.x, nm.value, p.size(nm.x), nm.evals};
    });

    LowerLevelResult best;
    best.l = Vec::Zero(p.k);
    best.value = kNegInf;
    int total_evals = 0;
    for (const Cand& c : cands) {
        total_evals += c.evals;
        if (c.value > best.value || (c.value == best.value && c.size < best.size)) {
            best.l = c.l;
            best.value = c.value;
            best.size = c.size;
        }
    }

    if (p.k <= 3 && cfg.grid_certify) {
        if (cfg.grid_per_axis < 2)
            throw ConfigError("lower_level_solve: grid_per_axis must be >= 2");
        const double radius = p.cube ? delta : std::sqrt(delta);
        if (radius > 0.0) {
            const int m = cfg.grid_per_axis;
            long total = 1;
            for (int d = 0; d < p.k; ++d) total *= m;
            const int n_chunks = std::max(1, std::min(cfg.threads, 16));
            std::vector<Cand> chunk_best(n_chunks);
            parallel_for(n_chunks, cfg.threads, [&](int ci) {
                const long lo = total * ci / n_chunks;
                const long hi = total * (ci + 1) / n_chunks;
                Cand cb;
                Vec l(p.k);
                for (long idx = lo; idx < hi; ++idx) {
                    long t = idx;
                    for (int d = 0; d < p.k; ++d) {
                        const long j = t % m;
                        t /= m;
                        l[d] = -radius + 2.0 * radius * static_cast<double>(j) / (m - 1);
                    }
                    const double v = phi(l);
                    if (v >= cb.value) {
                        const double sz = p.size(l);
                        if (cb.l.size() == 0 || v > cb.value || sz < cb.size) {
                            cb.l = l;
                            cb.value = v;
                            cb.size = sz;
                        }
                    }
                    ++cb.evals;
                }
                chunk_best[ci] = cb;
            });
            Cand grid_best;
            for (const Cand& cb : chunk_best) {
                total_evals += cb.evals;
                if (cb.l.size() == 0) continue;
                if (grid_best.l.size() == 0 || cb.value > grid_best.value ||
                    (cb.value == grid_best.value && cb.size < grid_best.size))
                    grid_best = cb;
            }
            if (grid_best.l.size() > 0 && grid_best.value > best.value) {
                // The grid beat the multistart: adopt its point and polish it.
                const NmResult nm =
                    nelder_mead_max(phi, grid_best.l, 2.0 * radius / (m - 1), cfg.nm_evals);
                total_evals += nm.evals;
                if (nm.value > grid_best.value) {
                    best.l = nm.x;
                    best.value = nm.value;
                    best.size = p.size(nm.x);
                } else {
                    best.l = grid_best.l;
                    best.value = grid_best.value;
                    best.size = grid_best.size;
                }
            }
        }
        best.grid_checked = true;
    }

    best.y = p.map(best.l);
    best.evals = total_evals;
    return best;
}

double upper_level_fixed_design(const std::vector<Scenario>& scenarios, double delta_max,
                                double alpha, double tol_feas) {
    if (alpha <= 0.0) throw ConfigError("upper_level_fixed_design: alpha must be > 0");
    double d = delta_max;
    for (const Scenario& s : scenarios) d = std::min(d, s.size + tol_feas / alpha);
    return d;
}

UpperScucResult upper_level_scuc(const GridModel& grid, const SipProblem& p,
                                 const std::vector<Scenario>& scenarios,
                                 const Vec* warm_pset, const SipConfig& cfg) {
    const int n = grid.n();
    const Vec lo = Vec::Zero(n);
    const Vec hi = grid.conv_cap;
    const double tol_u = cfg.upper_uses_tol ? p.tol_feas : 0.0;

    auto score = [&](const Vec& pset) -> LexScore {
        const Schedule s = make_schedule(grid, pset);
        double d = p.delta_max;
        double viol = 0.0;
        for (const Scenario& sc : scenarios) {
            const double gk = p.g(&s, sc.y);
            if (gk > tol_u) d = std::min(d, sc.size + tol_u / p.alpha);
            viol += std::max(0.0, gk - tol_u);
        }
        return {d, -viol};
    };

    std::vector<Vec> starts;
    if (warm_pset) starts.push_back(warm_pset->cwiseMax(lo).cwiseMin(hi));
    starts.push_back(grid.demand.cwiseMax(lo).cwiseMin(hi));
    starts.push_back(hi);
    starts.push_back(lo);
    starts.push_back((grid.participation * grid.demand.sum()).cwiseMax(lo).cwiseMin(hi));
    SobolSeq sobol(n);
    sobol.next();
    while (static_cast<int>(starts.size()) < std::max(cfg.ps_starts, 1)) {
        const Vec u = sobol.next();
        starts.push_back(lo + u.cwiseProduct(hi - lo));
    }

    const Vec step0 = (hi - lo) / 4.0;
    std::vector<PatternResult> res(starts.size());
    parallel_for(static_cast<int>(starts.size()), cfg.threads, [&](int i) {
        res[i] = pattern_search_max(score, starts[i], lo, hi, step0, cfg.ps_levels,
                                    cfg.ps_shrink);
    });

    int best_i = 0;
    for (int i = 1; i < static_cast<int>(res.size()); ++i)
        if (lex_better(res[i].score, res[best_i].score)) best_i = i;

    UpperScucResult out;
    // Re-validate the winner against every scenario from scratch.
    const LexScore final_score = score(res[best_i].x);
    out.schedule = make_schedule(grid, res[best_i].x);
    out.delta = final_score.primary;
    if (out.delta <= 0.0)
        out.diagnostic = "no setpoint covers the set center: best delta <= 0";
    return out;
}

BfResult blankenship_falk(const SipProblem& p, const UpperSolver& upper,
                          const SipConfig& cfg) {
    p.validate();
    if (cfg.max_iter < 1) throw ConfigError("blankenship_falk: max_iter must be >= 1");

    BfResult out;
    DiscretizationState& st = out.state;
    double prev_delta = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        auto [xu, du] = upper(st.scenarios);
        // Clamp: with a superset of cuts the true optimum cannot grow; a local
        // upper solver may still report more, and feasibility only improves when
        // delta shrinks.
        const double delta = std::min(du, prev_delta);
        prev_delta = delta;
        out.delta = delta;
        out.schedule = std::move(xu);
        st.delta_history.push_back(delta);
        st.x_history.push_back(out.schedule ? out.schedule->p_set : Vec());
        st.iterations = iter;

        const Schedule* xp = out.schedule ? &*out.schedule : nullptr;
        const LowerLevelResult ll = lower_level_solve(p, xp, delta, cfg);
        st.ll_values.push_back(ll.value);
        if (ll.value <= p.tol_feas) {
            st.converged = true;
            break;
        }
        st.scenarios.push_back({ll.l, ll.y, ll.size, ll.value, iter});
    }
    if (!st.converged)
        st.diagnostic = "iteration cap reached before the worst case was certified feasible";
    return out;
}

Certificate certify(const SipProblem& p, const Schedule* x, double delta,
                    const SipConfig& cfg) {
    Certificate c;
    c.n_samples = cfg.cert_samples;
    c.max_g = kNegInf;
    Rng rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
    Vec l(p.k);
    for (int i = 0; i < cfg.cert_samples; ++i) {
        if (p.cube) {
            for (int d = 0; d < p.k; ++d) l[d] = rng.uniform(-delta, delta);
        } else {
            l = ball_sample(p.k, delta, rng);
        }
        c.max_g = std::max(c.max_g, p.phi(x, l, delta));
    }
    c.ok = c.max_g <= p.tol_feas + cfg.cert_margin;
    return c;
}

CfiResult solve_cfi(const SipProblem& p, const SipConfig& cfg) {
    p.validate();
    const double tol_u = cfg.upper_uses_tol ? p.tol_feas : 0.0;
    const UpperSolver upper = [&](const std::vector<Scenario>& sc) {
        return std::pair<std::optional<Schedule>, double>(
            std::nullopt, upper_level_fixed_design(sc, p.delta_max, p.alpha, tol_u));
    };
    BfResult bf = blankenship_falk(p, upper, cfg);

    CfiResult r;
    r.delta = bf.delta;
    r.state = std::move(bf.state);
    r.coverage = p.cube ? std::numeric_limits<double>::quiet_NaN()
                        : analytical_coverage(p.k, r.delta);
    r.certificate = certify(p, nullptr, r.delta, cfg);
    return r;
}

CfiResult solve_cfi_scuc(const GridModel& grid, const SipProblem& p, const SipConfig& cfg) {
    p.validate();
    std::optional<Vec> warm;
    std::string upper_diag;
    const UpperSolver upper = [&](const std::vector<Scenario>& sc) {
        UpperScucResult u = upper_level_scuc(grid, p, sc, warm ? &*warm : nullptr, cfg);
        warm = u.schedule.p_set;
        if (!u.diagnostic.empty()) upper_diag = u.diagnostic;
        return std::pair<std::optional<Schedule>, double>(std::move(u.schedule), u.delta);
    };
    BfResult bf = blankenship_falk(p, upper, cfg);

    CfiResult r;
    r.delta = bf.delta;
    r.schedule = std::move(bf.schedule);
    r.state = std::move(bf.state);
    if (!upper_diag.empty())
        r.state.diagnostic += (r.state.diagnostic.empty() ? "" : "; ") + upper_diag;
    r.coverage = p.cube ? std::numeric_limits<double>::quiet_NaN()
                        : analytical_coverage(p.k, r.delta);
    r.certificate = certify(p, r.schedule ? &*r.schedule : nullptr, r.delta, cfg);
    return r;
}

CfiResult solve_hypercube(Vec center, std::function<double(const Vec&)> g, double alpha,
                          double tol_feas, double delta_max, const SipConfig& cfg) {
    return solve_cfi(
        make_cube_problem(std::move(center), std::move(g), alpha, tol_feas, delta_max), cfg);
}

const MethodStats& BenchmarkReport::by_name(const std::string& name) const {
    for (const MethodStats& m : methods)
        if (m.name == name) return m;
    throw ConfigError("benchmark report has no method named '" + name + "'");
}

BenchmarkReport benchmark_schedules(const GridModel& grid,
                                    const std::vector<BenchmarkMethod>& methods,
                                    const CfTable& test_table, const BenchmarkConfig& cfg) {
    grid.validate();
    if (test_table.rows() < 2)
        throw DataError("benchmark_schedules: need at least two rows of capacity factors");
    if (test_table.buses() != grid.n())
        throw DataError("benchmark_schedules: table has " + std::to_string(test_table.buses()) +
                        " buses, grid has " + std::to_string(grid.n()));
    if (methods.empty()) throw ConfigError("benchmark_schedules: no methods given");

    // Context datasets per mode; row j pairs realization cf_{j+1} with context
    // built from cf_j (and the encoded time of row j+1).
    std::map<ContextMode, Dataset> ctx;
    auto ensure_ctx = [&](ContextMode m) {
        if (!ctx.count(m)) ctx.emplace(m, build_contexts(test_table, m));
    };
    for (const BenchmarkMethod& m : methods) {
        if (m.flow) ensure_ctx(m.mode);
        if (m.center_flow) ensure_ctx(m.center_mode);
    }

    const int n_rows = test_table.rows() - 1;
    BenchmarkReport rep;
    rep.tol = cfg.tol_feas;
    rep.hour.resize(n_rows);
    for (int j = 0; j < n_rows; ++j) rep.hour[j] = hour_of_day(test_table.t[j + 1]);
    for (const BenchmarkMethod& m : methods) {
        MethodStats st;
        st.name = m.name;
        rep.methods.push_back(std::move(st));
    }

    for (int j = 0; j < n_rows; ++j) {
        const Vec realized = test_table.cf.row(j + 1).transpose();
        const int h = rep.hour[j];
        for (size_t mi = 0; mi < methods.size(); ++mi) {
            const BenchmarkMethod& m = methods[mi];
            SipConfig sip = cfg.sip;
            sip.seed = cfg.sip.seed + 1000003ULL * static_cast<uint64_t>(j) + mi;

            CfiResult res;
            if (m.cube) {
                Vec center;
                if (m.center_flow) {
                    const Vec c = ctx.at(m.center_mode).c.row(j).transpose();
                    center = flow_forward(*m.center_flow, Vec::Zero(m.center_flow->k), c)
                                 .cwiseMax(0.0)
                                 .cwiseMin(1.0);
                } else {
                    center = test_table.cf.row(j).transpose();
                }
                const SipProblem p = make_scuc_cube_problem(grid, std::move(center),
                                                            cfg.alpha_cube, cfg.tol_feas,
                                                            cfg.delta_max_cube);
                res = solve_cfi_scuc(grid, p, sip);
            } else {
                if (!m.flow)
                    throw ConfigError("benchmark method '" + m.name + "' has no flow model");
                const Vec c = ctx.at(m.mode).c.row(j).transpose();
                const SipProblem p = make_scuc_ball_problem(grid, *m.flow, c, cfg.alpha_flow,
                                                            cfg.tol_feas, cfg.delta_max_flow);
                res = solve_cfi_scuc(grid, p, sip);
            }

            const Schedule& s = *res.schedule;
            MethodStats& st = rep.methods[mi];
            st.n += 1;
            st.n_hour[h] += 1;
            st.deltas.push_back(res.delta);
            st.p_set.push_back(s.p_set);

            const Vec p_ren = realized.cwiseMax(0.0).cwiseProduct(grid.ren_cap);
            const DispatchResult d = dispatch(grid, s, p_ren);
            const double gv = constraint_g(grid, s, p_ren, d);
            if (gv <= cfg.tol_feas) {
                st.feasible += 1;
                st.feas_hour[h] += 1;
            } else {
                const double net = (grid.demand - p_ren).sum();
                const double over = s.p_lb.sum() - net;
                const double under = net - s.p_ub.sum();
                double line = kNegInf;
                for (size_t li = 0; li < grid.lines.size(); ++li)
                    line = std::max(line,
                                    std::abs(d.p_line[static_cast<int>(li)]) -
                                        grid.lines[li].capacity);
                if (over >= under && over >= line)
                    st.infeas_over += 1;
                else if (under >= line)
                    st.infeas_under += 1;
                else
                    st.infeas_line += 1;
            }
        }
    }
    return rep;
}

std::array<double, 24> delta_pset_curve(const BenchmarkReport& report, const std::string& a,
                                        const std::string& b) {
    const MethodStats& ma = report.by_name(a);
    const MethodStats& mb = report.by_name(b);
    if (ma.p_set.size() != report.hour.size() || mb.p_set.size() != report.hour.size())
        throw ConfigError("delta_pset_curve: methods were not evaluated on every row");
    std::array<double, 24> sum{};
    std::array<int, 24> cnt{};
    for (size_t j = 0; j < report.hour.size(); ++j) {
        sum[report.hour[j]] += ma.p_set[j].sum() - mb.p_set[j].sum();
        cnt[report.hour[j]] += 1;
    }
    std::array<double, 24> out{};
    for (int h = 0; h < 24; ++h) out[h] = cnt[h] ? sum[h] / cnt[h] : 0.0;
    return out;
}

}  // namespace cfi
