// Command-line front end: dataset generation, flow training, flexibility-index
// solves, coverage reports, schedule benchmarking, figure rendering, and graph
// export. Every command writes a run manifest with content hashes of its
// artifacts; identical inputs and seeds reproduce identical result files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "plot.hpp"

#include "cfi/data.hpp"
#include "cfi/graph.hpp"
#include "cfi/grid.hpp"
#include "cfi/io.hpp"
#include "cfi/sip.hpp"
#include "cfi/train.hpp"
#include "cfi/usets.hpp"

using json = nlohmann::ordered_json;
using namespace cfi;

namespace {

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

// Round through the fixed 9-significant-digit text form so JSON numbers match
// the CSV formatting exactly.
double r9(double v) { return std::isfinite(v) ? std::stod(fmt_num(v)) : v; }

json jvec(const Vec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(r9(v[i]));
    return a;
}

Vec parse_vec(const std::string& s, const std::string& what) {
    const auto cells = csv_split(s);
    Vec v(static_cast<int>(cells.size()));
    for (int i = 0; i < v.size(); ++i) {
        try {
            size_t pos = 0;
            v[i] = std::stod(cells[i], &pos);
            if (pos != cells[i].size()) throw std::invalid_argument(cells[i]);
        } catch (const std::exception&) {
            throw ConfigError(what + ": not a number: '" + cells[i] + "'");
        }
    }
    return v;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
    const Vec v = parse_vec(s, what);
    std::vector<int> out(v.size());
    for (int i = 0; i < v.size(); ++i) {
        out[i] = static_cast<int>(v[i]);
        if (out[i] != v[i] || out[i] < 1) throw ConfigError(what + ": needs positive integers");
    }
    return out;
}

std::string vec_str(const Vec& v) {
    std::string s = "[";
    for (int i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_num(v[i]);
    return s + "]";
}

// Smallest delta with analytical_coverage(k, delta) >= p (chi-square quantile).
double chi2_inv(int k, double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("target coverage must be in (0, 1)");
    double lo = 0.0, hi = 1.0;
    while (chi2_cdf(k, hi) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (chi2_cdf(k, mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

int64_t now_s() {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// Output-directory handle that records written artifacts and finishes with a
// manifest (command, config, seed, timestamps, content hash per artifact).
struct Run {
    std::string command, config_path, out_dir;
    uint64_t seed;
    int64_t started = now_s();
    std::vector<std::string> files;

    Run(std::string cmd, std::string cfg, std::string out, uint64_t sd)
        : command(std::move(cmd)), config_path(std::move(cfg)), out_dir(std::move(out)), seed(sd) {
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        if (ec) throw DataError("cannot create output directory " + out_dir + ": " + ec.message());
    }
    std::string path(const std::string& name) const { return out_dir + "/" + name; }
    void wrote(const std::string& name) { files.push_back(name); }
    void write(const std::string& name, const std::string& content) {
        write_file(path(name), content);
        wrote(name);
    }
    void manifest() const {
        json m;
        m["command"] = command;
        m["config"] = config_path;
        m["seed"] = seed;
        m["out"] = out_dir;
        m["started"] = format_iso8601(started);
        m["finished"] = format_iso8601(now_s());
        json h = json::object();
        for (const auto& f : files) h[f] = fnv1a_hex(read_file(path(f)));
        m["artifacts"] = std::move(h);
        write_file(path("manifest.json"), m.dump(2) + "\n");
    }
};

// Global flags shared by all commands; a JSON config file supplies defaults for
// any long option (key = option name without dashes), explicit flags win.
struct Globals {
    std::string config_path;
    std::string out_dir = ".";
    uint64_t seed = 0;
    int threads = 1;
    json cfg = json::object();
    bool loaded = false;

    void load(const CLI::App* root) {
        if (loaded) return;
        loaded = true;
        if (!config_path.empty()) {
            std::string text;
            try {
                text = read_file(config_path);
            } catch (const DataError& e) {
                throw ConfigError(e.what());
            }
            try {
                cfg = json::parse(text);
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(config_path + ": " + e.what());
            }
            if (!cfg.is_object()) throw ConfigError(config_path + ": config must be a JSON object");
        }
        apply(root, "seed", seed);
        apply(root, "threads", threads);
        apply(root, "out", out_dir);
    }

    template <typename T>
    void apply(const CLI::App* app, const std::string& key, T& slot) const {
        const CLI::Option* opt = app->get_option_no_throw("--" + key);
        if (opt && opt->count() > 0) return;
        const auto it = cfg.find(key);
        if (it == cfg.end()) return;
        try {
            slot = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config key '" + key + "': " + e.what());
        }
    }
};

void add_sip_options(CLI::App* sub, SipConfig& sc) {
    sub->add_option("--n-sobol", sc.n_sobol, "worst-case search quasi-random starts");
    sub->add_option("--nm-evals", sc.nm_evals, "simplex evaluation budget per start");
    sub->add_option("--max-iter", sc.max_iter, "discretization iteration cap");
    sub->add_option("--grid-per-axis", sc.grid_per_axis, "worst-case certification grid resolution");
    sub->add_option("--cert-samples", sc.cert_samples, "feasibility certificate sample count");
    sub->add_option("--cert-margin", sc.cert_margin, "feasibility certificate tolerance margin");
    sub->add_option("--ps-starts", sc.ps_starts, "setpoint pattern-search starts");
    sub->add_flag("--upper-tol", sc.upper_uses_tol, "loosen upper-level cuts by tol/alpha");
}

void merge_sip(const Globals& g, const CLI::App* sub, SipConfig& sc) {
    g.apply(sub, "n-sobol", sc.n_sobol);
    g.apply(sub, "nm-evals", sc.nm_evals);
    g.apply(sub, "max-iter", sc.max_iter);
    g.apply(sub, "grid-per-axis", sc.grid_per_axis);
    g.apply(sub, "cert-samples", sc.cert_samples);
    g.apply(sub, "cert-margin", sc.cert_margin);
    g.apply(sub, "ps-starts", sc.ps_starts);
    g.apply(sub, "upper-tol", sc.upper_uses_tol);
}

// Fixed standardization for a fresh flow: per-column shift to zero mean, one
// shared scale = 1 / rms of the centered training values.
std::pair<Vec, double> standardizer(const Mat& y) {
    const Vec mean = y.colwise().mean();
    const Mat centered = y.rowwise() - mean.transpose();
    double rms = std::sqrt(centered.array().square().mean());
    if (!(rms > 1e-12)) rms = 1.0;
    return {-mean, 1.0 / rms};
}

struct Trained {
    TrainResult result;
    Dataset val;
};

Trained train_flow(const Dataset& d, int blocks, int hidden, int depth, TrainConfig tc,
                   double val_frac, uint64_t seed) {
    Rng rng(seed);
    auto [train, val] = split(d, val_frac, rng);
    auto [shift, scale] = standardizer(train.y);
    const ConditionalFlow f = make_flow(static_cast<int>(d.y.cols()),
                                        static_cast<int>(d.c.cols()), blocks, hidden, depth,
                                        rng, shift, scale);
    tc.seed = seed;
    return {fit(f, train.y, train.c, val.y, val.c, tc), std::move(val)};
}

GridModel resolve_grid(const std::string& grid_path, double line_scale,
                       const std::string& demand, double demand_frac) {
    GridModel grid;
    if (grid_path.empty()) {
        grid = german_3bus(line_scale);
    } else {
        grid = load_grid(grid_path);
        if (line_scale != 1.0)
            for (auto& line : grid.lines) line.capacity *= line_scale;
    }
    if (!demand.empty()) {
        const Vec d = parse_vec(demand, "--demand");
        if (d.size() != grid.conv_cap.size())
            throw ConfigError("--demand needs one value per bus");
        grid.demand = d;
    } else if (grid.demand.size() == 0 || grid.demand.cwiseAbs().maxCoeff() == 0.0) {
        grid.demand = demand_frac * (grid.conv_cap + grid.ren_cap);
    }
    grid.validate();
    return grid;
}

std::string result_json(const CfiResult& r) {
    json out;
    out["delta"] = r9(r.delta);
    out["coverage"] = std::isfinite(r.coverage) ? json(r9(r.coverage)) : json(nullptr);
    if (r.schedule) {
        json s;
        s["p_set"] = jvec(r.schedule->p_set);
        s["p_lb"] = jvec(r.schedule->p_lb);
        s["p_ub"] = jvec(r.schedule->p_ub);
        out["schedule"] = std::move(s);
    }
    json iters = json::array();
    for (int i = 0; i < r.state.iterations; ++i) {
        json it;
        it["delta"] = r9(r.state.delta_history[i]);
        for (const Scenario& sc : r.state.scenarios)
            if (sc.iteration == i + 1) it["scenario_l"] = jvec(sc.l);
        it["ll_value"] = r9(r.state.ll_values[i]);
        iters.push_back(std::move(it));
    }
    out["iterations"] = std::move(iters);
    json cert;
    cert["n_samples"] = r.certificate.n_samples;
    cert["max_g"] = r9(r.certificate.max_g);
    out["certificate"] = std::move(cert);
    return out.dump(2) + "\n";
}

std::string iterations_csv(const DiscretizationState& st, int k) {
    std::ostringstream ss;
    ss << "iteration,delta,ll_value";
    for (int j = 0; j < k; ++j) ss << ",l" << j + 1;
    ss << "\n";
    for (int i = 0; i < st.iterations; ++i) {
        ss << i + 1 << "," << fmt_num(st.delta_history[i]) << "," << fmt_num(st.ll_values[i]);
        const Scenario* sc = nullptr;
        for (const auto& s : st.scenarios)
            if (s.iteration == i + 1) sc = &s;
        for (int j = 0; j < k; ++j) ss << "," << (sc ? fmt_num(sc->l[j]) : std::string());
        ss << "\n";
    }
    return ss.str();
}

// ---------------------------------------------------------------- gen-data --

struct GenArgs {
    std::string kind;
    int n = 100000;
    double noise = 0.1;
    double scale = 4.0;
    int days = 100;
    int buses = 3;
};

void cmd_gen_data(Globals& g, const CLI::App* sub, GenArgs& a) {
    g.apply(sub, "n", a.n);
    g.apply(sub, "noise", a.noise);
    g.apply(sub, "scale", a.scale);
    g.apply(sub, "days", a.days);
    g.apply(sub, "buses", a.buses);
    Run run("gen-data", g.config_path, g.out_dir, g.seed);
    Rng rng(g.seed);
    std::string name;
    int rows = 0;
    if (a.kind == "two-moons") {
        if (a.n <= 0) throw ConfigError("--n must be positive");
        const Dataset d = gen_two_moons(a.n, a.noise, a.scale, {-2.7, -0.85}, rng);
        name = "two_moons.csv";
        save_dataset(d, run.path(name));
        rows = d.n();
    } else if (a.kind == "annulus") {
        if (a.n <= 0) throw ConfigError("--n must be positive");
        const Dataset d = gen_annulus(a.n, a.noise, rng);
        name = "annulus.csv";
        save_dataset(d, run.path(name));
        rows = d.n();
    } else {  // scuc
        if (a.days <= 0 || a.buses <= 0) throw ConfigError("--days and --buses must be positive");
        const CfTable t = gen_synthetic_cf(a.days, a.buses, rng);
        name = "synthetic_cf.csv";
        save_capacity_factors(t, run.path(name));
        rows = t.rows();
    }
    run.wrote(name);
    run.manifest();
    std::cout << run.path(name) << ": " << rows << " rows\n";
}

// ------------------------------------------------------------------- train --

struct TrainArgs {
    std::string preset, data;
    std::string context_mode = "PREV_TD";
    int blocks = -1, hidden = 12, depth = 1, batch = -1, max_epochs = 500;
    double clip = kUnset, lr = 0.005, val_frac = 0.1;
    bool verbose = false;
};

void cmd_train(Globals& g, const CLI::App* sub, TrainArgs& a) {
    g.apply(sub, "context-mode", a.context_mode);
    g.apply(sub, "blocks", a.blocks);
    g.apply(sub, "hidden", a.hidden);
    g.apply(sub, "depth", a.depth);
    g.apply(sub, "batch", a.batch);
    g.apply(sub, "max-epochs", a.max_epochs);
    g.apply(sub, "clip", a.clip);
    g.apply(sub, "lr", a.lr);
    g.apply(sub, "val-frac", a.val_frac);

    const bool scuc = a.preset == "scuc";
    if (a.blocks < 0) a.blocks = scuc ? 4 : 5;
    if (a.batch < 0) a.batch = scuc ? 2048 : 8192;
    if (std::isnan(a.clip)) a.clip = scuc ? 1000.0 : 0.5;

    Dataset d;
    if (scuc) {
        const CfTable t = load_capacity_factors(a.data);
        d = build_contexts(t, context_mode_from_string(a.context_mode));
    } else {
        d = load_dataset(a.data, 2);
    }
    if (d.n() == 0) throw DataError(a.data + ": no data rows");

    TrainConfig tc;
    tc.lr = a.lr;
    tc.grad_clip = a.clip;
    tc.batch_size = a.batch;
    tc.max_epochs = a.max_epochs;
    tc.verbose = a.verbose;
    tc.validate();

    Run run("train", g.config_path, g.out_dir, g.seed);
    const Trained tr = train_flow(d, a.blocks, a.hidden, a.depth, tc, a.val_frac, g.seed);
    save_flow(tr.result.flow, run.path("model.json"));
    run.wrote("model.json");
    run.write("history.csv", history_csv(tr.result.history));
    run.manifest();
    std::cout << run.path("model.json") << ": best val nll " << fmt_num(tr.result.best_val_nll)
              << " after " << tr.result.history.size() << " epochs (" << tr.result.stop_reason
              << ")\n";
}

// ------------------------------------------------------------------- solve --

struct SolveArgs {
    std::string model, method = "flow", problem = "twomoons";
    std::vector<std::string> contexts;
    double alpha = kUnset, tol = kUnset, delta_max = kUnset;
    std::string center;
    std::string grid_path, demand;
    double line_scale = 1.0, demand_frac = 0.42;
    int grid_certify = -1;
    SipConfig sip;
};

void cmd_solve(Globals& g, const CLI::App* sub, SolveArgs& a) {
    g.apply(sub, "model", a.model);
    g.apply(sub, "method", a.method);
    g.apply(sub, "problem", a.problem);
    g.apply(sub, "alpha", a.alpha);
    g.apply(sub, "tol", a.tol);
    g.apply(sub, "delta-max", a.delta_max);
    g.apply(sub, "center", a.center);
    g.apply(sub, "grid", a.grid_path);
    g.apply(sub, "line-scale", a.line_scale);
    g.apply(sub, "demand", a.demand);
    g.apply(sub, "demand-frac", a.demand_frac);
    g.apply(sub, "grid-certify", a.grid_certify);
    merge_sip(g, sub, a.sip);

    const bool scuc = a.problem == "scuc";
    const bool cube = a.method == "cube";
    if (std::isnan(a.alpha)) a.alpha = scuc ? (cube ? 50000.0 : 500.0) : 1.0;
    if (std::isnan(a.tol)) a.tol = scuc ? 25.0 : 0.05;
    if (std::isnan(a.delta_max)) a.delta_max = scuc && cube ? 1.0 : 25.0;

    std::optional<ConditionalFlow> flow;
    if (!a.model.empty()) flow = load_flow(a.model);
    if (!cube && !flow) throw ConfigError("--method flow requires --model");
    if (cube && !flow && a.center.empty())
        throw ConfigError("--method cube requires --model or --center");

    std::vector<Vec> contexts;
    for (const auto& s : a.contexts) contexts.push_back(parse_vec(s, "--context"));
    if (contexts.empty())
        contexts.push_back(flow ? Vec(Vec::Zero(flow->context_dim)) : Vec(Vec::Zero(0)));
    if (flow)
        for (const Vec& c : contexts)
            if (static_cast<int>(c.size()) != flow->context_dim)
                throw ConfigError("--context needs " + std::to_string(flow->context_dim) +
                                  " values for this model");

    GridModel grid;
    std::function<double(const Vec&)> oracle;
    if (scuc) {
        grid = resolve_grid(a.grid_path, a.line_scale, a.demand, a.demand_frac);
    } else if (a.problem == "twomoons") {
        oracle = himmelblau_g;
    } else {
        oracle = annulus_g;
    }

    SipConfig sc = a.sip;
    sc.seed = g.seed;
    sc.threads = g.threads;
    sc.grid_certify = a.grid_certify < 0 ? !scuc : a.grid_certify != 0;

    Run run("solve", g.config_path, g.out_dir, g.seed);
    bool all_converged = true;
    std::string diagnostic;
    for (size_t j = 0; j < contexts.size(); ++j) {
        const Vec& c = contexts[j];
        CfiResult res;
        if (scuc && cube) {
            const Vec center = !a.center.empty()
                                   ? parse_vec(a.center, "--center")
                                   : Vec(flow_forward(*flow, Vec::Zero(flow->k), c)
                                             .cwiseMax(0.0)
                                             .cwiseMin(1.0));
            res = solve_cfi_scuc(grid, make_scuc_cube_problem(grid, center, a.alpha, a.tol,
                                                              a.delta_max), sc);
        } else if (scuc) {
            res = solve_cfi_scuc(grid, make_scuc_ball_problem(grid, *flow, c, a.alpha, a.tol,
                                                              a.delta_max), sc);
        } else if (cube) {
            const Vec center = !a.center.empty() ? parse_vec(a.center, "--center")
                                                 : flow_forward(*flow, Vec::Zero(flow->k), c);
            res = solve_cfi(make_cube_problem(center, oracle, a.alpha, a.tol, a.delta_max), sc);
        } else {
            res = solve_cfi(make_ball_problem(*flow, c, oracle, a.alpha, a.tol, a.delta_max), sc);
        }
        const std::string suffix = contexts.size() > 1 ? "_" + std::to_string(j + 1) : "";
        run.write("result" + suffix + ".json", result_json(res));
        const int k = flow ? flow->k
                           : static_cast<int>(parse_vec(a.center, "--center").size());
        run.write("iterations" + suffix + ".csv", iterations_csv(res.state, k));
        std::cout << "context " << vec_str(c) << ": delta " << fmt_num(res.delta) << " coverage "
                  << fmt_num(res.coverage) << " iterations " << res.state.iterations
                  << " cert max_g " << fmt_num(res.certificate.max_g)
                  << (res.certificate.ok ? " ok" : " FAIL") << "\n";
        if (!res.state.converged) {
            all_converged = false;
            diagnostic = res.state.diagnostic;
        }
    }
    run.manifest();
    if (!all_converged)
        throw SolveError(diagnostic.empty() ? "solve did not converge" : diagnostic);
}

// ---------------------------------------------------------------- coverage --

struct CovArgs {
    std::vector<std::string> models;
    std::string data;
    int k = 2;
    std::vector<std::string> contexts;
    double delta = kUnset, target = 0.95;
    std::string sweep_blocks = "5", sweep_hidden = "12";
    int seeds = 1, depth = 1, batch = 8192, max_epochs = 200;
    double val_frac = 0.2, lr = 0.005, clip = 0.5;
};

void cmd_coverage(Globals& g, const CLI::App* sub, CovArgs& a) {
    g.apply(sub, "k", a.k);
    g.apply(sub, "delta", a.delta);
    g.apply(sub, "target", a.target);
    g.apply(sub, "sweep-blocks", a.sweep_blocks);
    g.apply(sub, "sweep-hidden", a.sweep_hidden);
    g.apply(sub, "seeds", a.seeds);
    g.apply(sub, "depth", a.depth);
    g.apply(sub, "batch", a.batch);
    g.apply(sub, "max-epochs", a.max_epochs);
    g.apply(sub, "val-frac", a.val_frac);
    g.apply(sub, "lr", a.lr);
    g.apply(sub, "clip", a.clip);

    const Dataset d = load_dataset(a.data, a.k);
    if (d.n() == 0) throw DataError(a.data + ": no sample rows");

    std::ostringstream csv;
    Run run("coverage", g.config_path, g.out_dir, g.seed);
    if (!a.models.empty()) {
        // Evaluate stored models against the sample file.
        csv << "model,context,delta,analytical,empirical,deviation,n\n";
        std::vector<Vec> contexts;
        for (const auto& s : a.contexts) contexts.push_back(parse_vec(s, "--context"));
        for (const auto& mpath : a.models) {
            const ConditionalFlow flow = load_flow(mpath);
            if (flow.k != a.k)
                throw ConfigError(mpath + ": model dimension " + std::to_string(flow.k) +
                                  " does not match --k " + std::to_string(a.k));
            const double delta = std::isnan(a.delta) ? chi2_inv(flow.k, a.target) : a.delta;
            const LatentBall set{&flow, delta};
            const double anal = analytical_coverage(flow.k, delta);
            auto emit = [&](const std::string& label, double emp, int n) {
                csv << mpath << "," << label << "," << fmt_num(delta) << "," << fmt_num(anal)
                    << "," << fmt_num(emp) << "," << fmt_num(emp - anal) << "," << n << "\n";
            };
            if (contexts.empty()) {
                // No context filter: each sample row is tested with its own context.
                int inside = 0;
                for (int i = 0; i < d.n(); ++i)
                    inside += membership(set, d.y.row(i), d.c.row(i)).member;
                emit("rows", static_cast<double>(inside) / d.n(), d.n());
            } else {
                for (const Vec& c : contexts) {
                    if (static_cast<int>(c.size()) != flow.context_dim)
                        throw ConfigError("--context needs " +
                                          std::to_string(flow.context_dim) + " values");
                    int n = 0, inside = 0;
                    for (int i = 0; i < d.n(); ++i) {
                        if ((d.c.row(i).transpose() - c).cwiseAbs().maxCoeff() > 1e-9) continue;
                        ++n;
                        inside += membership(set, d.y.row(i), c).member;
                    }
                    if (n == 0)
                        throw DataError(a.data + ": no sample rows with context " + vec_str(c));
                    std::string label = vec_str(c);
                    std::replace(label.begin(), label.end(), ',', ';');
                    emit(label, static_cast<double>(inside) / n, n);
                }
            }
        }
    } else {
        // Sweep: train a model per (blocks, hidden, seed) cell and report the
        // held-out coverage deviation at the target analytical coverage.
        csv << "blocks,hidden,seed,delta,analytical,empirical,deviation\n";
        if (a.seeds < 1) throw ConfigError("--seeds must be positive");
        TrainConfig tc;
        tc.lr = a.lr;
        tc.grad_clip = a.clip;
        tc.batch_size = std::min<int>(a.batch, std::max(1, d.n() - 1));
        tc.max_epochs = a.max_epochs;
        for (int b : parse_int_list(a.sweep_blocks, "--sweep-blocks")) {
            for (int hdim : parse_int_list(a.sweep_hidden, "--sweep-hidden")) {
                for (int s = 0; s < a.seeds; ++s) {
                    const uint64_t seed = g.seed + static_cast<uint64_t>(s);
                    const Trained tr = train_flow(d, b, hdim, a.depth, tc, a.val_frac, seed);
                    const double delta =
                        std::isnan(a.delta) ? chi2_inv(a.k, a.target) : a.delta;
                    const LatentBall set{&tr.result.flow, delta};
                    int inside = 0;
                    for (int i = 0; i < tr.val.n(); ++i)
                        inside += membership(set, tr.val.y.row(i), tr.val.c.row(i)).member;
                    const double anal = analytical_coverage(a.k, delta);
                    const double emp = static_cast<double>(inside) / tr.val.n();
                    csv << b << "," << hdim << "," << seed << "," << fmt_num(delta) << ","
                        << fmt_num(anal) << "," << fmt_num(emp) << "," << fmt_num(emp - anal)
                        << "\n";
                }
            }
        }
    }
    run.write("coverage.csv", csv.str());
    run.manifest();
    std::cout << csv.str();
}

// -------------------------------------------------------------------- eval --

struct EvalArgs {
    std::string cf;
    std::vector<std::string> methods;
    std::string grid_path, demand;
    double line_scale = 1.0, demand_frac = 0.42;
    double alpha_flow = 500.0, alpha_cube = 50000.0, tol = 25.0;
    double delta_max_flow = 25.0, delta_max_cube = 1.0;
    std::vector<std::string> pairs;
    int grid_certify = 0;
    SipConfig sip;
};

BenchmarkMethod parse_method(const std::string& spec, std::deque<ConditionalFlow>& store) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? spec : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? "" : spec.substr(eq + 1);
    BenchmarkMethod m;
    m.name = name;
    if (name == "PREV" || name == "PREV_T" || name == "PREV_TD") {
        if (path.empty()) throw ConfigError("--method " + name + " needs =<model.json>");
        store.push_back(load_flow(path));
        m.flow = &store.back();
        m.mode = context_mode_from_string(name);
    } else if (name == "CUBE") {
        if (!path.empty())
            throw ConfigError("CUBE takes no model; use CUBE@NF-center=<model.json>");
        m.cube = true;
    } else if (name == "CUBE@NF-center") {
        if (path.empty()) throw ConfigError("--method CUBE@NF-center needs =<model.json>");
        m.cube = true;
        store.push_back(load_flow(path));
        m.center_flow = &store.back();
        m.center_mode = ContextMode::PrevTD;
    } else {
        throw ConfigError("unknown method '" + name +
                          "' (PREV, PREV_T, PREV_TD, CUBE, CUBE@NF-center)");
    }
    return m;
}

void cmd_eval(Globals& g, const CLI::App* sub, EvalArgs& a) {
    g.apply(sub, "grid", a.grid_path);
    g.apply(sub, "line-scale", a.line_scale);
    g.apply(sub, "demand", a.demand);
    g.apply(sub, "demand-frac", a.demand_frac);
    g.apply(sub, "alpha-flow", a.alpha_flow);
    g.apply(sub, "alpha-cube", a.alpha_cube);
    g.apply(sub, "tol", a.tol);
    g.apply(sub, "delta-max-flow", a.delta_max_flow);
    g.apply(sub, "delta-max-cube", a.delta_max_cube);
    g.apply(sub, "grid-certify", a.grid_certify);
    merge_sip(g, sub, a.sip);
    if (a.methods.empty()) throw ConfigError("need at least one --method");

    std::deque<ConditionalFlow> store;
    std::vector<BenchmarkMethod> methods;
    for (const auto& spec : a.methods) methods.push_back(parse_method(spec, store));

    const CfTable table = load_capacity_factors(a.cf);
    const GridModel grid = resolve_grid(a.grid_path, a.line_scale, a.demand, a.demand_frac);

    BenchmarkConfig bc;
    bc.sip = a.sip;
    bc.sip.seed = g.seed;
    bc.sip.threads = g.threads;
    bc.sip.grid_certify = a.grid_certify != 0;
    bc.alpha_flow = a.alpha_flow;
    bc.alpha_cube = a.alpha_cube;
    bc.tol_feas = a.tol;
    bc.delta_max_flow = a.delta_max_flow;
    bc.delta_max_cube = a.delta_max_cube;

    Run run("eval", g.config_path, g.out_dir, g.seed);
    const BenchmarkReport report = benchmark_schedules(grid, methods, table, bc);

    std::ostringstream hourly;
    hourly << "hour,method,n,feasible,share\n";
    for (int h = 0; h < 24; ++h)
        for (const MethodStats& m : report.methods)
            hourly << h << "," << m.name << "," << m.n_hour[h] << "," << m.feas_hour[h] << ","
                   << fmt_num(m.share_hour(h)) << "\n";
    run.write("eval_hourly.csv", hourly.str());

    std::ostringstream summary;
    summary << "method,n,feasible,share,infeas_over,infeas_under,infeas_line,mean_delta\n";
    for (const MethodStats& m : report.methods) {
        double mean_delta = 0.0;
        for (double dv : m.deltas) mean_delta += dv;
        if (!m.deltas.empty()) mean_delta /= static_cast<double>(m.deltas.size());
        summary << m.name << "," << m.n << "," << m.feasible << "," << fmt_num(m.share()) << ","
                << m.infeas_over << "," << m.infeas_under << "," << m.infeas_line << ","
                << fmt_num(mean_delta) << "\n";
    }
    run.write("eval_summary.csv", summary.str());

    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& s : a.pairs) {
        const auto cells = csv_split(s);
        if (cells.size() != 2) throw ConfigError("--delta-pset needs METHOD_A,METHOD_B");
        pairs.emplace_back(cells[0], cells[1]);
    }
    auto has = [&](const std::string& n) {
        for (const auto& m : report.methods)
            if (m.name == n) return true;
        return false;
    };
    if (pairs.empty() && has("PREV_TD") && has("PREV")) pairs.emplace_back("PREV_TD", "PREV");
    if (!pairs.empty()) {
        std::vector<std::array<double, 24>> curves;
        std::ostringstream dp;
        dp << "hour";
        for (const auto& [pa, pb] : pairs) {
            dp << "," << pa << "-" << pb;
            curves.push_back(delta_pset_curve(report, pa, pb));
        }
        dp << "\n";
        for (int h = 0; h < 24; ++h) {
            dp << h;
            for (const auto& c : curves) dp << "," << fmt_num(c[h]);
            dp << "\n";
        }
        run.write("eval_delta_pset.csv", dp.str());
    }
    run.manifest();
    std::cout << summary.str();
}

// -------------------------------------------------------------------- plot --

struct PlotArgs {
    std::string kind, model, method = "flow", data, result, center, range;
    std::string context;
    double delta = kUnset;
    int cells = 200;
};

void cmd_plot(Globals& g, const CLI::App* sub, PlotArgs& a) {
    g.apply(sub, "model", a.model);
    g.apply(sub, "method", a.method);
    g.apply(sub, "data", a.data);
    g.apply(sub, "result", a.result);
    g.apply(sub, "center", a.center);
    g.apply(sub, "range", a.range);
    g.apply(sub, "context", a.context);
    g.apply(sub, "delta", a.delta);
    g.apply(sub, "cells", a.cells);

    Run run("plot", g.config_path, g.out_dir, g.seed);
    if (a.kind == "membership") {
        if (!a.result.empty()) {
            try {
                const auto j = json::parse(read_file(a.result));
                a.delta = j.at("delta").get<double>();
            } catch (const nlohmann::json::exception& e) {
                throw DataError(a.result + ": " + e.what());
            }
        }
        if (std::isnan(a.delta)) throw ConfigError("membership plot needs --delta or --result");

        Mat points(0, 2);
        if (!a.data.empty()) {
            const Dataset d = load_dataset(a.data, 2);
            if (d.n() == 0) throw DataError(a.data + ": no sample rows");
            points = d.y;
        }
        double xlo = -8, xhi = 8, ylo = -8, yhi = 8;
        if (!a.range.empty()) {
            const Vec r = parse_vec(a.range, "--range");
            if (r.size() != 4) throw ConfigError("--range needs xlo,xhi,ylo,yhi");
            xlo = r[0], xhi = r[1], ylo = r[2], yhi = r[3];
        } else if (points.rows() > 0) {
            xlo = points.col(0).minCoeff() - 1.0, xhi = points.col(0).maxCoeff() + 1.0;
            ylo = points.col(1).minCoeff() - 1.0, yhi = points.col(1).maxCoeff() + 1.0;
        }

        std::optional<ConditionalFlow> flow;
        if (!a.model.empty()) flow = load_flow(a.model);
        std::function<bool(double, double)> member;
        HypercubeSet cube_set;
        LatentBall ball_set;
        Vec ctx;
        if (a.method == "cube") {
            if (!a.center.empty()) {
                cube_set.center = parse_vec(a.center, "--center");
            } else if (flow) {
                ctx = a.context.empty() ? Vec(Vec::Zero(flow->context_dim))
                                        : parse_vec(a.context, "--context");
                cube_set.center = flow_forward(*flow, Vec::Zero(flow->k), ctx);
            } else {
                throw ConfigError("cube membership plot needs --center or --model");
            }
            if (cube_set.center.size() != 2) throw ConfigError("membership plot is 2D");
            cube_set.delta = a.delta;
            member = [&](double x, double y) {
                Vec p(2);
                p << x, y;
                return membership(cube_set, p).member;
            };
        } else {
            if (!flow) throw ConfigError("flow membership plot needs --model");
            if (flow->k != 2) throw ConfigError("membership plot is 2D");
            ctx = a.context.empty() ? Vec(Vec::Zero(flow->context_dim))
                                    : parse_vec(a.context, "--context");
            if (static_cast<int>(ctx.size()) != flow->context_dim)
                throw ConfigError("--context needs " + std::to_string(flow->context_dim) +
                                  " values for this model");
            ball_set.flow = &*flow;
            ball_set.delta = a.delta;
            member = [&](double x, double y) {
                Vec p(2);
                p << x, y;
                return membership(ball_set, p, ctx).member;
            };
        }
        run.write("membership.svg",
                  render_membership_svg(member, xlo, xhi, ylo, yhi, a.cells, points,
                                        "set membership, delta " + fmt_num(a.delta)));
        std::cout << run.path("membership.svg") << " written\n";
    } else if (a.kind == "coverage") {
        if (a.data.empty()) throw ConfigError("coverage plot needs --data coverage.csv");
        std::istringstream in(read_file(a.data));
        std::string line;
        if (!std::getline(in, line)) throw DataError(a.data + ": empty file");
        const auto header = csv_split(line);
        int ia = -1, ie = -1;
        for (size_t i = 0; i < header.size(); ++i) {
            if (header[i] == "analytical") ia = static_cast<int>(i);
            if (header[i] == "empirical") ie = static_cast<int>(i);
        }
        if (ia < 0 || ie < 0)
            throw DataError(a.data + ": needs 'analytical' and 'empirical' columns");
        std::vector<std::string> labels;
        std::vector<std::vector<double>> values;
        long ln = 1;
        while (std::getline(in, line)) {
            ++ln;
            if (line.empty()) continue;
            const auto cells = csv_split(line);
            if (cells.size() != header.size()) throw DataError(a.data, ln, "column mismatch");
            std::string label;
            for (int i = 0; i < ia; ++i) label += (i ? "/" : "") + cells[i];
            labels.push_back(label);
            values.push_back({parse_num(cells[ia], a.data, ln), parse_num(cells[ie], a.data, ln)});
        }
        if (labels.empty()) throw DataError(a.data + ": no rows");
        run.write("coverage.svg",
                  render_bars_svg(labels, {"analytical", "empirical"}, values, "coverage"));
        std::cout << run.path("coverage.svg") << " written\n";
    } else if (a.kind == "hourly") {
        if (a.data.empty()) throw ConfigError("hourly plot needs --data eval_hourly.csv");
        std::istringstream in(read_file(a.data));
        std::string line;
        if (!std::getline(in, line)) throw DataError(a.data + ": empty file");
        std::vector<std::string> series;
        std::vector<std::array<double, 24>> curves;
        long ln = 1;
        while (std::getline(in, line)) {
            ++ln;
            if (line.empty()) continue;
            const auto cells = csv_split(line);
            if (cells.size() < 5) throw DataError(a.data, ln, "expected hour,method,n,feasible,share");
            const int h = static_cast<int>(parse_num(cells[0], a.data, ln));
            if (h < 0 || h > 23) throw DataError(a.data, ln, "hour out of range");
            size_t idx = 0;
            while (idx < series.size() && series[idx] != cells[1]) ++idx;
            if (idx == series.size()) {
                series.push_back(cells[1]);
                curves.push_back({});
            }
            curves[idx][h] = parse_num(cells[4], a.data, ln);
        }
        if (series.empty()) throw DataError(a.data + ": no rows");
        run.write("hourly.svg",
                  render_hour_lines_svg(series, curves, "feasible share by hour"));
        std::cout << run.path("hourly.svg") << " written\n";
    }
    run.manifest();
}

// ------------------------------------------------------------ export-graph --

void cmd_export_graph(Globals& g, std::string& model) {
    Run run("export-graph", g.config_path, g.out_dir, g.seed);
    const ConditionalFlow flow = load_flow(model);
    const ConstraintGraph graph = export_graph(flow);
    save_graph(graph, run.path("graph.json"));
    run.wrote("graph.json");
    run.manifest();
    std::cout << run.path("graph.json") << ": " << graph.vars.size() << " vars, "
              << graph.nodes.size() << " nodes\n";
}

int run_cli(int argc, char** argv) {
    CLI::App app{"conditional flexibility index toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON file with default option values");
    app.add_option("--seed", g.seed, "RNG seed");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--threads", g.threads, "worker threads");

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset CSV");
    gen->fallthrough();
    GenArgs ga;
    gen->add_option("kind", ga.kind, "two-moons | annulus | scuc")
        ->required()
        ->check(CLI::IsMember({"two-moons", "annulus", "scuc"}));
    gen->add_option("--n", ga.n, "sample count");
    gen->add_option("--noise", ga.noise, "Gaussian noise level");
    gen->add_option("--scale", ga.scale, "two-moons coordinate scale");
    gen->add_option("--days", ga.days, "synthetic capacity-factor days");
    gen->add_option("--buses", ga.buses, "synthetic capacity-factor buses");
    gen->callback([&] {
        g.load(&app);
        cmd_gen_data(g, gen, ga);
    });

    auto* train = app.add_subcommand("train", "fit a conditional flow to a dataset");
    train->fallthrough();
    TrainArgs ta;
    train->add_option("preset", ta.preset, "two-moons | scuc")
        ->required()
        ->check(CLI::IsMember({"two-moons", "scuc"}));
    train->add_option("--data", ta.data, "dataset CSV (capacity-factor CSV for scuc)")
        ->required();
    train->add_option("--context-mode", ta.context_mode, "PREV | PREV_T | PREV_TD (scuc)");
    train->add_option("--blocks", ta.blocks, "coupling blocks");
    train->add_option("--hidden", ta.hidden, "conditioner hidden width");
    train->add_option("--depth", ta.depth, "conditioner hidden layers");
    train->add_option("--batch", ta.batch, "mini-batch size");
    train->add_option("--max-epochs", ta.max_epochs, "epoch cap");
    train->add_option("--clip", ta.clip, "gradient L2 norm cap");
    train->add_option("--lr", ta.lr, "Adam learning rate");
    train->add_option("--val-frac", ta.val_frac, "validation split fraction");
    train->add_flag("--verbose", ta.verbose, "per-epoch log lines");
    train->callback([&] {
        g.load(&app);
        cmd_train(g, train, ta);
    });

    auto* solve = app.add_subcommand("solve", "maximize the set size under the worst case");
    solve->fallthrough();
    SolveArgs sa;
    solve->add_option("--model", sa.model, "flow model JSON");
    solve->add_option("--method", sa.method, "flow | cube")
        ->check(CLI::IsMember({"flow", "cube"}));
    solve->add_option("--problem", sa.problem, "twomoons | annulus | scuc")
        ->check(CLI::IsMember({"twomoons", "annulus", "scuc"}));
    solve->add_option("--context", sa.contexts, "context vector (repeatable, comma-separated)");
    solve->add_option("--alpha", sa.alpha, "size-constraint weight");
    solve->add_option("--tol", sa.tol, "feasibility tolerance");
    solve->add_option("--delta-max", sa.delta_max, "set size cap");
    solve->add_option("--center", sa.center, "cube center (default: model output at l = 0)");
    solve->add_option("--grid", sa.grid_path, "grid model JSON (default: 3-bus reduction)");
    solve->add_option("--line-scale", sa.line_scale, "line capacity multiplier");
    solve->add_option("--demand", sa.demand, "per-bus demand [MW], comma-separated");
    solve->add_option("--demand-frac", sa.demand_frac,
                      "demand as a fraction of conventional+renewable capacity");
    solve->add_option("--grid-certify", sa.grid_certify,
                      "dense worst-case grid check: 0 off, 1 on, -1 auto")
        ->check(CLI::Range(-1, 1));
    add_sip_options(solve, sa.sip);
    solve->callback([&] {
        g.load(&app);
        cmd_solve(g, solve, sa);
    });

    auto* cov = app.add_subcommand("coverage", "analytical vs empirical coverage report");
    cov->fallthrough();
    CovArgs ca;
    cov->add_option("--model", ca.models, "flow model JSON (repeatable)");
    cov->add_option("--data", ca.data, "sample CSV")->required();
    cov->add_option("--k", ca.k, "sample dimension");
    cov->add_option("--context", ca.contexts, "context filter (repeatable)");
    cov->add_option("--delta", ca.delta, "set size (default: from --target)");
    cov->add_option("--target", ca.target, "target analytical coverage");
    cov->add_option("--sweep-blocks", ca.sweep_blocks, "comma-separated block counts to train");
    cov->add_option("--sweep-hidden", ca.sweep_hidden, "comma-separated hidden widths to train");
    cov->add_option("--seeds", ca.seeds, "seeds per sweep cell");
    cov->add_option("--depth", ca.depth, "conditioner hidden layers");
    cov->add_option("--batch", ca.batch, "mini-batch size");
    cov->add_option("--max-epochs", ca.max_epochs, "epoch cap per sweep cell");
    cov->add_option("--val-frac", ca.val_frac, "held-out fraction");
    cov->add_option("--lr", ca.lr, "Adam learning rate");
    cov->add_option("--clip", ca.clip, "gradient L2 norm cap");
    cov->callback([&] {
        g.load(&app);
        cmd_coverage(g, cov, ca);
    });

    auto* ev = app.add_subcommand("eval", "benchmark schedules against realized capacity factors");
    ev->fallthrough();
    EvalArgs ea;
    ev->add_option("--cf", ea.cf, "held-out capacity-factor CSV")->required();
    ev->add_option("--method", ea.methods,
                   "PREV=m.json | PREV_T=m.json | PREV_TD=m.json | CUBE | CUBE@NF-center=m.json "
                   "(repeatable)");
    ev->add_option("--grid", ea.grid_path, "grid model JSON (default: 3-bus reduction)");
    ev->add_option("--line-scale", ea.line_scale, "line capacity multiplier");
    ev->add_option("--demand", ea.demand, "per-bus demand [MW], comma-separated");
    ev->add_option("--demand-frac", ea.demand_frac,
                   "demand as a fraction of conventional+renewable capacity");
    ev->add_option("--alpha-flow", ea.alpha_flow, "size weight for flow sets");
    ev->add_option("--alpha-cube", ea.alpha_cube, "size weight for cube sets");
    ev->add_option("--tol", ea.tol, "feasibility tolerance [MW]");
    ev->add_option("--delta-max-flow", ea.delta_max_flow, "flow set size cap");
    ev->add_option("--delta-max-cube", ea.delta_max_cube, "cube half-width cap");
    ev->add_option("--delta-pset", ea.pairs, "setpoint-difference curve METHOD_A,METHOD_B "
                   "(repeatable; default PREV_TD,PREV when both run)");
    ev->add_option("--grid-certify", ea.grid_certify, "dense worst-case grid check: 0 off, 1 on");
    add_sip_options(ev, ea.sip);
    ev->callback([&] {
        g.load(&app);
        cmd_eval(g, ev, ea);
    });

    auto* plot = app.add_subcommand("plot", "render a result as a deterministic SVG");
    plot->fallthrough();
    PlotArgs pa;
    plot->add_option("kind", pa.kind, "membership | coverage | hourly")
        ->required()
        ->check(CLI::IsMember({"membership", "coverage", "hourly"}));
    plot->add_option("--model", pa.model, "flow model JSON");
    plot->add_option("--method", pa.method, "flow | cube")
        ->check(CLI::IsMember({"flow", "cube"}));
    plot->add_option("--data", pa.data, "input CSV (samples / coverage / hourly report)");
    plot->add_option("--result", pa.result, "result JSON to read delta from");
    plot->add_option("--delta", pa.delta, "set size");
    plot->add_option("--center", pa.center, "cube center, comma-separated");
    plot->add_option("--context", pa.context, "context vector, comma-separated");
    plot->add_option("--range", pa.range, "raster range xlo,xhi,ylo,yhi");
    plot->add_option("--cells", pa.cells, "raster cells per axis");
    plot->callback([&] {
        g.load(&app);
        cmd_plot(g, plot, pa);
    });

    auto* ex = app.add_subcommand("export-graph", "flatten a flow into a computation graph");
    ex->fallthrough();
    std::string ex_model;
    ex->add_option("--model", ex_model, "flow model JSON")->required();
    ex->callback([&] {
        g.load(&app);
        cmd_export_graph(g, ex_model);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_cli(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const SolveError& e) {
        std::cerr << "solve error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
