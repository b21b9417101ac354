#include "cfi/graph.hpp"

#include <map>
#include <nlohmann/json.hpp>

#include "cfi/io.hpp"

namespace cfi {

using nlohmann::json;

ConstraintGraph export_graph(const ConditionalFlow& f) {
    ConstraintGraph g;
    g.vars.push_back({"l", f.k});
    if (f.context_dim > 0) g.vars.push_back({"c", f.context_dim});
    auto add_var = [&](const std::string& name, int dim) { g.vars.push_back({name, dim}); };

    std::string x = "l";  // current block input
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
        const auto& b = f.blocks[bi];
        const std::string p = "b" + std::to_string(bi) + "_";
        const int m = static_cast<int>(b.trans_idx.size());
        const int nk = static_cast<int>(b.keep_idx.size());
        const auto& layers = b.conditioner.layers;

        // First conditioner layer with the keep-mask folded in: the selection
        // A1 (one 1 per row) just re-routes columns, so W' = [W_kept * A1 | W_ctx].
        {
            GraphNode n;
            n.op = "matmul";
            n.inputs = {x};
            if (f.context_dim > 0) n.inputs.push_back("c");
            n.W = Mat::Zero(layers[0].W.rows(), f.k + f.context_dim);
            for (int r = 0; r < nk; ++r) n.W.col(b.keep_idx[r]) = layers[0].W.col(r);
            if (f.context_dim > 0)
                n.W.rightCols(f.context_dim) = layers[0].W.rightCols(f.context_dim);
            n.b = layers[0].b;
            n.has_b = true;
            n.output = p + "z0";
            add_var(n.output, static_cast<int>(layers[0].W.rows()));
            g.nodes.push_back(std::move(n));
        }
        std::string a = p + "z0";
        for (size_t li = 1; li < layers.size(); ++li) {
            GraphNode r;
            r.op = "relu";
            r.inputs = {a};
            r.output = p + "a" + std::to_string(li - 1);
            add_var(r.output, static_cast<int>(layers[li - 1].W.rows()));
            g.nodes.push_back(std::move(r));
            GraphNode n;
            n.op = "matmul";
            n.inputs = {p + "a" + std::to_string(li - 1)};
            n.W = layers[li].W;
            n.b = layers[li].b;
            n.has_b = true;
            n.output = p + "z" + std::to_string(li);
            add_var(n.output, static_cast<int>(layers[li].W.rows()));
            g.nodes.push_back(std::move(n));
            a = p + "z" + std::to_string(li);
        }
        const std::string mlp_out = a;  // [t ; raw], 2m values

        // Translation half.
        {
            GraphNode n;
            n.op = "matmul";
            n.select = true;
            n.inputs = {mlp_out};
            n.W = Mat::Zero(m, 2 * m);
            for (int j = 0; j < m; ++j) n.W(j, j) = 1.0;
            n.output = p + "t";
            add_var(n.output, m);
            g.nodes.push_back(std::move(n));
        }
        // Scale path runs elementwise over the full conditioner output (selection
        // commutes with elementwise maps), then the scale half is selected.
        {
            GraphNode n;
            n.op = "softplus";
            n.inputs = {mlp_out};
            n.output = p + "sp";
            add_var(n.output, 2 * m);
            g.nodes.push_back(std::move(n));
        }
        {
            GraphNode n;
            n.op = "add-const";
            n.inputs = {p + "sp"};
            n.value = b.scale_bias;
            n.output = p + "spb";
            add_var(n.output, 2 * m);
            g.nodes.push_back(std::move(n));
        }
        {
            GraphNode n;
            n.op = "clip";
            n.inputs = {p + "spb"};
            n.lo = b.clip_lo;
            n.hi = b.clip_hi;
            n.output = p + "sclip";
            add_var(n.output, 2 * m);
            g.nodes.push_back(std::move(n));
        }
        {
            GraphNode n;
            n.op = "matmul";
            n.select = true;
            n.inputs = {p + "sclip"};
            n.W = Mat::Zero(m, 2 * m);
            for (int j = 0; j < m; ++j) n.W(j, m + j) = 1.0;
            n.output = p + "s";
            add_var(n.output, m);
            g.nodes.push_back(std::move(n));
        }
        // Scales scattered over all k coordinates (1 on kept ones), so the coupling
        // update is a single k-wide multiply + indexed add of the translation.
        {
            GraphNode n;
            n.op = "scatter";
            n.inputs = {p + "s"};
            n.idx = b.trans_idx;
            n.size = f.k;
            n.fill = 1.0;
            n.output = p + "sk";
            add_var(n.output, f.k);
            g.nodes.push_back(std::move(n));
        }
        {
            GraphNode n;
            n.op = "elementwise-mul";
            n.inputs = {p + "sk", x};
            n.output = p + "prod";
            add_var(n.output, f.k);
            g.nodes.push_back(std::move(n));
        }
        {
            GraphNode n;
            n.op = "add";
            n.inputs = {p + "prod", p + "t"};
            n.idx = b.trans_idx;
            n.output = p + "out";
            add_var(n.output, f.k);
            g.nodes.push_back(std::move(n));
        }
        x = p + "out";
    }

    GraphNode n;
    n.op = "affine";
    n.inputs = {x};
    n.scale = f.preproc_scale;
    n.shift = f.preproc_shift;
    n.output = "y";
    add_var("y", f.k);
    g.nodes.push_back(std::move(n));
    return g;
}

Vec eval_graph(const ConstraintGraph& g, const Vec& l, const Vec& c) {
    std::map<std::string, Vec> env;
    env["l"] = l;
    if (c.size() > 0) env["c"] = c;
    auto in = [&](const GraphNode& n, size_t i) -> const Vec& {
        auto it = env.find(n.inputs[i]);
        if (it == env.end()) throw DataError("graph references unknown var " + n.inputs[i]);
        return it->second;
    };
    for (const auto& n : g.nodes) {
        Vec out;
        if (n.op == "matmul") {
            long total = 0;
            for (size_t i = 0; i < n.inputs.size(); ++i) total += in(n, i).size();
            Vec stacked(total);
            long at = 0;
            for (size_t i = 0; i < n.inputs.size(); ++i) {
                stacked.segment(at, in(n, i).size()) = in(n, i);
                at += in(n, i).size();
            }
            out = n.W * stacked;
            if (n.has_b) out += n.b;
        } else if (n.op == "relu") {
            out = in(n, 0).cwiseMax(0.0);
        } else if (n.op == "softplus") {
            out = in(n, 0);
            for (int i = 0; i < out.size(); ++i) out[i] = softplus(out[i]);
        } else if (n.op == "add-const") {
            out = in(n, 0).array() + n.value;
        } else if (n.op == "clip") {
            out = in(n, 0).cwiseMax(n.lo).cwiseMin(n.hi);
        } else if (n.op == "scatter") {
            out = Vec::Constant(n.size, n.fill);
            for (size_t j = 0; j < n.idx.size(); ++j) out[n.idx[j]] = in(n, 0)[j];
        } else if (n.op == "elementwise-mul") {
            out = in(n, 0).cwiseProduct(in(n, 1));
        } else if (n.op == "add") {
            out = in(n, 0);
            if (n.idx.empty()) {
                out += in(n, 1);
            } else {
                for (size_t j = 0; j < n.idx.size(); ++j) out[n.idx[j]] += in(n, 1)[j];
            }
        } else if (n.op == "affine") {
            out = in(n, 0) / n.scale - n.shift;
        } else {
            throw DataError("unknown graph op " + n.op);
        }
        env[n.output] = std::move(out);
    }
    auto it = env.find("y");
    if (it == env.end()) throw DataError("graph has no output var y");
    return it->second;
}

std::string graph_to_json(const ConstraintGraph& g) {
    json doc;
    doc["vars"] = json::array();
    for (const auto& v : g.vars)
        doc["vars"].push_back({{"name", v.name}, {"shape", json::array({v.dim})}});
    doc["nodes"] = json::array();
    for (const auto& n : g.nodes) {
        json jn;
        jn["op"] = n.op;
        jn["inputs"] = n.inputs;
        jn["output"] = n.output;
        json pl = json::object();
        if (n.op == "matmul") {
            json rows = json::array();
            for (int r = 0; r < n.W.rows(); ++r) {
                json row = json::array();
                for (int c = 0; c < n.W.cols(); ++c) row.push_back(n.W(r, c));
                rows.push_back(std::move(row));
            }
            pl["W"] = std::move(rows);
            if (n.has_b) pl["b"] = std::vector<double>(n.b.data(), n.b.data() + n.b.size());
            if (n.select) pl["select"] = true;
        } else if (n.op == "add-const") {
            pl["value"] = n.value;
        } else if (n.op == "clip") {
            pl["lo"] = n.lo;
            pl["hi"] = n.hi;
        } else if (n.op == "scatter") {
            pl["idx"] = n.idx;
            pl["size"] = n.size;
            pl["fill"] = n.fill;
        } else if (n.op == "add" && !n.idx.empty()) {
            pl["idx"] = n.idx;
        } else if (n.op == "affine") {
            pl["scale"] = n.scale;
            pl["shift"] = std::vector<double>(n.shift.data(), n.shift.data() + n.shift.size());
        }
        if (!pl.empty()) jn["payload"] = std::move(pl);
        doc["nodes"].push_back(std::move(jn));
    }
    return doc.dump(1);
}

void save_graph(const ConstraintGraph& g, const std::string& path) {
    write_file(path, graph_to_json(g) + "\n");
}

}  // namespace cfi
