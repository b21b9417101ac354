#include "cfi/flow.hpp"

#include <nlohmann/json.hpp>

#include "cfi/io.hpp"

namespace cfi {

using nlohmann::json;

double softplus(double x) {
    // log(1 + e^x) without overflow on either side.
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

static void check_block(const CouplingBlock& b, int k, int context_dim) {
    std::vector<char> seen(k, 0);
    for (int i : b.keep_idx) {
        if (i < 0 || i >= k || seen[i]) throw ConfigError("bad keep_idx in coupling block");
        seen[i] = 1;
    }
    for (int i : b.trans_idx) {
        if (i < 0 || i >= k || seen[i]) throw ConfigError("keep/transform masks must partition the coordinates");
        seen[i] = 1;
    }
    for (int i = 0; i < k; ++i)
        if (!seen[i]) throw ConfigError("keep/transform masks must partition the coordinates");
    const int in = static_cast<int>(b.keep_idx.size()) + context_dim;
    const int out = 2 * static_cast<int>(b.trans_idx.size());
    if (b.conditioner.in_dim() != in || b.conditioner.out_dim() != out)
        throw ConfigError("conditioner dimensions do not match masks/context");
}

void coupling_params(const CouplingBlock& b, const Vec& kept, const Vec& c, Vec& t, Vec& s,
                     CouplingCache* cache) {
    Vec in(kept.size() + c.size());
    in << kept, c;
    Vec out = mlp_forward(b.conditioner, in, cache ? &cache->mlp : nullptr);
    const int m = static_cast<int>(b.trans_idx.size());
    t = out.head(m);
    Vec raw = out.tail(m);
    Vec sp(m), sv(m);
    for (int j = 0; j < m; ++j) {
        sp[j] = softplus(raw[j]) + b.scale_bias;
        sv[j] = mid3(b.clip_lo, sp[j], b.clip_hi);
    }
    s = sv;
    if (cache) {
        cache->t = t;
        cache->raw = std::move(raw);
        cache->sp = std::move(sp);
        cache->s = s;
    }
}

static Vec gather(const Vec& v, const std::vector<int>& idx) {
    Vec out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
    return out;
}

Vec coupling_forward(const CouplingBlock& b, const Vec& l, const Vec& c, double* logdet) {
    Vec t, s;
    coupling_params(b, gather(l, b.keep_idx), c, t, s);
    Vec out = l;
    double ld = 0.0;
    for (size_t j = 0; j < b.trans_idx.size(); ++j) {
        out[b.trans_idx[j]] = l[b.trans_idx[j]] * s[j] + t[j];
        ld += std::log(s[j]);
    }
    if (logdet) *logdet = ld;
    return out;
}

Vec coupling_inverse(const CouplingBlock& b, const Vec& y, const Vec& c, double* logdet,
                     CouplingCache* cache) {
    Vec t, s;
    coupling_params(b, gather(y, b.keep_idx), c, t, s, cache);
    Vec out = y;
    double ld = 0.0;
    for (size_t j = 0; j < b.trans_idx.size(); ++j) {
        out[b.trans_idx[j]] = (y[b.trans_idx[j]] - t[j]) / s[j];
        ld -= std::log(s[j]);
    }
    if (logdet) *logdet = ld;
    return out;
}

ConditionalFlow make_flow(int k, int context_dim, int n_blocks, int hidden, int n_hidden,
                          Rng& rng, Vec preproc_shift, double preproc_scale) {
    if (k < 2) throw ConfigError("flow needs at least 2 coordinates");
    if (context_dim < 0 || n_blocks < 0) throw ConfigError("bad flow configuration");
    if (preproc_scale <= 0.0) throw ConfigError("preproc scale must be positive");
    ConditionalFlow f;
    f.k = k;
    f.context_dim = context_dim;
    f.preproc_shift = preproc_shift.size() ? preproc_shift : Vec::Zero(k);
    if (f.preproc_shift.size() != k) throw ConfigError("preproc shift size mismatch");
    f.preproc_scale = preproc_scale;
    const int half = (k + 1) / 2;
    for (int i = 0; i < n_blocks; ++i) {
        CouplingBlock b;
        for (int j = 0; j < k; ++j) {
            const bool first_half = j < half;
            if (first_half == (i % 2 == 0))
                b.keep_idx.push_back(j);
            else
                b.trans_idx.push_back(j);
        }
        b.conditioner = make_mlp(static_cast<int>(b.keep_idx.size()) + context_dim, hidden,
                                 n_hidden, 2 * static_cast<int>(b.trans_idx.size()), rng);
        f.blocks.push_back(std::move(b));
    }
    return f;
}

Vec flow_forward(const ConditionalFlow& f, const Vec& l, const Vec& c, double* logdet) {
    if (l.size() != f.k) throw ConfigError("latent size mismatch");
    if (c.size() != f.context_dim) throw ConfigError("context size mismatch");
    Vec u = l;
    double ld = 0.0;
    for (const auto& b : f.blocks) {
        double bld = 0.0;
        u = coupling_forward(b, u, c, &bld);
        ld += bld;
    }
    // Undo the data pre-scaling: y = u / scale - shift.
    Vec y = u / f.preproc_scale - f.preproc_shift;
    ld -= f.k * std::log(f.preproc_scale);
    if (logdet) *logdet = ld;
    return y;
}

Vec flow_inverse(const ConditionalFlow& f, const Vec& y, const Vec& c, double* logdet) {
    if (y.size() != f.k) throw ConfigError("data size mismatch");
    if (c.size() != f.context_dim) throw ConfigError("context size mismatch");
    Vec u = (y + f.preproc_shift) * f.preproc_scale;
    double ld = f.k * std::log(f.preproc_scale);
    for (size_t i = f.blocks.size(); i-- > 0;) {
        double bld = 0.0;
        u = coupling_inverse(f.blocks[i], u, c, &bld);
        ld += bld;
    }
    if (logdet) *logdet = ld;
    return u;
}

double log_prob(const ConditionalFlow& f, const Vec& y, const Vec& c) {
    double ld = 0.0;
    Vec l = flow_inverse(f, y, c, &ld);
    return -0.5 * f.k * std::log(2.0 * M_PI) - 0.5 * l.squaredNorm() + ld;
}

Mat sample(const ConditionalFlow& f, int n, const Vec& c, Rng& rng) {
    if (n < 0) throw ConfigError("negative sample count");
    Mat out(n, f.k);
    for (int i = 0; i < n; ++i) out.row(i) = flow_forward(f, rng.normal_vec(f.k), c).transpose();
    return out;
}

int param_count(const ConditionalFlow& f) {
    int n = 0;
    for (const auto& b : f.blocks)
        for (const auto& l : b.conditioner.layers)
            n += static_cast<int>(l.W.size() + l.b.size());
    return n;
}

Vec get_params(const ConditionalFlow& f) {
    Vec p(param_count(f));
    int at = 0;
    for (const auto& b : f.blocks) {
        for (const auto& l : b.conditioner.layers) {
            for (int r = 0; r < l.W.rows(); ++r)
                for (int c = 0; c < l.W.cols(); ++c) p[at++] = l.W(r, c);
            for (int i = 0; i < l.b.size(); ++i) p[at++] = l.b[i];
        }
    }
    return p;
}

void set_params(ConditionalFlow& f, const Vec& p) {
    if (p.size() != param_count(f)) throw ConfigError("parameter vector size mismatch");
    int at = 0;
    for (auto& b : f.blocks) {
        for (auto& l : b.conditioner.layers) {
            for (int r = 0; r < l.W.rows(); ++r)
                for (int c = 0; c < l.W.cols(); ++c) l.W(r, c) = p[at++];
            for (int i = 0; i < l.b.size(); ++i) l.b[i] = p[at++];
        }
    }
}

static json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

static Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw DataError("expected a non-empty matrix");
    const size_t cols = j[0].size();
    Mat m(j.size(), cols);
    for (size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != cols) throw DataError("ragged matrix in model file");
        for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

std::string flow_to_json(const ConditionalFlow& f) {
    json doc;
    doc["version"] = 1;
    doc["k"] = f.k;
    doc["context_dim"] = f.context_dim;
    doc["preproc"]["shift"] = std::vector<double>(f.preproc_shift.data(),
                                                  f.preproc_shift.data() + f.preproc_shift.size());
    doc["preproc"]["scale"] = f.preproc_scale;
    doc["blocks"] = json::array();
    for (const auto& b : f.blocks) {
        json jb;
        jb["keep_idx"] = b.keep_idx;
        jb["scale_bias"] = b.scale_bias;
        jb["clip"] = {b.clip_lo, b.clip_hi};
        jb["layers"] = json::array();
        for (const auto& l : b.conditioner.layers) {
            json jl;
            jl["W"] = mat_to_json(l.W);
            jl["b"] = std::vector<double>(l.b.data(), l.b.data() + l.b.size());
            jb["layers"].push_back(std::move(jl));
        }
        doc["blocks"].push_back(std::move(jb));
    }
    return doc.dump(1);
}

ConditionalFlow flow_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("version").get<int>() != 1) throw DataError("unsupported model file version");
        ConditionalFlow f;
        f.k = doc.at("k").get<int>();
        f.context_dim = doc.at("context_dim").get<int>();
        auto shift = doc.at("preproc").at("shift").get<std::vector<double>>();
        f.preproc_shift = Eigen::Map<Vec>(shift.data(), shift.size());
        f.preproc_scale = doc.at("preproc").at("scale").get<double>();
        if (f.k < 2 || f.preproc_shift.size() != f.k || f.preproc_scale <= 0.0)
            throw DataError("inconsistent model header");
        for (const auto& jb : doc.at("blocks")) {
            CouplingBlock b;
            b.keep_idx = jb.at("keep_idx").get<std::vector<int>>();
            std::vector<char> kept(f.k, 0);
            for (int i : b.keep_idx) {
                if (i < 0 || i >= f.k) throw DataError("keep_idx out of range");
                kept[i] = 1;
            }
            for (int i = 0; i < f.k; ++i)
                if (!kept[i]) b.trans_idx.push_back(i);
            b.scale_bias = jb.at("scale_bias").get<double>();
            auto clip = jb.at("clip").get<std::vector<double>>();
            if (clip.size() != 2) throw DataError("clip must be [lo, hi]");
            b.clip_lo = clip[0];
            b.clip_hi = clip[1];
            for (const auto& jl : jb.at("layers")) {
                DenseLayer l;
                l.W = mat_from_json(jl.at("W"));
                auto bias = jl.at("b").get<std::vector<double>>();
                l.b = Eigen::Map<Vec>(bias.data(), bias.size());
                if (l.b.size() != l.W.rows()) throw DataError("layer bias/weight shape mismatch");
                if (!b.conditioner.layers.empty() &&
                    l.W.cols() != b.conditioner.layers.back().W.rows())
                    throw DataError("consecutive layer shapes do not chain");
                b.conditioner.layers.push_back(std::move(l));
            }
            check_block(b, f.k, f.context_dim);
            f.blocks.push_back(std::move(b));
        }
        return f;
    } catch (const json::exception& e) {
        throw DataError(std::string("bad model file: ") + e.what());
    }
}

void save_flow(const ConditionalFlow& f, const std::string& path) {
    write_file(path, flow_to_json(f) + "\n");
}

ConditionalFlow load_flow(const std::string& path) {
    return flow_from_json(read_file(path));
}

}  // namespace cfi
