#include "cfi/data.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "cfi/io.hpp"

namespace cfi {

Dataset gen_two_moons(int n, double noise, double scale, const Eigen::Vector2d& shift, Rng& rng) {
    if (n < 2) throw ConfigError("two-moons needs n >= 2");
    const int na = n / 2 + (n % 2);  // |#A - #B| <= 1
    const int nb = n - na;
    Dataset d;
    d.y.resize(n, 2);
    d.c.resize(n, 1);
    d.y_names = {"y1", "y2"};
    d.c_names = {"c1"};
    for (int i = 0; i < n; ++i) {
        double x0, x1;
        if (i < na) {  // moon A: upper unit semicircle
            const double t = na > 1 ? M_PI * i / (na - 1) : 0.0;
            x0 = std::cos(t);
            x1 = std::sin(t);
            d.c(i, 0) = 0.0;
        } else {  // moon B: reflected, shifted down by 0.5
            const int j = i - na;
            const double t = nb > 1 ? M_PI * j / (nb - 1) : 0.0;
            x0 = 1.0 - std::cos(t);
            x1 = 1.0 - std::sin(t) - 0.5;
            d.c(i, 0) = 1.0;
        }
        x0 += noise * rng.normal();
        x1 += noise * rng.normal();
        d.y(i, 0) = x0 * scale + shift[0];
        d.y(i, 1) = x1 * scale + shift[1];
    }
    return d;
}

Dataset gen_annulus(int n, double noise, Rng& rng) {
    if (n < 1) throw ConfigError("annulus needs n >= 1");
    Dataset d;
    d.y.resize(n, 2);
    d.c = Mat::Zero(n, 1);
    d.y_names = {"y1", "y2"};
    d.c_names = {"c1"};
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, 2.0 * M_PI);
        d.y(i, 0) = std::cos(t) + noise * rng.normal();
        d.y(i, 1) = std::sin(t) + noise * rng.normal();
    }
    return d;
}

CfTable load_capacity_factors(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError(path, 1, "empty file");
    auto header = csv_split(line);
    if (header.size() < 2 || header[0] != "timestamp")
        throw DataError(path, 1, "expected header `timestamp,cf_bus1,...`");
    const int buses = static_cast<int>(header.size()) - 1;
    CfTable tab;
    tab.names.assign(header.begin() + 1, header.end());
    std::vector<double> vals;
    long ln = 1;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        auto cells = csv_split(line);
        if (static_cast<int>(cells.size()) != buses + 1)
            throw DataError(path, ln, "expected " + std::to_string(buses + 1) + " columns");
        int64_t t;
        try {
            t = parse_iso8601(cells[0]);
        } catch (const DataError& e) {
            throw DataError(path, ln, e.what());
        }
        if (!tab.t.empty()) {
            if (t <= tab.t.back()) throw DataError(path, ln, "timestamps must be strictly increasing");
            if (t - tab.t.back() != 3600) throw DataError(path, ln, "timestamps must be hourly");
        }
        tab.t.push_back(t);
        for (int b = 0; b < buses; ++b) {
            double v = parse_num(cells[b + 1], path, ln);
            if (v < -0.05 || v > 1.05)
                throw DataError(path, ln, "capacity factor " + fmt_num(v) + " outside [-0.05, 1.05]");
            vals.push_back(mid3(0.0, v, 1.0));  // clamp rounding spill
        }
    }
    tab.cf.resize(static_cast<long>(tab.t.size()), buses);
    for (size_t r = 0; r < tab.t.size(); ++r)
        for (int b = 0; b < buses; ++b) tab.cf(static_cast<long>(r), b) = vals[r * buses + b];
    return tab;
}

void save_capacity_factors(const CfTable& table, const std::string& path) {
    std::ostringstream out;
    out << "timestamp";
    for (int b = 0; b < table.buses(); ++b)
        out << ',' << (b < static_cast<int>(table.names.size()) ? table.names[b]
                                                                : "cf_bus" + std::to_string(b + 1));
    out << '\n';
    for (int r = 0; r < table.rows(); ++r) {
        out << format_iso8601(table.t[r]);
        for (int b = 0; b < table.buses(); ++b) out << ',' << fmt_num(table.cf(r, b));
        out << '\n';
    }
    write_file(path, out.str());
}

CfTable gen_synthetic_cf(int n_days, int n_buses, Rng& rng) {
    if (n_days < 1 || n_buses < 1) throw ConfigError("gen_synthetic_cf needs n_days, n_buses >= 1");
    CfTable tab;
    const int n = 24 * n_days;
    tab.cf.resize(n, n_buses);
    tab.t.resize(n);
    const int64_t t0 = parse_iso8601("2013-01-01T00:00:00");
    std::vector<double> wind(n_buses, 0.25);
    for (int b = 0; b < n_buses; ++b) tab.names.push_back("cf_bus" + std::to_string(b + 1));
    for (int i = 0; i < n; ++i) {
        tab.t[i] = t0 + 3600LL * i;
        const int hod = i % 24;
        const int day = i / 24;
        // Solar bell: zero at night, peak at 12h; seasonal envelope peaks mid-year.
        const double bell = (hod >= 6 && hod <= 18) ? std::sin(M_PI * (hod - 6) / 12.0) : 0.0;
        const double season = 0.7 + 0.3 * std::sin(2.0 * M_PI * (day - 81) / 365.0);
        for (int b = 0; b < n_buses; ++b) {
            // Per-bus solar/wind mix; persistent wind via AR(1).
            const double solar_share = 0.55 + 0.25 * std::sin(1.7 * (b + 1));
            wind[b] = 0.96 * wind[b] + 0.04 * 0.3 + 0.03 * rng.normal();
            const double cf = solar_share * 0.9 * bell * season +
                              (1.0 - solar_share) * std::max(0.0, wind[b]) +
                              0.02 * rng.normal();
            tab.cf(i, b) = mid3(0.0, cf, 1.0);
        }
    }
    return tab;
}

ContextMode context_mode_from_string(const std::string& s) {
    if (s == "PREV") return ContextMode::Prev;
    if (s == "PREV_T") return ContextMode::PrevT;
    if (s == "PREV_TD") return ContextMode::PrevTD;
    throw ConfigError("unknown context mode '" + s + "' (PREV, PREV_T, PREV_TD)");
}

std::string to_string(ContextMode m) {
    switch (m) {
        case ContextMode::Prev: return "PREV";
        case ContextMode::PrevT: return "PREV_T";
        default: return "PREV_TD";
    }
}

Dataset build_contexts(const CfTable& table, ContextMode mode) {
    if (table.rows() < 2) throw ConfigError("context construction needs at least 2 rows");
    const int nb = table.buses();
    int m = nb;
    if (mode == ContextMode::PrevT) m += 2;
    if (mode == ContextMode::PrevTD) m += 4;
    Dataset d;
    const int n = table.rows() - 1;  // first row has no predecessor
    d.y.resize(n, nb);
    d.c.resize(n, m);
    for (int b = 0; b < nb; ++b) d.y_names.push_back("y" + std::to_string(b + 1));
    for (int j = 0; j < m; ++j) d.c_names.push_back("c" + std::to_string(j + 1));
    for (int i = 0; i < n; ++i) {
        const int r = i + 1;
        d.y.row(i) = table.cf.row(r);
        d.c.block(i, 0, 1, nb) = table.cf.row(r - 1);
        if (mode != ContextMode::Prev) {
            const double h = hour_of_day(table.t[r]);
            d.c(i, nb) = std::sin(2.0 * M_PI * h / 24.0);
            d.c(i, nb + 1) = std::cos(2.0 * M_PI * h / 24.0);
        }
        if (mode == ContextMode::PrevTD) {
            // Day-of-year phase with period 365; a leap day shares day 365's phase.
            const double doy = std::min(day_of_year(table.t[r]), 365);
            d.c(i, nb + 2) = std::sin(2.0 * M_PI * doy / 365.0);
            d.c(i, nb + 3) = std::cos(2.0 * M_PI * doy / 365.0);
        }
    }
    return d;
}

void scale_shift(Dataset& d, double shift, double scale) {
    d.y = ((d.y.array() + shift) * scale).matrix();
}

void inverse_scale_shift(Dataset& d, double shift, double scale) {
    if (scale == 0.0) throw ConfigError("scale must be nonzero");
    d.y = (d.y.array() / scale - shift).matrix();
}

std::pair<Dataset, Dataset> split(const Dataset& d, double val_frac, Rng& rng) {
    if (val_frac <= 0.0 || val_frac >= 1.0) throw ConfigError("val_frac must be in (0, 1)");
    const int n = d.n();
    const int nv = static_cast<int>(std::floor(n * val_frac));
    if (nv == 0 || nv == n) throw ConfigError("split produces an empty part");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<uint64_t>(i) + 1)]);
    Dataset train, val;
    train.y_names = val.y_names = d.y_names;
    train.c_names = val.c_names = d.c_names;
    train.y.resize(n - nv, d.y.cols());
    train.c.resize(n - nv, d.c.cols());
    val.y.resize(nv, d.y.cols());
    val.c.resize(nv, d.c.cols());
    for (int i = 0; i < n; ++i) {
        if (i < nv) {
            val.y.row(i) = d.y.row(order[i]);
            val.c.row(i) = d.c.row(order[i]);
        } else {
            train.y.row(i - nv) = d.y.row(order[i]);
            train.c.row(i - nv) = d.c.row(order[i]);
        }
    }
    return {std::move(train), std::move(val)};
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ostringstream out;
    for (int j = 0; j < d.y.cols(); ++j) out << (j ? "," : "") << "y" << j + 1;
    for (int j = 0; j < d.c.cols(); ++j) out << ",c" << j + 1;
    out << '\n';
    for (int i = 0; i < d.n(); ++i) {
        for (int j = 0; j < d.y.cols(); ++j) out << (j ? "," : "") << fmt_num(d.y(i, j));
        for (int j = 0; j < d.c.cols(); ++j) out << ',' << fmt_num(d.c(i, j));
        out << '\n';
    }
    write_file(path, out.str());
}

Dataset load_dataset(const std::string& path, int k) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw DataError(path, 1, "empty file");
    auto header = csv_split(line);
    if (static_cast<int>(header.size()) < k) throw DataError(path, 1, "fewer columns than k");
    const int m = static_cast<int>(header.size()) - k;
    std::vector<double> vals;
    long ln = 1, rows = 0;
    while (std::getline(in, line)) {
        ++ln;
        if (line.empty()) continue;
        auto cells = csv_split(line);
        if (cells.size() != header.size()) throw DataError(path, ln, "column count mismatch");
        for (const auto& cell : cells) vals.push_back(parse_num(cell, path, ln));
        ++rows;
    }
    Dataset d;
    d.y.resize(rows, k);
    d.c.resize(rows, m);
    d.y_names.assign(header.begin(), header.begin() + k);
    d.c_names.assign(header.begin() + k, header.end());
    for (long i = 0; i < rows; ++i) {
        for (int j = 0; j < k; ++j) d.y(i, j) = vals[i * header.size() + j];
        for (int j = 0; j < m; ++j) d.c(i, j) = vals[i * header.size() + k + j];
    }
    return d;
}

}  // namespace cfi
