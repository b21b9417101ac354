#pragma once

#include <cstdint>

#include "cfi/common.hpp"
#include "cfi/rng.hpp"

namespace cfi {

// Uncertain-parameter samples y with their context rows c.
struct Dataset {
    Mat y;  // n x k
    Mat c;  // n x m (m may be 0)
    std::vector<std::string> y_names;
    std::vector<std::string> c_names;

    int n() const { return static_cast<int>(y.rows()); }
};

// Classic two-moons benchmark: moon A = upper unit semicircle (context 0), moon B =
// reflected/shifted semicircle (context 1); Gaussian noise, then *scale + shift.
Dataset gen_two_moons(int n, double noise, double scale, const Eigen::Vector2d& shift, Rng& rng);
inline Dataset gen_two_moons(int n, Rng& rng) {
    return gen_two_moons(n, 0.1, 4.0, {-2.7, -0.85}, rng);
}

// Unit circle with Gaussian noise; single constant context 0 (used unconditionally).
Dataset gen_annulus(int n, double noise, Rng& rng);

// Hourly capacity factors per bus.
struct CfTable {
    std::vector<int64_t> t;  // epoch seconds, strictly increasing, hourly
    Mat cf;                  // rows align with t; one column per bus
    std::vector<std::string> names;

    int rows() const { return static_cast<int>(cf.rows()); }
    int buses() const { return static_cast<int>(cf.cols()); }
};

// CSV: header `timestamp,cf_bus1,...,cf_busN`. Values outside [-0.05, 1.05] are an
// ingestion error (reported with line number); small rounding spill is clamped to [0,1].
CfTable load_capacity_factors(const std::string& path);
void save_capacity_factors(const CfTable& table, const std::string& path);

// Desk-scale stand-in for weather-driven capacity factors: a diurnal solar bell with a
// seasonal envelope plus an AR(1) wind term and noise, clamped to [0,1]. Each bus mixes
// solar and wind differently. Strong morning/afternoon ramps by construction.
CfTable gen_synthetic_cf(int n_days, int n_buses, Rng& rng);

enum class ContextMode { Prev, PrevT, PrevTD };
ContextMode context_mode_from_string(const std::string& s);
std::string to_string(ContextMode m);

// y_t = cf_t with context c_t = cf_{t-1}, optionally plus sine/cosine encodings of the
// hour of day (PrevT) and additionally of the day of year (PrevTD). First row dropped.
Dataset build_contexts(const CfTable& table, ContextMode mode);

// y' = (y + shift) * scale, applied per column entry; inverse available.
void scale_shift(Dataset& d, double shift, double scale);
void inverse_scale_shift(Dataset& d, double shift, double scale);

// Seeded shuffle split; validation gets floor(n * val_frac) rows, train the rest.
std::pair<Dataset, Dataset> split(const Dataset& d, double val_frac, Rng& rng);

// Dataset dump CSV: columns y1..yk,c1..cm.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path, int k);

}  // namespace cfi
