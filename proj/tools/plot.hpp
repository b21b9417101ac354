#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cfi/common.hpp"

namespace cfi {

// Raster plot of a 2D set: `member` is sampled at cell centers on a cells x cells
// grid over [xlo,xhi] x [ylo,yhi]; member cells are shaded (consecutive member
// cells merge into one rect). Optional scatter overlay (rows of `points`, first
// two columns). Output contains no timestamps, so equal inputs give equal bytes.
std::string render_membership_svg(const std::function<bool(double, double)>& member,
                                  double xlo, double xhi, double ylo, double yhi, int cells,
                                  const Mat& points, const std::string& title);

// Grouped bar chart over values in [0,1]: one group per label, one bar per series.
std::string render_bars_svg(const std::vector<std::string>& labels,
                            const std::vector<std::string>& series,
                            const std::vector<std::vector<double>>& values,
                            const std::string& title);

// One polyline per series across hours 0..23, values in [0,1].
std::string render_hour_lines_svg(const std::vector<std::string>& series,
                                  const std::vector<std::array<double, 24>>& values,
                                  const std::string& title);

}  // namespace cfi
