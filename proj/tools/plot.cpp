#include "plot.hpp"

#include <algorithm>
#include <sstream>

namespace cfi {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}

void svg_open(std::ostringstream& ss, int w, int h) {
    ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
       << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
}

void svg_text(std::ostringstream& ss, double x, double y, const std::string& s, int size,
              const std::string& anchor = "start") {
    ss << "<text x=\"" << fmt_num(x) << "\" y=\"" << fmt_num(y) << "\" font-family=\"sans-serif\""
       << " font-size=\"" << size << "\" text-anchor=\"" << anchor << "\">" << esc(s)
       << "</text>\n";
}

void svg_line(std::ostringstream& ss, double x1, double y1, double x2, double y2,
              const std::string& stroke, double width = 1.0) {
    ss << "<line x1=\"" << fmt_num(x1) << "\" y1=\"" << fmt_num(y1) << "\" x2=\"" << fmt_num(x2)
       << "\" y2=\"" << fmt_num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\""
       << fmt_num(width) << "\"/>\n";
}

}  // namespace

std::string render_membership_svg(const std::function<bool(double, double)>& member,
                                  double xlo, double xhi, double ylo, double yhi, int cells,
                                  const Mat& points, const std::string& title) {
    if (cells < 2) throw ConfigError("membership raster needs at least 2 cells per axis");
    if (!(xhi > xlo) || !(yhi > ylo)) throw ConfigError("membership raster range is empty");
    const int w = 640, h = 640, m = 50;
    const double pw = w - 2 * m, ph = h - 2 * m;
    auto px = [&](double x) { return m + (x - xlo) / (xhi - xlo) * pw; };
    auto py = [&](double y) { return m + (yhi - y) / (yhi - ylo) * ph; };

    std::ostringstream ss;
    svg_open(ss, w, h);
    const double dx = (xhi - xlo) / cells, dy = (yhi - ylo) / cells;
    // Row-major scan; merge runs of member cells into single rects.
    for (int iy = 0; iy < cells; ++iy) {
        const double cy = ylo + (iy + 0.5) * dy;
        int run = -1;
        for (int ix = 0; ix <= cells; ++ix) {
            const bool in = ix < cells && member(xlo + (ix + 0.5) * dx, cy);
            if (in && run < 0) run = ix;
            if (!in && run >= 0) {
                const double x0 = px(xlo + run * dx), x1 = px(xlo + ix * dx);
                const double y1 = py(cy - 0.5 * dy), y0 = py(cy + 0.5 * dy);
                ss << "<rect x=\"" << fmt_num(x0) << "\" y=\"" << fmt_num(y0) << "\" width=\""
                   << fmt_num(x1 - x0) << "\" height=\"" << fmt_num(y1 - y0)
                   << "\" fill=\"#9ecae1\"/>\n";
                run = -1;
            }
        }
    }
    const int np = std::min<int>(static_cast<int>(points.rows()), 2000);
    for (int i = 0; i < np; ++i) {
        ss << "<circle cx=\"" << fmt_num(px(points(i, 0))) << "\" cy=\""
           << fmt_num(py(points(i, 1))) << "\" r=\"1.2\" fill=\"#333333\"/>\n";
    }
    ss << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << fmt_num(pw) << "\" height=\""
       << fmt_num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg_text(ss, m, m - 14, title, 14);
    svg_text(ss, m, h - m + 18, fmt_num(xlo), 11);
    svg_text(ss, w - m, h - m + 18, fmt_num(xhi), 11, "end");
    svg_text(ss, m - 4, h - m, fmt_num(ylo), 11, "end");
    svg_text(ss, m - 4, m + 10, fmt_num(yhi), 11, "end");
    ss << "</svg>\n";
    return ss.str();
}

std::string render_bars_svg(const std::vector<std::string>& labels,
                            const std::vector<std::string>& series,
                            const std::vector<std::vector<double>>& values,
                            const std::string& title) {
    const int ng = static_cast<int>(labels.size()), ns = static_cast<int>(series.size());
    if (ng == 0 || ns == 0) throw DataError("bar chart has no rows");
    for (const auto& row : values)
        if (static_cast<int>(row.size()) != ns) throw DataError("bar chart row width mismatch");
    if (static_cast<int>(values.size()) != ng) throw DataError("bar chart label/value mismatch");

    const int w = std::max(480, 60 + ng * (ns * 18 + 22)), h = 420, m = 50;
    const double ph = h - 2 * m;
    auto py = [&](double v) { return m + (1.0 - v) * ph; };

    std::ostringstream ss;
    svg_open(ss, w, h);
    for (int t = 0; t <= 4; ++t) {
        const double v = 0.25 * t;
        svg_line(ss, m, py(v), w - m * 0.2, py(v), "#dddddd");
        svg_text(ss, m - 4, py(v) + 4, fmt_num(v), 11, "end");
    }
    const double group_w = ns * 18 + 22;
    for (int i = 0; i < ng; ++i) {
        const double gx = m + 10 + i * group_w;
        for (int j = 0; j < ns; ++j) {
            const double v = std::clamp(values[i][j], 0.0, 1.0);
            ss << "<rect x=\"" << fmt_num(gx + j * 18) << "\" y=\"" << fmt_num(py(v))
               << "\" width=\"14\" height=\"" << fmt_num(py(0.0) - py(v)) << "\" fill=\""
               << kPalette[j % kPaletteSize] << "\"/>\n";
        }
        svg_text(ss, gx + ns * 9, h - m + 16, labels[i], 10, "middle");
    }
    for (int j = 0; j < ns; ++j) {
        ss << "<rect x=\"" << fmt_num(m + 10 + j * 110.0) << "\" y=\"" << m - 30
           << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[j % kPaletteSize] << "\"/>\n";
        svg_text(ss, m + 26 + j * 110.0, m - 20, series[j], 11);
    }
    svg_text(ss, m, 16, title, 14);
    svg_line(ss, m, py(0.0), w - m * 0.2, py(0.0), "black");
    ss << "</svg>\n";
    return ss.str();
}

std::string render_hour_lines_svg(const std::vector<std::string>& series,
                                  const std::vector<std::array<double, 24>>& values,
                                  const std::string& title) {
    const int ns = static_cast<int>(series.size());
    if (ns == 0 || values.size() != series.size()) throw DataError("hour plot has no series");
    const int w = 640, h = 420, m = 50;
    const double pw = w - 2 * m, ph = h - 2 * m;
    auto px = [&](double hr) { return m + hr / 23.0 * pw; };
    auto py = [&](double v) { return m + (1.0 - std::clamp(v, 0.0, 1.0)) * ph; };

    std::ostringstream ss;
    svg_open(ss, w, h);
    for (int t = 0; t <= 4; ++t) {
        const double v = 0.25 * t;
        svg_line(ss, m, py(v), w - m, py(v), "#dddddd");
        svg_text(ss, m - 4, py(v) + 4, fmt_num(v), 11, "end");
    }
    for (int hr = 0; hr < 24; hr += 4) {
        svg_line(ss, px(hr), py(0.0), px(hr), py(0.0) + 4, "black");
        svg_text(ss, px(hr), h - m + 16, std::to_string(hr), 11, "middle");
    }
    for (int j = 0; j < ns; ++j) {
        ss << "<polyline fill=\"none\" stroke=\"" << kPalette[j % kPaletteSize]
           << "\" stroke-width=\"2\" points=\"";
        for (int hr = 0; hr < 24; ++hr)
            ss << (hr ? " " : "") << fmt_num(px(hr)) << "," << fmt_num(py(values[j][hr]));
        ss << "\"/>\n";
        ss << "<rect x=\"" << fmt_num(m + 10 + j * 130.0) << "\" y=\"" << m - 30
           << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[j % kPaletteSize] << "\"/>\n";
        svg_text(ss, m + 26 + j * 130.0, m - 20, series[j], 11);
    }
    ss << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << fmt_num(pw) << "\" height=\""
       << fmt_num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
    svg_text(ss, m, 16, title, 14);
    ss << "</svg>\n";
    return ss.str();
}

}  // namespace cfi
