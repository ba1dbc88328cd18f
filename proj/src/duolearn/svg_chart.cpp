// SPDX-License-Identifier: Apache-2.0
#include "duolearn/svg_chart.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "duolearn/errors.h"

namespace duolearn {

namespace {

constexpr double kW = 720, kH = 420, kPad = 56;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(hi > lo)) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

double sx(double v, const Range& r) { return kPad + (v - r.lo) / (r.hi - r.lo) * (kW - 2 * kPad); }
double sy(double v, const Range& r) {
    return kH - kPad - (v - r.lo) / (r.hi - r.lo) * (kH - 2 * kPad);
}

void emit_frame(std::ofstream& out, const std::string& title, const Range& xr, const Range& yr) {
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
        << "' viewBox='0 0 " << kW << " " << kH << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='15' "
           "font-family='sans-serif'>"
        << title << "</text>\n";
    out << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
        << kH - kPad << "' stroke='black'/>\n";
    out << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='" << kH - kPad
        << "' stroke='black'/>\n";
    char buf[160];
    for (int i = 0; i <= 4; ++i) {
        const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
        const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x='%.1f' y='%.1f' text-anchor='middle' font-size='11' "
                      "font-family='sans-serif'>%.3g</text>\n",
                      sx(fx, xr), kH - kPad + 16, fx);
        out << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x='%.1f' y='%.1f' text-anchor='end' font-size='11' "
                      "font-family='sans-serif'>%.3g</text>\n",
                      kPad - 6, sy(fy, yr) + 4, fy);
        out << buf;
    }
}

}  // namespace

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<ChartSeries>& series) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write chart: " + path);
    Range xr, yr;
    for (const ChartSeries& s : series) {
        for (double v : s.x) xr.add(v);
        for (double v : s.y) yr.add(v);
    }
    xr.pad();
    yr.pad();
    emit_frame(out, title, xr, yr);
    char buf[96];
    for (size_t si = 0; si < series.size(); ++si) {
        const ChartSeries& s = series[si];
        out << "<polyline fill='none' stroke='" << kColors[si % 6] << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < s.x.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", sx(s.x[i], xr), sy(s.y[i], yr));
            out << buf;
        }
        out << "'/>\n";
        out << "<text x='" << kW - kPad + 4 << "' y='" << kPad + 16 * si
            << "' font-size='11' font-family='sans-serif' fill='" << kColors[si % 6] << "'>"
            << s.label << "</text>\n";
    }
    out << "</svg>\n";
}

void write_histogram_svg(const std::string& path, const std::string& title,
                         const std::vector<double>& edges,
                         const std::vector<std::vector<int64_t>>& count_sets,
                         const std::vector<std::string>& labels) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write chart: " + path);
    Range xr, yr;
    xr.add(edges.front());
    xr.add(edges.back());
    yr.add(0.0);
    for (const auto& counts : count_sets)
        for (int64_t c : counts) yr.add(static_cast<double>(c));
    xr.pad();
    yr.pad();
    emit_frame(out, title, xr, yr);
    char buf[200];
    for (size_t si = 0; si < count_sets.size(); ++si) {
        const auto& counts = count_sets[si];
        for (size_t i = 0; i < counts.size(); ++i) {
            const double x0 = sx(edges[i], xr), x1 = sx(edges[i + 1], xr);
            const double y0 = sy(static_cast<double>(counts[i]), yr), y1 = sy(0.0, yr);
            std::snprintf(buf, sizeof(buf),
                          "<rect x='%.1f' y='%.1f' width='%.1f' height='%.1f' fill='%s' "
                          "fill-opacity='0.45'/>\n",
                          x0, y0, x1 - x0, y1 - y0, kColors[si % 6]);
            out << buf;
        }
        out << "<text x='" << kW - kPad + 4 << "' y='" << kPad + 16 * si
            << "' font-size='11' font-family='sans-serif' fill='" << kColors[si % 6] << "'>"
            << (si < labels.size() ? labels[si] : "") << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace duolearn
