// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace duolearn {

// Minimal static chart emitter for quick inspection of analysis output.
struct ChartSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<ChartSeries>& series);

void write_histogram_svg(const std::string& path, const std::string& title,
                         const std::vector<double>& edges,
                         const std::vector<std::vector<int64_t>>& count_sets,
                         const std::vector<std::string>& labels);

}  // namespace duolearn
