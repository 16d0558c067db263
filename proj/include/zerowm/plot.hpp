#pragma once

#include <string>
#include <vector>

#include "zerowm/tensor.hpp"

namespace zw {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal chart renderers writing PNG files (enough for loss curves,
// BER-vs-intensity lines and similarity heatmaps).
void plot_lines(const std::vector<PlotSeries>& series, const std::string& title,
                const std::string& path);
void plot_heatmap(const Tensor<double>& matrix, const std::string& title, const std::string& path);

}  // namespace zw
