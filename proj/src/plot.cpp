#include "zerowm/plot.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "zerowm/errors.hpp"

namespace zw {
namespace {

// 3x5 bitmap glyphs for the characters used in tick labels.
const char* glyph(char c) {
    switch (c) {
        case '0': return "111101101101111";
        case '1': return "010110010010111";
        case '2': return "111001111100111";
        case '3': return "111001111001111";
        case '4': return "101101111001001";
        case '5': return "111100111001111";
        case '6': return "111100111101111";
        case '7': return "111001010010010";
        case '8': return "111101111101111";
        case '9': return "111101111001111";
        case '.': return "000000000000010";
        case '-': return "000000111000000";
        case 'e': return "111101110100111";
        default: return nullptr;
    }
}

void draw_text(cv::Mat& img, int x, int y, const std::string& text, cv::Vec3b color) {
    for (char c : text) {
        const char* g = glyph(c);
        if (g) {
            for (int gy = 0; gy < 5; ++gy)
                for (int gx = 0; gx < 3; ++gx)
                    if (g[gy * 3 + gx] == '1') {
                        const int px = x + gx, py = y + gy;
                        if (px >= 0 && px < img.cols && py >= 0 && py < img.rows)
                            img.at<cv::Vec3b>(py, px) = color;
                    }
        }
        x += 4;
    }
}

std::string fmt_tick(double v) {
    char buf[32];
    if (v != 0 && (std::fabs(v) < 1e-3 || std::fabs(v) >= 1e4))
        std::snprintf(buf, sizeof(buf), "%.1e", v);
    else
        std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

void draw_line(cv::Mat& img, int x0, int y0, int x1, int y1, cv::Vec3b color) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
        if (x0 >= 0 && x0 < img.cols && y0 >= 0 && y0 < img.rows)
            img.at<cv::Vec3b>(y0, x0) = color;
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

const cv::Vec3b kPalette[6] = {{180, 60, 30},  {30, 90, 200},  {40, 150, 60},
                               {30, 160, 200}, {150, 40, 150}, {20, 20, 20}};

}  // namespace

void plot_lines(const std::vector<PlotSeries>& series, const std::string& title,
                const std::string& path) {
    if (series.empty()) throw PreconditionError("plot_lines needs at least one series");
    const int W = 640, H = 420, ml = 56, mr = 16, mt = 28, mb = 36;
    cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (xmin > xmax) {
        xmin = 0;
        xmax = 1;
    }
    if (ymin > ymax) {
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) {
        return ml + static_cast<int>((x - xmin) / (xmax - xmin) * (W - ml - mr));
    };
    auto py = [&](double y) {
        return H - mb - static_cast<int>((y - ymin) / (ymax - ymin) * (H - mt - mb));
    };

    const cv::Vec3b axis(60, 60, 60);
    draw_line(img, ml, mt, ml, H - mb, axis);
    draw_line(img, ml, H - mb, W - mr, H - mb, axis);
    for (int t = 0; t <= 4; ++t) {
        const double xv = xmin + (xmax - xmin) * t / 4.0;
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        draw_line(img, px(xv), H - mb, px(xv), H - mb + 3, axis);
        draw_text(img, px(xv) - 8, H - mb + 6, fmt_tick(xv), axis);
        draw_line(img, ml - 3, py(yv), ml, py(yv), axis);
        draw_text(img, 4, py(yv) - 2, fmt_tick(yv), axis);
    }
    draw_text(img, ml, 8, title.substr(0, 80), cv::Vec3b(0, 0, 0));

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const cv::Vec3b col = kPalette[si % 6];
        for (size_t i = 1; i < s.x.size(); ++i)
            draw_line(img, px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), col);
        draw_text(img, W - mr - 90, mt + 8 * static_cast<int>(si), s.label.substr(0, 20), col);
    }
    if (!cv::imwrite(path, img)) throw CheckpointError("cannot write plot: " + path);
}

void plot_heatmap(const Tensor<double>& matrix, const std::string& title,
                  const std::string& path) {
    const int64_t n = matrix.dim(0);
    const int cell = std::max<int>(4, static_cast<int>(512 / std::max<int64_t>(n, 1)));
    const int W = static_cast<int>(n) * cell + 80, H = static_cast<int>(n) * cell + 40;
    cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
    double lo = 1e300, hi = -1e300;
    for (int64_t i = 0; i < matrix.numel(); ++i) {
        lo = std::min(lo, matrix[i]);
        hi = std::max(hi, matrix[i]);
    }
    if (hi == lo) hi = lo + 1;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            const double t = (matrix[i * n + j] - lo) / (hi - lo);
            // blue -> white -> red
            const int r = static_cast<int>(255 * std::min(1.0, 2 * t));
            const int b = static_cast<int>(255 * std::min(1.0, 2 * (1 - t)));
            const int g = static_cast<int>(255 * (1 - std::fabs(2 * t - 1)) * 0.9);
            cv::rectangle(img,
                          cv::Rect(20 + static_cast<int>(j) * cell,
                                   30 + static_cast<int>(i) * cell, cell, cell),
                          cv::Scalar(b, g, r), cv::FILLED);
        }
    draw_text(img, 20, 8, title.substr(0, 60), cv::Vec3b(0, 0, 0));
    draw_text(img, 20, 18, fmt_tick(lo) + " " + fmt_tick(hi), cv::Vec3b(80, 80, 80));
    if (!cv::imwrite(path, img)) throw CheckpointError("cannot write plot: " + path);
}

}  // namespace zw
