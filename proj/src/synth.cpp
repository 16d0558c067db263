#include "zerowm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zerowm/errors.hpp"
#include "zerowm/rng.hpp"

namespace fs = std::filesystem;

namespace zw {
namespace {

constexpr int64_t N = kImageSize;

struct Color {
    float r, g, b;
};

Color random_color(Rng& rng, double min_v = 0.1, double max_v = 0.95) {
    return {static_cast<float>(rng.uniform(min_v, max_v)),
            static_cast<float>(rng.uniform(min_v, max_v)),
            static_cast<float>(rng.uniform(min_v, max_v))};
}

// A color far from `avoid` in RGB so the shape stays visible.
Color contrasting_color(Rng& rng, const Color& avoid) {
    for (int tries = 0; tries < 16; ++tries) {
        Color c = random_color(rng, 0.05, 0.95);
        const double d = std::fabs(c.r - avoid.r) + std::fabs(c.g - avoid.g) +
                         std::fabs(c.b - avoid.b);
        if (d > 0.8) return c;
    }
    return {1.f - avoid.r, 1.f - avoid.g, 1.f - avoid.b};
}

void put_pixel(Image& img, int64_t y, int64_t x, const Color& c, float alpha = 1.f) {
    at(img, 0, y, x) = std::clamp(alpha * c.r + (1 - alpha) * at(img, 0, y, x), 0.f, 1.f);
    at(img, 1, y, x) = std::clamp(alpha * c.g + (1 - alpha) * at(img, 1, y, x), 0.f, 1.f);
    at(img, 2, y, x) = std::clamp(alpha * c.b + (1 - alpha) * at(img, 2, y, x), 0.f, 1.f);
}

// Bilinear upsample of a coarse random grid, one amplitude-limited offset map.
void add_value_noise(Image& img, Rng& rng, double amplitude) {
    constexpr int64_t g = 9;
    float grid[g][g];
    for (int64_t i = 0; i < g; ++i)
        for (int64_t j = 0; j < g; ++j)
            grid[i][j] = static_cast<float>(rng.uniform(-amplitude, amplitude));
    for (int64_t y = 0; y < N; ++y)
        for (int64_t x = 0; x < N; ++x) {
            const double fy = static_cast<double>(y) / (N - 1) * (g - 1);
            const double fx = static_cast<double>(x) / (N - 1) * (g - 1);
            const int64_t y0 = static_cast<int64_t>(fy), x0 = static_cast<int64_t>(fx);
            const int64_t y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
            const double wy = fy - y0, wx = fx - x0;
            const double v = grid[y0][x0] * (1 - wy) * (1 - wx) + grid[y0][x1] * (1 - wy) * wx +
                             grid[y1][x0] * wy * (1 - wx) + grid[y1][x1] * wy * wx;
            for (int64_t c = 0; c < 3; ++c) {
                float& p = at(img, c, y, x);
                p = std::clamp(p + static_cast<float>(v), 0.f, 1.f);
            }
        }
}

void fill_background(Image& img, Rng& rng, Color& mean_out) {
    const Color a = random_color(rng);
    const Color b = random_color(rng);
    const double angle = rng.uniform(0, 2 * M_PI);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int64_t y = 0; y < N; ++y)
        for (int64_t x = 0; x < N; ++x) {
            double t = ((x - N / 2.0) * ca + (y - N / 2.0) * sa) / N + 0.5;
            t = std::clamp(t, 0.0, 1.0);
            at(img, 0, y, x) = static_cast<float>(a.r + (b.r - a.r) * t);
            at(img, 1, y, x) = static_cast<float>(a.g + (b.g - a.g) * t);
            at(img, 2, y, x) = static_cast<float>(a.b + (b.b - a.b) * t);
        }
    add_value_noise(img, rng, 0.06);
    mean_out = {(a.r + b.r) / 2, (a.g + b.g) / 2, (a.b + b.b) / 2};
}

}  // namespace

Image synth_image(uint64_t seed, int64_t index, int* label_out) {
    Rng rng(hash_combine(hash_combine(seed, 0x5f9ULL), static_cast<uint64_t>(index)));
    Image img = make_image();
    Color bg_mean;
    fill_background(img, rng, bg_mean);

    const int label = static_cast<int>(rng.uniform_int(0, kSynthClasses - 1));
    const Color fg = contrasting_color(rng, bg_mean);
    const Color fg2 = contrasting_color(rng, fg);
    const double cx = N / 2.0 + rng.uniform(-0.15, 0.15) * N;
    const double cy = N / 2.0 + rng.uniform(-0.15, 0.15) * N;
    const double size = rng.uniform(0.30, 0.55) * N;  // characteristic diameter
    const double r = size / 2;

    auto inside_box = [&](double dx, double dy) {
        return std::fabs(dx) <= r && std::fabs(dy) <= r;
    };

    for (int64_t y = 0; y < N; ++y)
        for (int64_t x = 0; x < N; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double rho = std::sqrt(dx * dx + dy * dy);
            bool hit = false;
            Color c = fg;
            switch (label) {
                case 0:  // circle
                    hit = rho <= r;
                    break;
                case 1:  // square
                    hit = inside_box(dx, dy);
                    break;
                case 2:  // triangle, apex up
                    if (dy >= -r && dy <= r) {
                        const double half = (dy + r) / (2 * r) * r;
                        hit = std::fabs(dx) <= half;
                    }
                    break;
                case 3:  // ring
                    hit = rho <= r && rho >= 0.6 * r;
                    break;
                case 4:  // cross
                    hit = (std::fabs(dx) <= 0.3 * r && std::fabs(dy) <= r) ||
                          (std::fabs(dy) <= 0.3 * r && std::fabs(dx) <= r);
                    break;
                case 5:  // horizontal stripes
                    if (inside_box(dx, dy)) {
                        const int band = static_cast<int>(std::floor((dy + r) / (r / 2)));
                        hit = true;
                        c = band % 2 ? fg : fg2;
                    }
                    break;
                case 6:  // vertical stripes
                    if (inside_box(dx, dy)) {
                        const int band = static_cast<int>(std::floor((dx + r) / (r / 2)));
                        hit = true;
                        c = band % 2 ? fg : fg2;
                    }
                    break;
                case 7:  // checkerboard
                    if (inside_box(dx, dy)) {
                        const int bx = static_cast<int>(std::floor((dx + r) / (r / 2)));
                        const int by = static_cast<int>(std::floor((dy + r) / (r / 2)));
                        hit = true;
                        c = (bx + by) % 2 ? fg : fg2;
                    }
                    break;
                case 8:  // diamond
                    hit = std::fabs(dx) + std::fabs(dy) <= r;
                    break;
                default:  // twin blobs
                    hit = std::hypot(dx - 0.5 * r, dy) <= 0.5 * r ||
                          std::hypot(dx + 0.5 * r, dy + 0.3 * r) <= 0.4 * r;
                    break;
            }
            if (hit) put_pixel(img, y, x, c);
        }

    if (label_out) *label_out = label;
    return img;
}

std::vector<Image> synth_images(uint64_t seed, int64_t count, std::vector<int>* labels) {
    std::vector<Image> out;
    out.reserve(count);
    if (labels) labels->clear();
    for (int64_t i = 0; i < count; ++i) {
        int label = -1;
        out.push_back(synth_image(seed, i, &label));
        if (labels) labels->push_back(label);
    }
    return out;
}

void synth_dataset(const std::string& out_dir, int64_t count, uint64_t seed, bool labeled) {
    if (count < 1) throw ParameterError("dataset count must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw CheckpointError("cannot create dataset dir: " + out_dir);
    std::ofstream labels_csv;
    if (labeled) {
        labels_csv.open(fs::path(out_dir) / "labels.csv");
        labels_csv << "filename,label\n";
    }
    for (int64_t i = 0; i < count; ++i) {
        int label = -1;
        const Image img = synth_image(seed, i, &label);
        char name[32];
        std::snprintf(name, sizeof(name), "img_%06lld.png", static_cast<long long>(i));
        save_image(img, (fs::path(out_dir) / name).string());
        if (labeled) labels_csv << name << "," << label << "\n";
    }
}

}  // namespace zw
