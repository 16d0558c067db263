#include "zerowm/distort.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "zerowm/errors.hpp"
#include "zerowm/rng.hpp"

namespace zw {
namespace {

constexpr int64_t N = kImageSize;

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// reflect-101 fold: mirrors about the edge pixels, period 2(n-1).
inline int64_t reflect_index(int64_t x, int64_t n) {
    if (n == 1) return 0;
    const int64_t period = 2 * (n - 1);
    x = ((x % period) + period) % period;
    return x < n ? x : period - x;
}

inline float sample_bilinear_reflect(const Image& img, int64_t c, double sy, double sx) {
    const double fy = std::floor(sy);
    const double fx = std::floor(sx);
    const int64_t y0 = static_cast<int64_t>(fy);
    const int64_t x0 = static_cast<int64_t>(fx);
    const double wy = sy - fy;
    const double wx = sx - fx;
    const int64_t ya = reflect_index(y0, N), yb = reflect_index(y0 + 1, N);
    const int64_t xa = reflect_index(x0, N), xb = reflect_index(x0 + 1, N);
    const double v00 = at(img, c, ya, xa), v01 = at(img, c, ya, xb);
    const double v10 = at(img, c, yb, xa), v11 = at(img, c, yb, xb);
    const double top = v00 + (v01 - v00) * wx;
    const double bot = v10 + (v11 - v10) * wx;
    return static_cast<float>(top + (bot - top) * wy);
}

// Inverse-mapped affine warp about the image center:
//   src = M * (dst - center) + center + t
Image warp_affine(const Image& img, const std::array<double, 4>& m, double tx, double ty) {
    Image out({kImageChannels, N, N});
    const double cx = (N - 1) / 2.0, cy = (N - 1) / 2.0;
    for (int64_t y = 0; y < N; ++y) {
        for (int64_t x = 0; x < N; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double sx = m[0] * dx + m[1] * dy + cx + tx;
            const double sy = m[2] * dx + m[3] * dy + cy + ty;
            for (int64_t c = 0; c < kImageChannels; ++c)
                at(out, c, y, x) = clamp01(sample_bilinear_reflect(img, c, sy, sx));
        }
    }
    return out;
}

inline double snap_small(double v) { return std::fabs(v) < 1e-12 ? 0.0 : v; }

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx <= 0.0 ? 0.0 : d / mx;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = (g - b) / d + (g < b ? 6.0 : 0.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h -= std::floor(h);
    const double hh = h * 6.0;
    const int i = std::min(5, static_cast<int>(hh));
    const double f = hh - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

Image resize_bilinear(const Image& img, int64_t out_h, int64_t out_w) {
    const int64_t in_h = img.dim(1), in_w = img.dim(2);
    Image out({kImageChannels, out_h, out_w});
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;
    for (int64_t y = 0; y < out_h; ++y) {
        for (int64_t x = 0; x < out_w; ++x) {
            double src_y = (y + 0.5) * sy - 0.5;
            double src_x = (x + 0.5) * sx - 0.5;
            src_y = std::clamp(src_y, 0.0, static_cast<double>(in_h - 1));
            src_x = std::clamp(src_x, 0.0, static_cast<double>(in_w - 1));
            const int64_t y0 = static_cast<int64_t>(std::floor(src_y));
            const int64_t x0 = static_cast<int64_t>(std::floor(src_x));
            const int64_t y1 = std::min(y0 + 1, in_h - 1);
            const int64_t x1 = std::min(x0 + 1, in_w - 1);
            const double wy = src_y - y0, wx = src_x - x0;
            for (int64_t c = 0; c < kImageChannels; ++c) {
                const double v00 = img[(c * in_h + y0) * in_w + x0];
                const double v01 = img[(c * in_h + y0) * in_w + x1];
                const double v10 = img[(c * in_h + y1) * in_w + x0];
                const double v11 = img[(c * in_h + y1) * in_w + x1];
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                out[(c * out_h + y) * out_w + x] = clamp01(top + (bot - top) * wy);
            }
        }
    }
    return out;
}

struct KindInfo {
    DistortionKind kind;
    const char* name;
};

constexpr std::array<KindInfo, 20> kKinds = {{
    {DistortionKind::identity, "identity"},
    {DistortionKind::rotation, "rotation"},
    {DistortionKind::width_shift, "width_shift"},
    {DistortionKind::height_shift, "height_shift"},
    {DistortionKind::shear, "shear"},
    {DistortionKind::zoom, "zoom"},
    {DistortionKind::hflip, "hflip"},
    {DistortionKind::gaussian_blur, "gaussian_blur"},
    {DistortionKind::solarization, "solarization"},
    {DistortionKind::cutout, "cutout"},
    {DistortionKind::crop, "crop"},
    {DistortionKind::jpeg, "jpeg"},
    {DistortionKind::brightness, "brightness"},
    {DistortionKind::contrast, "contrast"},
    {DistortionKind::hue, "hue"},
    {DistortionKind::saturation, "saturation"},
    {DistortionKind::gaussian_noise, "gaussian_noise"},
    {DistortionKind::salt_pepper, "salt_pepper"},
    {DistortionKind::resize_width, "resize_width"},
    {DistortionKind::gif, "gif"},
}};

void check_range(bool ok, const std::string& what) {
    if (!ok) throw ParameterError("distortion parameter out of domain: " + what);
}

}  // namespace

double DistortionSpec::required(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end())
        throw ParameterError(std::string(kind_name(kind)) + " requires parameter '" + name + "'");
    return it->second;
}

std::string DistortionSpec::describe() const {
    std::ostringstream os;
    os << kind_name(kind) << "(";
    bool first = true;
    for (const auto& [k, v] : params) {
        if (!first) os << ",";
        first = false;
        os << k << "=" << v;
    }
    os << ")";
    return os.str();
}

const char* kind_name(DistortionKind k) {
    for (const auto& info : kKinds)
        if (info.kind == k) return info.name;
    throw ParameterError("unknown distortion kind");
}

DistortionKind kind_from_name(const std::string& name) {
    for (const auto& info : kKinds)
        if (name == info.name) return info.kind;
    throw ParameterError("unknown distortion kind: " + name);
}

bool is_training_kind(DistortionKind k) {
    switch (k) {
        case DistortionKind::rotation:
        case DistortionKind::width_shift:
        case DistortionKind::height_shift:
        case DistortionKind::shear:
        case DistortionKind::zoom:
        case DistortionKind::hflip:
            return true;
        default:
            return false;
    }
}

bool is_stochastic_kind(DistortionKind k) {
    return k == DistortionKind::gaussian_noise || k == DistortionKind::salt_pepper ||
           k == DistortionKind::cutout;
}

void validate_spec(const DistortionSpec& spec) {
    switch (spec.kind) {
        case DistortionKind::identity:
            break;
        case DistortionKind::rotation:
            check_range(std::fabs(spec.required("degrees")) <= 180.0, "rotation degrees in [-180,180]");
            break;
        case DistortionKind::width_shift:
        case DistortionKind::height_shift:
            check_range(std::fabs(spec.required("fraction")) <= 1.0, "shift fraction in [-1,1]");
            break;
        case DistortionKind::shear:
            check_range(std::fabs(spec.required("fraction")) <= 1.0, "shear fraction in [-1,1]");
            break;
        case DistortionKind::zoom: {
            double f = spec.required("fraction");
            check_range(f > -1.0 && f <= 1.0, "zoom fraction in (-1,1]");
            break;
        }
        case DistortionKind::hflip: {
            double a = spec.param("apply", 1.0);
            check_range(a == 0.0 || a == 1.0, "hflip apply in {0,1}");
            break;
        }
        case DistortionKind::gaussian_blur: {
            double s = spec.required("sigma");
            check_range(s > 0.0 && s <= 10.0, "blur sigma in (0,10]");
            break;
        }
        case DistortionKind::solarization: {
            double t = spec.param("threshold", 0.5);
            check_range(t >= 0.0 && t <= 1.0, "solarization threshold in [0,1]");
            break;
        }
        case DistortionKind::cutout: {
            double f = spec.param("fraction", 0.25);
            check_range(f > 0.0 && f <= 1.0, "cutout fraction in (0,1]");
            break;
        }
        case DistortionKind::crop: {
            double f = spec.required("fraction");
            check_range(f > 0.0 && f <= 1.0, "crop area fraction in (0,1]");
            break;
        }
        case DistortionKind::jpeg: {
            double q = spec.required("quality");
            check_range(q >= 1.0 && q <= 100.0 && q == std::floor(q), "jpeg quality integer in [1,100]");
            break;
        }
        case DistortionKind::brightness:
        case DistortionKind::contrast: {
            double f = spec.required("factor");
            check_range(f >= 0.0 && f <= 10.0, "factor in [0,10]");
            break;
        }
        case DistortionKind::hue: {
            double h = spec.required("shift");
            check_range(std::fabs(h) <= 1.0, "hue shift in [-1,1]");
            break;
        }
        case DistortionKind::saturation: {
            double f = spec.required("factor");
            check_range(f >= 0.0 && f <= 100.0, "saturation factor in [0,100]");
            break;
        }
        case DistortionKind::gaussian_noise: {
            double v = spec.required("variance");
            check_range(v >= 0.0 && v <= 1.0, "noise variance in [0,1]");
            break;
        }
        case DistortionKind::salt_pepper: {
            double d = spec.required("density");
            check_range(d >= 0.0 && d <= 1.0, "salt-pepper density in [0,1]");
            break;
        }
        case DistortionKind::resize_width: {
            double f = spec.required("fraction");
            check_range(f > 0.0 && f <= 2.0, "resize-width fraction in (0,2]");
            break;
        }
        case DistortionKind::gif: {
            double c = spec.required("colors");
            check_range(c >= 2.0 && c <= 256.0, "gif colors in [2,256]");
            break;
        }
    }
}

void validate_spec(const DistortionSpec& spec, DistortionPhase phase) {
    validate_spec(spec);
    if (phase != DistortionPhase::training) return;
    if (!is_training_kind(spec.kind))
        throw ParameterError(std::string("kind not allowed in training phase: ") + kind_name(spec.kind));
    switch (spec.kind) {
        case DistortionKind::rotation:
            check_range(std::fabs(spec.required("degrees")) <= 15.0, "training rotation within +-15 deg");
            break;
        case DistortionKind::width_shift:
        case DistortionKind::height_shift:
        case DistortionKind::shear:
        case DistortionKind::zoom:
            check_range(std::fabs(spec.required("fraction")) <= 0.15, "training fraction within +-0.15");
            break;
        default:
            break;
    }
}

Image rotate_preserving_content(const Image& image, double degrees) {
    validate_image(image);
    if (std::fabs(degrees) > 180.0) throw ParameterError("rotation degrees in [-180,180]");
    const double theta = degrees * M_PI / 180.0;
    const double c = snap_small(std::cos(theta));
    const double s = snap_small(std::sin(theta));
    // Square frame: shrink so the rotated content stays fully inside.
    const double scale = 1.0 / (std::fabs(c) + std::fabs(s));
    // Forward map: dst = R(theta) * scale * src; inverse: src = R(-theta)/scale * dst.
    const double inv = 1.0 / scale;
    return warp_affine(image, {c * inv, s * inv, -s * inv, c * inv}, 0.0, 0.0);
}

Image shift_image(const Image& image, double dx_fraction, double dy_fraction) {
    validate_image(image);
    return warp_affine(image, {1.0, 0.0, 0.0, 1.0}, -dx_fraction * N, -dy_fraction * N);
}

Image shear_image(const Image& image, double fraction) {
    validate_image(image);
    // Forward: x' = x + f*y (about center); inverse: x = x' - f*y'.
    return warp_affine(image, {1.0, -fraction, 0.0, 1.0}, 0.0, 0.0);
}

Image zoom_image(const Image& image, double fraction) {
    validate_image(image);
    const double z = 1.0 + fraction;
    if (z <= 0.0) throw ParameterError("zoom scale must be positive");
    const double inv = 1.0 / z;
    return warp_affine(image, {inv, 0.0, 0.0, inv}, 0.0, 0.0);
}

Image hflip_image(const Image& image) {
    validate_image(image);
    Image out({kImageChannels, N, N});
    for (int64_t c = 0; c < kImageChannels; ++c)
        for (int64_t y = 0; y < N; ++y)
            for (int64_t x = 0; x < N; ++x) at(out, c, y, x) = at(image, c, y, N - 1 - x);
    return out;
}

Image gaussian_blur(const Image& image, double sigma) {
    validate_image(image);
    if (sigma <= 0.0) throw ParameterError("blur sigma must be positive");
    const int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int64_t i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel) k /= norm;

    Image tmp({kImageChannels, N, N});
    Image out({kImageChannels, N, N});
    for (int64_t c = 0; c < kImageChannels; ++c) {
        for (int64_t y = 0; y < N; ++y)
            for (int64_t x = 0; x < N; ++x) {
                double acc = 0.0;
                for (int64_t i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * at(image, c, y, reflect_index(x + i, N));
                at(tmp, c, y, x) = static_cast<float>(acc);
            }
        for (int64_t y = 0; y < N; ++y)
            for (int64_t x = 0; x < N; ++x) {
                double acc = 0.0;
                for (int64_t i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * at(tmp, c, reflect_index(y + i, N), x);
                at(out, c, y, x) = clamp01(acc);
            }
    }
    return out;
}

Image solarize(const Image& image, double threshold) {
    validate_image(image);
    Image out = image;
    for (int64_t i = 0; i < out.numel(); ++i)
        if (out[i] >= threshold) out[i] = 1.f - out[i];
    return out;
}

Image cutout(const Image& image, double side_fraction, uint64_t seed) {
    validate_image(image);
    const int64_t side = std::max<int64_t>(1, static_cast<int64_t>(std::llround(side_fraction * N)));
    const int64_t max_off = N - side;
    const int64_t x0 = static_cast<int64_t>(stateless_unit(seed, 0) * (max_off + 1));
    const int64_t y0 = static_cast<int64_t>(stateless_unit(seed, 1) * (max_off + 1));
    Image out = image;
    for (int64_t c = 0; c < kImageChannels; ++c)
        for (int64_t y = y0; y < y0 + side; ++y)
            for (int64_t x = x0; x < x0 + side; ++x) at(out, c, y, x) = 0.f;
    return out;
}

Image central_crop(const Image& image, double area_fraction) {
    validate_image(image);
    const int64_t side =
        std::clamp<int64_t>(static_cast<int64_t>(std::llround(N * std::sqrt(area_fraction))), 1, N);
    const int64_t off = (N - side) / 2;
    Image cropped({kImageChannels, side, side});
    for (int64_t c = 0; c < kImageChannels; ++c)
        for (int64_t y = 0; y < side; ++y)
            for (int64_t x = 0; x < side; ++x)
                cropped[(c * side + y) * side + x] = at(image, c, y + off, x + off);
    return resize_bilinear(cropped, N, N);
}

Image jpeg_roundtrip(const Image& image, int quality) {
    validate_image(image);
    if (quality < 1 || quality > 100) throw ParameterError("jpeg quality in [1,100]");
    cv::Mat bgr(static_cast<int>(N), static_cast<int>(N), CV_8UC3);
    for (int y = 0; y < N; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < N; ++x) {
            row[x] = cv::Vec3b(static_cast<uint8_t>(std::lround(at(image, 2, y, x) * 255.f)),
                               static_cast<uint8_t>(std::lround(at(image, 1, y, x) * 255.f)),
                               static_cast<uint8_t>(std::lround(at(image, 0, y, x) * 255.f)));
        }
    }
    std::vector<uchar> buf;
    if (!cv::imencode(".jpg", bgr, buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw DistortionError("jpeg encode failed");
    cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (decoded.empty() || decoded.rows != N || decoded.cols != N)
        throw DistortionError("jpeg decode failed");
    Image out({kImageChannels, N, N});
    for (int y = 0; y < N; ++y) {
        const cv::Vec3b* row = decoded.ptr<cv::Vec3b>(y);
        for (int x = 0; x < N; ++x) {
            at(out, 0, y, x) = row[x][2] / 255.f;
            at(out, 1, y, x) = row[x][1] / 255.f;
            at(out, 2, y, x) = row[x][0] / 255.f;
        }
    }
    return out;
}

Image adjust_brightness(const Image& image, double factor) {
    validate_image(image);
    Image out = image;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = clamp01(out[i] * factor);
    return out;
}

Image adjust_contrast(const Image& image, double factor) {
    validate_image(image);
    double mean = 0.0;
    for (int64_t y = 0; y < N; ++y)
        for (int64_t x = 0; x < N; ++x)
            mean += 0.299 * at(image, 0, y, x) + 0.587 * at(image, 1, y, x) +
                    0.114 * at(image, 2, y, x);
    mean /= static_cast<double>(N * N);
    Image out = image;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = clamp01(mean + (out[i] - mean) * factor);
    return out;
}

Image adjust_hue(const Image& image, double shift) {
    validate_image(image);
    Image out({kImageChannels, N, N});
    for (int64_t y = 0; y < N; ++y)
        for (int64_t x = 0; x < N; ++x) {
            double h, s, v, r, g, b;
            rgb_to_hsv(at(image, 0, y, x), at(image, 1, y, x), at(image, 2, y, x), h, s, v);
            hsv_to_rgb(h + shift, s, v, r, g, b);
            at(out, 0, y, x) = clamp01(r);
            at(out, 1, y, x) = clamp01(g);
            at(out, 2, y, x) = clamp01(b);
        }
    return out;
}

Image adjust_saturation(const Image& image, double factor) {
    validate_image(image);
    Image out({kImageChannels, N, N});
    for (int64_t y = 0; y < N; ++y)
        for (int64_t x = 0; x < N; ++x) {
            double h, s, v, r, g, b;
            rgb_to_hsv(at(image, 0, y, x), at(image, 1, y, x), at(image, 2, y, x), h, s, v);
            hsv_to_rgb(h, std::clamp(s * factor, 0.0, 1.0), v, r, g, b);
            at(out, 0, y, x) = clamp01(r);
            at(out, 1, y, x) = clamp01(g);
            at(out, 2, y, x) = clamp01(b);
        }
    return out;
}

Image add_gaussian_noise(const Image& image, double variance, uint64_t seed) {
    validate_image(image);
    const double sigma = std::sqrt(std::max(0.0, variance));
    Image out = image;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double u1 = std::max(stateless_unit(seed, 2 * static_cast<uint64_t>(i)), 1e-300);
        double u2 = stateless_unit(seed, 2 * static_cast<uint64_t>(i) + 1);
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        out[i] = clamp01(out[i] + sigma * z);
    }
    return out;
}

Image add_salt_pepper(const Image& image, double density, uint64_t seed) {
    validate_image(image);
    Image out = image;
    for (int64_t p = 0; p < N * N; ++p) {
        const double u = stateless_unit(seed, static_cast<uint64_t>(p));
        if (u < density * 0.5) {
            for (int64_t c = 0; c < kImageChannels; ++c) out[c * N * N + p] = 0.f;
        } else if (u < density) {
            for (int64_t c = 0; c < kImageChannels; ++c) out[c * N * N + p] = 1.f;
        }
    }
    return out;
}

Image resize_width_only(const Image& image, double fraction) {
    validate_image(image);
    const int64_t w = std::clamp<int64_t>(static_cast<int64_t>(std::llround(fraction * N)), 1, 2 * N);
    Image narrowed = resize_bilinear(image, N, w);
    return resize_bilinear(narrowed, N, N);
}

Image gif_quantize(const Image& image, int colors) {
    validate_image(image);
    if (colors < 2) throw ParameterError("gif colors must be >= 2");
    // Uniform per-channel palette; the largest grid fitting the color budget.
    const int levels = std::max(2, static_cast<int>(std::floor(std::cbrt(static_cast<double>(colors)))));
    const float steps = static_cast<float>(levels - 1);
    Image out = image;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::round(out[i] * steps) / steps;
    return out;
}

Image apply_distortion(const Image& image, const DistortionSpec& spec) {
    validate_image(image);
    validate_spec(spec);
    switch (spec.kind) {
        case DistortionKind::identity:
            return image;
        case DistortionKind::rotation:
            return rotate_preserving_content(image, spec.required("degrees"));
        case DistortionKind::width_shift:
            return shift_image(image, spec.required("fraction"), 0.0);
        case DistortionKind::height_shift:
            return shift_image(image, 0.0, spec.required("fraction"));
        case DistortionKind::shear:
            return shear_image(image, spec.required("fraction"));
        case DistortionKind::zoom:
            return zoom_image(image, spec.required("fraction"));
        case DistortionKind::hflip:
            return spec.param("apply", 1.0) != 0.0 ? hflip_image(image) : image;
        case DistortionKind::gaussian_blur:
            return gaussian_blur(image, spec.required("sigma"));
        case DistortionKind::solarization:
            return solarize(image, spec.param("threshold", 0.5));
        case DistortionKind::cutout:
            return cutout(image, spec.param("fraction", 0.25), spec.seed);
        case DistortionKind::crop:
            return central_crop(image, spec.required("fraction"));
        case DistortionKind::jpeg:
            return jpeg_roundtrip(image, static_cast<int>(spec.required("quality")));
        case DistortionKind::brightness:
            return adjust_brightness(image, spec.required("factor"));
        case DistortionKind::contrast:
            return adjust_contrast(image, spec.required("factor"));
        case DistortionKind::hue:
            return adjust_hue(image, spec.required("shift"));
        case DistortionKind::saturation:
            return adjust_saturation(image, spec.required("factor"));
        case DistortionKind::gaussian_noise:
            return add_gaussian_noise(image, spec.required("variance"), spec.seed);
        case DistortionKind::salt_pepper:
            return add_salt_pepper(image, spec.required("density"), spec.seed);
        case DistortionKind::resize_width:
            return resize_width_only(image, spec.required("fraction"));
        case DistortionKind::gif:
            return gif_quantize(image, static_cast<int>(spec.required("colors")));
    }
    throw ParameterError("unknown distortion kind");
}

DistortionSpec sample_training_distortion(uint64_t rng_seed) {
    Rng rng(hash_combine(rng_seed, 0x7261696eULL));
    DistortionSpec spec;
    spec.seed = rng.next_u64();
    switch (rng.uniform_int(0, 5)) {
        case 0:
            spec.kind = DistortionKind::rotation;
            spec.params["degrees"] = rng.uniform(-15.0, 15.0);
            break;
        case 1:
            spec.kind = DistortionKind::width_shift;
            spec.params["fraction"] = rng.uniform(-0.15, 0.15);
            break;
        case 2:
            spec.kind = DistortionKind::height_shift;
            spec.params["fraction"] = rng.uniform(-0.15, 0.15);
            break;
        case 3:
            spec.kind = DistortionKind::shear;
            spec.params["fraction"] = rng.uniform(-0.15, 0.15);
            break;
        case 4:
            spec.kind = DistortionKind::zoom;
            spec.params["fraction"] = rng.uniform(-0.15, 0.15);
            break;
        default:
            spec.kind = DistortionKind::hflip;
            spec.params["apply"] = rng.bernoulli(0.5) ? 1.0 : 0.0;
            break;
    }
    return spec;
}

std::vector<DistortionSpec> photometric_suite(DistortionPhase phase) {
    std::vector<DistortionSpec> grid;
    auto add = [&grid](DistortionKind kind, std::map<std::string, double> params) {
        DistortionSpec spec;
        spec.kind = kind;
        spec.params = std::move(params);
        spec.seed = static_cast<uint64_t>(grid.size());
        grid.push_back(std::move(spec));
    };

    if (phase == DistortionPhase::training) {
        add(DistortionKind::rotation, {{"degrees", 15.0}});
        add(DistortionKind::rotation, {{"degrees", -15.0}});
        add(DistortionKind::width_shift, {{"fraction", 0.15}});
        add(DistortionKind::width_shift, {{"fraction", -0.15}});
        add(DistortionKind::height_shift, {{"fraction", 0.15}});
        add(DistortionKind::height_shift, {{"fraction", -0.15}});
        add(DistortionKind::shear, {{"fraction", 0.15}});
        add(DistortionKind::shear, {{"fraction", -0.15}});
        add(DistortionKind::zoom, {{"fraction", 0.15}});
        add(DistortionKind::zoom, {{"fraction", -0.15}});
        add(DistortionKind::hflip, {{"apply", 1.0}});
        return grid;
    }

    add(DistortionKind::identity, {});
    add(DistortionKind::rotation, {{"degrees", 25.0}});
    add(DistortionKind::rotation, {{"degrees", -25.0}});
    add(DistortionKind::width_shift, {{"fraction", 0.25}});
    add(DistortionKind::width_shift, {{"fraction", -0.25}});
    add(DistortionKind::height_shift, {{"fraction", 0.25}});
    add(DistortionKind::height_shift, {{"fraction", -0.25}});
    add(DistortionKind::shear, {{"fraction", 0.25}});
    add(DistortionKind::shear, {{"fraction", -0.25}});
    add(DistortionKind::zoom, {{"fraction", 0.25}});
    add(DistortionKind::zoom, {{"fraction", -0.25}});
    add(DistortionKind::hflip, {{"apply", 1.0}});
    add(DistortionKind::gaussian_blur, {{"sigma", 1.5}});
    add(DistortionKind::gaussian_blur, {{"sigma", 2.0}});
    add(DistortionKind::solarization, {{"threshold", 0.5}});
    add(DistortionKind::cutout, {{"fraction", 0.25}});
    add(DistortionKind::crop, {{"fraction", 0.5}});
    add(DistortionKind::crop, {{"fraction", 0.1}});
    for (double q : {15.0, 30.0, 50.0, 70.0}) add(DistortionKind::jpeg, {{"quality", q}});
    add(DistortionKind::brightness, {{"factor", 2.0}});
    add(DistortionKind::contrast, {{"factor", 2.0}});
    for (double h : {0.2, 0.4, 0.6}) add(DistortionKind::hue, {{"shift", h}});
    for (double s : {5.0, 10.0, 15.0}) add(DistortionKind::saturation, {{"factor", s}});
    for (double v : {0.005, 0.01, 0.05, 0.10, 0.15})
        add(DistortionKind::gaussian_noise, {{"variance", v}});
    for (double d : {0.05, 0.10, 0.15}) add(DistortionKind::salt_pepper, {{"density", d}});
    for (double f : {0.9, 0.7, 0.5}) add(DistortionKind::resize_width, {{"fraction", f}});
    for (double c : {64.0, 32.0, 16.0}) add(DistortionKind::gif, {{"colors", c}});
    return grid;
}

std::string grid_to_json(const std::vector<DistortionSpec>& grid) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& spec : grid) {
        nlohmann::json item;
        item["kind"] = kind_name(spec.kind);
        item["params"] = spec.params;
        item["seed"] = spec.seed;
        arr.push_back(std::move(item));
    }
    return arr.dump(2);
}

std::vector<DistortionSpec> grid_from_json(const std::string& json_text) {
    nlohmann::json arr = nlohmann::json::parse(json_text);
    if (!arr.is_array()) throw ParameterError("distortion grid must be a JSON array");
    std::vector<DistortionSpec> grid;
    for (const auto& item : arr) {
        DistortionSpec spec;
        spec.kind = kind_from_name(item.at("kind").get<std::string>());
        if (item.contains("params"))
            spec.params = item.at("params").get<std::map<std::string, double>>();
        spec.seed = item.value("seed", 0ULL);
        validate_spec(spec);
        grid.push_back(std::move(spec));
    }
    return grid;
}

std::vector<DistortionSpec> load_distortion_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open distortion grid: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return grid_from_json(ss.str());
}

}  // namespace zw
