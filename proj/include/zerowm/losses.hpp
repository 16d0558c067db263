#pragma once

#include <cmath>
#include <vector>

#include "zerowm/errors.hpp"
#include "zerowm/tensor.hpp"

namespace zw {

constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) {
    return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

// 11-tap Gaussian (sigma 1.5), normalized.
inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> k(11);
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            const double d = i - 5;
            k[i] = std::exp(-0.5 * d * d / (1.5 * 1.5));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

// Valid-mode separable Gaussian filter: in [H,W] -> out [H-10, W-10].
template <typename T>
void gauss_valid(const T* in, int64_t h, int64_t w, std::vector<double>& tmp,
                 std::vector<double>& out) {
    const auto& k = ssim_window();
    const int64_t vw = w - 10, vh = h - 10;
    tmp.assign(static_cast<size_t>(h * vw), 0.0);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < vw; ++x) {
            double acc = 0;
            for (int t = 0; t < 11; ++t) acc += k[t] * static_cast<double>(in[y * w + x + t]);
            tmp[y * vw + x] = acc;
        }
    out.assign(static_cast<size_t>(vh * vw), 0.0);
    for (int64_t y = 0; y < vh; ++y)
        for (int64_t x = 0; x < vw; ++x) {
            double acc = 0;
            for (int t = 0; t < 11; ++t) acc += k[t] * tmp[(y + t) * vw + x];
            out[y * vw + x] = acc;
        }
}

}  // namespace detail

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2
// on unit dynamic range, windows fully inside the image, averaged over
// channels. When gy is non-null, gy += scale * d ssim / d y.
template <typename T>
double ssim_core(const T* x, const T* y, int64_t channels, int64_t h, int64_t w, T* gy = nullptr,
                 double scale = 1.0) {
    if (h < 11 || w < 11) throw PreconditionError("ssim needs at least 11x11 images");
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const int64_t vh = h - 10, vw = w - 10;
    const int64_t area = h * w, varea = vh * vw;
    const auto& k = detail::ssim_window();

    std::vector<double> tmp, mx, my, mxx, myy, mxy;
    std::vector<T> prod(static_cast<size_t>(area));
    std::vector<double> coef_mu, coef_xy, coef_y2;
    double total = 0;
    for (int64_t c = 0; c < channels; ++c) {
        const T* xc = x + c * area;
        const T* yc = y + c * area;
        detail::gauss_valid(xc, h, w, tmp, mx);
        detail::gauss_valid(yc, h, w, tmp, my);
        for (int64_t i = 0; i < area; ++i) prod[i] = xc[i] * xc[i];
        detail::gauss_valid(prod.data(), h, w, tmp, mxx);
        for (int64_t i = 0; i < area; ++i) prod[i] = yc[i] * yc[i];
        detail::gauss_valid(prod.data(), h, w, tmp, myy);
        for (int64_t i = 0; i < area; ++i) prod[i] = xc[i] * yc[i];
        detail::gauss_valid(prod.data(), h, w, tmp, mxy);

        if (gy) {
            coef_mu.assign(static_cast<size_t>(varea), 0.0);
            coef_xy.assign(static_cast<size_t>(varea), 0.0);
            coef_y2.assign(static_cast<size_t>(varea), 0.0);
        }
        for (int64_t i = 0; i < varea; ++i) {
            const double mux = mx[i], muy = my[i];
            const double sxx = mxx[i] - mux * mux;
            const double syy = myy[i] - muy * muy;
            const double sxy = mxy[i] - mux * muy;
            const double a1 = 2 * mux * muy + c1, a2 = 2 * sxy + c2;
            const double b1 = mux * mux + muy * muy + c1, b2 = sxx + syy + c2;
            const double denom = b1 * b2;
            const double s = a1 * a2 / denom;
            total += s;
            if (gy) {
                // chain through mu_y plus the direct E[xy], E[y^2] paths
                coef_mu[i] = 2 * mux * (a2 - a1) / denom + 2 * muy * s * (1.0 / b2 - 1.0 / b1);
                coef_xy[i] = 2 * a1 / denom;
                coef_y2[i] = -s / b2;
            }
        }
        if (gy) {
            T* gyc = gy + c * area;
            const double norm = scale / static_cast<double>(channels * varea);
            for (int64_t cy = 0; cy < vh; ++cy)
                for (int64_t cx = 0; cx < vw; ++cx) {
                    const double cm = coef_mu[cy * vw + cx];
                    const double cxy = coef_xy[cy * vw + cx];
                    const double cy2 = coef_y2[cy * vw + cx];
                    for (int ky = 0; ky < 11; ++ky) {
                        const double wky = k[ky];
                        T* grow = gyc + (cy + ky) * w + cx;
                        const T* xrow = xc + (cy + ky) * w + cx;
                        const T* yrow = yc + (cy + ky) * w + cx;
                        for (int kx = 0; kx < 11; ++kx) {
                            const double wk = wky * k[kx];
                            grow[kx] += static_cast<T>(
                                norm * wk *
                                (cm + cxy * xrow[kx] + 2.0 * cy2 * yrow[kx]));
                        }
                    }
                }
        }
    }
    return total / static_cast<double>(channels * varea);
}

template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y) {
    if (!x.same_shape(y)) throw PreconditionError("ssim shape mismatch");
    if (x.rank() != 3) throw PreconditionError("ssim expects CHW tensors");
    return ssim_core(x.data(), y.data(), x.dim(0), x.dim(1), x.dim(2));
}

template <typename T>
double mse(const T* a, const T* b, int64_t n) {
    double s = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return s / static_cast<double>(n);
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw PreconditionError("mse shape mismatch");
    return mse(a.data(), b.data(), a.numel());
}

// L_R = lambda_s * (1 - SSIM(x, xhat)) + lambda_m * MSE(x, xhat)
template <typename T>
double loss_reconstruction(const Tensor<T>& x, const Tensor<T>& xhat, double lambda_s,
                           double lambda_m) {
    if (!x.same_shape(xhat)) throw PreconditionError("reconstruction loss shape mismatch");
    double v = 0;
    if (lambda_s != 0) v += lambda_s * (1.0 - ssim(x, xhat));
    if (lambda_m != 0) v += lambda_m * mse(x, xhat);
    return v;
}

// Value plus gradient w.r.t. xhat (accumulated into gxhat, scaled).
template <typename T>
double loss_reconstruction_with_grad(const T* x, const T* xhat, int64_t channels, int64_t h,
                                     int64_t w, double lambda_s, double lambda_m, T* gxhat,
                                     double scale) {
    const int64_t n = channels * h * w;
    double v = 0;
    if (lambda_s != 0) {
        const double s = ssim_core(x, xhat, channels, h, w, gxhat, -lambda_s * scale);
        v += lambda_s * (1.0 - s);
    }
    if (lambda_m != 0) {
        double acc = 0;
        const double coeff = 2.0 * lambda_m * scale / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(xhat[i]) - static_cast<double>(x[i]);
            acc += d * d;
            gxhat[i] += static_cast<T>(coeff * d);
        }
        v += lambda_m * acc / static_cast<double>(n);
    }
    return v;
}

// Binary cross-entropy for the discriminator (minimized by D):
//   -mean log p_clean - mean log(1 - p_dist)
template <typename T>
double loss_discriminator(const Tensor<T>& p_clean, const Tensor<T>& p_dist) {
    if (p_clean.numel() == 0 || p_dist.numel() == 0)
        throw PreconditionError("empty probability vector");
    double a = 0, b = 0;
    for (int64_t i = 0; i < p_clean.numel(); ++i) a += std::log(clamp_prob(p_clean[i]));
    for (int64_t i = 0; i < p_dist.numel(); ++i) b += std::log(1.0 - clamp_prob(p_dist[i]));
    return -a / p_clean.numel() - b / p_dist.numel();
}

// Adversarial objective for the feature extractor (minimized by FE):
//   mean log(1 - p_dist)
template <typename T>
double loss_adversarial(const Tensor<T>& p_dist) {
    if (p_dist.numel() == 0) throw PreconditionError("empty probability vector");
    double s = 0;
    for (int64_t i = 0; i < p_dist.numel(); ++i) s += std::log(1.0 - clamp_prob(p_dist[i]));
    return s / p_dist.numel();
}

// Multibit watermark BCE, summed over bits (probabilities clamped).
template <typename T>
double loss_watermark(const Tensor<T>& probs, const std::vector<uint8_t>& target) {
    if (probs.numel() != static_cast<int64_t>(target.size()))
        throw PreconditionError("watermark length mismatch");
    double s = 0;
    for (int64_t i = 0; i < probs.numel(); ++i) {
        const double p = clamp_prob(probs[i]);
        s -= target[i] ? std::log(p) : std::log(1.0 - p);
    }
    return s;
}

}  // namespace zw
