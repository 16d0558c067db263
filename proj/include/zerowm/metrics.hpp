#pragma once

#include <cmath>

#include "zerowm/errors.hpp"
#include "zerowm/image.hpp"
#include "zerowm/wm.hpp"

namespace zw {

// Cap applied where an exact match would give +inf dB.
constexpr double kPsnrCap = 99.0;

template <typename T>
double cosine_similarity(const T* a, const T* b, int64_t n) {
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        throw PreconditionError("cosine similarity undefined for a zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename T>
double cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.numel() != b.numel()) throw PreconditionError("cosine similarity length mismatch");
    return cosine_similarity(a.data(), b.data(), a.numel());
}

// 10*log10(1/mse) for unit dynamic range, capped at 99 dB.
inline double psnr_from_mse(double mse_value) {
    if (mse_value <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse_value));
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw PreconditionError("psnr shape mismatch");
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        s += d * d;
    }
    return psnr_from_mse(s / static_cast<double>(a.numel()));
}

inline double bit_error_rate(const WatermarkMessage& a, const WatermarkMessage& b) {
    if (a.length() != b.length()) throw PreconditionError("bit_error_rate length mismatch");
    int64_t wrong = 0;
    for (int64_t i = 0; i < a.length(); ++i) wrong += a.bits[i] != b.bits[i];
    return static_cast<double>(wrong) / static_cast<double>(a.length());
}

}  // namespace zw
