#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "zerowm/errors.hpp"
#include "zerowm/rng.hpp"

namespace zw {

// Dense row-major tensor over float or double. Shape is dynamic; all math
// lives in free functions and the nn layers.
template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), T{});
    }
    Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

    static int64_t numel_of(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d < 0) throw ConfigError("negative tensor dimension");
            n *= d;
        }
        return n;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T{}); }

    void resize(std::vector<int64_t> shape) {
        shape_ = std::move(shape);
        data_.assign(static_cast<size_t>(numel_of(shape_)), T{});
    }

    // Reinterpret without touching data; element count must match.
    void reshape(std::vector<int64_t> shape) {
        if (numel_of(shape) != numel()) throw ConfigError("reshape element count mismatch");
        shape_ = std::move(shape);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    double sum() const {
        double s = 0.0;
        for (const T& v : data_) s += static_cast<double>(v);
        return s;
    }

    double sq_norm() const {
        double s = 0.0;
        for (const T& v : data_) s += static_cast<double>(v) * static_cast<double>(v);
        return s;
    }

    void fill_truncated_normal(Rng& rng, double sigma) {
        for (T& v : data_) v = static_cast<T>(rng.truncated_normal(sigma));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
        return out;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
    assert(x.numel() == y.numel());
    const T* xp = x.data();
    T* yp = y.data();
    for (int64_t i = 0; i < x.numel(); ++i) yp[i] += alpha * xp[i];
}

}  // namespace zw
