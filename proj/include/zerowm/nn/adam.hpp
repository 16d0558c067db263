#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "zerowm/nn/layers.hpp"
#include "zerowm/tensor.hpp"

namespace zw::nn {

// Adaptive-moment optimizer over one component's parameter set. Parameter
// pointers are collected once via the net's visit(); the net must stay at a
// fixed address afterwards.
template <typename T>
class Adam {
public:
    Adam() = default;

    template <typename Net>
    void attach(Net& net, double lr) {
        lr_ = lr;
        entries_.clear();
        net.visit([this](const std::string& name, Tensor<T>& p, Tensor<T>& g) {
            Entry e;
            e.name = name;
            e.param = &p;
            e.grad = &g;
            e.m.resize(std::vector<int64_t>(p.shape()));
            e.v.resize(std::vector<int64_t>(p.shape()));
            entries_.push_back(std::move(e));
        });
    }

    void zero_grad() {
        for (auto& e : entries_) e.grad->zero();
    }

    double grad_norm() const {
        double s = 0;
        for (const auto& e : entries_) s += e.grad->sq_norm();
        return std::sqrt(s);
    }

    // One update; grads are clipped to the given global norm when positive.
    void step(double clip_norm = 0.0) {
        double scale = 1.0;
        if (clip_norm > 0.0) {
            const double norm = grad_norm();
            if (norm > clip_norm) scale = clip_norm / norm;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& e : entries_) {
            T* p = e.param->data();
            T* g = e.grad->data();
            T* m = e.m.data();
            T* v = e.v.data();
            const int64_t n = e.param->numel();
            for (int64_t i = 0; i < n; ++i) {
                const double gi = static_cast<double>(g[i]) * scale;
                const double mi = beta1_ * m[i] + (1 - beta1_) * gi;
                const double vi = beta2_ * v[i] + (1 - beta2_) * gi * gi;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                p[i] -= static_cast<T>(lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
            }
        }
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    double lr() const { return lr_; }

    // Moment tensors for checkpointing, keyed "<param>.m" / "<param>.v".
    template <typename F>
    void visit_state(F&& fn) {
        for (auto& e : entries_) {
            fn(e.name + ".adam_m", e.m);
            fn(e.name + ".adam_v", e.v);
        }
    }

private:
    struct Entry {
        std::string name;
        Tensor<T>* param = nullptr;
        Tensor<T>* grad = nullptr;
        Tensor<T> m, v;
    };
    std::vector<Entry> entries_;
    double lr_ = 1e-3;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

}  // namespace zw::nn
