#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "zerowm/rng.hpp"
#include "zerowm/tensor.hpp"

namespace zw::testutil {

struct ParamRef {
    std::string name;
    Tensor<double>* p;
    Tensor<double>* g;
};

template <typename Net>
std::vector<ParamRef> collect_params(Net& net) {
    std::vector<ParamRef> out;
    net.visit([&out](const std::string& name, Tensor<double>& p, Tensor<double>& g) {
        out.push_back({name, &p, &g});
    });
    return out;
}

// Central finite differences on a random parameter slice vs the analytic
// gradient. `eval` recomputes the scalar loss; `backward` must zero grads,
// run forward+backward and leave analytic gradients in place.
inline double slice_fd_rel_error(std::vector<ParamRef> params,
                                 const std::function<double()>& eval,
                                 const std::function<void()>& backward, int n_slice = 16,
                                 double h = 1e-3, uint64_t seed = 0) {
    backward();
    Rng rng(hash_combine(seed, 0xfdc4ec));
    std::vector<double> g_an, g_fd;
    for (int s = 0; s < n_slice; ++s) {
        const auto& pr = params[rng.uniform_int(0, static_cast<int64_t>(params.size()) - 1)];
        const int64_t idx = rng.uniform_int(0, pr.p->numel() - 1);
        g_an.push_back((*pr.g)[idx]);
        const double orig = (*pr.p)[idx];
        (*pr.p)[idx] = orig + h;
        const double lp = eval();
        (*pr.p)[idx] = orig - h;
        const double lm = eval();
        (*pr.p)[idx] = orig;
        g_fd.push_back((lp - lm) / (2 * h));
    }
    double num = 0, den = 0;
    for (size_t i = 0; i < g_an.size(); ++i) {
        num += (g_an[i] - g_fd[i]) * (g_an[i] - g_fd[i]);
        den += g_fd[i] * g_fd[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace zw::testutil
