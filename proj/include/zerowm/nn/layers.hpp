#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "zerowm/blas.hpp"
#include "zerowm/errors.hpp"
#include "zerowm/rng.hpp"
#include "zerowm/tensor.hpp"

namespace zw::nn {

// visit callback: (name, param, grad)
template <typename T>
using ParamVisitor = std::function<void(const std::string&, Tensor<T>&, Tensor<T>&)>;

template <typename T>
struct Linear {
    Tensor<T> w, b;    // w: [out,in]
    Tensor<T> gw, gb;

    void init(Rng& rng, int64_t in, int64_t out, double sigma = 0.02) {
        w.resize({out, in});
        b.resize({out});
        w.fill_truncated_normal(rng, sigma);
        gw.resize({out, in});
        gb.resize({out});
    }

    int64_t in_dim() const { return w.dim(1); }
    int64_t out_dim() const { return w.dim(0); }

    // x: [M,in] -> y: [M,out]
    void forward(const Tensor<T>& x, Tensor<T>& y) const {
        const int64_t m = x.dim(0);
        y.resize({m, out_dim()});
        matmul<T>(false, true, m, out_dim(), in_dim(), T(1), x.data(), w.data(), T(0), y.data());
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < out_dim(); ++c) y[r * out_dim() + c] += b[c];
    }

    // Accumulates gw/gb; writes gx when non-null.
    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gx) {
        const int64_t m = x.dim(0);
        matmul<T>(true, false, out_dim(), in_dim(), m, T(1), gy.data(), x.data(), T(1), gw.data());
        for (int64_t r = 0; r < m; ++r)
            for (int64_t c = 0; c < out_dim(); ++c) gb[c] += gy[r * out_dim() + c];
        if (gx) {
            gx->resize({m, in_dim()});
            matmul<T>(false, false, m, in_dim(), out_dim(), T(1), gy.data(), w.data(), T(0),
                      gx->data());
        }
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".w", w, gw);
        fn(prefix + ".b", b, gb);
    }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gamma, beta, ggamma, gbeta;
    Tensor<T> mean, rstd;  // per-row caches from the last forward
    double eps = 1e-6;

    void init(int64_t dim) {
        gamma.resize({dim});
        gamma.fill(T(1));
        beta.resize({dim});
        ggamma.resize({dim});
        gbeta.resize({dim});
    }

    int64_t dim() const { return gamma.dim(0); }

    void forward(const Tensor<T>& x, Tensor<T>& y) {
        const int64_t m = x.dim(0), d = dim();
        y.resize({m, d});
        mean.resize({m});
        rstd.resize({m});
        for (int64_t r = 0; r < m; ++r) {
            const T* xr = x.data() + r * d;
            double mu = 0;
            for (int64_t c = 0; c < d; ++c) mu += xr[c];
            mu /= d;
            double var = 0;
            for (int64_t c = 0; c < d; ++c) {
                double t = xr[c] - mu;
                var += t * t;
            }
            var /= d;
            const double rs = 1.0 / std::sqrt(var + eps);
            mean[r] = static_cast<T>(mu);
            rstd[r] = static_cast<T>(rs);
            T* yr = y.data() + r * d;
            for (int64_t c = 0; c < d; ++c)
                yr[c] = static_cast<T>((xr[c] - mu) * rs * gamma[c] + beta[c]);
        }
    }

    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
        const int64_t m = x.dim(0), d = dim();
        gx.resize({m, d});
        for (int64_t r = 0; r < m; ++r) {
            const T* xr = x.data() + r * d;
            const T* gyr = gy.data() + r * d;
            T* gxr = gx.data() + r * d;
            const double mu = mean[r], rs = rstd[r];
            double sum_g = 0, sum_gx = 0;
            for (int64_t c = 0; c < d; ++c) {
                const double xhat = (xr[c] - mu) * rs;
                const double g = gyr[c] * gamma[c];
                sum_g += g;
                sum_gx += g * xhat;
                ggamma[c] += static_cast<T>(gyr[c] * xhat);
                gbeta[c] += gyr[c];
            }
            sum_g /= d;
            sum_gx /= d;
            for (int64_t c = 0; c < d; ++c) {
                const double xhat = (xr[c] - mu) * rs;
                const double g = gyr[c] * gamma[c];
                gxr[c] = static_cast<T>(rs * (g - sum_g - xhat * sum_gx));
            }
        }
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".gamma", gamma, ggamma);
        fn(prefix + ".beta", beta, gbeta);
    }
};

template <typename T>
inline T gelu_value(T x) {
    const double k = 0.7978845608028654;  // sqrt(2/pi)
    const double xx = static_cast<double>(x);
    return static_cast<T>(0.5 * xx * (1.0 + std::tanh(k * (xx + 0.044715 * xx * xx * xx))));
}

template <typename T>
inline T gelu_grad(T x) {
    const double k = 0.7978845608028654;
    const double xx = static_cast<double>(x);
    const double u = k * (xx + 0.044715 * xx * xx * xx);
    const double t = std::tanh(u);
    const double du = k * (1.0 + 3.0 * 0.044715 * xx * xx);
    return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xx * (1.0 - t * t) * du);
}

template <typename T>
void gelu_forward(const Tensor<T>& x, Tensor<T>& y) {
    y.resize(std::vector<int64_t>(x.shape()));
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = gelu_value(x[i]);
}

template <typename T>
void gelu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.resize(std::vector<int64_t>(x.shape()));
    for (int64_t i = 0; i < x.numel(); ++i) gx[i] = gy[i] * gelu_grad(x[i]);
}

// Multi-head self-attention over a batch of fixed-length token sequences.
template <typename T>
struct MultiHeadAttention {
    int64_t dim = 0, heads = 0, head_dim = 0;
    Linear<T> qkv, proj;

    // caches
    Tensor<T> qkv_out;   // [M, 3*dim]
    Tensor<T> probs;     // [batch, heads, n, n]
    Tensor<T> ctx;       // [M, dim]

    void init(Rng& rng, int64_t d, int64_t n_heads) {
        if (d % n_heads != 0) throw ConfigError("attention dim must divide head count");
        dim = d;
        heads = n_heads;
        head_dim = d / n_heads;
        qkv.init(rng, d, 3 * d);
        proj.init(rng, d, d);
    }

    // x: [batch*n, dim] -> y: [batch*n, dim]
    void forward(const Tensor<T>& x, Tensor<T>& y, int64_t batch, int64_t n) {
        qkv.forward(x, qkv_out);
        probs.resize({batch, heads, n, n});
        ctx.resize({batch * n, dim});
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
        std::vector<T> q(n * head_dim), k(n * head_dim), v(n * head_dim), s(n * n),
            c(n * head_dim);
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t h = 0; h < heads; ++h) {
                gather_heads(b, h, n, q.data(), k.data(), v.data());
                matmul<T>(false, true, n, n, head_dim, scale, q.data(), k.data(), T(0), s.data());
                T* p = probs.data() + ((b * heads + h) * n) * n;
                softmax_rows(s.data(), p, n);
                matmul<T>(false, false, n, head_dim, n, T(1), p, v.data(), T(0), c.data());
                scatter_ctx(b, h, n, c.data());
            }
        }
        proj.forward(ctx, y);
    }

    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx, int64_t batch,
                  int64_t n) {
        Tensor<T> gctx;
        proj.backward(ctx, gy, &gctx);
        Tensor<T> gqkv({batch * n, 3 * dim});
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
        std::vector<T> q(n * head_dim), k(n * head_dim), v(n * head_dim), gc(n * head_dim),
            gp(n * n), gs(n * n), gq(n * head_dim), gk(n * head_dim), gv(n * head_dim);
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t h = 0; h < heads; ++h) {
                gather_heads(b, h, n, q.data(), k.data(), v.data());
                for (int64_t t = 0; t < n; ++t)
                    for (int64_t e = 0; e < head_dim; ++e)
                        gc[t * head_dim + e] = gctx[(b * n + t) * dim + h * head_dim + e];
                const T* p = probs.data() + ((b * heads + h) * n) * n;
                // gP = gC Vt ; gV = Pt gC
                matmul<T>(false, true, n, n, head_dim, T(1), gc.data(), v.data(), T(0), gp.data());
                matmul<T>(true, false, n, head_dim, n, T(1), p, gc.data(), T(0), gv.data());
                softmax_backward_rows(p, gp.data(), gs.data(), n);
                // S = scale * Q Kt : gQ = scale * gS K ; gK = scale * gSt Q
                matmul<T>(false, false, n, head_dim, n, scale, gs.data(), k.data(), T(0),
                          gq.data());
                matmul<T>(true, false, n, head_dim, n, scale, gs.data(), q.data(), T(0),
                          gk.data());
                for (int64_t t = 0; t < n; ++t)
                    for (int64_t e = 0; e < head_dim; ++e) {
                        const int64_t row = (b * n + t) * 3 * dim;
                        const int64_t col = h * head_dim + e;
                        gqkv[row + col] = gq[t * head_dim + e];
                        gqkv[row + dim + col] = gk[t * head_dim + e];
                        gqkv[row + 2 * dim + col] = gv[t * head_dim + e];
                    }
            }
        }
        qkv.backward(x, gqkv, &gx);
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        qkv.visit(prefix + ".qkv", fn);
        proj.visit(prefix + ".proj", fn);
    }

private:
    void gather_heads(int64_t b, int64_t h, int64_t n, T* q, T* k, T* v) const {
        for (int64_t t = 0; t < n; ++t) {
            const int64_t row = (b * n + t) * 3 * dim;
            const int64_t col = h * head_dim;
            for (int64_t e = 0; e < head_dim; ++e) {
                q[t * head_dim + e] = qkv_out[row + col + e];
                k[t * head_dim + e] = qkv_out[row + dim + col + e];
                v[t * head_dim + e] = qkv_out[row + 2 * dim + col + e];
            }
        }
    }

    void scatter_ctx(int64_t b, int64_t h, int64_t n, const T* c) {
        for (int64_t t = 0; t < n; ++t)
            for (int64_t e = 0; e < head_dim; ++e)
                ctx[(b * n + t) * dim + h * head_dim + e] = c[t * head_dim + e];
    }

    static void softmax_rows(const T* s, T* p, int64_t n) {
        for (int64_t r = 0; r < n; ++r) {
            const T* sr = s + r * n;
            T* pr = p + r * n;
            double mx = sr[0];
            for (int64_t c = 1; c < n; ++c) mx = std::max(mx, static_cast<double>(sr[c]));
            double sum = 0;
            for (int64_t c = 0; c < n; ++c) {
                const double e = std::exp(static_cast<double>(sr[c]) - mx);
                pr[c] = static_cast<T>(e);
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int64_t c = 0; c < n; ++c) pr[c] = static_cast<T>(pr[c] * inv);
        }
    }

    static void softmax_backward_rows(const T* p, const T* gp, T* gs, int64_t n) {
        for (int64_t r = 0; r < n; ++r) {
            const T* pr = p + r * n;
            const T* gpr = gp + r * n;
            T* gsr = gs + r * n;
            double dot = 0;
            for (int64_t c = 0; c < n; ++c) dot += static_cast<double>(pr[c]) * gpr[c];
            for (int64_t c = 0; c < n; ++c)
                gsr[c] = static_cast<T>(pr[c] * (gpr[c] - dot));
        }
    }
};

// Post-norm transformer block: LN(x + MHSA(x)) then LN(.. + FFN(..)).
template <typename T>
struct TransformerBlock {
    MultiHeadAttention<T> attn;
    LayerNorm<T> ln1, ln2;
    Linear<T> fc1, fc2;

    // caches
    Tensor<T> attn_out, r1, n1, h1, act, f, r2;

    void init(Rng& rng, int64_t dim, int64_t heads, int64_t mlp_ratio = 4) {
        attn.init(rng, dim, heads);
        ln1.init(dim);
        ln2.init(dim);
        fc1.init(rng, dim, dim * mlp_ratio);
        fc2.init(rng, dim * mlp_ratio, dim);
    }

    void forward(const Tensor<T>& x, Tensor<T>& y, int64_t batch, int64_t n) {
        attn.forward(x, attn_out, batch, n);
        r1.resize(std::vector<int64_t>(x.shape()));
        for (int64_t i = 0; i < x.numel(); ++i) r1[i] = x[i] + attn_out[i];
        ln1.forward(r1, n1);
        fc1.forward(n1, h1);
        gelu_forward(h1, act);
        fc2.forward(act, f);
        r2.resize(std::vector<int64_t>(n1.shape()));
        for (int64_t i = 0; i < n1.numel(); ++i) r2[i] = n1[i] + f[i];
        ln2.forward(r2, y);
    }

    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx, int64_t batch,
                  int64_t n) {
        Tensor<T> gr2, gf, gact, gh1, gn1_ff, gn1, gr1, gattn_in;
        ln2.backward(r2, gy, gr2);
        fc2.backward(act, gr2, &gact);
        gelu_backward(h1, gact, gh1);
        fc1.backward(n1, gh1, &gn1_ff);
        gn1.resize(std::vector<int64_t>(gr2.shape()));
        for (int64_t i = 0; i < gn1.numel(); ++i) gn1[i] = gr2[i] + gn1_ff[i];
        ln1.backward(r1, gn1, gr1);
        attn.backward(x, gr1, gattn_in, batch, n);
        gx.resize(std::vector<int64_t>(gr1.shape()));
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] = gr1[i] + gattn_in[i];
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        attn.visit(prefix + ".attn", fn);
        ln1.visit(prefix + ".ln1", fn);
        fc1.visit(prefix + ".fc1", fn);
        fc2.visit(prefix + ".fc2", fn);
        ln2.visit(prefix + ".ln2", fn);
    }
};

// 2D convolution (stride 1, zero padding) via im2col + GEMM.
template <typename T>
struct Conv2d {
    int64_t in_ch = 0, out_ch = 0, ksize = 0, pad = 0;
    Tensor<T> w, b, gw, gb;  // w: [out_ch, in_ch*k*k]

    void init(Rng& rng, int64_t cin, int64_t cout, int64_t k) {
        in_ch = cin;
        out_ch = cout;
        ksize = k;
        pad = k / 2;
        w.resize({cout, cin * k * k});
        // He-style fan-in scaling for the ReLU stacks.
        const double sigma = std::sqrt(2.0 / static_cast<double>(cin * k * k));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * sigma);
        b.resize({cout});
        gw.resize({cout, cin * k * k});
        gb.resize({cout});
    }

    void im2col(const T* in, int64_t h, int64_t wd, T* col) const {
        const int64_t k = ksize;
        for (int64_t ci = 0; ci < in_ch; ++ci)
            for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                    T* dst = col + ((ci * k + ky) * k + kx) * h * wd;
                    for (int64_t y = 0; y < h; ++y) {
                        const int64_t sy = y + ky - pad;
                        if (sy < 0 || sy >= h) {
                            for (int64_t x = 0; x < wd; ++x) dst[y * wd + x] = T(0);
                            continue;
                        }
                        const T* src = in + (ci * h + sy) * wd;
                        for (int64_t x = 0; x < wd; ++x) {
                            const int64_t sx = x + kx - pad;
                            dst[y * wd + x] = (sx < 0 || sx >= wd) ? T(0) : src[sx];
                        }
                    }
                }
    }

    void col2im(const T* col, int64_t h, int64_t wd, T* in_grad) const {
        const int64_t k = ksize;
        for (int64_t ci = 0; ci < in_ch; ++ci)
            for (int64_t ky = 0; ky < k; ++ky)
                for (int64_t kx = 0; kx < k; ++kx) {
                    const T* src = col + ((ci * k + ky) * k + kx) * h * wd;
                    for (int64_t y = 0; y < h; ++y) {
                        const int64_t sy = y + ky - pad;
                        if (sy < 0 || sy >= h) continue;
                        T* dst = in_grad + (ci * h + sy) * wd;
                        for (int64_t x = 0; x < wd; ++x) {
                            const int64_t sx = x + kx - pad;
                            if (sx >= 0 && sx < wd) dst[sx] += src[y * wd + x];
                        }
                    }
                }
    }

    // x: [B, in_ch, H, W] -> y: [B, out_ch, H, W]; scratch holds per-image col.
    void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>& scratch) const {
        const int64_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
        y.resize({bsz, out_ch, h, wd});
        scratch.resize({in_ch * ksize * ksize, h * wd});
        for (int64_t bi = 0; bi < bsz; ++bi) {
            im2col(x.data() + bi * in_ch * h * wd, h, wd, scratch.data());
            T* out = y.data() + bi * out_ch * h * wd;
            matmul<T>(false, false, out_ch, h * wd, in_ch * ksize * ksize, T(1), w.data(),
                      scratch.data(), T(0), out);
            for (int64_t co = 0; co < out_ch; ++co) {
                T* row = out + co * h * wd;
                for (int64_t i = 0; i < h * wd; ++i) row[i] += b[co];
            }
        }
    }

    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& scratch,
                  Tensor<T>& scratch2) {
        const int64_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
        scratch.resize({in_ch * ksize * ksize, h * wd});
        scratch2.resize({in_ch * ksize * ksize, h * wd});
        if (gx) {
            gx->resize(std::vector<int64_t>(x.shape()));
            gx->zero();
        }
        for (int64_t bi = 0; bi < bsz; ++bi) {
            const T* gout = gy.data() + bi * out_ch * h * wd;
            im2col(x.data() + bi * in_ch * h * wd, h, wd, scratch.data());
            matmul<T>(false, true, out_ch, in_ch * ksize * ksize, h * wd, T(1), gout,
                      scratch.data(), T(1), gw.data());
            for (int64_t co = 0; co < out_ch; ++co) {
                const T* row = gout + co * h * wd;
                double s = 0;
                for (int64_t i = 0; i < h * wd; ++i) s += row[i];
                gb[co] += static_cast<T>(s);
            }
            if (gx) {
                matmul<T>(true, false, in_ch * ksize * ksize, h * wd, out_ch, T(1), w.data(), gout,
                          T(0), scratch2.data());
                col2im(scratch2.data(), h, wd, gx->data() + bi * in_ch * h * wd);
            }
        }
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".w", w, gw);
        fn(prefix + ".b", b, gb);
    }
};

// Transposed convolution with kernel 2, stride 2 (non-overlapping upsample).
template <typename T>
struct ConvTranspose2d {
    int64_t in_ch = 0, out_ch = 0;
    Tensor<T> w, b, gw, gb;  // w: [4, out_ch, in_ch] indexed by (dy*2+dx)

    void init(Rng& rng, int64_t cin, int64_t cout) {
        in_ch = cin;
        out_ch = cout;
        w.resize({4, cout, cin});
        const double sigma = std::sqrt(2.0 / static_cast<double>(cin));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * sigma);
        b.resize({cout});
        gw.resize({4, cout, cin});
        gb.resize({cout});
    }

    // x: [B, in_ch, H, W] -> y: [B, out_ch, 2H, 2W]
    void forward(const Tensor<T>& x, Tensor<T>& y, Tensor<T>& scratch) const {
        const int64_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
        y.resize({bsz, out_ch, 2 * h, 2 * wd});
        scratch.resize({out_ch, h * wd});
        for (int64_t bi = 0; bi < bsz; ++bi) {
            const T* in = x.data() + bi * in_ch * h * wd;
            T* out = y.data() + bi * out_ch * 4 * h * wd;
            for (int64_t s = 0; s < 4; ++s) {
                const int64_t dy = s / 2, dx = s % 2;
                matmul<T>(false, false, out_ch, h * wd, in_ch, T(1), w.data() + s * out_ch * in_ch,
                          in, T(0), scratch.data());
                for (int64_t co = 0; co < out_ch; ++co)
                    for (int64_t yy = 0; yy < h; ++yy)
                        for (int64_t xx = 0; xx < wd; ++xx)
                            out[(co * 2 * h + 2 * yy + dy) * 2 * wd + 2 * xx + dx] =
                                scratch[co * h * wd + yy * wd + xx] + b[co];
            }
        }
    }

    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>* gx, Tensor<T>& scratch) {
        const int64_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
        scratch.resize({out_ch, h * wd});
        if (gx) {
            gx->resize(std::vector<int64_t>(x.shape()));
            gx->zero();
        }
        for (int64_t bi = 0; bi < bsz; ++bi) {
            const T* in = x.data() + bi * in_ch * h * wd;
            const T* gout = gy.data() + bi * out_ch * 4 * h * wd;
            for (int64_t s = 0; s < 4; ++s) {
                const int64_t dy = s / 2, dx = s % 2;
                for (int64_t co = 0; co < out_ch; ++co) {
                    double bsum = 0;
                    for (int64_t yy = 0; yy < h; ++yy)
                        for (int64_t xx = 0; xx < wd; ++xx) {
                            const T g =
                                gout[(co * 2 * h + 2 * yy + dy) * 2 * wd + 2 * xx + dx];
                            scratch[co * h * wd + yy * wd + xx] = g;
                            bsum += g;
                        }
                    gb[co] += static_cast<T>(bsum);
                }
                matmul<T>(false, true, out_ch, in_ch, h * wd, T(1), scratch.data(), in, T(1),
                          gw.data() + s * out_ch * in_ch);
                if (gx)
                    matmul<T>(true, false, in_ch, h * wd, out_ch, T(1),
                              w.data() + s * out_ch * in_ch, scratch.data(), T(1), gx->data() + bi * in_ch * h * wd);
            }
        }
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".w", w, gw);
        fn(prefix + ".b", b, gb);
    }
};

template <typename T>
struct BatchNorm2d {
    int64_t channels = 0;
    Tensor<T> gamma, beta, ggamma, gbeta;
    Tensor<T> running_mean, running_var;
    Tensor<T> mean, rstd;  // batch stats cached for backward
    double momentum = 0.9;  // fraction of the old running stat kept per step
    double eps = 1e-5;

    void init(int64_t ch) {
        channels = ch;
        gamma.resize({ch});
        gamma.fill(T(1));
        beta.resize({ch});
        ggamma.resize({ch});
        gbeta.resize({ch});
        running_mean.resize({ch});
        running_var.resize({ch});
        running_var.fill(T(1));
        mean.resize({ch});
        rstd.resize({ch});
    }

    void forward(const Tensor<T>& x, Tensor<T>& y, bool training) {
        const int64_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const int64_t area = h * wd, m = bsz * area;
        y.resize(std::vector<int64_t>(x.shape()));
        for (int64_t c = 0; c < channels; ++c) {
            double mu, var;
            if (training) {
                double s = 0, s2 = 0;
                for (int64_t bi = 0; bi < bsz; ++bi) {
                    const T* p = x.data() + (bi * channels + c) * area;
                    for (int64_t i = 0; i < area; ++i) {
                        s += p[i];
                        s2 += static_cast<double>(p[i]) * p[i];
                    }
                }
                mu = s / m;
                var = std::max(0.0, s2 / m - mu * mu);
                running_mean[c] = static_cast<T>(momentum * running_mean[c] + (1 - momentum) * mu);
                running_var[c] = static_cast<T>(momentum * running_var[c] + (1 - momentum) * var);
            } else {
                mu = running_mean[c];
                var = running_var[c];
            }
            const double rs = 1.0 / std::sqrt(var + eps);
            mean[c] = static_cast<T>(mu);
            rstd[c] = static_cast<T>(rs);
            const double g = gamma[c], bb = beta[c];
            for (int64_t bi = 0; bi < bsz; ++bi) {
                const T* p = x.data() + (bi * channels + c) * area;
                T* q = y.data() + (bi * channels + c) * area;
                for (int64_t i = 0; i < area; ++i)
                    q[i] = static_cast<T>((p[i] - mu) * rs * g + bb);
            }
        }
    }

    // Training-mode backward (batch statistics participate in the graph).
    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
        const int64_t bsz = x.dim(0), h = x.dim(2), wd = x.dim(3);
        const int64_t area = h * wd, m = bsz * area;
        gx.resize(std::vector<int64_t>(x.shape()));
        for (int64_t c = 0; c < channels; ++c) {
            const double mu = mean[c], rs = rstd[c], g = gamma[c];
            double sum_g = 0, sum_gx = 0;
            for (int64_t bi = 0; bi < bsz; ++bi) {
                const T* xp = x.data() + (bi * channels + c) * area;
                const T* gp = gy.data() + (bi * channels + c) * area;
                for (int64_t i = 0; i < area; ++i) {
                    const double xhat = (xp[i] - mu) * rs;
                    sum_g += gp[i];
                    sum_gx += gp[i] * xhat;
                }
            }
            ggamma[c] += static_cast<T>(sum_gx);
            gbeta[c] += static_cast<T>(sum_g);
            const double mean_g = sum_g / m, mean_gx = sum_gx / m;
            for (int64_t bi = 0; bi < bsz; ++bi) {
                const T* xp = x.data() + (bi * channels + c) * area;
                const T* gp = gy.data() + (bi * channels + c) * area;
                T* op = gx.data() + (bi * channels + c) * area;
                for (int64_t i = 0; i < area; ++i) {
                    const double xhat = (xp[i] - mu) * rs;
                    op[i] = static_cast<T>(g * rs * (gp[i] - mean_g - xhat * mean_gx));
                }
            }
        }
    }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".gamma", gamma, ggamma);
        fn(prefix + ".beta", beta, gbeta);
    }

    // Running stats persist with checkpoints but take no gradient.
    template <typename F>
    void visit_buffers(const std::string& prefix, F&& fn) {
        fn(prefix + ".running_mean", running_mean);
        fn(prefix + ".running_var", running_var);
    }
};

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
    y.resize(std::vector<int64_t>(x.shape()));
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.resize(std::vector<int64_t>(x.shape()));
    for (int64_t i = 0; i < x.numel(); ++i) gx[i] = x[i] > T(0) ? gy[i] : T(0);
}

// 2x2 max pooling with stride 2; argmax positions cached for the backward.
template <typename T>
struct MaxPool2d {
    Tensor<int32_t> argmax;  // index into the 2x2 window (0..3)

    void forward(const Tensor<T>& x, Tensor<T>& y) {
        const int64_t bsz = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const int64_t oh = h / 2, ow = wd / 2;
        y.resize({bsz, ch, oh, ow});
        argmax.resize({bsz, ch, oh, ow});
        for (int64_t bc = 0; bc < bsz * ch; ++bc) {
            const T* in = x.data() + bc * h * wd;
            T* out = y.data() + bc * oh * ow;
            int32_t* am = argmax.data() + bc * oh * ow;
            for (int64_t yy = 0; yy < oh; ++yy)
                for (int64_t xx = 0; xx < ow; ++xx) {
                    int best = 0;
                    T bv = in[(2 * yy) * wd + 2 * xx];
                    const T cands[4] = {bv, in[(2 * yy) * wd + 2 * xx + 1],
                                        in[(2 * yy + 1) * wd + 2 * xx],
                                        in[(2 * yy + 1) * wd + 2 * xx + 1]};
                    for (int s = 1; s < 4; ++s)
                        if (cands[s] > bv) {
                            bv = cands[s];
                            best = s;
                        }
                    out[yy * ow + xx] = bv;
                    am[yy * ow + xx] = best;
                }
        }
    }

    void backward(const Tensor<T>& x, const Tensor<T>& gy, Tensor<T>& gx) {
        const int64_t bsz = x.dim(0), ch = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const int64_t oh = h / 2, ow = wd / 2;
        gx.resize(std::vector<int64_t>(x.shape()));
        gx.zero();
        for (int64_t bc = 0; bc < bsz * ch; ++bc) {
            const T* gout = gy.data() + bc * oh * ow;
            const int32_t* am = argmax.data() + bc * oh * ow;
            T* gin = gx.data() + bc * h * wd;
            for (int64_t yy = 0; yy < oh; ++yy)
                for (int64_t xx = 0; xx < ow; ++xx) {
                    const int s = am[yy * ow + xx];
                    gin[(2 * yy + s / 2) * wd + 2 * xx + s % 2] += gout[yy * ow + xx];
                }
        }
    }
};

template <typename T>
void sigmoid_forward(const Tensor<T>& x, Tensor<T>& y) {
    y.resize(std::vector<int64_t>(x.shape()));
    for (int64_t i = 0; i < x.numel(); ++i)
        y[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
}

// gx from the cached *output* y.
template <typename T>
void sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy, Tensor<T>& gx) {
    gx.resize(std::vector<int64_t>(y.shape()));
    for (int64_t i = 0; i < y.numel(); ++i) gx[i] = gy[i] * y[i] * (T(1) - y[i]);
}

}  // namespace zw::nn
