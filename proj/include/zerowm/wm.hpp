#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zerowm/image.hpp"
#include "zerowm/losses.hpp"
#include "zerowm/nn/nets.hpp"
#include "zerowm/tensor.hpp"

namespace zw {

constexpr int64_t kPooledDim = kImageChannels * kNumPatches;  // 192

struct WatermarkMessage {
    std::vector<uint8_t> bits;  // each 0 or 1

    int64_t length() const { return static_cast<int64_t>(bits.size()); }
    void validate() const;
    std::string to_string() const;  // "0101..."
    std::string to_hex() const;     // MSB-first, zero-padded to whole bytes
    static WatermarkMessage from_hex(const std::string& hex, int64_t k);
    static WatermarkMessage from_string(const std::string& s);
    static WatermarkMessage random(int64_t k, uint64_t seed);
    // SHA-256 over the '0'/'1' string; stored instead of the plaintext bits.
    std::string digest() const;
};

// Pooling-then-linear projection Psi. The 128x128x3 feature is averaged per
// 16x16 tile (8x8 grid x 3 channels = 192 values), then linearly mapped to d.
template <typename T>
struct PsiParams {
    Tensor<T> w;  // [d, 192]
    Tensor<T> b;  // [d]

    void init(int64_t d, Rng& rng) {
        w.resize({d, kPooledDim});
        const double sigma = 1.0 / std::sqrt(static_cast<double>(kPooledDim));
        for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal() * sigma);
        b.resize({d});
    }
    int64_t d() const { return w.dim(0); }
};

// Tile-average pooling; index layout c*64 + ti*8 + tj.
template <typename T>
Tensor<T> tile_pool(const Tensor<T>& feat) {
    if (feat.rank() != 3 || feat.dim(0) != kImageChannels || feat.dim(1) != kImageSize ||
        feat.dim(2) != kImageSize)
        throw PreconditionError("tile_pool expects a 3x128x128 feature");
    Tensor<T> pooled({kPooledDim});
    const double inv = 1.0 / static_cast<double>(kPatchSize * kPatchSize);
    for (int64_t c = 0; c < kImageChannels; ++c)
        for (int64_t ti = 0; ti < kPatchGrid; ++ti)
            for (int64_t tj = 0; tj < kPatchGrid; ++tj) {
                double acc = 0;
                for (int64_t py = 0; py < kPatchSize; ++py)
                    for (int64_t px = 0; px < kPatchSize; ++px)
                        acc += feat[(c * kImageSize + ti * kPatchSize + py) * kImageSize +
                                    tj * kPatchSize + px];
                pooled[c * kNumPatches + ti * kPatchGrid + tj] = static_cast<T>(acc * inv);
            }
    return pooled;
}

template <typename T>
Tensor<T> project_pooled(const Tensor<T>& pooled, const PsiParams<T>& psi) {
    const int64_t d = psi.d();
    Tensor<T> out({d});
    for (int64_t i = 0; i < d; ++i) {
        double acc = psi.b[i];
        const T* row = psi.w.data() + i * kPooledDim;
        for (int64_t j = 0; j < kPooledDim; ++j) acc += static_cast<double>(row[j]) * pooled[j];
        out[i] = static_cast<T>(acc);
    }
    return out;
}

template <typename T>
Tensor<T> project(const Tensor<T>& feat, const PsiParams<T>& psi) {
    return project_pooled(tile_pool(feat), psi);
}

template <typename T>
Tensor<T> bit_logits(const Tensor<T>& f, const Tensor<T>& c_mat) {
    if (c_mat.rank() != 2 || c_mat.dim(1) != f.numel())
        throw PreconditionError("signature matrix shape mismatch");
    const int64_t k = c_mat.dim(0), d = c_mat.dim(1);
    Tensor<T> logits({k});
    for (int64_t i = 0; i < k; ++i) {
        double acc = 0;
        const T* row = c_mat.data() + i * d;
        for (int64_t j = 0; j < d; ++j) acc += static_cast<double>(row[j]) * f[j];
        logits[i] = static_cast<T>(acc);
    }
    return logits;
}

// sigma(F~ . C_i) for each bit.
template <typename T>
Tensor<T> predict_bits(const Tensor<T>& f, const Tensor<T>& c_mat) {
    Tensor<T> probs = bit_logits(f, c_mat);
    for (int64_t i = 0; i < probs.numel(); ++i)
        probs[i] = static_cast<T>(sigmoid(static_cast<double>(probs[i])));
    return probs;
}

struct ReferenceSignature {
    Tensor<float> c;  // [k, d]
    PsiParams<float> psi;
    int64_t k = 0;
    int64_t d = 0;
    uint64_t creation_seed = 0;
};

struct SignatureRecord {
    std::string record_id;
    ReferenceSignature signature;
    std::string watermark_digest;
    std::string extractor_checkpoint_id;
    std::string created_at;
};

struct RegisterOptions {
    int64_t d = 256;
    int64_t max_epochs = 50;
    double lr = 1e-2;
    double lambda_c = 1e-4;
    double margin = 2.0;  // logit margin required by the early stop
    bool early_stop = true;
    bool throw_on_failure = true;
    uint64_t seed = 0;
};

struct RegistrationResult {
    SignatureRecord record;
    std::vector<double> loss_curve;  // L_W at the start of each epoch
    double final_accuracy = 0.0;
    int64_t epochs_run = 0;
    double final_margin = 0.0;
};

// Optimizes (C, Psi) for one image-watermark pair against a frozen feature
// extractor; the image itself is neither modified nor stored.
RegistrationResult register_signature(const Image& image, const WatermarkMessage& watermark,
                                      nn::FeatureExtractor<float>& fe,
                                      const std::string& checkpoint_id,
                                      const RegisterOptions& opts);

// Thresholded multibit extraction; per-bit probabilities optionally returned.
WatermarkMessage extract_bits(const Image& image, const SignatureRecord& record,
                              nn::FeatureExtractor<float>& fe, const std::string& checkpoint_id,
                              std::vector<double>* probs_out = nullptr);

}  // namespace zw
