#include "zerowm/wm.hpp"

#include <algorithm>
#include <cmath>

#include "zerowm/errors.hpp"
#include "zerowm/nn/adam.hpp"
#include "zerowm/nn/checkpoint.hpp"

namespace zw {
namespace {

// Thin adapter so the signature parameters ride the shared optimizer.
struct SignatureNet {
    Tensor<float> c, gc;
    PsiParams<float> psi;
    Tensor<float> gw, gb;

    void visit(const nn::ParamVisitor<float>& fn) {
        fn("sig.c", c, gc);
        fn("sig.psi.w", psi.w, gw);
        fn("sig.psi.b", psi.b, gb);
    }
};

Tensor<float> fe_feature(nn::FeatureExtractor<float>& fe, const Image& image) {
    Tensor<float> batch({1, kImageChannels, kImageSize, kImageSize});
    std::copy(image.data(), image.data() + image.numel(), batch.data());
    Tensor<float> feat;
    fe.forward(batch, feat);
    feat.reshape({kImageChannels, kImageSize, kImageSize});
    return feat;
}

}  // namespace

void WatermarkMessage::validate() const {
    if (bits.empty()) throw ParameterError("watermark must have at least one bit");
    for (uint8_t b : bits)
        if (b > 1) throw ParameterError("watermark bits must be 0 or 1");
}

std::string WatermarkMessage::to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (uint8_t b : bits) s.push_back(b ? '1' : '0');
    return s;
}

std::string WatermarkMessage::to_hex() const {
    validate();
    static const char* k = "0123456789abcdef";
    std::string out;
    const int64_t nbytes = (length() + 7) / 8;
    for (int64_t byte = 0; byte < nbytes; ++byte) {
        int v = 0;
        for (int64_t i = 0; i < 8; ++i) {
            const int64_t idx = byte * 8 + i;
            v = (v << 1) | (idx < length() ? bits[idx] : 0);
        }
        out.push_back(k[v >> 4]);
        out.push_back(k[v & 15]);
    }
    return out;
}

WatermarkMessage WatermarkMessage::from_hex(const std::string& hex, int64_t k) {
    if (k < 1) throw ParameterError("watermark length must be >= 1");
    if (static_cast<int64_t>(hex.size()) * 4 < k)
        throw ParameterError("hex string too short for " + std::to_string(k) + " bits");
    WatermarkMessage wm;
    wm.bits.resize(k);
    for (int64_t i = 0; i < k; ++i) {
        const char c = hex[i / 4];
        int v;
        if (c >= '0' && c <= '9')
            v = c - '0';
        else if (c >= 'a' && c <= 'f')
            v = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F')
            v = c - 'A' + 10;
        else
            throw ParameterError("invalid hex character in watermark");
        wm.bits[i] = static_cast<uint8_t>((v >> (3 - i % 4)) & 1);
    }
    return wm;
}

WatermarkMessage WatermarkMessage::from_string(const std::string& s) {
    WatermarkMessage wm;
    for (char c : s) {
        if (c == '0')
            wm.bits.push_back(0);
        else if (c == '1')
            wm.bits.push_back(1);
        else if (!std::isspace(static_cast<unsigned char>(c)))
            throw ParameterError("watermark string must contain only 0/1");
    }
    wm.validate();
    return wm;
}

WatermarkMessage WatermarkMessage::random(int64_t k, uint64_t seed) {
    if (k < 1) throw ParameterError("watermark length must be >= 1");
    WatermarkMessage wm;
    wm.bits.resize(k);
    Rng rng(hash_combine(seed, 0xb175ULL));
    for (auto& b : wm.bits) b = rng.bernoulli(0.5) ? 1 : 0;
    return wm;
}

std::string WatermarkMessage::digest() const {
    const std::string s = to_string();
    return nn::sha256_hex(s.data(), s.size());
}

RegistrationResult register_signature(const Image& image, const WatermarkMessage& watermark,
                                      nn::FeatureExtractor<float>& fe,
                                      const std::string& checkpoint_id,
                                      const RegisterOptions& opts) {
    watermark.validate();
    validate_image(image);
    if (opts.d < 1 || opts.max_epochs < 1) throw ParameterError("invalid registration options");
    const int64_t k = watermark.length();
    const int64_t d = opts.d;

    // FE stays frozen: one forward, the pooled vector is a constant below.
    const Tensor<float> feat = fe_feature(fe, image);
    const Tensor<float> pooled = tile_pool(feat);

    SignatureNet net;
    Rng rng(hash_combine(opts.seed, 0x516ULL));
    net.c.resize({k, d});
    const double c_sigma = 1.0 / std::sqrt(static_cast<double>(d));
    for (int64_t i = 0; i < net.c.numel(); ++i)
        net.c[i] = static_cast<float>(rng.normal() * c_sigma);
    net.psi.init(d, rng);
    net.gc.resize({k, d});
    net.gw.resize({d, kPooledDim});
    net.gb.resize({d});

    nn::Adam<float> opt;
    opt.attach(net, opts.lr);

    RegistrationResult result;
    result.loss_curve.reserve(opts.max_epochs);

    Tensor<float> f_proj, logits;
    std::vector<double> dlogit(k);
    auto evaluate = [&](double* loss_out, double* acc_out, double* margin_out) {
        f_proj = project_pooled(pooled, net.psi);
        logits = bit_logits(f_proj, net.c);
        double loss = 0, margin = 1e30;
        int64_t correct = 0;
        for (int64_t i = 0; i < k; ++i) {
            const double z = logits[i];
            const double p = clamp_prob(sigmoid(z));
            loss -= watermark.bits[i] ? std::log(p) : std::log(1.0 - p);
            dlogit[i] = sigmoid(z) - static_cast<double>(watermark.bits[i]);
            margin = std::min(margin, std::fabs(z));
            if ((z >= 0.0) == (watermark.bits[i] != 0)) ++correct;
        }
        if (loss_out) *loss_out = loss;
        if (acc_out) *acc_out = static_cast<double>(correct) / k;
        if (margin_out) *margin_out = margin;
    };

    double loss = 0, acc = 0, margin = 0;
    for (int64_t epoch = 0; epoch < opts.max_epochs; ++epoch) {
        evaluate(&loss, &acc, &margin);
        result.loss_curve.push_back(loss);
        result.epochs_run = epoch + 1;
        if (opts.early_stop && acc == 1.0 && margin >= opts.margin) break;

        // Gradients of L_W + lambda_c * ||C||^2.
        opt.zero_grad();
        for (int64_t i = 0; i < k; ++i) {
            const float g = static_cast<float>(dlogit[i]);
            const float* crow = net.c.data() + i * d;
            float* gcrow = net.gc.data() + i * d;
            for (int64_t j = 0; j < d; ++j) {
                gcrow[j] += g * f_proj[j] + static_cast<float>(2.0 * opts.lambda_c) * crow[j];
            }
        }
        // gf = sum_i dlogit_i * C_i ; then through Psi.
        std::vector<double> gf(d, 0.0);
        for (int64_t i = 0; i < k; ++i) {
            const double g = dlogit[i];
            const float* crow = net.c.data() + i * d;
            for (int64_t j = 0; j < d; ++j) gf[j] += g * crow[j];
        }
        for (int64_t j = 0; j < d; ++j) {
            const float gfj = static_cast<float>(gf[j]);
            net.gb[j] += gfj;
            float* gwrow = net.gw.data() + j * kPooledDim;
            for (int64_t t = 0; t < kPooledDim; ++t) gwrow[t] += gfj * pooled[t];
        }
        opt.step();
    }
    evaluate(&loss, &acc, &margin);
    result.final_accuracy = acc;
    result.final_margin = margin;

    SignatureRecord rec;
    rec.signature.c = net.c;
    rec.signature.psi = net.psi;
    rec.signature.k = k;
    rec.signature.d = d;
    rec.signature.creation_seed = opts.seed;
    rec.watermark_digest = watermark.digest();
    rec.extractor_checkpoint_id = checkpoint_id;
    {
        // Deterministic content-derived id.
        std::string blob = checkpoint_id + rec.watermark_digest + std::to_string(opts.seed);
        blob.append(reinterpret_cast<const char*>(pooled.data()), pooled.numel() * 4);
        rec.record_id = nn::sha256_hex(blob.data(), blob.size()).substr(0, 16);
    }
    result.record = std::move(rec);

    if (acc < 1.0 && opts.throw_on_failure)
        throw RegistrationError("registration did not reach 100% clean-bit accuracy (reached " +
                                    std::to_string(acc) + ")",
                                acc);
    return result;
}

WatermarkMessage extract_bits(const Image& image, const SignatureRecord& record,
                              nn::FeatureExtractor<float>& fe, const std::string& checkpoint_id,
                              std::vector<double>* probs_out) {
    validate_image(image);
    if (record.extractor_checkpoint_id != checkpoint_id)
        throw IntegrityError("record was created under extractor " +
                             record.extractor_checkpoint_id + " but checkpoint " + checkpoint_id +
                             " was supplied");
    const Tensor<float> feat = fe_feature(fe, image);
    const Tensor<float> f_proj = project(feat, record.signature.psi);
    const Tensor<float> logits = bit_logits(f_proj, record.signature.c);
    WatermarkMessage out;
    out.bits.resize(record.signature.k);
    if (probs_out) probs_out->resize(record.signature.k);
    for (int64_t i = 0; i < record.signature.k; ++i) {
        const double p = sigmoid(logits[i]);
        out.bits[i] = p >= 0.5 ? 1 : 0;
        if (probs_out) (*probs_out)[i] = p;
    }
    return out;
}

}  // namespace zw
