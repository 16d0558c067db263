#pragma once

#include <string>
#include <vector>

#include "zerowm/image.hpp"
#include "zerowm/nn/layers.hpp"

namespace zw::nn {

// Patch raster order: row-major over the 8x8 grid; within a patch the
// elements are laid out channel-major (c, py, px). Shared by the feature
// extractor, the discriminator and the pooling in the watermark projection.
template <typename T>
void patchify(const Tensor<T>& images, Tensor<T>& rows) {
    if (images.rank() != 4 || images.dim(1) != kImageChannels || images.dim(2) != kImageSize ||
        images.dim(3) != kImageSize)
        throw PreconditionError("patchify expects [B,3,128,128] tensors");
    const int64_t bsz = images.dim(0);
    rows.resize({bsz * kNumPatches, kPatchDim});
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ti = 0; ti < kPatchGrid; ++ti)
            for (int64_t tj = 0; tj < kPatchGrid; ++tj) {
                T* dst = rows.data() + (b * kNumPatches + ti * kPatchGrid + tj) * kPatchDim;
                for (int64_t c = 0; c < kImageChannels; ++c)
                    for (int64_t py = 0; py < kPatchSize; ++py)
                        for (int64_t px = 0; px < kPatchSize; ++px)
                            dst[(c * kPatchSize + py) * kPatchSize + px] =
                                images[((b * kImageChannels + c) * kImageSize + ti * kPatchSize +
                                        py) *
                                           kImageSize +
                                       tj * kPatchSize + px];
            }
}

template <typename T>
void unpatchify(const Tensor<T>& rows, int64_t bsz, Tensor<T>& images) {
    images.resize({bsz, kImageChannels, kImageSize, kImageSize});
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ti = 0; ti < kPatchGrid; ++ti)
            for (int64_t tj = 0; tj < kPatchGrid; ++tj) {
                const T* src = rows.data() + (b * kNumPatches + ti * kPatchGrid + tj) * kPatchDim;
                for (int64_t c = 0; c < kImageChannels; ++c)
                    for (int64_t py = 0; py < kPatchSize; ++py)
                        for (int64_t px = 0; px < kPatchSize; ++px)
                            images[((b * kImageChannels + c) * kImageSize + ti * kPatchSize + py) *
                                       kImageSize +
                                   tj * kPatchSize + px] =
                                src[(c * kPatchSize + py) * kPatchSize + px];
            }
}

struct FeatureExtractorConfig {
    int64_t d_model = 192;
    int64_t heads = 6;
    int64_t depth = 12;
    int64_t mlp_ratio = 4;
};

// ViT encoder producing a 128x128x3 spatial feature tensor from patch tokens.
template <typename T>
struct FeatureExtractor {
    FeatureExtractorConfig cfg;
    Linear<T> patch_embed;  // 768 -> d
    Tensor<T> pos, gpos;    // [64, d]
    std::vector<TransformerBlock<T>> blocks;
    Linear<T> spatial;  // d -> 768

    // forward caches
    Tensor<T> patches;             // [B*64, 768]
    std::vector<Tensor<T>> xs;     // xs[0] = embedded tokens, xs[i+1] = block i output
    Tensor<T> spatial_rows;        // [B*64, 768]
    int64_t batch = 0;

    void init(const FeatureExtractorConfig& config, uint64_t seed) {
        cfg = config;
        Rng rng(hash_combine(seed, 0xfe));
        patch_embed.init(rng, kPatchDim, cfg.d_model);
        pos.resize({kNumPatches, cfg.d_model});
        pos.fill_truncated_normal(rng, 0.02);
        gpos.resize({kNumPatches, cfg.d_model});
        blocks.resize(cfg.depth);
        for (auto& blk : blocks) blk.init(rng, cfg.d_model, cfg.heads, cfg.mlp_ratio);
        spatial.init(rng, cfg.d_model, kPatchDim);
        xs.resize(cfg.depth + 1);
    }

    // images: [B,3,128,128] -> feat: [B,3,128,128]
    void forward(const Tensor<T>& images, Tensor<T>& feat) {
        batch = images.dim(0);
        patchify(images, patches);
        patch_embed.forward(patches, xs[0]);
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t t = 0; t < kNumPatches; ++t)
                for (int64_t c = 0; c < cfg.d_model; ++c)
                    xs[0][(b * kNumPatches + t) * cfg.d_model + c] += pos[t * cfg.d_model + c];
        for (int64_t l = 0; l < cfg.depth; ++l) {
            blocks[l].forward(xs[l], xs[l + 1], batch, kNumPatches);
            if (!xs[l + 1].all_finite())
                throw NumericalError("feature extractor block " + std::to_string(l) +
                                     " produced non-finite activations");
        }
        spatial.forward(xs[cfg.depth], spatial_rows);
        unpatchify(spatial_rows, batch, feat);
    }

    // Final-layer patch tokens from the last forward: [B*64, d].
    const Tensor<T>& tokens() const { return xs[cfg.depth]; }

    void backward(const Tensor<T>& gfeat) {
        Tensor<T> grows, gtok, gprev;
        patchify(gfeat, grows);
        spatial.backward(xs[cfg.depth], grows, &gtok);
        for (int64_t l = cfg.depth - 1; l >= 0; --l) {
            blocks[l].backward(xs[l], gtok, gprev, batch, kNumPatches);
            std::swap(gtok, gprev);
        }
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t t = 0; t < kNumPatches; ++t)
                for (int64_t c = 0; c < cfg.d_model; ++c)
                    gpos[t * cfg.d_model + c] += gtok[(b * kNumPatches + t) * cfg.d_model + c];
        patch_embed.backward(patches, gtok, nullptr);
    }

    void visit(const ParamVisitor<T>& fn) {
        patch_embed.visit("fe.patch_embed", fn);
        fn("fe.pos", pos, gpos);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit("fe.block" + std::to_string(i), fn);
        spatial.visit("fe.spatial", fn);
    }

    template <typename F>
    void visit_buffers(F&&) {}

    int64_t param_count() {
        int64_t n = 0;
        visit([&n](const std::string&, Tensor<T>& p, Tensor<T>&) { n += p.numel(); });
        return n;
    }
};

struct DiscriminatorConfig {
    int64_t dim = 64;
    int64_t heads = 4;
    int64_t depth = 8;
    int64_t mlp_ratio = 4;
};

// ViT over the spatial feature tensor with a classification token; a single
// logit says "came from an undistorted image".
template <typename T>
struct Discriminator {
    DiscriminatorConfig cfg;
    Linear<T> embed;      // 768 -> dim
    Tensor<T> cls, gcls;  // [dim]
    Tensor<T> pos, gpos;  // [65, dim]
    std::vector<TransformerBlock<T>> blocks;
    Linear<T> head;  // dim -> 1

    static constexpr int64_t kSeq = kNumPatches + 1;

    // caches
    Tensor<T> patches, emb, cls_rows;
    std::vector<Tensor<T>> xs;
    int64_t batch = 0;

    void init(const DiscriminatorConfig& config, uint64_t seed) {
        cfg = config;
        Rng rng(hash_combine(seed, 0xd1));
        embed.init(rng, kPatchDim, cfg.dim);
        cls.resize({cfg.dim});
        cls.fill_truncated_normal(rng, 0.02);
        gcls.resize({cfg.dim});
        pos.resize({kSeq, cfg.dim});
        pos.fill_truncated_normal(rng, 0.02);
        gpos.resize({kSeq, cfg.dim});
        blocks.resize(cfg.depth);
        for (auto& blk : blocks) blk.init(rng, cfg.dim, cfg.heads, cfg.mlp_ratio);
        head.init(rng, cfg.dim, 1);
        xs.resize(cfg.depth + 1);
    }

    // feat: [B,3,128,128] -> logits: [B]
    void forward(const Tensor<T>& feat, Tensor<T>& logits) {
        batch = feat.dim(0);
        patchify(feat, patches);
        embed.forward(patches, emb);
        xs[0].resize({batch * kSeq, cfg.dim});
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t c = 0; c < cfg.dim; ++c)
                xs[0][(b * kSeq) * cfg.dim + c] = cls[c] + pos[c];
            for (int64_t t = 0; t < kNumPatches; ++t)
                for (int64_t c = 0; c < cfg.dim; ++c)
                    xs[0][(b * kSeq + 1 + t) * cfg.dim + c] =
                        emb[(b * kNumPatches + t) * cfg.dim + c] + pos[(1 + t) * cfg.dim + c];
        }
        for (int64_t l = 0; l < cfg.depth; ++l)
            blocks[l].forward(xs[l], xs[l + 1], batch, kSeq);
        cls_rows.resize({batch, cfg.dim});
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t c = 0; c < cfg.dim; ++c)
                cls_rows[b * cfg.dim + c] = xs[cfg.depth][(b * kSeq) * cfg.dim + c];
        Tensor<T> out;
        head.forward(cls_rows, out);
        logits.resize({batch});
        for (int64_t b = 0; b < batch; ++b) {
            logits[b] = out[b];
            if (!std::isfinite(static_cast<double>(logits[b])))
                throw NumericalError("discriminator produced a non-finite logit");
        }
    }

    // glogits: [B]; gfeat optional input gradient.
    void backward(const Tensor<T>& glogits, Tensor<T>* gfeat) {
        Tensor<T> gout({batch, 1});
        for (int64_t b = 0; b < batch; ++b) gout[b] = glogits[b];
        Tensor<T> gcls_rows;
        head.backward(cls_rows, gout, &gcls_rows);
        Tensor<T> gtok({batch * kSeq, cfg.dim});
        gtok.zero();
        for (int64_t b = 0; b < batch; ++b)
            for (int64_t c = 0; c < cfg.dim; ++c)
                gtok[(b * kSeq) * cfg.dim + c] = gcls_rows[b * cfg.dim + c];
        Tensor<T> gprev;
        for (int64_t l = cfg.depth - 1; l >= 0; --l) {
            blocks[l].backward(xs[l], gtok, gprev, batch, kSeq);
            std::swap(gtok, gprev);
        }
        Tensor<T> gemb({batch * kNumPatches, cfg.dim});
        for (int64_t b = 0; b < batch; ++b) {
            for (int64_t c = 0; c < cfg.dim; ++c) {
                gcls[c] += gtok[(b * kSeq) * cfg.dim + c];
                gpos[c] += gtok[(b * kSeq) * cfg.dim + c];
            }
            for (int64_t t = 0; t < kNumPatches; ++t)
                for (int64_t c = 0; c < cfg.dim; ++c) {
                    const T g = gtok[(b * kSeq + 1 + t) * cfg.dim + c];
                    gpos[(1 + t) * cfg.dim + c] += g;
                    gemb[(b * kNumPatches + t) * cfg.dim + c] = g;
                }
        }
        if (gfeat) {
            Tensor<T> gpatch;
            embed.backward(patches, gemb, &gpatch);
            unpatchify(gpatch, batch, *gfeat);
        } else {
            embed.backward(patches, gemb, nullptr);
        }
    }

    void visit(const ParamVisitor<T>& fn) {
        embed.visit("disc.embed", fn);
        fn("disc.cls", cls, gcls);
        fn("disc.pos", pos, gpos);
        for (size_t i = 0; i < blocks.size(); ++i)
            blocks[i].visit("disc.block" + std::to_string(i), fn);
        head.visit("disc.head", fn);
    }

    template <typename F>
    void visit_buffers(F&&) {}

    int64_t param_count() {
        int64_t n = 0;
        visit([&n](const std::string&, Tensor<T>& p, Tensor<T>&) { n += p.numel(); });
        return n;
    }
};

struct ReconstructorConfig {
    std::vector<int64_t> encoder_channels = {64, 128, 256, 512};
    int64_t bottleneck = 512;
};

// Convolutional encoder-decoder: four conv+BN+ReLU+maxpool stages
// (128 -> 8), a bottleneck block at 8x8, then a mirrored transposed-conv
// decoder ending in a sigmoid.
template <typename T>
struct Reconstructor {
    ReconstructorConfig cfg;
    std::vector<Conv2d<T>> enc_convs;  // 4 stage convs + bottleneck conv
    std::vector<BatchNorm2d<T>> enc_bns;
    std::vector<MaxPool2d<T>> pools;
    Conv2d<T> dec_conv;  // bottleneck -> c4 at 8x8
    BatchNorm2d<T> dec_bn;
    std::vector<ConvTranspose2d<T>> ups;  // c4->c3->c2->c1->c1
    std::vector<BatchNorm2d<T>> up_bns;
    Conv2d<T> out_conv;  // c1 -> 3

    // caches
    std::vector<Tensor<T>> enc_in, enc_conv_out, enc_bn_out, enc_relu_out;
    Tensor<T> dec_conv_out, dec_bn_out, dec_relu_out;
    std::vector<Tensor<T>> up_in, up_out, up_bn_out, up_relu_out;
    Tensor<T> out_logits, recon_cache;
    Tensor<T> scratch_a, scratch_b, scratch_c;
    bool training_mode = true;

    void init(const ReconstructorConfig& config, uint64_t seed) {
        cfg = config;
        if (cfg.encoder_channels.size() != 4)
            throw ConfigError("reconstructor expects four encoder stages (128 -> 8)");
        Rng rng(hash_combine(seed, 0x5ec));
        const auto& ch = cfg.encoder_channels;
        enc_convs.resize(5);
        enc_bns.resize(5);
        pools.resize(4);
        int64_t prev = kImageChannels;
        for (int i = 0; i < 4; ++i) {
            enc_convs[i].init(rng, prev, ch[i], 3);
            enc_bns[i].init(ch[i]);
            prev = ch[i];
        }
        enc_convs[4].init(rng, prev, cfg.bottleneck, 3);
        enc_bns[4].init(cfg.bottleneck);
        dec_conv.init(rng, cfg.bottleneck, ch[3], 3);
        dec_bn.init(ch[3]);
        ups.resize(4);
        up_bns.resize(4);
        const int64_t up_out_ch[4] = {ch[2], ch[1], ch[0], ch[0]};
        prev = ch[3];
        for (int i = 0; i < 4; ++i) {
            ups[i].init(rng, prev, up_out_ch[i]);
            up_bns[i].init(up_out_ch[i]);
            prev = up_out_ch[i];
        }
        out_conv.init(rng, ch[0], kImageChannels, 3);
        enc_in.resize(5);
        enc_conv_out.resize(5);
        enc_bn_out.resize(5);
        enc_relu_out.resize(5);
        up_in.resize(4);
        up_out.resize(4);
        up_bn_out.resize(4);
        up_relu_out.resize(4);
    }

    // feat: [B,3,128,128] -> recon: [B,3,128,128], values strictly in (0,1)
    void forward(const Tensor<T>& feat, Tensor<T>& recon, bool training) {
        training_mode = training;
        enc_in[0] = feat;
        for (int i = 0; i < 5; ++i) {
            enc_convs[i].forward(enc_in[i], enc_conv_out[i], scratch_a);
            enc_bns[i].forward(enc_conv_out[i], enc_bn_out[i], training);
            relu_forward(enc_bn_out[i], enc_relu_out[i]);
            if (i < 4) pools[i].forward(enc_relu_out[i], enc_in[i + 1]);
        }
        dec_conv.forward(enc_relu_out[4], dec_conv_out, scratch_a);
        dec_bn.forward(dec_conv_out, dec_bn_out, training);
        relu_forward(dec_bn_out, dec_relu_out);
        up_in[0] = dec_relu_out;
        for (int i = 0; i < 4; ++i) {
            ups[i].forward(up_in[i], up_out[i], scratch_a);
            up_bns[i].forward(up_out[i], up_bn_out[i], training);
            relu_forward(up_bn_out[i], up_relu_out[i]);
            if (i < 3) up_in[i + 1] = up_relu_out[i];
        }
        out_conv.forward(up_relu_out[3], out_logits, scratch_a);
        sigmoid_forward(out_logits, recon);
        // Keep the reported image strictly inside (0,1) even at float precision.
        for (int64_t i = 0; i < recon.numel(); ++i)
            recon[i] = std::min(std::max(recon[i], T(1e-7)), T(1) - T(1e-7));
        recon_cache = recon;
    }

    // [B, bottleneck, 8, 8] activation from the last forward.
    const Tensor<T>& bottleneck_activation() const { return enc_relu_out[4]; }

    void backward(const Tensor<T>& grecon, Tensor<T>* gfeat) {
        if (!training_mode) throw ConfigError("reconstructor backward requires training mode");
        Tensor<T> g, g2;
        sigmoid_backward(recon_cache, grecon, g);
        out_conv.backward(up_relu_out[3], g, &g2, scratch_a, scratch_b);
        // g2 now holds the gradient at up_relu_out[3].
        for (int i = 3; i >= 0; --i) {
            relu_backward(up_bn_out[i], g2, g);
            up_bns[i].backward(up_out[i], g, g2);
            ups[i].backward(up_in[i], g2, &g, scratch_a);
            std::swap(g2, g);  // g2: gradient at up_in[i] (== up_relu_out[i-1])
        }
        // g2 holds the gradient at dec_relu_out.
        relu_backward(dec_bn_out, g2, g);
        dec_bn.backward(dec_conv_out, g, g2);
        dec_conv.backward(enc_relu_out[4], g2, &g, scratch_a, scratch_b);
        // g holds the gradient at enc_relu_out[4].
        for (int i = 4; i >= 0; --i) {
            relu_backward(enc_bn_out[i], g, g2);
            enc_bns[i].backward(enc_conv_out[i], g2, g);
            const bool need_input = (i > 0) || (gfeat != nullptr);
            enc_convs[i].backward(enc_in[i], g, need_input ? &g2 : nullptr, scratch_a, scratch_b);
            if (i > 0) {
                pools[i - 1].backward(enc_relu_out[i - 1], g2, g);
            } else if (gfeat) {
                *gfeat = g2;
            }
        }
    }

    void visit(const ParamVisitor<T>& fn) {
        for (int i = 0; i < 5; ++i) {
            enc_convs[i].visit("rec.enc" + std::to_string(i) + ".conv", fn);
            enc_bns[i].visit("rec.enc" + std::to_string(i) + ".bn", fn);
        }
        dec_conv.visit("rec.dec.conv", fn);
        dec_bn.visit("rec.dec.bn", fn);
        for (int i = 0; i < 4; ++i) {
            ups[i].visit("rec.up" + std::to_string(i) + ".convt", fn);
            up_bns[i].visit("rec.up" + std::to_string(i) + ".bn", fn);
        }
        out_conv.visit("rec.out.conv", fn);
    }

    template <typename F>
    void visit_buffers(F&& fn) {
        for (int i = 0; i < 5; ++i)
            enc_bns[i].visit_buffers("rec.enc" + std::to_string(i) + ".bn", fn);
        dec_bn.visit_buffers("rec.dec.bn", fn);
        for (int i = 0; i < 4; ++i)
            up_bns[i].visit_buffers("rec.up" + std::to_string(i) + ".bn", fn);
    }

    int64_t param_count() {
        int64_t n = 0;
        visit([&n](const std::string&, Tensor<T>& p, Tensor<T>&) { n += p.numel(); });
        return n;
    }
};

}  // namespace zw::nn
