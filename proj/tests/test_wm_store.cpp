#include "doctest.h"

#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <fstream>

#include "zerowm/distort.hpp"
#include "zerowm/errors.hpp"
#include "zerowm/metrics.hpp"
#include "zerowm/nn/checkpoint.hpp"
#include "zerowm/store.hpp"
#include "zerowm/synth.hpp"
#include "zerowm/wm.hpp"

namespace fs = std::filesystem;
using namespace zw;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("zerowm_test_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

nn::FeatureExtractor<float>& shared_fe() {
    static nn::FeatureExtractor<float>* fe = [] {
        auto* p = new nn::FeatureExtractor<float>();
        nn::FeatureExtractorConfig c;
        c.d_model = 48;
        c.heads = 6;
        c.depth = 4;
        p->init(c, 1234);
        return p;
    }();
    return *fe;
}

std::string image_checksum(const Image& img) {
    return nn::sha256_hex(img.data(), img.numel() * sizeof(float));
}

SignatureRecord quick_record(const Image& img, const WatermarkMessage& wm, uint64_t seed = 7) {
    RegisterOptions opts;
    opts.seed = seed;
    return register_signature(img, wm, shared_fe(), "testckpt", opts).record;
}

}  // namespace

TEST_CASE("watermark message hex round trip and digest") {
    const WatermarkMessage wm = WatermarkMessage::random(30, 5);
    const WatermarkMessage back = WatermarkMessage::from_hex(wm.to_hex(), 30);
    CHECK(back.bits == wm.bits);
    CHECK(wm.digest().size() == 64);
    CHECK(WatermarkMessage::from_string("0101").bits == std::vector<uint8_t>{0, 1, 0, 1});
    CHECK_THROWS_AS(WatermarkMessage::from_hex("zz", 8), ParameterError);
    CHECK_THROWS_AS(WatermarkMessage::random(0, 1), ParameterError);
}

TEST_CASE("projection of a constant feature is the linear map of a constant") {
    Tensor<float> feat({3, 128, 128});
    feat.fill(0.37f);
    const Tensor<float> pooled = tile_pool(feat);
    for (int64_t i = 0; i < pooled.numel(); ++i)
        CHECK(pooled[i] == doctest::Approx(0.37f).epsilon(1e-6));
    Rng rng(3);
    PsiParams<float> psi;
    psi.init(16, rng);
    const Tensor<float> projected = project(feat, psi);
    for (int64_t i = 0; i < 16; ++i) {
        double expect = psi.b[i];
        for (int64_t j = 0; j < kPooledDim; ++j) expect += psi.w[i * kPooledDim + j] * pooled[j];
        CHECK(projected[i] == doctest::Approx(expect).epsilon(1e-5));
    }
}

TEST_CASE("projection is linear in the unbiased part") {
    Rng rng(5);
    PsiParams<float> psi;
    psi.init(8, rng);
    Tensor<float> feat({3, 128, 128});
    for (int64_t i = 0; i < feat.numel(); ++i) feat[i] = static_cast<float>(rng.unit());
    Tensor<float> scaled = feat;
    for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= 2.f;
    const Tensor<float> p1 = project(feat, psi);
    const Tensor<float> p2 = project(scaled, psi);
    for (int64_t i = 0; i < 8; ++i)
        CHECK(p2[i] - psi.b[i] == doctest::Approx(2.0 * (p1[i] - psi.b[i])).epsilon(1e-3));
}

TEST_CASE("pooling locality: a single-tile difference moves one slot") {
    Rng rng(6);
    Tensor<float> a({3, 128, 128});
    for (int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<float>(rng.unit());
    Tensor<float> b = a;
    // tile (2,5), channel 1
    for (int64_t py = 0; py < kPatchSize; ++py)
        for (int64_t px = 0; px < kPatchSize; ++px)
            b[(1 * kImageSize + 2 * kPatchSize + py) * kImageSize + 5 * kPatchSize + px] += 0.25f;
    const Tensor<float> pa = tile_pool(a), pb = tile_pool(b);
    int64_t diff_slots = 0;
    for (int64_t i = 0; i < kPooledDim; ++i)
        if (pa[i] != pb[i]) ++diff_slots;
    CHECK(diff_slots == 1);
    CHECK(pb[1 * kNumPatches + 2 * kPatchGrid + 5] != pa[1 * kNumPatches + 2 * kPatchGrid + 5]);
}

TEST_CASE("predict_bits oracles") {
    SUBCASE("zero signature matrix gives exactly 0.5 everywhere") {
        Tensor<float> f({8});
        f.fill(1.f);
        Tensor<float> c_mat({5, 8});
        const Tensor<float> probs = predict_bits(f, c_mat);
        for (int64_t i = 0; i < 5; ++i) CHECK(probs[i] == 0.5f);
    }
    SUBCASE("unit feature against a strong row saturates") {
        Tensor<float> f({4});
        f[0] = 1.f;
        Tensor<float> c_mat({1, 4});
        c_mat[0] = 10.f;
        const Tensor<float> probs = predict_bits(f, c_mat);
        CHECK(probs[0] == doctest::Approx(0.9999546).epsilon(1e-5));
    }
    SUBCASE("negating C mirrors the probabilities") {
        Rng rng(8);
        Tensor<float> f({6});
        for (int64_t i = 0; i < 6; ++i) f[i] = static_cast<float>(rng.normal());
        Tensor<float> c_mat({3, 6});
        for (int64_t i = 0; i < c_mat.numel(); ++i) c_mat[i] = static_cast<float>(rng.normal());
        Tensor<float> neg = c_mat;
        for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];
        const Tensor<float> p = predict_bits(f, c_mat);
        const Tensor<float> q = predict_bits(f, neg);
        for (int64_t i = 0; i < 3; ++i) CHECK(p[i] + q[i] == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("registration recovers the exact message from the clean image") {
    const Image img = synth_image(900, 0);
    const WatermarkMessage wm = WatermarkMessage::random(30, 11);
    const std::string before = image_checksum(img);
    const SignatureRecord rec = quick_record(img, wm);
    const WatermarkMessage got = extract_bits(img, rec, shared_fe(), "testckpt");
    CHECK(got.bits == wm.bits);
    CHECK(bit_error_rate(got, wm) == 0.0);
    // Zero-watermarking contract: the input image is untouched.
    CHECK(image_checksum(img) == before);
}

TEST_CASE("identity distortion extracts the same bits as clean") {
    const Image img = synth_image(901, 1);
    const WatermarkMessage wm = WatermarkMessage::random(30, 12);
    const SignatureRecord rec = quick_record(img, wm);
    DistortionSpec identity;
    const Image same = apply_distortion(img, identity);
    CHECK(extract_bits(same, rec, shared_fe(), "testckpt").bits == wm.bits);
}

TEST_CASE("all-zeros and all-ones records sit on opposite sides of 0.5") {
    const Image img = synth_image(902, 2);
    WatermarkMessage zeros, ones;
    zeros.bits.assign(30, 0);
    ones.bits.assign(30, 1);
    const SignatureRecord rz = quick_record(img, zeros, 21);
    const SignatureRecord ro = quick_record(img, ones, 22);
    std::vector<double> pz, po;
    extract_bits(img, rz, shared_fe(), "testckpt", &pz);
    extract_bits(img, ro, shared_fe(), "testckpt", &po);
    for (int64_t i = 0; i < 30; ++i) {
        CHECK(pz[i] < 0.5);
        CHECK(po[i] >= 0.5);
    }
}

TEST_CASE("watermark loss decreases across registration for five random pairs") {
    for (uint64_t pair = 0; pair < 5; ++pair) {
        const Image img = synth_image(910, static_cast<int64_t>(pair));
        const WatermarkMessage wm = WatermarkMessage::random(30, 100 + pair);
        RegisterOptions opts;
        opts.seed = pair;
        opts.early_stop = false;  // run the full 50 epochs
        const RegistrationResult res =
            register_signature(img, wm, shared_fe(), "testckpt", opts);
        REQUIRE(res.loss_curve.size() == 50);
        CHECK(res.loss_curve.back() < res.loss_curve.front());
    }
}

TEST_CASE("margin property holds after successful registration") {
    const Image img = synth_image(903, 3);
    const WatermarkMessage wm = WatermarkMessage::random(30, 31);
    RegisterOptions opts;
    opts.seed = 3;
    const RegistrationResult res = register_signature(img, wm, shared_fe(), "testckpt", opts);
    CHECK(res.final_accuracy == 1.0);
    CHECK(res.final_margin > 0.0);
    CHECK(res.final_margin >= opts.margin);
}

TEST_CASE("one-to-many: several watermarks on one image stay independent") {
    const Image img = synth_image(904, 4);
    std::vector<WatermarkMessage> wms;
    std::vector<SignatureRecord> recs;
    for (uint64_t i = 0; i < 3; ++i) {
        wms.push_back(WatermarkMessage::random(30, 40 + i));
        recs.push_back(quick_record(img, wms.back(), 50 + i));
    }
    for (size_t i = 0; i < 3; ++i) {
        const WatermarkMessage got = extract_bits(img, recs[i], shared_fe(), "testckpt");
        CHECK(got.bits == wms[i].bits);
        // Cross-extraction with another record recovers that record's message.
        for (size_t j = 0; j < 3; ++j) {
            if (i == j) continue;
            const WatermarkMessage cross = extract_bits(img, recs[j], shared_fe(), "testckpt");
            CHECK(cross.bits == wms[j].bits);
            CHECK(cross.bits != wms[i].bits);
        }
    }
}

TEST_CASE("stronger regularization never grows the signature norm") {
    const Image img = synth_image(905, 5);
    const WatermarkMessage wm = WatermarkMessage::random(30, 61);
    double prev_norm = 1e300;
    for (double lc : {0.0, 1e-4, 1e-2}) {
        RegisterOptions opts;
        opts.seed = 62;
        opts.lambda_c = lc;
        opts.early_stop = false;
        const RegistrationResult res =
            register_signature(img, wm, shared_fe(), "testckpt", opts);
        const double norm = std::sqrt(res.record.signature.c.sq_norm());
        CHECK(norm <= prev_norm + 1e-9);
        prev_norm = norm;
    }
}

TEST_CASE("registration failure carries the reached accuracy") {
    const Image img = synth_image(906, 6);
    const WatermarkMessage wm = WatermarkMessage::random(30, 71);
    RegisterOptions opts;
    opts.seed = 72;
    opts.max_epochs = 1;
    opts.lr = 1e-9;  // cannot converge in one tiny step
    try {
        register_signature(img, wm, shared_fe(), "testckpt", opts);
        FAIL("expected RegistrationError");
    } catch (const RegistrationError& e) {
        CHECK(e.final_accuracy() >= 0.0);
        CHECK(e.final_accuracy() < 1.0);
    }
    opts.throw_on_failure = false;
    const RegistrationResult res = register_signature(img, wm, shared_fe(), "testckpt", opts);
    CHECK(res.final_accuracy < 1.0);
}

TEST_CASE("extraction under a mismatched checkpoint id is rejected") {
    const Image img = synth_image(907, 7);
    const SignatureRecord rec = quick_record(img, WatermarkMessage::random(30, 81));
    CHECK_THROWS_AS(extract_bits(img, rec, shared_fe(), "otherckpt"), IntegrityError);
}

TEST_CASE("store round trip preserves all bytes") {
    TempDir tmp("store_rt");
    SignatureStore store(tmp.path.string());
    const Image img = synth_image(908, 8);
    const SignatureRecord rec = quick_record(img, WatermarkMessage::random(30, 91));
    store.put(rec);
    const SignatureRecord back = store.get(rec.record_id);
    CHECK(back.record_id == rec.record_id);
    CHECK(back.watermark_digest == rec.watermark_digest);
    CHECK(back.extractor_checkpoint_id == rec.extractor_checkpoint_id);
    CHECK(back.signature.k == rec.signature.k);
    CHECK(back.signature.d == rec.signature.d);
    CHECK(std::memcmp(back.signature.c.data(), rec.signature.c.data(),
                      rec.signature.c.numel() * 4) == 0);
    CHECK(std::memcmp(back.signature.psi.w.data(), rec.signature.psi.w.data(),
                      rec.signature.psi.w.numel() * 4) == 0);
    CHECK(std::memcmp(back.signature.psi.b.data(), rec.signature.psi.b.data(),
                      rec.signature.psi.b.numel() * 4) == 0);
}

TEST_CASE("duplicate ids conflict and leave the first record intact") {
    TempDir tmp("store_dup");
    SignatureStore store(tmp.path.string());
    const Image img = synth_image(909, 9);
    const SignatureRecord rec = quick_record(img, WatermarkMessage::random(30, 92));
    store.put(rec);
    SignatureRecord clone = rec;
    clone.signature.c.fill(0.f);
    CHECK_THROWS_AS(store.put(clone), ConflictError);
    const SignatureRecord back = store.get(rec.record_id);
    CHECK(std::memcmp(back.signature.c.data(), rec.signature.c.data(),
                      rec.signature.c.numel() * 4) == 0);
}

TEST_CASE("a crash before the index commit leaves the index unchanged") {
    TempDir tmp("store_crash");
    SignatureStore store(tmp.path.string());
    const Image img = synth_image(911, 10);
    const SignatureRecord rec = quick_record(img, WatermarkMessage::random(30, 93));
    store.before_index_commit = [] { throw std::runtime_error("injected crash"); };
    CHECK_THROWS(store.put(rec));
    CHECK(!store.contains(rec.record_id));
    CHECK(store.ids().empty());
    // A retry after the crash succeeds and the record is whole.
    store.before_index_commit = nullptr;
    store.put(rec);
    CHECK(store.contains(rec.record_id));
    CHECK(store.get(rec.record_id).signature.c.numel() == rec.signature.c.numel());
}

TEST_CASE("unknown ids and truncated blobs are reported, not returned") {
    TempDir tmp("store_bad");
    SignatureStore store(tmp.path.string());
    CHECK_THROWS_AS(store.get("deadbeef00000000"), NotFoundError);
    const Image img = synth_image(912, 11);
    const SignatureRecord rec = quick_record(img, WatermarkMessage::random(30, 94));
    store.put(rec);
    // Truncate the C blob behind the store's back.
    const fs::path blob = tmp.path / "records" / rec.record_id / "C.f32";
    fs::resize_file(blob, 16);
    CHECK_THROWS_AS(store.get(rec.record_id), IntegrityError);
}
