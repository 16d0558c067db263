#include "doctest.h"

#include <cmath>

#include "zerowm/errors.hpp"
#include "zerowm/eval.hpp"
#include "zerowm/metrics.hpp"
#include "zerowm/synth.hpp"
#include "zerowm/wm.hpp"

using namespace zw;

namespace {

nn::FeatureExtractor<float>& eval_fe() {
    static nn::FeatureExtractor<float>* fe = [] {
        auto* p = new nn::FeatureExtractor<float>();
        nn::FeatureExtractorConfig c{32, 4, 2, 2};
        p->init(c, 555);
        return p;
    }();
    return *fe;
}

}  // namespace

TEST_CASE("cosine similarity oracles") {
    Tensor<float> v({3});
    v[0] = 0.2f;
    v[1] = -0.4f;
    v[2] = 0.9f;
    Tensor<float> neg = v;
    for (int64_t i = 0; i < 3; ++i) neg[i] = -neg[i];
    CHECK(std::fabs(cosine_similarity(v, v) - 1.0) < 1e-9);
    CHECK(std::fabs(cosine_similarity(v, neg) + 1.0) < 1e-9);

    Tensor<double> a({2}), b({2});
    a[0] = 1;
    b[0] = 1;
    b[1] = 1;
    CHECK(std::fabs(cosine_similarity(a, b) - 1.0 / std::sqrt(2.0)) < 1e-9);

    Tensor<double> zero({2});
    CHECK_THROWS_AS(cosine_similarity(a, zero), PreconditionError);

    // scale invariance and symmetry
    Rng rng(4);
    Tensor<double> x({16}), y({16}), sx({16});
    for (int64_t i = 0; i < 16; ++i) {
        x[i] = rng.normal();
        y[i] = rng.normal();
        sx[i] = 3.7 * x[i];
    }
    CHECK(cosine_similarity(sx, y) == doctest::Approx(cosine_similarity(x, y)).epsilon(1e-12));
    CHECK(cosine_similarity(x, y) == doctest::Approx(cosine_similarity(y, x)).epsilon(1e-12));
}

TEST_CASE("psnr oracles") {
    const Image img = synth_image(1, 1);
    CHECK(psnr(img, img) == kPsnrCap);
    CHECK(std::fabs(psnr_from_mse(0.01) - 20.0) < 1e-9);
    CHECK(std::fabs(psnr_from_mse(1e-3) - 30.0) < 1e-9);
    double prev = 1e9;
    for (double m : {1e-4, 1e-3, 1e-2, 1e-1}) {
        const double v = psnr_from_mse(m);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("bit error rate oracles") {
    WatermarkMessage a = WatermarkMessage::random(30, 1);
    CHECK(bit_error_rate(a, a) == 0.0);
    WatermarkMessage complement = a;
    for (auto& b : complement.bits) b ^= 1;
    CHECK(bit_error_rate(a, complement) == 1.0);
    WatermarkMessage three = a;
    for (int i = 0; i < 3; ++i) three.bits[i * 7] ^= 1;
    CHECK(std::fabs(bit_error_rate(a, three) - 0.1) < 1e-9);
    WatermarkMessage longer = WatermarkMessage::random(31, 2);
    CHECK_THROWS_AS(bit_error_rate(a, longer), PreconditionError);
}

TEST_CASE("report invariants") {
    MetricsReport report;
    MetricsCell cell;
    cell.spec.kind = DistortionKind::jpeg;
    cell.spec.params["quality"] = 50;
    cell.ber = 0.25;
    cell.bit_accuracy = 0.75;
    report.rows.push_back(cell);
    CHECK_NOTHROW(report.validate());
    report.rows[0].bit_accuracy = 0.80;
    CHECK_THROWS_AS(report.validate(), IntegrityError);
    report.rows[0].bit_accuracy = 0.75;
    report.rows.push_back(cell);  // duplicate cell
    CHECK_THROWS_AS(report.validate(), IntegrityError);
}

TEST_CASE("invariance sweep: identity cell is exactly stable") {
    const auto images = synth_images(40, 3);
    std::vector<DistortionSpec> grid(1);  // identity
    const MetricsReport report =
        invariance_sweep(eval_fe(), nullptr, "id", images, grid, 3, 99);
    REQUIRE(report.rows.size() == 1);
    CHECK(std::fabs(*report.rows[0].cosine_mean - 1.0) < 1e-9);
    CHECK(*report.rows[0].cosine_std < 1e-12);
}

TEST_CASE("invariance sweep: stochastic cells populate the std column") {
    const auto images = synth_images(41, 2);
    DistortionSpec noise;
    noise.kind = DistortionKind::gaussian_noise;
    noise.params["variance"] = 0.05;
    const MetricsReport report =
        invariance_sweep(eval_fe(), nullptr, "id", images, {noise}, 5, 7);
    CHECK(*report.rows[0].cosine_std > 0.0);
    CHECK(*report.rows[0].cosine_mean < 1.0);
    CHECK(report.runs == 5);
}

TEST_CASE("report cells re-derive bit-exactly from their seed") {
    const auto images = synth_images(42, 2);
    DistortionSpec noise;
    noise.kind = DistortionKind::gaussian_noise;
    noise.params["variance"] = 0.02;
    const MetricsCell a = invariance_cell(eval_fe(), nullptr, images, noise, 3, 12345);
    const MetricsCell b = invariance_cell(eval_fe(), nullptr, images, noise, 3, 12345);
    CHECK(*a.cosine_mean == *b.cosine_mean);
    CHECK(*a.cosine_std == *b.cosine_std);
    MetricsReport ra, rb;
    ra.rows.push_back(a);
    rb.rows.push_back(b);
    CHECK(ra.to_json() == rb.to_json());
}

TEST_CASE("collapse heatmap is symmetric with a unit diagonal") {
    const auto images = synth_images(43, 5);
    const Tensor<double> m = collapse_heatmap(eval_fe(), images);
    REQUIRE(m.shape() == std::vector<int64_t>{5, 5});
    for (int64_t i = 0; i < 5; ++i) {
        CHECK(m[i * 5 + i] == 1.0);
        for (int64_t j = 0; j < 5; ++j)
            CHECK(std::fabs(m[i * 5 + j] - m[j * 5 + i]) < 1e-6);
    }
    CHECK_THROWS_AS(collapse_heatmap(eval_fe(), synth_images(44, 1)), PreconditionError);
}

TEST_CASE("watermark sweep: identity cell has zero BER and columns sum to one") {
    const auto images = synth_images(45, 3);
    std::vector<WatermarkCase> cases;
    for (size_t i = 0; i < images.size(); ++i) {
        WatermarkCase c;
        c.image = images[i];
        c.expected = WatermarkMessage::random(30, 70 + i);
        RegisterOptions opts;
        opts.seed = i;
        c.record = register_signature(c.image, c.expected, eval_fe(), "id", opts).record;
        cases.push_back(std::move(c));
    }
    std::vector<DistortionSpec> grid(1);  // identity
    DistortionSpec noise;
    noise.kind = DistortionKind::gaussian_noise;
    noise.params["variance"] = 0.001;
    grid.push_back(noise);
    const MetricsReport report = watermark_robustness_sweep(eval_fe(), "id", cases, grid, 5);
    CHECK(*report.rows[0].ber == 0.0);
    CHECK(*report.rows[0].bit_accuracy == 1.0);
    for (const auto& row : report.rows)
        CHECK(std::fabs(*row.ber + *row.bit_accuracy - 1.0) < 1e-12);
    CHECK(report.n_bits_total == 90);

    // A case registered under another extractor is rejected by the sweep.
    std::vector<WatermarkCase> wrong = {cases[0]};
    wrong[0].record.extractor_checkpoint_id = "other";
    CHECK_THROWS_AS(watermark_robustness_sweep(eval_fe(), "id", wrong, grid, 5),
                    IntegrityError);
}

TEST_CASE("probe memorizes a separable toy problem") {
    std::vector<std::vector<float>> feats;
    std::vector<int> labels;
    Rng rng(8);
    for (int i = 0; i < 40; ++i) {
        const int label = i % 2;
        std::vector<float> f(8);
        for (auto& v : f) v = static_cast<float>(rng.normal() * 0.1 + label * 2.0);
        feats.push_back(f);
        labels.push_back(label);
    }
    const ProbeResult res = train_softmax_probe(feats, labels, feats, labels, {});
    CHECK(res.top1 == 1.0);
    CHECK(res.top5 == 1.0);
}

TEST_CASE("probe on random features sits at chance level") {
    std::vector<std::vector<float>> train_feats, test_feats;
    std::vector<int> train_labels, test_labels;
    Rng rng(9);
    for (int i = 0; i < 600; ++i) {
        std::vector<float> f(64);
        for (auto& v : f) v = static_cast<float>(rng.normal());
        if (i < 400) {
            train_feats.push_back(f);
            train_labels.push_back(i % 10);
        } else {
            test_feats.push_back(f);
            test_labels.push_back(i % 10);
        }
    }
    ProbeOptions opts;
    opts.epochs = 60;
    const ProbeResult res =
        train_softmax_probe(train_feats, train_labels, test_feats, test_labels, opts);
    CHECK(res.top1 >= 0.02);
    CHECK(res.top1 <= 0.22);
}

TEST_CASE("probe rejects a class absent from training") {
    std::vector<std::vector<float>> feats(6, std::vector<float>(4, 1.f));
    std::vector<int> labels = {0, 0, 2, 2, 2, 0};  // class 1 missing
    CHECK_THROWS_AS(train_softmax_probe(feats, labels, feats, labels, {}), PreconditionError);
}
