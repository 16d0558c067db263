#include "doctest.h"

#include <cstring>
#include <unistd.h>
#include <filesystem>
#include <fstream>

#include "zerowm/distort.hpp"
#include "zerowm/errors.hpp"
#include "zerowm/eval.hpp"
#include "zerowm/losses.hpp"
#include "zerowm/metrics.hpp"
#include "zerowm/nn/checkpoint.hpp"
#include "zerowm/synth.hpp"
#include "zerowm/train.hpp"

namespace fs = std::filesystem;
using namespace zw;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() /
               ("zerowm_train_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

TrainingConfig tiny_config() {
    TrainingConfig cfg;
    cfg.fe = {12, 2, 2, 2};    // d_model, heads, depth, mlp_ratio
    cfg.disc = {12, 2, 2, 2};  // dim, heads, depth, mlp_ratio
    cfg.rec.encoder_channels = {2, 3, 4, 5};
    cfg.rec.bottleneck = 6;
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.seed = 17;
    return cfg;
}

template <typename Net>
std::string params_checksum(Net& net) {
    std::string blob;
    net.visit([&blob](const std::string&, Tensor<float>& p, Tensor<float>&) {
        blob.append(reinterpret_cast<const char*>(p.data()), p.numel() * 4);
    });
    return nn::sha256_hex(blob.data(), blob.size());
}

}  // namespace

TEST_CASE("training config validation and JSON round trip") {
    TrainingConfig cfg = tiny_config();
    const TrainingConfig back = TrainingConfig::from_json(cfg.to_json());
    CHECK(back.lr_fe == cfg.lr_fe);
    CHECK(back.batch_size == cfg.batch_size);
    CHECK(back.fe.d_model == cfg.fe.d_model);
    CHECK(back.rec.encoder_channels == cfg.rec.encoder_channels);
    TrainingConfig bad = cfg;
    bad.lr_fe = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lambda_d = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("train_epoch produces one finite record per batch") {
    TrainingConfig cfg = tiny_config();
    Trainer trainer(cfg);
    const auto images = synth_images(100, 8);
    const auto records = trainer.train_epoch(images, 1);
    REQUIRE(records.size() == 2);  // 8 images / batch 4
    for (const auto& r : records) {
        CHECK(std::isfinite(r.l_d));
        CHECK(std::isfinite(r.l_adv));
        CHECK(std::isfinite(r.l_r));
        CHECK(std::isfinite(r.l_fe));
        CHECK(r.l_fe == doctest::Approx(cfg.lambda_d * r.l_adv + r.l_r));
    }
    CHECK_THROWS_AS(trainer.train_epoch(synth_images(5, 2), 1), PreconditionError);
}

TEST_CASE("update isolation: disabled components never move") {
    const auto images = synth_images(101, 8);
    SUBCASE("no reconstructor: R parameters stay bit-identical") {
        TrainingConfig cfg = tiny_config();
        cfg.use_reconstructor = false;
        Trainer trainer(cfg);
        const std::string fe_before = params_checksum(trainer.fe());
        const std::string r_before = params_checksum(trainer.rec());
        trainer.train_epoch(images, 1);
        CHECK(params_checksum(trainer.rec()) == r_before);
        CHECK(params_checksum(trainer.fe()) != fe_before);
        CHECK(params_checksum(trainer.disc()) != params_checksum(trainer.rec()));
    }
    SUBCASE("no adversarial: D parameters stay bit-identical") {
        TrainingConfig cfg = tiny_config();
        cfg.use_adversarial = false;
        Trainer trainer(cfg);
        const std::string d_before = params_checksum(trainer.disc());
        trainer.train_epoch(images, 1);
        CHECK(params_checksum(trainer.disc()) == d_before);
        CHECK(params_checksum(trainer.rec()) != d_before);
    }
    SUBCASE("full run moves all three components") {
        TrainingConfig cfg = tiny_config();
        Trainer trainer(cfg);
        const std::string fe0 = params_checksum(trainer.fe());
        const std::string d0 = params_checksum(trainer.disc());
        const std::string r0 = params_checksum(trainer.rec());
        trainer.train_epoch(images, 1);
        CHECK(params_checksum(trainer.fe()) != fe0);
        CHECK(params_checksum(trainer.disc()) != d0);
        CHECK(params_checksum(trainer.rec()) != r0);
    }
}

TEST_CASE("fit writes checkpoints every 10 epochs plus final") {
    TempDir tmp("fit");
    TrainingConfig cfg = tiny_config();
    cfg.epochs = 20;
    cfg.checkpoint_every = 10;
    Trainer trainer(cfg);
    trainer.fit(synth_images(102, 4), tmp.path.string());
    CHECK(fs::exists(tmp.path / "ckpt_epoch_10" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "ckpt_epoch_20" / "manifest.json"));
    CHECK(fs::exists(tmp.path / "ckpt_final" / "manifest.json"));
    CHECK(!fs::exists(tmp.path / "ckpt_epoch_5"));
    const auto log = read_loss_csv((tmp.path / "loss_log.csv").string());
    CHECK(log.size() == 20);  // one batch per epoch
    Trainer empty_case(cfg);
    CHECK_THROWS_AS(empty_case.fit({}, tmp.path.string()), PreconditionError);
}

TEST_CASE("checkpoint save/load round-trips every tensor bit-exactly") {
    TempDir tmp("ckpt");
    TrainingConfig cfg = tiny_config();
    Trainer trainer(cfg);
    trainer.train_epoch(synth_images(103, 4), 1);
    trainer.save((tmp.path / "ck").string());

    nn::CheckpointReader reader((tmp.path / "ck").string());
    nn::FeatureExtractor<float> fe2;
    reader.load_fe(fe2);
    nn::Discriminator<float> d2;
    reader.load_disc(d2);
    nn::Reconstructor<float> r2;
    reader.load_rec(r2);
    CHECK(params_checksum(fe2) == params_checksum(trainer.fe()));
    CHECK(params_checksum(d2) == params_checksum(trainer.disc()));
    CHECK(params_checksum(r2) == params_checksum(trainer.rec()));

    // Saving the reloaded model reproduces identical tensor bytes.
    nn::CheckpointExtra extra;
    save_checkpoint((tmp.path / "ck2").string(), fe2, &d2, &r2, {}, extra);
    for (const auto& entry : fs::directory_iterator(tmp.path / "ck2")) {
        if (entry.path().extension() != ".f32") continue;
        std::ifstream a(entry.path(), std::ios::binary);
        std::ifstream b(tmp.path / "ck" / entry.path().filename(), std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
    CHECK(reader.id().size() == 16);
}

TEST_CASE("corrupted checkpoint blobs are rejected on load") {
    TempDir tmp("ckpt_bad");
    TrainingConfig cfg = tiny_config();
    Trainer trainer(cfg);
    trainer.save((tmp.path / "ck").string());
    fs::resize_file(tmp.path / "ck" / "fe.pos.f32", 8);
    nn::CheckpointReader reader((tmp.path / "ck").string());
    nn::FeatureExtractor<float> fe2;
    CHECK_THROWS_AS(reader.load_fe(fe2), IntegrityError);
}

TEST_CASE("resume reproduces the next epoch's losses") {
    TempDir tmp("resume");
    const auto images = synth_images(104, 8);

    TrainingConfig cfg = tiny_config();
    cfg.epochs = 4;
    cfg.checkpoint_every = 3;
    Trainer continuous(cfg);
    continuous.fit(images, (tmp.path / "a").string());
    const auto log_a = read_loss_csv((tmp.path / "a" / "loss_log.csv").string());

    Trainer resumed(cfg);
    resumed.resume_from((tmp.path / "a" / "ckpt_epoch_3").string());
    CHECK(resumed.completed_epochs() == 3);
    const auto records = resumed.train_epoch(images, 4);
    REQUIRE(records.size() == 2);
    // Continuous epoch 4 = records at global steps 6 and 7.
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& cont = log_a[6 + i];
        CHECK(records[i].step == cont.step);
        CHECK(records[i].l_fe ==
              doctest::Approx(cont.l_fe).epsilon(1e-5));
        CHECK(records[i].l_d == doctest::Approx(cont.l_d).epsilon(1e-5));
    }
}

TEST_CASE("slow: adversarial-only training raises the fooling probability") {
    // A discriminator pre-trained to separate clean from distorted features
    // of a frozen random FE; then the FE trains on L_adv alone.
    nn::FeatureExtractorConfig fc{24, 3, 2, 2};
    nn::DiscriminatorConfig dc{24, 3, 2, 2};
    nn::FeatureExtractor<float> fe;
    fe.init(fc, 51);
    nn::Discriminator<float> disc;
    disc.init(dc, 52);
    nn::Adam<float> opt_d, opt_fe;
    opt_d.attach(disc, 1e-3);
    opt_fe.attach(fe, 5e-4);

    const int64_t n = 16, bsz = 4;
    const auto images = synth_images(500, n);
    DistortionSpec sp;
    sp.kind = DistortionKind::salt_pepper;
    sp.params["density"] = 0.15;

    auto forward_features = [&fe](const std::vector<Image>& imgs, const std::vector<int64_t>& idx,
                                  bool distorted, Tensor<float>& out) {
        Tensor<float> batch({static_cast<int64_t>(idx.size()), 3, 128, 128});
        DistortionSpec s;
        s.kind = DistortionKind::salt_pepper;
        s.params["density"] = 0.15;
        for (size_t b = 0; b < idx.size(); ++b) {
            Image img = imgs[idx[b]];
            if (distorted) {
                s.seed = 900 + idx[b];
                img = apply_distortion(img, s);
            }
            std::copy(img.data(), img.data() + img.numel(), batch.data() + b * img.numel());
        }
        fe.forward(batch, out);
    };

    // Pre-train D on frozen features.
    Rng rng(3);
    for (int step = 0; step < 300; ++step) {
        std::vector<int64_t> idx(bsz);
        std::vector<int> labels(bsz);
        for (int64_t b = 0; b < bsz; ++b) {
            idx[b] = rng.uniform_int(0, n - 1);
            labels[b] = rng.bernoulli(0.5);
        }
        Tensor<float> feat_clean, feat_dist, logits;
        Tensor<float> batchfeat({bsz, 3, 128, 128});
        for (int64_t b = 0; b < bsz; ++b) {
            Tensor<float> one;
            forward_features(images, {idx[b]}, labels[b] == 0, one);
            std::copy(one.data(), one.data() + one.numel(), batchfeat.data() + b * one.numel());
        }
        opt_d.zero_grad();
        disc.forward(batchfeat, logits);
        Tensor<float> gl({bsz});
        for (int64_t b = 0; b < bsz; ++b)
            gl[b] = static_cast<float>((sigmoid(logits[b]) - labels[b]) / bsz);
        disc.backward(gl, nullptr);
        opt_d.step(5.0);
    }

    auto mean_p_dist = [&]() {
        double total = 0;
        for (int64_t i = 0; i < n; ++i) {
            Tensor<float> feat, logits;
            forward_features(images, {i}, true, feat);
            disc.forward(feat, logits);
            total += sigmoid(logits[0]);
        }
        return total / n;
    };

    const double before = mean_p_dist();
    // FE step on L_adv only, frozen D.
    for (int step = 0; step < 200; ++step) {
        std::vector<int64_t> idx(bsz);
        for (int64_t b = 0; b < bsz; ++b) idx[b] = (step * bsz + b) % n;
        Tensor<float> feat, logits;
        forward_features(images, idx, true, feat);
        disc.forward(feat, logits);
        Tensor<float> gl({bsz});
        for (int64_t b = 0; b < bsz; ++b)
            gl[b] = static_cast<float>(-sigmoid(logits[b]) / bsz);
        Tensor<float> gfeat;
        disc.backward(gl, &gfeat);
        opt_fe.zero_grad();
        fe.backward(gfeat);
        opt_fe.step(5.0);
    }
    const double after = mean_p_dist();
    CHECK(after > before);
}

TEST_CASE("slow: twenty epochs on 256 images lift train-set PSNR by 3 dB") {
    TrainingConfig cfg;
    cfg.fe = {24, 3, 2, 2};
    cfg.disc = {24, 3, 2, 2};
    cfg.rec.encoder_channels = {8, 12, 16, 24};
    cfg.rec.bottleneck = 48;
    cfg.batch_size = 8;
    cfg.seed = 77;
    Trainer trainer(cfg);
    const auto images = synth_images(600, 256);

    auto train_psnr = [&]() {
        double total = 0;
        const int64_t probe = 32;
        for (int64_t i = 0; i < probe; ++i) {
            Tensor<float> batch({1, 3, 128, 128});
            std::copy(images[i].data(), images[i].data() + images[i].numel(), batch.data());
            Tensor<float> feat, recon;
            trainer.fe().forward(batch, feat);
            trainer.rec().forward(feat, recon, /*training=*/false);
            recon.reshape({3, 128, 128});
            total += psnr(images[i], recon);
        }
        return total / probe;
    };

    trainer.train_epoch(images, 1);
    const double after_one = train_psnr();
    for (int64_t e = 2; e <= 20; ++e) trainer.train_epoch(images, e);
    const double after_twenty = train_psnr();
    CHECK(after_twenty - after_one >= 3.0);
}
