#include "zerowm/train.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "zerowm/distort.hpp"
#include "zerowm/errors.hpp"
#include "zerowm/losses.hpp"

namespace fs = std::filesystem;

namespace zw {
namespace {

void check_finite(double v, const char* name, int64_t step) {
    if (!std::isfinite(v))
        throw NumericalError(std::string("non-finite ") + name + " at step " +
                             std::to_string(step));
}

std::vector<int64_t> epoch_permutation(uint64_t seed, int64_t epoch, int64_t n) {
    std::vector<int64_t> perm(n);
    for (int64_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(hash_combine(hash_combine(seed, 0x5463ULL), static_cast<uint64_t>(epoch)));
    for (int64_t i = n - 1; i > 0; --i) {
        const int64_t j = rng.uniform_int(0, i);
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

}  // namespace

void TrainingConfig::validate() const {
    if (lr_fe <= 0 || lr_d <= 0 || lr_r <= 0) throw ConfigError("learning rates must be positive");
    if (lambda_s < 0 || lambda_m < 0 || lambda_d < 0)
        throw ConfigError("loss weights must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

std::string TrainingConfig::to_json() const {
    nlohmann::json j;
    j["lr_fe"] = lr_fe;
    j["lr_d"] = lr_d;
    j["lr_r"] = lr_r;
    j["lambda_s"] = lambda_s;
    j["lambda_m"] = lambda_m;
    j["lambda_d"] = lambda_d;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["checkpoint_every"] = checkpoint_every;
    j["seed"] = seed;
    j["use_reconstructor"] = use_reconstructor;
    j["use_adversarial"] = use_adversarial;
    j["grad_clip"] = grad_clip;
    j["fe"] = {{"d_model", fe.d_model},
               {"heads", fe.heads},
               {"depth", fe.depth},
               {"mlp_ratio", fe.mlp_ratio}};
    j["disc"] = {{"dim", disc.dim},
                 {"heads", disc.heads},
                 {"depth", disc.depth},
                 {"mlp_ratio", disc.mlp_ratio}};
    j["rec"] = {{"encoder_channels", rec.encoder_channels}, {"bottleneck", rec.bottleneck}};
    return j.dump(2);
}

TrainingConfig TrainingConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TrainingConfig c;
    c.lr_fe = j.value("lr_fe", c.lr_fe);
    c.lr_d = j.value("lr_d", c.lr_d);
    c.lr_r = j.value("lr_r", c.lr_r);
    c.lambda_s = j.value("lambda_s", c.lambda_s);
    c.lambda_m = j.value("lambda_m", c.lambda_m);
    c.lambda_d = j.value("lambda_d", c.lambda_d);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
    c.use_reconstructor = j.value("use_reconstructor", c.use_reconstructor);
    c.use_adversarial = j.value("use_adversarial", c.use_adversarial);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    if (j.contains("fe")) {
        c.fe.d_model = j["fe"].value("d_model", c.fe.d_model);
        c.fe.heads = j["fe"].value("heads", c.fe.heads);
        c.fe.depth = j["fe"].value("depth", c.fe.depth);
        c.fe.mlp_ratio = j["fe"].value("mlp_ratio", c.fe.mlp_ratio);
    }
    if (j.contains("disc")) {
        c.disc.dim = j["disc"].value("dim", c.disc.dim);
        c.disc.heads = j["disc"].value("heads", c.disc.heads);
        c.disc.depth = j["disc"].value("depth", c.disc.depth);
        c.disc.mlp_ratio = j["disc"].value("mlp_ratio", c.disc.mlp_ratio);
    }
    if (j.contains("rec")) {
        c.rec.encoder_channels =
            j["rec"].value("encoder_channels", c.rec.encoder_channels);
        c.rec.bottleneck = j["rec"].value("bottleneck", c.rec.bottleneck);
    }
    c.validate();
    return c;
}

TrainingConfig TrainingConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void append_loss_csv(const std::string& path, const std::vector<LossRecord>& records,
                     bool write_header) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw CheckpointError("cannot open loss log: " + path);
    if (write_header) out << "step,l_d,l_adv,l_r,l_fe\n";
    out.precision(10);
    for (const auto& r : records)
        out << r.step << "," << r.l_d << "," << r.l_adv << "," << r.l_r << "," << r.l_fe << "\n";
}

std::vector<LossRecord> read_loss_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open loss log: " + path);
    std::vector<LossRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("step", 0) == 0) continue;
        LossRecord r;
        if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &r.step, &r.l_d, &r.l_adv, &r.l_r,
                        &r.l_fe) == 5)
            out.push_back(r);
    }
    return out;
}

Trainer::Trainer(TrainingConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    fe_.init(cfg_.fe, hash_combine(cfg_.seed, 1));
    disc_.init(cfg_.disc, hash_combine(cfg_.seed, 2));
    rec_.init(cfg_.rec, hash_combine(cfg_.seed, 3));
    opt_fe_.attach(fe_, cfg_.lr_fe);
    opt_d_.attach(disc_, cfg_.lr_d);
    opt_r_.attach(rec_, cfg_.lr_r);
}

void Trainer::resume_from(const std::string& ckpt_dir) {
    nn::CheckpointReader reader(ckpt_dir);
    reader.load_fe(fe_);
    if (reader.has_discriminator()) reader.load_disc(disc_);
    if (reader.has_reconstructor()) reader.load_rec(rec_);
    // Nets were re-initialized; re-collect parameter pointers.
    opt_fe_.attach(fe_, cfg_.lr_fe);
    opt_d_.attach(disc_, cfg_.lr_d);
    opt_r_.attach(rec_, cfg_.lr_r);
    auto state = reader.load_opt_state();
    auto restore = [&state](nn::Adam<float>& opt) {
        opt.visit_state([&state](const std::string& name, Tensor<float>& t) {
            auto it = state.find(name);
            if (it != state.end()) t = std::move(it->second);
        });
    };
    restore(opt_fe_);
    restore(opt_d_);
    restore(opt_r_);
    const auto extra = reader.extra();
    epoch_ = extra.epoch;
    step_ = extra.step;
    auto counts = extra.opt_step_counts;
    if (counts.count("fe")) opt_fe_.set_step_count(counts["fe"]);
    if (counts.count("disc")) opt_d_.set_step_count(counts["disc"]);
    if (counts.count("rec")) opt_r_.set_step_count(counts["rec"]);
}

std::vector<LossRecord> Trainer::train_epoch(const std::vector<Image>& dataset, int64_t epoch) {
    const int64_t n = static_cast<int64_t>(dataset.size());
    const int64_t bsz = cfg_.batch_size;
    if (n < bsz) throw PreconditionError("dataset smaller than batch size");
    const auto perm = epoch_permutation(cfg_.seed, epoch, n);
    const int64_t steps = n / bsz;

    Tensor<float> both({2 * bsz, kImageChannels, kImageSize, kImageSize});
    Tensor<float> feat, logits, gfeat, gfeat_adv, feat_dist, recons, grecons;
    std::vector<LossRecord> records;
    records.reserve(steps);

    for (int64_t s = 0; s < steps; ++s) {
        // Batch assembly: clean images in the first half, freshly sampled
        // training distortions in the second half.
        const int64_t img_sz = kImageChannels * kPixels;
        for (int64_t i = 0; i < bsz; ++i) {
            const Image& img = dataset[perm[s * bsz + i]];
            std::copy(img.data(), img.data() + img_sz, both.data() + i * img_sz);
            const uint64_t dseed = hash_combine(hash_combine(cfg_.seed, 0xd15ULL),
                                                static_cast<uint64_t>(epoch * 1000003 + s * 131 + i));
            const Image dist = apply_distortion(img, sample_training_distortion(dseed));
            std::copy(dist.data(), dist.data() + img_sz, both.data() + (bsz + i) * img_sz);
        }

        fe_.forward(both, feat);

        LossRecord rec_row;
        rec_row.step = step_;

        // --- Discriminator step ---
        if (cfg_.use_adversarial) {
            opt_d_.zero_grad();
            disc_.forward(feat, logits);
            Tensor<float> p_clean({bsz}), p_dist({bsz});
            Tensor<float> glogits({2 * bsz});
            for (int64_t i = 0; i < bsz; ++i) {
                const double pc = sigmoid(logits[i]);
                const double pd = sigmoid(logits[bsz + i]);
                p_clean[i] = static_cast<float>(pc);
                p_dist[i] = static_cast<float>(pd);
                glogits[i] = static_cast<float>((pc - 1.0) / bsz);
                glogits[bsz + i] = static_cast<float>(pd / bsz);
            }
            rec_row.l_d = loss_discriminator(p_clean, p_dist);
            check_finite(rec_row.l_d, "l_d", step_);
            disc_.backward(glogits, nullptr);
            opt_d_.step(cfg_.grad_clip);
        }

        // --- Feature extractor step ---
        gfeat.resize(std::vector<int64_t>(feat.shape()));
        gfeat.zero();
        if (cfg_.use_adversarial) {
            // Adversarial term on the distorted half, against the updated D.
            feat_dist.resize({bsz, kImageChannels, kImageSize, kImageSize});
            std::copy(feat.data() + bsz * img_sz, feat.data() + 2 * bsz * img_sz,
                      feat_dist.data());
            disc_.forward(feat_dist, logits);
            Tensor<float> p_dist({bsz});
            Tensor<float> glogits({bsz});
            for (int64_t i = 0; i < bsz; ++i) {
                const double pd = sigmoid(logits[i]);
                p_dist[i] = static_cast<float>(pd);
                glogits[i] = static_cast<float>(cfg_.lambda_d * (-pd) / bsz);
            }
            rec_row.l_adv = loss_adversarial(p_dist);
            check_finite(rec_row.l_adv, "l_adv", step_);
            disc_.backward(glogits, &gfeat_adv);
            for (int64_t i = 0; i < bsz * img_sz; ++i)
                gfeat[bsz * img_sz + i] += gfeat_adv[i];
        }
        if (cfg_.use_reconstructor) {
            opt_r_.zero_grad();
            rec_.forward(feat, recons, /*training=*/true);
            grecons.resize(std::vector<int64_t>(recons.shape()));
            grecons.zero();
            double l_r = 0;
            for (int64_t i = 0; i < 2 * bsz; ++i) {
                // Distorted features must reconstruct the *clean* image.
                const float* target = both.data() + (i % bsz) * img_sz;
                l_r += loss_reconstruction_with_grad(
                    target, recons.data() + i * img_sz, kImageChannels, kImageSize, kImageSize,
                    cfg_.lambda_s, cfg_.lambda_m, grecons.data() + i * img_sz, 1.0 / bsz);
            }
            rec_row.l_r = l_r / bsz;
            check_finite(rec_row.l_r, "l_r", step_);
            // One backward yields both the input gradients for FE and the
            // parameter gradients reused by the reconstructor step.
            Tensor<float> gfeat_rec;
            rec_.backward(grecons, &gfeat_rec);
            axpy(1.f, gfeat_rec, gfeat);
        }
        rec_row.l_fe = cfg_.lambda_d * rec_row.l_adv + rec_row.l_r;
        check_finite(rec_row.l_fe, "l_fe", step_);
        opt_fe_.zero_grad();
        fe_.backward(gfeat);
        opt_fe_.step(cfg_.grad_clip);

        // --- Reconstructor step ---
        if (cfg_.use_reconstructor) opt_r_.step(cfg_.grad_clip);

        ++step_;
        records.push_back(rec_row);
    }
    return records;
}

void Trainer::save(const std::string& dir) {
    std::map<std::string, Tensor<float>> opt_state;
    auto grab = [&opt_state](nn::Adam<float>& opt) {
        opt.visit_state(
            [&opt_state](const std::string& name, Tensor<float>& t) { opt_state[name] = t; });
    };
    grab(opt_fe_);
    grab(opt_d_);
    grab(opt_r_);
    nn::CheckpointExtra extra;
    extra.epoch = epoch_;
    extra.step = step_;
    extra.seed = cfg_.seed;
    extra.use_reconstructor = cfg_.use_reconstructor;
    extra.use_adversarial = cfg_.use_adversarial;
    extra.opt_step_counts = {{"fe", opt_fe_.step_count()},
                             {"disc", opt_d_.step_count()},
                             {"rec", opt_r_.step_count()}};
    save_checkpoint(dir, fe_, &disc_, &rec_, opt_state, extra);
}

void Trainer::fit(const std::vector<Image>& dataset, const std::string& out_dir) {
    if (dataset.empty()) throw PreconditionError("fit requires a non-empty dataset");
    if (static_cast<int64_t>(dataset.size()) < cfg_.batch_size && cfg_.epochs > 0)
        throw PreconditionError("dataset smaller than batch size");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw CheckpointError("cannot create output dir: " + out_dir);

    const std::string log_path = (fs::path(out_dir) / "loss_log.csv").string();
    const bool fresh_log = !fs::exists(log_path);
    if (fresh_log) append_loss_csv(log_path, {}, /*write_header=*/true);

    {
        std::ofstream cfg_out(fs::path(out_dir) / "training_config.json");
        cfg_out << cfg_.to_json() << "\n";
    }

    for (int64_t e = epoch_ + 1; e <= cfg_.epochs; ++e) {
        const auto records = train_epoch(dataset, e);
        append_loss_csv(log_path, records, /*write_header=*/false);
        epoch_ = e;
        if (on_epoch_end && !records.empty()) {
            LossRecord mean;
            for (const auto& r : records) {
                mean.l_d += r.l_d;
                mean.l_adv += r.l_adv;
                mean.l_r += r.l_r;
                mean.l_fe += r.l_fe;
            }
            mean.step = records.back().step;
            mean.l_d /= records.size();
            mean.l_adv /= records.size();
            mean.l_r /= records.size();
            mean.l_fe /= records.size();
            on_epoch_end(e, mean);
        }
        if (e % cfg_.checkpoint_every == 0)
            save((fs::path(out_dir) / ("ckpt_epoch_" + std::to_string(e))).string());
    }
    save((fs::path(out_dir) / "ckpt_final").string());
}

void init_checkpoint(const TrainingConfig& cfg, const std::string& dir) {
    Trainer t(cfg);
    t.save(dir);
}

}  // namespace zw
