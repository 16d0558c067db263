#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "zerowm/image.hpp"
#include "zerowm/nn/adam.hpp"
#include "zerowm/nn/checkpoint.hpp"
#include "zerowm/nn/nets.hpp"

namespace zw {

struct TrainingConfig {
    double lr_fe = 5e-4;
    double lr_d = 1e-3;
    double lr_r = 1e-4;
    double lambda_s = 0.5;   // SSIM weight in L_R
    double lambda_m = 0.5;   // MSE weight in L_R
    double lambda_d = 0.1;   // adversarial weight in L_FE
    int64_t batch_size = 8;
    int64_t epochs = 20;
    int64_t checkpoint_every = 10;
    uint64_t seed = 0;
    bool use_reconstructor = true;
    bool use_adversarial = true;
    double grad_clip = 5.0;
    nn::FeatureExtractorConfig fe;
    nn::DiscriminatorConfig disc;
    nn::ReconstructorConfig rec;

    void validate() const;
    std::string to_json() const;
    static TrainingConfig from_json(const std::string& text);
    static TrainingConfig load(const std::string& path);
};

struct LossRecord {
    int64_t step = 0;
    double l_d = 0, l_adv = 0, l_r = 0, l_fe = 0;
};

void append_loss_csv(const std::string& path, const std::vector<LossRecord>& records,
                     bool write_header);
std::vector<LossRecord> read_loss_csv(const std::string& path);

// Three-player noise-adversarial training. Per batch, in order: the
// discriminator step (labels clean=1 / distorted=0), the feature-extractor
// step (lambda_d * L_adv + L_R over clean and distorted reconstructions,
// both targeting the clean image), and the reconstructor step (L_R).
// Features are extracted once per batch and shared by the three steps.
class Trainer {
public:
    explicit Trainer(TrainingConfig cfg);

    // Continue from a saved checkpoint (architecture must match the config).
    void resume_from(const std::string& ckpt_dir);

    std::vector<LossRecord> train_epoch(const std::vector<Image>& dataset, int64_t epoch);

    // Full loop: checkpoints every checkpoint_every epochs plus final, loss
    // log appended to <out_dir>/loss_log.csv.
    void fit(const std::vector<Image>& dataset, const std::string& out_dir);

    void save(const std::string& dir);

    nn::FeatureExtractor<float>& fe() { return fe_; }
    nn::Discriminator<float>& disc() { return disc_; }
    nn::Reconstructor<float>& rec() { return rec_; }
    const TrainingConfig& config() const { return cfg_; }
    int64_t completed_epochs() const { return epoch_; }
    int64_t global_step() const { return step_; }

    std::function<void(int64_t epoch, const LossRecord& mean)> on_epoch_end;

private:
    TrainingConfig cfg_;
    nn::FeatureExtractor<float> fe_;
    nn::Discriminator<float> disc_;
    nn::Reconstructor<float> rec_;
    nn::Adam<float> opt_fe_, opt_d_, opt_r_;
    int64_t epoch_ = 0;  // completed epochs
    int64_t step_ = 0;   // global batch counter
};

// Writes an untrained (randomly initialized) checkpoint; the control model
// used by the evaluation harnesses, and the epochs=0 case of train-features.
void init_checkpoint(const TrainingConfig& cfg, const std::string& dir);

}  // namespace zw
