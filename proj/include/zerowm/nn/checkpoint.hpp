#pragma once

#include <nlohmann/json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zerowm/nn/nets.hpp"

namespace zw::nn {

// Checkpoint container: a directory with manifest.json plus one raw
// little-endian float32 file per named tensor. The checkpoint id is a
// 16-hex-digit SHA-256 prefix over the feature-extractor architecture and
// parameter bytes, so it identifies exactly what extraction depends on.

std::string sha256_hex(const void* data, size_t n);

struct CheckpointExtra {
    int64_t epoch = 0;
    int64_t step = 0;
    uint64_t seed = 0;
    bool use_reconstructor = true;
    bool use_adversarial = true;
    std::map<std::string, int64_t> opt_step_counts;  // empty -> no optimizer state
};

void save_checkpoint(const std::string& dir, FeatureExtractor<float>& fe,
                     Discriminator<float>* disc, Reconstructor<float>* rec,
                     const std::map<std::string, Tensor<float>>& opt_state,
                     const CheckpointExtra& extra);

class CheckpointReader {
public:
    explicit CheckpointReader(const std::string& dir);

    const nlohmann::json& manifest() const { return manifest_; }
    const std::string& id() const { return id_; }
    const std::string& dir() const { return dir_; }

    FeatureExtractorConfig fe_config() const;
    bool has_discriminator() const;
    DiscriminatorConfig disc_config() const;
    bool has_reconstructor() const;
    ReconstructorConfig rec_config() const;
    CheckpointExtra extra() const;

    bool has_tensor(const std::string& name) const;
    Tensor<float> tensor(const std::string& name) const;

    // Initializes the net from the stored architecture and fills parameters.
    void load_fe(FeatureExtractor<float>& fe) const;
    void load_disc(Discriminator<float>& disc) const;
    void load_rec(Reconstructor<float>& rec) const;
    std::map<std::string, Tensor<float>> load_opt_state() const;

private:
    std::string dir_;
    nlohmann::json manifest_;
    std::string id_;
    std::map<std::string, nlohmann::json> tensor_index_;
};

}  // namespace zw::nn
