#pragma once

#include <optional>
#include <string>
#include <vector>

#include "zerowm/distort.hpp"
#include "zerowm/image.hpp"
#include "zerowm/nn/nets.hpp"
#include "zerowm/wm.hpp"

namespace zw {

// One forward pass to the spatial feature of a single image.
Tensor<float> fe_feature(nn::FeatureExtractor<float>& fe, const Image& image);

struct MetricsCell {
    DistortionSpec spec;
    std::optional<double> cosine_mean, cosine_std;
    std::optional<double> psnr_mean, psnr_std;
    std::optional<double> ber, bit_accuracy;
    uint64_t seed = 0;        // base seed this cell was computed from
    bool approximate = false; // uniform-palette gif cells
};

struct MetricsReport {
    std::vector<MetricsCell> rows;
    int64_t n_images = 0;
    int64_t n_bits_total = 0;
    int64_t runs = 1;
    std::string extractor_checkpoint_id;
    uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    std::string to_csv() const;
    // Writes <dir>/<name>.json and <dir>/<name>.csv.
    void save(const std::string& dir, const std::string& name) const;
    const MetricsCell* find(DistortionKind kind, const std::string& param,
                            double value) const;
};

// Feature cosine (flattened spatial tensors) and reconstruction PSNR
// (x vs R(FE(x'))) per grid cell, mean +- std over `runs` distortion seeds.
MetricsReport invariance_sweep(nn::FeatureExtractor<float>& fe, nn::Reconstructor<float>* rec,
                               const std::string& checkpoint_id,
                               const std::vector<Image>& images,
                               const std::vector<DistortionSpec>& grid, int64_t runs,
                               uint64_t seed);

// Single re-derivable cell of the invariance sweep.
MetricsCell invariance_cell(nn::FeatureExtractor<float>& fe, nn::Reconstructor<float>* rec,
                            const std::vector<Image>& images, const DistortionSpec& spec,
                            int64_t runs, uint64_t cell_seed);

struct WatermarkCase {
    Image image;
    SignatureRecord record;
    WatermarkMessage expected;
};

// BER per distortion cell aggregated over all bits of all cases.
MetricsReport watermark_robustness_sweep(nn::FeatureExtractor<float>& fe,
                                         const std::string& checkpoint_id,
                                         const std::vector<WatermarkCase>& cases,
                                         const std::vector<DistortionSpec>& grid, uint64_t seed);

MetricsCell watermark_cell(nn::FeatureExtractor<float>& fe, const std::string& checkpoint_id,
                           const std::vector<WatermarkCase>& cases, const DistortionSpec& spec,
                           uint64_t cell_seed);

// Pairwise cosine matrix of flattened features; symmetric, unit diagonal.
Tensor<double> collapse_heatmap(nn::FeatureExtractor<float>& fe, const std::vector<Image>& images);
double offdiagonal_mean(const Tensor<double>& matrix);

struct ProbeOptions {
    int64_t epochs = 100;
    double lr = 1e-2;
    uint64_t seed = 0;
};

struct ProbeResult {
    double top1 = 0, top5 = 0;
};

// Multinomial linear classifier on frozen pooled features.
ProbeResult train_softmax_probe(const std::vector<std::vector<float>>& train_feats,
                                const std::vector<int>& train_labels,
                                const std::vector<std::vector<float>>& test_feats,
                                const std::vector<int>& test_labels, const ProbeOptions& opts);

ProbeResult linear_probe(nn::FeatureExtractor<float>& fe, const ImageSet& train,
                         const ImageSet& test, const ProbeOptions& opts);

}  // namespace zw
