#include "zerowm/eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "zerowm/errors.hpp"
#include "zerowm/metrics.hpp"
#include "zerowm/rng.hpp"

namespace fs = std::filesystem;

namespace zw {
namespace {

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double mean = 0;
    for (double x : v) mean += x;
    mean /= v.size();
    double acc = 0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / (v.size() - 1));
}

double mean_of(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    return v.empty() ? 0.0 : m / v.size();
}

nlohmann::json cell_to_json(const MetricsCell& c) {
    nlohmann::json j;
    j["distortion"] = {{"kind", kind_name(c.spec.kind)}, {"params", c.spec.params},
                       {"seed", c.spec.seed}};
    j["seed"] = c.seed;
    if (c.approximate) j["approximate"] = true;
    auto put = [&j](const char* name, const std::optional<double>& v) {
        if (v) j[name] = *v;
    };
    put("cosine_mean", c.cosine_mean);
    put("cosine_std", c.cosine_std);
    put("psnr_mean", c.psnr_mean);
    put("psnr_std", c.psnr_std);
    put("ber", c.ber);
    put("bit_accuracy", c.bit_accuracy);
    return j;
}

}  // namespace

Tensor<float> fe_feature(nn::FeatureExtractor<float>& fe, const Image& image) {
    Tensor<float> batch({1, kImageChannels, kImageSize, kImageSize});
    std::copy(image.data(), image.data() + image.numel(), batch.data());
    Tensor<float> feat;
    fe.forward(batch, feat);
    feat.reshape({kImageChannels, kImageSize, kImageSize});
    return feat;
}

void MetricsReport::validate() const {
    std::set<std::string> seen;
    for (const auto& c : rows) {
        if (c.cosine_mean && (*c.cosine_mean < -1.0 - 1e-9 || *c.cosine_mean > 1.0 + 1e-9))
            throw IntegrityError("cosine out of [-1,1] in report");
        if ((c.cosine_std && *c.cosine_std < 0) || (c.psnr_std && *c.psnr_std < 0))
            throw IntegrityError("negative std in report");
        if (c.ber && c.bit_accuracy && std::fabs(*c.ber + *c.bit_accuracy - 1.0) > 1e-9)
            throw IntegrityError("ber + bit_accuracy != 1 in report");
        if (!seen.insert(c.spec.describe()).second)
            throw IntegrityError("duplicate grid cell in report: " + c.spec.describe());
    }
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["format_version"] = 1;
    j["n_images"] = n_images;
    j["n_bits_total"] = n_bits_total;
    j["runs"] = runs;
    j["extractor_checkpoint_id"] = extractor_checkpoint_id;
    j["seed"] = seed;
    j["rows"] = nlohmann::json::array();
    for (const auto& c : rows) j["rows"].push_back(cell_to_json(c));
    return j.dump(2);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "kind,params,cell_seed,approximate,cosine_mean,cosine_std,psnr_mean,psnr_std,ber,"
          "bit_accuracy\n";
    for (const auto& c : rows) {
        os << kind_name(c.spec.kind) << ",\"";
        bool first = true;
        for (const auto& [k, v] : c.spec.params) {
            if (!first) os << ";";
            first = false;
            os << k << "=" << v;
        }
        os << "\"," << c.seed << "," << (c.approximate ? 1 : 0) << ",";
        auto put = [&os](const std::optional<double>& v, bool last = false) {
            if (v) os << *v;
            if (!last) os << ",";
        };
        put(c.cosine_mean);
        put(c.cosine_std);
        put(c.psnr_mean);
        put(c.psnr_std);
        put(c.ber);
        put(c.bit_accuracy, true);
        os << "\n";
    }
    return os.str();
}

void MetricsReport::save(const std::string& dir, const std::string& name) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream j(fs::path(dir) / (name + ".json"));
    j << to_json() << "\n";
    std::ofstream c(fs::path(dir) / (name + ".csv"));
    c << to_csv();
}

const MetricsCell* MetricsReport::find(DistortionKind kind, const std::string& param,
                                       double value) const {
    for (const auto& c : rows) {
        if (c.spec.kind != kind) continue;
        if (param.empty()) return &c;
        auto it = c.spec.params.find(param);
        if (it != c.spec.params.end() && std::fabs(it->second - value) < 1e-12) return &c;
    }
    return nullptr;
}

MetricsCell invariance_cell(nn::FeatureExtractor<float>& fe, nn::Reconstructor<float>* rec,
                            const std::vector<Image>& images, const DistortionSpec& spec,
                            int64_t runs, uint64_t cell_seed) {
    if (images.empty()) throw PreconditionError("invariance sweep needs at least one image");
    if (runs < 1) throw PreconditionError("runs must be >= 1");
    MetricsCell cell;
    cell.spec = spec;
    cell.seed = cell_seed;
    cell.approximate = spec.kind == DistortionKind::gif;

    std::vector<Tensor<float>> clean_feats;
    clean_feats.reserve(images.size());
    for (const auto& img : images) clean_feats.push_back(fe_feature(fe, img));

    std::vector<double> run_cos, run_psnr;
    for (int64_t r = 0; r < runs; ++r) {
        DistortionSpec s = spec;
        s.seed = hash_combine(cell_seed, static_cast<uint64_t>(r));
        std::vector<double> cos_vals, psnr_vals;
        for (size_t i = 0; i < images.size(); ++i) {
            const Image dist = apply_distortion(images[i], s);
            const Tensor<float> f_dist = fe_feature(fe, dist);
            cos_vals.push_back(cosine_similarity(clean_feats[i], f_dist));
            if (rec) {
                Tensor<float> batch({1, kImageChannels, kImageSize, kImageSize});
                std::copy(f_dist.data(), f_dist.data() + f_dist.numel(), batch.data());
                Tensor<float> recon;
                rec->forward(batch, recon, /*training=*/false);
                recon.reshape({kImageChannels, kImageSize, kImageSize});
                psnr_vals.push_back(psnr(images[i], recon));
            }
        }
        run_cos.push_back(mean_of(cos_vals));
        if (rec) run_psnr.push_back(mean_of(psnr_vals));
    }
    cell.cosine_mean = mean_of(run_cos);
    cell.cosine_std = sample_std(run_cos);
    if (rec) {
        cell.psnr_mean = mean_of(run_psnr);
        cell.psnr_std = sample_std(run_psnr);
    }
    return cell;
}

MetricsReport invariance_sweep(nn::FeatureExtractor<float>& fe, nn::Reconstructor<float>* rec,
                               const std::string& checkpoint_id,
                               const std::vector<Image>& images,
                               const std::vector<DistortionSpec>& grid, int64_t runs,
                               uint64_t seed) {
    MetricsReport report;
    report.n_images = static_cast<int64_t>(images.size());
    report.runs = runs;
    report.extractor_checkpoint_id = checkpoint_id;
    report.seed = seed;
    for (size_t ci = 0; ci < grid.size(); ++ci) {
        const uint64_t cell_seed = hash_combine(seed, static_cast<uint64_t>(ci));
        report.rows.push_back(invariance_cell(fe, rec, images, grid[ci], runs, cell_seed));
    }
    report.validate();
    return report;
}

MetricsCell watermark_cell(nn::FeatureExtractor<float>& fe, const std::string& checkpoint_id,
                           const std::vector<WatermarkCase>& cases, const DistortionSpec& spec,
                           uint64_t cell_seed) {
    if (cases.empty()) throw PreconditionError("watermark sweep needs at least one case");
    MetricsCell cell;
    cell.spec = spec;
    cell.seed = cell_seed;
    cell.approximate = spec.kind == DistortionKind::gif;
    int64_t wrong = 0, total = 0;
    for (size_t i = 0; i < cases.size(); ++i) {
        DistortionSpec s = spec;
        s.seed = hash_combine(cell_seed, static_cast<uint64_t>(i));
        const Image dist = apply_distortion(cases[i].image, s);
        const WatermarkMessage got = extract_bits(dist, cases[i].record, fe, checkpoint_id);
        for (int64_t b = 0; b < got.length(); ++b)
            wrong += got.bits[b] != cases[i].expected.bits[b];
        total += got.length();
    }
    cell.ber = static_cast<double>(wrong) / static_cast<double>(total);
    cell.bit_accuracy = 1.0 - *cell.ber;
    return cell;
}

MetricsReport watermark_robustness_sweep(nn::FeatureExtractor<float>& fe,
                                         const std::string& checkpoint_id,
                                         const std::vector<WatermarkCase>& cases,
                                         const std::vector<DistortionSpec>& grid, uint64_t seed) {
    for (const auto& c : cases) {
        if (c.record.extractor_checkpoint_id != checkpoint_id)
            throw IntegrityError("case record " + c.record.record_id +
                                 " does not match the supplied checkpoint");
        if (c.expected.length() != c.record.signature.k)
            throw PreconditionError("expected bits length mismatch for " + c.record.record_id);
    }
    MetricsReport report;
    report.n_images = static_cast<int64_t>(cases.size());
    report.n_bits_total =
        report.n_images * (cases.empty() ? 0 : cases.front().record.signature.k);
    report.extractor_checkpoint_id = checkpoint_id;
    report.seed = seed;
    for (size_t ci = 0; ci < grid.size(); ++ci) {
        const uint64_t cell_seed = hash_combine(seed, static_cast<uint64_t>(ci));
        report.rows.push_back(watermark_cell(fe, checkpoint_id, cases, grid[ci], cell_seed));
    }
    report.validate();
    return report;
}

Tensor<double> collapse_heatmap(nn::FeatureExtractor<float>& fe,
                                const std::vector<Image>& images) {
    const int64_t n = static_cast<int64_t>(images.size());
    if (n < 2) throw PreconditionError("collapse heatmap needs at least two images");
    std::vector<Tensor<float>> feats;
    feats.reserve(n);
    for (const auto& img : images) feats.push_back(fe_feature(fe, img));
    Tensor<double> m({n, n});
    for (int64_t i = 0; i < n; ++i) {
        m[i * n + i] = 1.0;
        for (int64_t j = i + 1; j < n; ++j) {
            const double c = cosine_similarity(feats[i], feats[j]);
            m[i * n + j] = c;
            m[j * n + i] = c;
        }
    }
    return m;
}

double offdiagonal_mean(const Tensor<double>& matrix) {
    const int64_t n = matrix.dim(0);
    double s = 0;
    int64_t cnt = 0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j)
            if (i != j) {
                s += matrix[i * n + j];
                ++cnt;
            }
    return s / cnt;
}

ProbeResult train_softmax_probe(const std::vector<std::vector<float>>& train_feats,
                                const std::vector<int>& train_labels,
                                const std::vector<std::vector<float>>& test_feats,
                                const std::vector<int>& test_labels, const ProbeOptions& opts) {
    if (train_feats.empty() || train_feats.size() != train_labels.size())
        throw PreconditionError("probe training set empty or mismatched");
    const int64_t dim = static_cast<int64_t>(train_feats[0].size());
    int n_classes = 0;
    for (int l : train_labels) n_classes = std::max(n_classes, l + 1);
    std::vector<int64_t> counts(n_classes, 0);
    for (int l : train_labels) {
        if (l < 0) throw PreconditionError("negative probe label");
        ++counts[l];
    }
    for (int c = 0; c < n_classes; ++c)
        if (counts[c] == 0)
            throw PreconditionError("class " + std::to_string(c) + " absent from training set");
    for (int l : test_labels)
        if (l < 0 || l >= n_classes)
            throw PreconditionError("test label outside the training classes");

    // Per-feature standardization from the training set.
    std::vector<double> mu(dim, 0), sd(dim, 0);
    for (const auto& f : train_feats)
        for (int64_t j = 0; j < dim; ++j) mu[j] += f[j];
    for (int64_t j = 0; j < dim; ++j) mu[j] /= train_feats.size();
    for (const auto& f : train_feats)
        for (int64_t j = 0; j < dim; ++j) sd[j] += (f[j] - mu[j]) * (f[j] - mu[j]);
    for (int64_t j = 0; j < dim; ++j) sd[j] = std::sqrt(sd[j] / train_feats.size()) + 1e-8;

    const int64_t n = static_cast<int64_t>(train_feats.size());
    std::vector<double> w(n_classes * dim, 0.0), b(n_classes, 0.0);
    std::vector<double> mw(w.size(), 0), vw(w.size(), 0), mb(b.size(), 0), vb(b.size(), 0);
    std::vector<double> logits(n_classes), probs(n_classes);
    std::vector<double> gw(w.size()), gb(b.size());

    auto forward_row = [&](const std::vector<float>& f) {
        for (int c = 0; c < n_classes; ++c) {
            double acc = b[c];
            const double* wr = w.data() + c * dim;
            for (int64_t j = 0; j < dim; ++j) acc += wr[j] * ((f[j] - mu[j]) / sd[j]);
            logits[c] = acc;
        }
        double mx = logits[0];
        for (int c = 1; c < n_classes; ++c) mx = std::max(mx, logits[c]);
        double sum = 0;
        for (int c = 0; c < n_classes; ++c) {
            probs[c] = std::exp(logits[c] - mx);
            sum += probs[c];
        }
        for (int c = 0; c < n_classes; ++c) probs[c] /= sum;
    };

    int64_t t = 0;
    for (int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            forward_row(train_feats[i]);
            for (int c = 0; c < n_classes; ++c) {
                const double g = (probs[c] - (c == train_labels[i] ? 1.0 : 0.0)) / n;
                gb[c] += g;
                double* gwr = gw.data() + c * dim;
                const auto& f = train_feats[i];
                for (int64_t j = 0; j < dim; ++j) gwr[j] += g * ((f[j] - mu[j]) / sd[j]);
            }
        }
        ++t;
        const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t));
        for (size_t i = 0; i < w.size(); ++i) {
            mw[i] = 0.9 * mw[i] + 0.1 * gw[i];
            vw[i] = 0.999 * vw[i] + 0.001 * gw[i] * gw[i];
            w[i] -= opts.lr * (mw[i] / bc1) / (std::sqrt(vw[i] / bc2) + 1e-8);
        }
        for (size_t i = 0; i < b.size(); ++i) {
            mb[i] = 0.9 * mb[i] + 0.1 * gb[i];
            vb[i] = 0.999 * vb[i] + 0.001 * gb[i] * gb[i];
            b[i] -= opts.lr * (mb[i] / bc1) / (std::sqrt(vb[i] / bc2) + 1e-8);
        }
    }

    ProbeResult result;
    const int64_t m = static_cast<int64_t>(test_feats.size());
    if (m == 0) return result;
    int64_t hit1 = 0, hit5 = 0;
    for (int64_t i = 0; i < m; ++i) {
        forward_row(test_feats[i]);
        std::vector<int> order(n_classes);
        for (int c = 0; c < n_classes; ++c) order[c] = c;
        std::partial_sort(order.begin(), order.begin() + std::min(5, n_classes), order.end(),
                          [&](int a2, int b2) { return logits[a2] > logits[b2]; });
        if (order[0] == test_labels[i]) ++hit1;
        for (int r = 0; r < std::min(5, n_classes); ++r)
            if (order[r] == test_labels[i]) {
                ++hit5;
                break;
            }
    }
    result.top1 = static_cast<double>(hit1) / m;
    result.top5 = static_cast<double>(hit5) / m;
    return result;
}

ProbeResult linear_probe(nn::FeatureExtractor<float>& fe, const ImageSet& train,
                         const ImageSet& test, const ProbeOptions& opts) {
    auto pooled_features = [&fe](const ImageSet& set) {
        std::vector<std::vector<float>> feats;
        feats.reserve(set.images.size());
        for (const auto& img : set.images) {
            const Tensor<float> pooled = tile_pool(fe_feature(fe, img));
            feats.emplace_back(pooled.data(), pooled.data() + pooled.numel());
        }
        return feats;
    };
    for (int l : train.labels)
        if (l < 0) throw PreconditionError("probe requires labeled training images");
    return train_softmax_probe(pooled_features(train), train.labels, pooled_features(test),
                               test.labels, opts);
}

}  // namespace zw
