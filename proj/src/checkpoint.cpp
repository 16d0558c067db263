#include "zerowm/nn/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "zerowm/errors.hpp"

namespace fs = std::filesystem;

namespace zw::nn {
namespace {

void write_blob(const std::string& path, const float* data, int64_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot open for write: " + path);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
    if (!out) throw CheckpointError("short write: " + path);
}

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw CheckpointError("cannot open: " + path);
    const std::streamsize n = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<size_t>(n));
    in.read(buf.data(), n);
    if (!in) throw CheckpointError("short read: " + path);
    return buf;
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    void update(const void* data, size_t n) { EVP_DigestUpdate(ctx_, data, n); }
    std::string hex() {
        unsigned char digest[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, digest, &len);
        static const char* k = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(k[digest[i] >> 4]);
            out.push_back(k[digest[i] & 15]);
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

nlohmann::json fe_arch_json(const FeatureExtractorConfig& c) {
    return {{"d_model", c.d_model}, {"heads", c.heads}, {"depth", c.depth},
            {"mlp_ratio", c.mlp_ratio}};
}

// Id covers the extractor only: arch json + parameter bytes in visit order.
std::string compute_fe_id(FeatureExtractor<float>& fe) {
    Sha256 h;
    const std::string arch = fe_arch_json(fe.cfg).dump();
    h.update(arch.data(), arch.size());
    fe.visit([&h](const std::string& name, Tensor<float>& p, Tensor<float>&) {
        h.update(name.data(), name.size());
        h.update(p.data(), static_cast<size_t>(p.numel()) * 4);
    });
    return h.hex().substr(0, 16);
}

}  // namespace

std::string sha256_hex(const void* data, size_t n) {
    Sha256 h;
    h.update(data, n);
    return h.hex();
}

void save_checkpoint(const std::string& dir, FeatureExtractor<float>& fe,
                     Discriminator<float>* disc, Reconstructor<float>* rec,
                     const std::map<std::string, Tensor<float>>& opt_state,
                     const CheckpointExtra& extra) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw CheckpointError("cannot create checkpoint dir: " + dir);

    std::vector<std::pair<std::string, const Tensor<float>*>> tensors;
    auto collect = [&tensors](const std::string& name, Tensor<float>& p, Tensor<float>&) {
        tensors.emplace_back(name, &p);
    };
    auto collect_buf = [&tensors](const std::string& name, Tensor<float>& p) {
        tensors.emplace_back(name, &p);
    };
    fe.visit(collect);
    fe.visit_buffers(collect_buf);
    if (disc) {
        disc->visit(collect);
        disc->visit_buffers(collect_buf);
    }
    if (rec) {
        rec->visit(collect);
        rec->visit_buffers(collect_buf);
    }
    for (const auto& [name, t] : opt_state) tensors.emplace_back(name, &t);

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["kind"] = "zerowm-checkpoint";
    manifest["arch"]["fe"] = fe_arch_json(fe.cfg);
    if (disc)
        manifest["arch"]["disc"] = {{"dim", disc->cfg.dim},
                                    {"heads", disc->cfg.heads},
                                    {"depth", disc->cfg.depth},
                                    {"mlp_ratio", disc->cfg.mlp_ratio}};
    if (rec)
        manifest["arch"]["rec"] = {{"encoder_channels", rec->cfg.encoder_channels},
                                   {"bottleneck", rec->cfg.bottleneck}};
    manifest["flags"] = {{"use_reconstructor", extra.use_reconstructor},
                         {"use_adversarial", extra.use_adversarial}};
    manifest["epoch"] = extra.epoch;
    manifest["step"] = extra.step;
    manifest["seed"] = extra.seed;
    manifest["param_counts"]["fe"] = fe.param_count();
    if (disc) manifest["param_counts"]["disc"] = disc->param_count();
    if (rec) manifest["param_counts"]["rec"] = rec->param_count();
    manifest["optimizer"] = {{"included", !opt_state.empty()},
                             {"step_counts", extra.opt_step_counts}};

    nlohmann::json tlist = nlohmann::json::array();
    for (const auto& [name, t] : tensors) {
        const std::string file = name + ".f32";
        write_blob((fs::path(dir) / file).string(), t->data(), t->numel());
        tlist.push_back({{"name", name}, {"shape", t->shape()}, {"file", file}, {"dtype", "f32le"}});
    }
    manifest["tensors"] = std::move(tlist);
    manifest["checkpoint_id"] = compute_fe_id(fe);

    // Manifest written last: its presence marks a complete checkpoint.
    const std::string tmp = (fs::path(dir) / ".manifest.tmp").string();
    {
        std::ofstream out(tmp);
        if (!out) throw CheckpointError("cannot write manifest: " + dir);
        out << manifest.dump(2) << "\n";
    }
    fs::rename(tmp, fs::path(dir) / "manifest.json", ec);
    if (ec) throw CheckpointError("cannot finalize manifest: " + dir);
}

CheckpointReader::CheckpointReader(const std::string& dir) : dir_(dir) {
    const fs::path mpath = fs::path(dir) / "manifest.json";
    if (!fs::exists(mpath)) throw NotFoundError("no checkpoint manifest in " + dir);
    std::ifstream in(mpath);
    in >> manifest_;
    if (manifest_.value("format_version", -1) != 1)
        throw IntegrityError("unsupported checkpoint format_version in " + dir);
    if (manifest_.value("kind", "") != "zerowm-checkpoint")
        throw IntegrityError("not a checkpoint manifest: " + dir);
    id_ = manifest_.value("checkpoint_id", "");
    for (const auto& t : manifest_.at("tensors")) tensor_index_[t.at("name")] = t;
}

FeatureExtractorConfig CheckpointReader::fe_config() const {
    const auto& a = manifest_.at("arch").at("fe");
    FeatureExtractorConfig c;
    c.d_model = a.at("d_model");
    c.heads = a.at("heads");
    c.depth = a.at("depth");
    c.mlp_ratio = a.at("mlp_ratio");
    return c;
}

bool CheckpointReader::has_discriminator() const { return manifest_.at("arch").contains("disc"); }

DiscriminatorConfig CheckpointReader::disc_config() const {
    const auto& a = manifest_.at("arch").at("disc");
    DiscriminatorConfig c;
    c.dim = a.at("dim");
    c.heads = a.at("heads");
    c.depth = a.at("depth");
    c.mlp_ratio = a.at("mlp_ratio");
    return c;
}

bool CheckpointReader::has_reconstructor() const { return manifest_.at("arch").contains("rec"); }

ReconstructorConfig CheckpointReader::rec_config() const {
    const auto& a = manifest_.at("arch").at("rec");
    ReconstructorConfig c;
    c.encoder_channels = a.at("encoder_channels").get<std::vector<int64_t>>();
    c.bottleneck = a.at("bottleneck");
    return c;
}

CheckpointExtra CheckpointReader::extra() const {
    CheckpointExtra e;
    e.epoch = manifest_.value("epoch", 0);
    e.step = manifest_.value("step", 0);
    e.seed = manifest_.value("seed", 0ULL);
    e.use_reconstructor = manifest_.at("flags").value("use_reconstructor", true);
    e.use_adversarial = manifest_.at("flags").value("use_adversarial", true);
    if (manifest_.contains("optimizer") && manifest_.at("optimizer").contains("step_counts"))
        e.opt_step_counts =
            manifest_.at("optimizer").at("step_counts").get<std::map<std::string, int64_t>>();
    return e;
}

bool CheckpointReader::has_tensor(const std::string& name) const {
    return tensor_index_.count(name) > 0;
}

Tensor<float> CheckpointReader::tensor(const std::string& name) const {
    auto it = tensor_index_.find(name);
    if (it == tensor_index_.end())
        throw NotFoundError("checkpoint tensor missing: " + name + " in " + dir_);
    const auto shape = it->second.at("shape").get<std::vector<int64_t>>();
    Tensor<float> t(shape);
    const std::string path = (fs::path(dir_) / it->second.at("file").get<std::string>()).string();
    const auto bytes = read_file(path);
    if (static_cast<int64_t>(bytes.size()) != t.numel() * 4)
        throw IntegrityError("tensor blob size mismatch for " + name + " (" +
                             std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(t.numel() * 4) + ")");
    std::memcpy(t.data(), bytes.data(), bytes.size());
    return t;
}

void CheckpointReader::load_fe(FeatureExtractor<float>& fe) const {
    fe.init(fe_config(), 0);
    fe.visit([this](const std::string& name, Tensor<float>& p, Tensor<float>&) {
        Tensor<float> t = tensor(name);
        if (t.shape() != p.shape()) throw IntegrityError("shape mismatch for " + name);
        p = std::move(t);
    });
    // Verify the stored id against the loaded parameters.
    const std::string recomputed = compute_fe_id(fe);
    if (!id_.empty() && recomputed != id_)
        throw IntegrityError("checkpoint id mismatch in " + dir_ + " (stored " + id_ +
                             ", recomputed " + recomputed + ")");
}

void CheckpointReader::load_disc(Discriminator<float>& disc) const {
    disc.init(disc_config(), 0);
    disc.visit([this](const std::string& name, Tensor<float>& p, Tensor<float>&) {
        Tensor<float> t = tensor(name);
        if (t.shape() != p.shape()) throw IntegrityError("shape mismatch for " + name);
        p = std::move(t);
    });
}

void CheckpointReader::load_rec(Reconstructor<float>& rec) const {
    rec.init(rec_config(), 0);
    auto load_one = [this](const std::string& name, Tensor<float>& p) {
        Tensor<float> t = tensor(name);
        if (t.shape() != p.shape()) throw IntegrityError("shape mismatch for " + name);
        p = std::move(t);
    };
    rec.visit([&load_one](const std::string& name, Tensor<float>& p, Tensor<float>&) {
        load_one(name, p);
    });
    rec.visit_buffers([&load_one](const std::string& name, Tensor<float>& p) { load_one(name, p); });
}

std::map<std::string, Tensor<float>> CheckpointReader::load_opt_state() const {
    std::map<std::string, Tensor<float>> out;
    for (const auto& [name, entry] : tensor_index_) {
        (void)entry;
        if (name.size() > 7 && (name.ends_with(".adam_m") || name.ends_with(".adam_v")))
            out[name] = tensor(name);
    }
    return out;
}

}  // namespace zw::nn
