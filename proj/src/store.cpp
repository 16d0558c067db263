#include "zerowm/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "zerowm/errors.hpp"

namespace fs = std::filesystem;

namespace zw {
namespace {

constexpr int kFormatVersion = 1;

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// flock-based single-writer guard.
class WriterLock {
public:
    explicit WriterLock(const std::string& path) {
        fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw CheckpointError("cannot open lock file: " + path);
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw CheckpointError("cannot acquire store lock: " + path);
        }
    }
    ~WriterLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

private:
    int fd_ = -1;
};

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw CheckpointError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw CheckpointError("cannot rename " + tmp.string());
}

void write_blob(const fs::path& path, const float* data, int64_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
    if (!out) throw CheckpointError("short write to " + path.string());
}

Tensor<float> read_blob(const fs::path& path, std::vector<int64_t> shape) {
    Tensor<float> t(std::move(shape));
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IntegrityError("missing blob " + path.string());
    const std::streamsize size = in.tellg();
    if (size != static_cast<std::streamsize>(t.numel() * 4))
        throw IntegrityError("blob size mismatch for " + path.string() + " (" +
                             std::to_string(size) + " bytes, expected " +
                             std::to_string(t.numel() * 4) + ")");
    in.seekg(0);
    in.read(reinterpret_cast<char*>(t.data()), size);
    if (!in) throw IntegrityError("short read from " + path.string());
    return t;
}

nlohmann::json read_index(const fs::path& root) {
    const fs::path path = root / "index.json";
    if (!fs::exists(path)) {
        return {{"format_version", kFormatVersion}, {"entries", nlohmann::json::object()}};
    }
    std::ifstream in(path);
    nlohmann::json idx;
    in >> idx;
    if (idx.value("format_version", -1) != kFormatVersion)
        throw IntegrityError("unsupported store format_version in " + path.string());
    return idx;
}

}  // namespace

SignatureStore::SignatureStore(const std::string& root) : root_(root) {
    std::error_code ec;
    fs::create_directories(fs::path(root) / "records", ec);
    if (ec) throw CheckpointError("cannot create store at " + root);
}

std::string SignatureStore::put(const SignatureRecord& record) {
    if (record.record_id.empty()) throw ParameterError("record_id must not be empty");
    WriterLock lock((fs::path(root_) / ".lock").string());

    nlohmann::json idx = read_index(root_);
    if (idx["entries"].contains(record.record_id))
        throw ConflictError("record already exists: " + record.record_id);

    const fs::path rec_dir = fs::path(root_) / "records" / record.record_id;
    const fs::path tmp_dir = fs::path(root_) / "records" / ("." + record.record_id + ".tmp");
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    fs::remove_all(rec_dir, ec);  // orphan from an earlier interrupted put
    fs::create_directories(tmp_dir, ec);
    if (ec) throw CheckpointError("cannot create record dir: " + tmp_dir.string());

    const auto& sig = record.signature;
    write_blob(tmp_dir / "C.f32", sig.c.data(), sig.c.numel());
    write_blob(tmp_dir / "psi_w.f32", sig.psi.w.data(), sig.psi.w.numel());
    write_blob(tmp_dir / "psi_b.f32", sig.psi.b.data(), sig.psi.b.numel());

    const std::string created_at = record.created_at.empty() ? now_iso8601() : record.created_at;
    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["record_id"] = record.record_id;
    manifest["k"] = sig.k;
    manifest["d"] = sig.d;
    manifest["creation_seed"] = sig.creation_seed;
    manifest["watermark_digest"] = record.watermark_digest;
    manifest["extractor_checkpoint_id"] = record.extractor_checkpoint_id;
    manifest["created_at"] = created_at;
    manifest["tensors"] = {{{"name", "C"}, {"shape", {sig.k, sig.d}}, {"file", "C.f32"}},
                           {{"name", "psi_w"}, {"shape", {sig.d, kPooledDim}}, {"file", "psi_w.f32"}},
                           {{"name", "psi_b"}, {"shape", {sig.d}}, {"file", "psi_b.f32"}}};
    write_file_atomic(tmp_dir / "manifest.json", manifest.dump(2) + "\n");

    fs::rename(tmp_dir, rec_dir, ec);
    if (ec) throw CheckpointError("cannot finalize record dir: " + rec_dir.string());

    if (before_index_commit) before_index_commit();

    idx["entries"][record.record_id] = {
        {"path", ("records/" + record.record_id)},
        {"watermark_digest", record.watermark_digest},
        {"checkpoint_id", record.extractor_checkpoint_id},
        {"created_at", created_at},
    };
    write_file_atomic(fs::path(root_) / "index.json", idx.dump(2) + "\n");
    return record.record_id;
}

bool SignatureStore::contains(const std::string& record_id) const {
    return read_index(root_)["entries"].contains(record_id);
}

std::vector<std::string> SignatureStore::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, entry] : read_index(root_)["entries"].items()) {
        (void)entry;
        out.push_back(id);
    }
    return out;
}

SignatureRecord SignatureStore::get(const std::string& record_id) const {
    nlohmann::json idx = read_index(root_);
    if (!idx["entries"].contains(record_id))
        throw NotFoundError("record not found: " + record_id);
    const fs::path rec_dir =
        fs::path(root_) / idx["entries"][record_id].at("path").get<std::string>();
    std::ifstream in(rec_dir / "manifest.json");
    if (!in) throw IntegrityError("record manifest missing: " + rec_dir.string());
    nlohmann::json manifest;
    in >> manifest;
    if (manifest.value("format_version", -1) != kFormatVersion)
        throw IntegrityError("unsupported record format_version: " + rec_dir.string());

    SignatureRecord rec;
    rec.record_id = manifest.at("record_id");
    rec.watermark_digest = manifest.at("watermark_digest");
    rec.extractor_checkpoint_id = manifest.at("extractor_checkpoint_id");
    rec.created_at = manifest.at("created_at");
    rec.signature.k = manifest.at("k");
    rec.signature.d = manifest.at("d");
    rec.signature.creation_seed = manifest.at("creation_seed");
    if (rec.signature.k < 1 || rec.signature.d < 1)
        throw IntegrityError("invalid record shape metadata: " + rec_dir.string());
    rec.signature.c = read_blob(rec_dir / "C.f32", {rec.signature.k, rec.signature.d});
    rec.signature.psi.w = read_blob(rec_dir / "psi_w.f32", {rec.signature.d, kPooledDim});
    rec.signature.psi.b = read_blob(rec_dir / "psi_b.f32", {rec.signature.d});
    if (rec.watermark_digest.size() != 64)
        throw IntegrityError("invalid watermark digest length in " + rec_dir.string());
    return rec;
}

}  // namespace zw
