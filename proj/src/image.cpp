#include "zerowm/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "zerowm/errors.hpp"

namespace fs = std::filesystem;

namespace zw {

void validate_image(const Image& img) {
    if (img.rank() != 3 || img.dim(0) != kImageChannels || img.dim(1) != kImageSize ||
        img.dim(2) != kImageSize) {
        throw PreconditionError("image must be 3x128x128");
    }
    for (int64_t i = 0; i < img.numel(); ++i) {
        float v = img[i];
        if (!std::isfinite(v) || v < 0.f || v > 1.f)
            throw PreconditionError("image values must be finite and in [0,1]");
    }
}

Image load_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw NotFoundError("cannot read image: " + path);
    if (bgr.rows != kImageSize || bgr.cols != kImageSize) {
        cv::Mat resized;
        cv::resize(bgr, resized, cv::Size(kImageSize, kImageSize), 0, 0, cv::INTER_LINEAR);
        bgr = resized;
    }
    Image out({kImageChannels, kImageSize, kImageSize});
    for (int64_t y = 0; y < kImageSize; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
        for (int64_t x = 0; x < kImageSize; ++x) {
            at(out, 0, y, x) = static_cast<float>(row[x][2]) / 255.f;
            at(out, 1, y, x) = static_cast<float>(row[x][1]) / 255.f;
            at(out, 2, y, x) = static_cast<float>(row[x][0]) / 255.f;
        }
    }
    return out;
}

void save_image(const Image& img, const std::string& path) {
    if (img.rank() != 3 || img.dim(0) != 3) throw PreconditionError("expected CHW RGB image");
    const int h = static_cast<int>(img.dim(1));
    const int w = static_cast<int>(img.dim(2));
    cv::Mat bgr(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < w; ++x) {
            auto to_u8 = [&](int c) {
                float v = at(img, c, y, x);
                v = std::clamp(v, 0.f, 1.f);
                return static_cast<uint8_t>(std::lround(v * 255.f));
            };
            row[x] = cv::Vec3b(to_u8(2), to_u8(1), to_u8(0));
        }
    }
    if (!cv::imwrite(path, bgr)) throw CheckpointError("cannot write image: " + path);
}

ImageSet load_image_dir(const std::string& dir, int64_t limit) {
    if (!fs::is_directory(dir)) throw NotFoundError("not a directory: " + dir);

    std::map<std::string, int> labels;
    fs::path label_file = fs::path(dir) / "labels.csv";
    if (fs::exists(label_file)) {
        std::ifstream in(label_file);
        std::string line;
        while (std::getline(in, line)) {
            auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            std::string name = line.substr(0, comma);
            if (name == "filename") continue;  // header
            labels[name] = std::stoi(line.substr(comma + 1));
        }
    }

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm" || ext == ".bmp")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (limit >= 0 && static_cast<int64_t>(files.size()) > limit) files.resize(limit);

    ImageSet set;
    for (const auto& f : files) {
        set.images.push_back(load_image(f));
        set.paths.push_back(f);
        auto it = labels.find(fs::path(f).filename().string());
        set.labels.push_back(it == labels.end() ? -1 : it->second);
    }
    return set;
}

}  // namespace zw
