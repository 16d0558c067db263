#pragma once

#include <string>
#include <vector>

#include "zerowm/tensor.hpp"

namespace zw {

// Images are CHW float32 RGB tensors with values in [0,1].
using Image = Tensor<float>;

constexpr int64_t kImageSize = 128;
constexpr int64_t kImageChannels = 3;
constexpr int64_t kPatchSize = 16;
constexpr int64_t kPatchGrid = kImageSize / kPatchSize;          // 8
constexpr int64_t kNumPatches = kPatchGrid * kPatchGrid;         // 64
constexpr int64_t kPatchDim = kPatchSize * kPatchSize * kImageChannels;  // 768
constexpr int64_t kPixels = kImageSize * kImageSize;

inline Image make_image(float fill = 0.f) {
    Image img({kImageChannels, kImageSize, kImageSize});
    img.fill(fill);
    return img;
}

inline float& at(Image& img, int64_t c, int64_t y, int64_t x) {
    return img[(c * img.dim(1) + y) * img.dim(2) + x];
}
inline float at(const Image& img, int64_t c, int64_t y, int64_t x) {
    return img[(c * img.dim(1) + y) * img.dim(2) + x];
}

void validate_image(const Image& img);

// Reads any format OpenCV understands; output is 128x128 CHW RGB in [0,1]
// (bilinear resize when the source is a different size).
Image load_image(const std::string& path);
// 8-bit export; lossless for PNG/PPM extensions.
void save_image(const Image& img, const std::string& path);

// Directory loader: every *.png/*.jpg/*.jpeg/*.ppm/*.bmp file, sorted by name.
// Returns the images and their paths.
struct ImageSet {
    std::vector<Image> images;
    std::vector<std::string> paths;
    std::vector<int> labels;  // parallel to images; -1 when unlabeled
};
ImageSet load_image_dir(const std::string& dir, int64_t limit = -1);

}  // namespace zw
