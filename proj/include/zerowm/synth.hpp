#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zerowm/image.hpp"

namespace zw {

constexpr int kSynthClasses = 10;

// Procedural 128x128 images: a smooth two-color gradient background with
// low-amplitude value noise, plus one class-defining foreground pattern.
// Classes: 0 circle, 1 square, 2 triangle, 3 ring, 4 cross, 5 horizontal
// stripes, 6 vertical stripes, 7 checkerboard, 8 diamond, 9 twin blobs.
// Deterministic per (seed, index); subsets are stable under count changes.
Image synth_image(uint64_t seed, int64_t index, int* label_out = nullptr);

// Writes PNGs (img_000000.png ...) plus labels.csv when labeled.
void synth_dataset(const std::string& out_dir, int64_t count, uint64_t seed, bool labeled);

// In-memory variant used by tests and the acceptance harness.
std::vector<Image> synth_images(uint64_t seed, int64_t count, std::vector<int>* labels = nullptr);

}  // namespace zw
