#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zerowm/image.hpp"

namespace zw {

enum class DistortionKind {
    identity,
    rotation,
    width_shift,
    height_shift,
    shear,
    zoom,
    hflip,
    gaussian_blur,
    solarization,
    cutout,
    crop,
    jpeg,
    brightness,
    contrast,
    hue,
    saturation,
    gaussian_noise,
    salt_pepper,
    resize_width,
    gif,
};

enum class DistortionPhase { training, testing };

// A tagged distortion with named real parameters and a seed. The seed is
// consumed only by the stochastic kinds (gaussian_noise, salt_pepper, cutout)
// through a counter-based generator, so the output is a pure function of
// (image, spec).
struct DistortionSpec {
    DistortionKind kind = DistortionKind::identity;
    std::map<std::string, double> params;
    uint64_t seed = 0;

    double param(const std::string& name, double fallback) const {
        auto it = params.find(name);
        return it == params.end() ? fallback : it->second;
    }
    double required(const std::string& name) const;

    std::string describe() const;  // e.g. "jpeg(quality=50)"
};

const char* kind_name(DistortionKind k);
DistortionKind kind_from_name(const std::string& name);

// Parameter-domain validation; with a phase also enforces the phase gate
// (training admits only geometric kinds + hflip, at training intensities).
void validate_spec(const DistortionSpec& spec);
void validate_spec(const DistortionSpec& spec, DistortionPhase phase);

bool is_training_kind(DistortionKind k);
// True for kinds whose output depends on spec.seed.
bool is_stochastic_kind(DistortionKind k);

Image apply_distortion(const Image& image, const DistortionSpec& spec);

// Individual transforms. All of them keep the 128x128x3 shape and clamp
// the result to [0,1]; geometric kinds use bilinear sampling with
// reflect-101 padding.
Image rotate_preserving_content(const Image& image, double degrees);
Image shift_image(const Image& image, double dx_fraction, double dy_fraction);
Image shear_image(const Image& image, double fraction);
Image zoom_image(const Image& image, double fraction);
Image hflip_image(const Image& image);
Image gaussian_blur(const Image& image, double sigma);
Image solarize(const Image& image, double threshold);
Image cutout(const Image& image, double side_fraction, uint64_t seed);
Image central_crop(const Image& image, double area_fraction);
Image jpeg_roundtrip(const Image& image, int quality);
Image adjust_brightness(const Image& image, double factor);
Image adjust_contrast(const Image& image, double factor);
Image adjust_hue(const Image& image, double shift);
Image adjust_saturation(const Image& image, double factor);
Image add_gaussian_noise(const Image& image, double variance, uint64_t seed);
Image add_salt_pepper(const Image& image, double density, uint64_t seed);
Image resize_width_only(const Image& image, double fraction);
Image gif_quantize(const Image& image, int colors);

// One training-phase spec, parameters uniform within the training ranges
// (rotation +-15 deg, shift/shear/zoom +-15%). The kind is uniform over the
// six enabled kinds; an hflip draw applies the flip with probability 1/2.
DistortionSpec sample_training_distortion(uint64_t rng_seed);

// The fixed evaluation grids. Testing covers the full photometric +
// geometric battery at the published intensities; training covers only the
// geometric rows.
std::vector<DistortionSpec> photometric_suite(DistortionPhase phase);

// JSON (de)serialization: [{"kind":...,"params":{...},"seed":...}, ...]
std::string grid_to_json(const std::vector<DistortionSpec>& grid);
std::vector<DistortionSpec> grid_from_json(const std::string& json_text);
std::vector<DistortionSpec> load_distortion_grid(const std::string& path);

}  // namespace zw
