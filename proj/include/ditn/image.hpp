#pragma once

#include "ditn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace ditn {

/// 8-bit RGB, interleaved, row-major.
struct ImageU8 {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels; // height·width·3

    ImageU8() = default;
    ImageU8(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
    bool operator==(const ImageU8&) const = default;
};

/// 8-bit PNG (RGB, RGBA, gray, gray+alpha, palette). Gray is replicated to
/// three channels; alpha is dropped. 16-bit files are rejected.
ImageU8 load_image(const std::filesystem::path& path);
void save_image(const ImageU8& img, const std::filesystem::path& path);

/// 3×H×W floats v/255.
Tensor to_float(const ImageU8& img);
/// round(clamp(v, 0, 1)·255), halves away from zero.
ImageU8 to_u8(const Tensor& t);

/// BT.601 luma on the [16, 235] scale: 16 + 65.481·R + 128.553·G + 24.966·B
/// for R, G, B in [0, 1]. Computed in double.
std::vector<double> rgb_to_y(const ImageU8& img);
Tensor rgb_to_y(const Tensor& rgb);

/// imresize-compatible bicubic (a = −0.5): center-aligned mapping, kernel
/// widened by 1/scale when shrinking, mirrored borders. Works on C×H×W.
Tensor bicubic_resize(const Tensor& t, std::size_t target_h, std::size_t target_w);

/// Bicubic on 8-bit images, rounded and saturated after each axis pass.
ImageU8 bicubic_resize(const ImageU8& img, std::size_t target_h, std::size_t target_w);

/// Crops bottom/right so both sides are multiples of `m`.
ImageU8 modcrop(const ImageU8& img, std::size_t m);

/// Cubic convolution kernel with a = −0.5.
double cubic_kernel(double x);

struct ResampleTaps {
    std::vector<std::size_t> index; // out_len × taps source indices
    std::vector<double> weight;     // out_len × taps, rows sum to 1
    std::size_t taps = 0;
};

/// 1-D resampling weights from in_len to out_len samples.
ResampleTaps resample_taps(std::size_t in_len, std::size_t out_len);

} // namespace ditn
