#pragma once

#include "ditn/image.hpp"

#include <string>
#include <vector>

namespace ditn {

/// A luma plane on the [0, 255] scale.
struct Plane {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;
};

Plane luma_plane(const ImageU8& img);
/// Removes `crop` pixels from every border.
Plane shave(const Plane& p, std::size_t crop);

/// 10·log10(255² / MSE); +infinity for identical planes.
double psnr(const Plane& a, const Plane& b);
/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
/// L = 255, valid-mode windows only.
double ssim(const Plane& a, const Plane& b);

double psnr_y(const ImageU8& a, const ImageU8& b, std::size_t crop);
double ssim_y(const ImageU8& a, const ImageU8& b, std::size_t crop);

struct ImageScore {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalResult {
    double psnr_db = 0.0; // +infinity if any image is identical to its reference
    double ssim = 0.0;
    std::size_t n_images = 0;
    std::vector<ImageScore> per_image;
};

EvalResult summarize(std::vector<ImageScore> scores);

} // namespace ditn
