#include "ditn/metrics.hpp"

#include "ditn/error.hpp"

#include <cmath>
#include <limits>

namespace ditn {

namespace {

using std::size_t;

void require_same(const Plane& a, const Plane& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw DimensionError(std::string(what) + ": " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                             " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

void require_same(const ImageU8& a, const ImageU8& b, const char* what) {
    if (a.height != b.height || a.width != b.width) {
        throw DimensionError(std::string(what) + ": " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                             " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
    }
}

constexpr size_t kWin = 11;

std::vector<double> gaussian_window() {
    std::vector<double> g(kWin * kWin);
    const double sigma = 1.5;
    double sum = 0.0;
    for (size_t y = 0; y < kWin; ++y) {
        for (size_t x = 0; x < kWin; ++x) {
            const double dy = static_cast<double>(y) - 5.0, dx = static_cast<double>(x) - 5.0;
            g[y * kWin + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            sum += g[y * kWin + x];
        }
    }
    for (auto& v : g) v /= sum;
    return g;
}

} // namespace

Plane luma_plane(const ImageU8& img) { return Plane{img.height, img.width, rgb_to_y(img)}; }

Plane shave(const Plane& p, size_t crop) {
    if (2 * crop >= p.height || 2 * crop >= p.width) throw DimensionError("shave: crop removes the whole image");
    Plane out{p.height - 2 * crop, p.width - 2 * crop, {}};
    out.values.reserve(out.height * out.width);
    for (size_t y = crop; y < p.height - crop; ++y) {
        for (size_t x = crop; x < p.width - crop; ++x) out.values.push_back(p.values[y * p.width + x]);
    }
    return out;
}

double psnr(const Plane& a, const Plane& b) {
    require_same(a, b, "psnr");
    double se = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        se += d * d;
    }
    if (se == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = se / static_cast<double>(a.values.size());
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Plane& a, const Plane& b) {
    require_same(a, b, "ssim");
    if (a.height < kWin || a.width < kWin) {
        throw DimensionError("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                             " is smaller than the 11x11 window");
    }
    static const std::vector<double> g = gaussian_window();
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0), c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const size_t oh = a.height - kWin + 1, ow = a.width - kWin + 1;
    double total = 0.0;
    for (size_t y = 0; y < oh; ++y) {
        for (size_t x = 0; x < ow; ++x) {
            double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
            for (size_t wy = 0; wy < kWin; ++wy) {
                const double* ra = a.values.data() + (y + wy) * a.width + x;
                const double* rb = b.values.data() + (y + wy) * b.width + x;
                const double* gw = g.data() + wy * kWin;
                for (size_t wx = 0; wx < kWin; ++wx) {
                    const double va = ra[wx], vb = rb[wx], wt = gw[wx];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            }
            const double var_a = aa - mu_a * mu_a, var_b = bb - mu_b * mu_b, cov = ab - mu_a * mu_b;
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        }
    }
    return total / static_cast<double>(oh * ow);
}

double psnr_y(const ImageU8& a, const ImageU8& b, size_t crop) {
    require_same(a, b, "psnr_y");
    return psnr(shave(luma_plane(a), crop), shave(luma_plane(b), crop));
}

double ssim_y(const ImageU8& a, const ImageU8& b, size_t crop) {
    require_same(a, b, "ssim_y");
    return ssim(shave(luma_plane(a), crop), shave(luma_plane(b), crop));
}

EvalResult summarize(std::vector<ImageScore> scores) {
    EvalResult r;
    r.n_images = scores.size();
    for (const auto& s : scores) {
        r.psnr_db += s.psnr_db;
        r.ssim += s.ssim;
    }
    if (!scores.empty()) {
        r.psnr_db /= static_cast<double>(scores.size());
        r.ssim /= static_cast<double>(scores.size());
    }
    r.per_image = std::move(scores);
    return r;
}

} // namespace ditn
