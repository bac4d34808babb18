#include "ditn/error.hpp"
#include "ditn/image.hpp"
#include "ditn/metrics.hpp"
#include "ditn/weights_io.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace ditn;

namespace {

// Direct port of imresize's contributions(): 1-based indices, mirrored via aux = [1..n, n..1].
void contributions(size_t in_len, size_t out_len, std::vector<std::vector<size_t>>& idx,
                   std::vector<std::vector<double>>& wts) {
    const double scale = double(out_len) / double(in_len);
    auto cubic = [](double x) {
        const double a = std::abs(x);
        return (1.5 * a * a * a - 2.5 * a * a + 1) * (a <= 1) + (-0.5 * a * a * a + 2.5 * a * a - 4 * a + 2) * (a > 1 && a <= 2);
    };
    const bool aa = scale < 1;
    const double kw = aa ? 4.0 / scale : 4.0;
    const long p = long(std::ceil(kw)) + 2;
    std::vector<long> aux;
    for (long i = 1; i <= long(in_len); ++i) aux.push_back(i);
    for (long i = long(in_len); i >= 1; --i) aux.push_back(i);
    idx.assign(out_len, {});
    wts.assign(out_len, {});
    for (size_t x = 1; x <= out_len; ++x) {
        const double u = x / scale + 0.5 * (1 - 1 / scale);
        const long left = long(std::floor(u - kw / 2));
        double sum = 0;
        std::vector<double> w;
        for (long k = 0; k < p; ++k) {
            const double d = u - double(left + k);
            w.push_back(aa ? scale * cubic(scale * d) : cubic(d));
            sum += w.back();
        }
        for (long k = 0; k < p; ++k) {
            const long j = left + k;
            const long m = ((j - 1) % long(aux.size()) + long(aux.size())) % long(aux.size());
            idx[x - 1].push_back(size_t(aux[m] - 1));
            wts[x - 1].push_back(w[k] / sum);
        }
    }
}

// Height pass then width pass on one plane.
std::vector<double> matlab_resize(const std::vector<double>& in, size_t h, size_t w, size_t th, size_t tw) {
    std::vector<std::vector<size_t>> ih, iw;
    std::vector<std::vector<double>> wh, ww;
    contributions(h, th, ih, wh);
    contributions(w, tw, iw, ww);
    std::vector<double> mid(th * w, 0.0), out(th * tw, 0.0);
    for (size_t y = 0; y < th; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t k = 0; k < ih[y].size(); ++k) mid[y * w + x] += wh[y][k] * in[ih[y][k] * w + x];
    for (size_t y = 0; y < th; ++y)
        for (size_t x = 0; x < tw; ++x)
            for (size_t k = 0; k < iw[x].size(); ++k) out[y * tw + x] += ww[x][k] * mid[y * w + iw[x][k]];
    return out;
}

ImageU8 random_image(size_t h, size_t w, std::uint64_t key) {
    ImageU8 img(h, w);
    for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::uint8_t(uniform01(key, i) * 256.0f);
    return img;
}

} // namespace

TEST_CASE("u8 float conversion roundtrips every level") {
    ImageU8 img(1, 256);
    for (size_t i = 0; i < 256; ++i)
        for (size_t c = 0; c < 3; ++c) img.at(0, i, c) = std::uint8_t(i);
    const Tensor t = to_float(img);
    CHECK(t.shape() == Shape{3, 1, 256});
    CHECK(t[255] == 1.0f);
    CHECK(to_u8(t) == img);
    const ImageU8 clipped = to_u8(Tensor({3, 1, 1}, {-0.5f, 2.0f, 0.5f}));
    CHECK(clipped.at(0, 0, 0) == 0);
    CHECK(clipped.at(0, 0, 1) == 255);
    CHECK(clipped.at(0, 0, 2) == 128);
}

TEST_CASE("png roundtrip") {
    const auto path = std::filesystem::temp_directory_path() / "ditn_test_image.png";
    const ImageU8 img = random_image(13, 7, 3);
    save_image(img, path);
    CHECK(load_image(path) == img);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_image(path), IoError);
}

TEST_CASE("luma") {
    ImageU8 img(1, 3);
    for (size_t c = 0; c < 3; ++c) img.at(0, 0, c) = 255;
    img.at(0, 2, 0) = 255;
    const auto y = rgb_to_y(img);
    CHECK(y[0] == doctest::Approx(235.0).epsilon(1e-6));
    CHECK(y[1] == doctest::Approx(16.0));
    CHECK(y[2] == doctest::Approx(81.481));
}

TEST_CASE("cubic kernel") {
    CHECK(cubic_kernel(0.0) == 1.0);
    CHECK(cubic_kernel(1.0) == 0.0);
    CHECK(cubic_kernel(2.0) == 0.0);
    CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625));
    CHECK(cubic_kernel(-1.5) == doctest::Approx(-0.0625));
}

TEST_CASE("bicubic matches the contributions oracle") {
    struct Case {
        size_t h, w, th, tw;
    };
    for (const Case& c : {Case{8, 8, 16, 16}, Case{16, 12, 4, 3}, Case{9, 7, 27, 21}, Case{20, 20, 10, 10},
                          Case{5, 11, 5, 22}, Case{3, 3, 12, 12}, Case{17, 13, 7, 5}}) {
        const Tensor in = random_uniform({1, c.h, c.w}, c.h * 31 + c.w, 0.0f, 1.0f);
        const std::vector<double> ind(in.data(), in.data() + in.numel());
        const auto expect = matlab_resize(ind, c.h, c.w, c.th, c.tw);
        const Tensor got = bicubic_resize(in, c.th, c.tw);
        REQUIRE(got.shape() == Shape{1, c.th, c.tw});
        double md = 0;
        for (size_t i = 0; i < expect.size(); ++i) md = std::max(md, std::abs(expect[i] - got[i]));
        CHECK(md <= 1e-5);
    }
}

TEST_CASE("bicubic properties") {
    const Tensor flat = Tensor::full({2, 6, 5}, 0.25f);
    const Tensor up = bicubic_resize(flat, 12, 10);
    for (float v : up.values()) CHECK(v == doctest::Approx(0.25f));
    const Tensor r = random_uniform({1, 4, 4}, 9, 0.0f, 1.0f);
    CHECK(bicubic_resize(r, 4, 4).bitwise_equal(r));
    CHECK_THROWS_AS(bicubic_resize(r, 0, 4), DimensionError);
    const ImageU8 img = random_image(12, 8, 5);
    const ImageU8 small = bicubic_resize(img, 3, 2);
    CHECK(small.height == 3);
    CHECK(small.width == 2);
    const ResampleTaps taps = resample_taps(16, 4);
    CHECK(taps.taps == 18);
    for (size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (size_t t = 0; t < taps.taps; ++t) s += taps.weight[i * taps.taps + t];
        CHECK(s == doctest::Approx(1.0));
    }
}

TEST_CASE("modcrop") {
    const ImageU8 img = random_image(10, 7, 1);
    const ImageU8 m = modcrop(img, 4);
    CHECK(m.height == 8);
    CHECK(m.width == 4);
    CHECK(m.at(7, 3, 2) == img.at(7, 3, 2));
}

TEST_CASE("psnr") {
    Plane a{4, 4, std::vector<double>(16, 100.0)};
    Plane b = a;
    CHECK(std::isinf(psnr(a, b)));
    for (auto& v : b.values) v += 1.0;
    CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)));
    b.values[0] += 3.0; // mse = (15·1 + 16) / 16
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / (31.0 / 16.0))));
    CHECK_THROWS_AS(psnr(a, Plane{2, 8, std::vector<double>(16)}), DimensionError);
}

TEST_CASE("ssim") {
    const ImageU8 img = random_image(24, 20, 2);
    const Plane y = luma_plane(img);
    CHECK(ssim(y, y) == doctest::Approx(1.0));
    Plane noisy = y;
    for (size_t i = 0; i < noisy.values.size(); ++i) noisy.values[i] += 20.0 * (uniform01(7, i) - 0.5);
    const double s = ssim(y, noisy);
    CHECK(s < 1.0);
    CHECK(s == doctest::Approx(ssim(noisy, y)).epsilon(1e-12));

    // Window statistics from scratch at one location, compared on a minimal 11x11 image.
    Plane a{11, 11, {}}, b{11, 11, {}};
    for (size_t i = 0; i < 121; ++i) a.values.push_back(y.values[(i / 11) * 20 + i % 11]);
    for (size_t i = 0; i < 121; ++i) b.values.push_back(noisy.values[(i / 11) * 20 + i % 11]);
    double gs = 0, ma = 0, mb = 0;
    std::vector<double> g(121);
    for (int i = 0; i < 121; ++i) gs += g[i] = std::exp(-((i / 11 - 5) * (i / 11 - 5) + (i % 11 - 5) * (i % 11 - 5)) / 4.5);
    for (int i = 0; i < 121; ++i) ma += g[i] / gs * a.values[i], mb += g[i] / gs * b.values[i];
    double va = 0, vb = 0, cv = 0;
    for (int i = 0; i < 121; ++i) {
        va += g[i] / gs * (a.values[i] - ma) * (a.values[i] - ma);
        vb += g[i] / gs * (b.values[i] - mb) * (b.values[i] - mb);
        cv += g[i] / gs * (a.values[i] - ma) * (b.values[i] - mb);
    }
    const double c1 = 6.5025, c2 = 58.5225;
    const double expect = (2 * ma * mb + c1) * (2 * cv + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-9));
    CHECK_THROWS_AS(ssim(Plane{10, 10, std::vector<double>(100)}, Plane{10, 10, std::vector<double>(100)}),
                    DimensionError);
}

TEST_CASE("shave and image-level metrics") {
    const ImageU8 img = random_image(20, 20, 4);
    CHECK(std::isinf(psnr_y(img, img, 2)));
    CHECK(ssim_y(img, img, 4) == doctest::Approx(1.0));
    const Plane p = shave(luma_plane(img), 3);
    CHECK(p.height == 14);
    CHECK_THROWS_AS(shave(p, 7), DimensionError);
    const EvalResult r = summarize({{"a", 30.0, 0.9}, {"b", 32.0, 0.8}});
    CHECK(r.n_images == 2);
    CHECK(r.psnr_db == doctest::Approx(31.0));
    CHECK(r.ssim == doctest::Approx(0.85));
}
