#include "ditn/image.hpp"

#include "ditn/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace ditn {

namespace {

using std::size_t;

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void png_error_fn(png_structp png, png_const_charp) { std::longjmp(png_jmpbuf(png), 1); }
void png_warning_fn(png_structp, png_const_charp) {}

} // namespace

ImageU8 load_image(const std::filesystem::path& path) {
    FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) throw IoError("cannot open image " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw FormatError("not a PNG file: " + path.string());
    }

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("libpng initialization failed");
    }
    ImageU8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("malformed PNG: " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (depth > 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("unsupported PNG bit depth " + std::to_string(depth) + " (only 8-bit is supported): " +
                          path.string());
    }
    {
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
        png_set_interlace_handling(png);
        png_read_update_info(png, info);
        img.height = png_get_image_height(png, info);
        img.width = png_get_image_width(png, info);
        img.pixels.assign(img.height * img.width * 3, 0);
        rows.resize(img.height);
        for (size_t y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * img.width * 3;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_image(const ImageU8& img, const std::filesystem::path& path) {
    if (img.height == 0 || img.width == 0 || img.pixels.size() != img.height * img.width * 3) {
        throw DimensionError("save_image: empty or inconsistent image");
    }
    FilePtr file(std::fopen(path.string().c_str(), "wb"));
    if (!file) throw IoError("cannot write image " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("libpng initialization failed");
    }
    std::vector<png_bytep> rows(img.height);
    for (size_t y = 0; y < img.height; ++y) {
        rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.width * 3);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor to_float(const ImageU8& img) {
    if (img.height == 0 || img.width == 0) throw DimensionError("to_float: empty image");
    Tensor t({3, img.height, img.width});
    const size_t plane = img.height * img.width;
    for (size_t i = 0; i < plane; ++i) {
        for (size_t c = 0; c < 3; ++c) t[c * plane + i] = static_cast<float>(img.pixels[i * 3 + c]) / 255.0f;
    }
    return t;
}

ImageU8 to_u8(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != 3) throw DimensionError("to_u8: expected 3×H×W, got " + shape_str(t.shape()));
    ImageU8 img(t.dim(1), t.dim(2));
    const size_t plane = img.height * img.width;
    for (size_t i = 0; i < plane; ++i) {
        for (size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(t[c * plane + i], 0.0f, 1.0f) * 255.0f;
            img.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::round(v));
        }
    }
    return img;
}

std::vector<double> rgb_to_y(const ImageU8& img) {
    std::vector<double> y(img.height * img.width);
    for (size_t i = 0; i < y.size(); ++i) {
        const double r = img.pixels[i * 3] / 255.0, g = img.pixels[i * 3 + 1] / 255.0, b = img.pixels[i * 3 + 2] / 255.0;
        y[i] = 16.0 + 65.481 * r + 128.553 * g + 24.966 * b;
    }
    return y;
}

Tensor rgb_to_y(const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) throw DimensionError("rgb_to_y: expected 3×H×W, got " + shape_str(rgb.shape()));
    const size_t plane = rgb.dim(1) * rgb.dim(2);
    Tensor y({rgb.dim(1), rgb.dim(2)});
    for (size_t i = 0; i < plane; ++i) {
        y[i] = static_cast<float>(16.0 + 65.481 * rgb[i] + 128.553 * rgb[plane + i] + 24.966 * rgb[2 * plane + i]);
    }
    return y;
}

double cubic_kernel(double x) {
    const double ax = std::fabs(x), ax2 = ax * ax, ax3 = ax2 * ax;
    if (ax <= 1.0) return 1.5 * ax3 - 2.5 * ax2 + 1.0;
    if (ax <= 2.0) return -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0;
    return 0.0;
}

ResampleTaps resample_taps(size_t in_len, size_t out_len) {
    const double scale = static_cast<double>(out_len) / static_cast<double>(in_len);
    const bool shrink = scale < 1.0;
    const double width = shrink ? 4.0 / scale : 4.0;
    const size_t taps = static_cast<size_t>(std::ceil(width)) + 2;

    ResampleTaps rt;
    rt.taps = taps;
    rt.index.resize(out_len * taps);
    rt.weight.resize(out_len * taps);
    const auto n = static_cast<std::ptrdiff_t>(in_len);
    for (size_t i = 0; i < out_len; ++i) {
        // 1-based output coordinate mapped into 1-based input space.
        const double u = static_cast<double>(i + 1) / scale + 0.5 * (1.0 - 1.0 / scale);
        const auto left = static_cast<std::ptrdiff_t>(std::floor(u - width / 2.0));
        double sum = 0.0;
        for (size_t t = 0; t < taps; ++t) {
            const std::ptrdiff_t j = left + static_cast<std::ptrdiff_t>(t); // 1-based
            const double x = u - static_cast<double>(j);
            const double wgt = shrink ? scale * cubic_kernel(scale * x) : cubic_kernel(x);
            // Mirror into [1, n] with edge repeat: ..., 2, 1, | 1, 2, ..., n, | n, n-1, ...
            std::ptrdiff_t m = ((j - 1) % (2 * n) + 2 * n) % (2 * n);
            if (m >= n) m = 2 * n - 1 - m;
            rt.index[i * taps + t] = static_cast<size_t>(m);
            rt.weight[i * taps + t] = wgt;
            sum += wgt;
        }
        for (size_t t = 0; t < taps; ++t) rt.weight[i * taps + t] /= sum;
    }
    return rt;
}

namespace {

// Resizes along one axis of a C×H×W double buffer.
std::vector<double> resize_axis(const std::vector<double>& in, size_t c, size_t h, size_t w, size_t target,
                                bool along_height) {
    const size_t in_len = along_height ? h : w;
    const ResampleTaps rt = resample_taps(in_len, target);
    const size_t oh = along_height ? target : h, ow = along_height ? w : target;
    std::vector<double> out(c * oh * ow, 0.0);
    for (size_t ch = 0; ch < c; ++ch) {
        const double* src = in.data() + ch * h * w;
        double* dst = out.data() + ch * oh * ow;
        for (size_t y = 0; y < oh; ++y) {
            for (size_t x = 0; x < ow; ++x) {
                const size_t i = along_height ? y : x;
                double acc = 0.0;
                for (size_t t = 0; t < rt.taps; ++t) {
                    const size_t j = rt.index[i * rt.taps + t];
                    acc += rt.weight[i * rt.taps + t] * (along_height ? src[j * w + x] : src[y * w + j]);
                }
                dst[y * ow + x] = acc;
            }
        }
    }
    return out;
}

void quantize(std::vector<double>& buf) {
    for (auto& v : buf) v = std::round(std::clamp(v, 0.0, 255.0));
}

// quantize_passes mimics integer images, which are rounded after every axis.
std::vector<double> resize_planes(std::vector<double> buf, size_t c, size_t h, size_t w, size_t th, size_t tw,
                                  bool quantize_passes) {
    if (th < 1 || tw < 1) throw DimensionError("bicubic_resize: target size must be >= 1");
    const double sh = static_cast<double>(th) / h, sw = static_cast<double>(tw) / w;
    auto pass = [&](size_t ph, size_t pw, size_t target, bool along_height) {
        buf = resize_axis(buf, c, ph, pw, target, along_height);
        if (quantize_passes) quantize(buf);
    };
    // Smaller scale first; height first on ties.
    if (sh <= sw) {
        if (th != h) pass(h, w, th, true);
        if (tw != w) pass(th, w, tw, false);
    } else {
        if (tw != w) pass(h, w, tw, false);
        if (th != h) pass(h, tw, th, true);
    }
    return buf;
}

} // namespace

Tensor bicubic_resize(const Tensor& t, size_t target_h, size_t target_w) {
    if (t.rank() != 3) throw DimensionError("bicubic_resize: expected C×H×W, got " + shape_str(t.shape()));
    if (target_h < 1 || target_w < 1) throw DimensionError("bicubic_resize: target size must be >= 1");
    if (target_h == t.dim(1) && target_w == t.dim(2)) return t;
    std::vector<double> buf(t.values().begin(), t.values().end());
    buf = resize_planes(std::move(buf), t.dim(0), t.dim(1), t.dim(2), target_h, target_w, false);
    std::vector<float> out(buf.begin(), buf.end());
    return Tensor({t.dim(0), target_h, target_w}, std::move(out));
}

ImageU8 bicubic_resize(const ImageU8& img, size_t target_h, size_t target_w) {
    if (target_h < 1 || target_w < 1) throw DimensionError("bicubic_resize: target size must be >= 1");
    if (target_h == img.height && target_w == img.width) return img;
    const size_t plane = img.height * img.width;
    std::vector<double> buf(3 * plane);
    for (size_t i = 0; i < plane; ++i) {
        for (size_t c = 0; c < 3; ++c) buf[c * plane + i] = img.pixels[i * 3 + c];
    }
    buf = resize_planes(std::move(buf), 3, img.height, img.width, target_h, target_w, true);
    ImageU8 out(target_h, target_w);
    const size_t oplane = target_h * target_w;
    for (size_t i = 0; i < oplane; ++i) {
        for (size_t c = 0; c < 3; ++c) {
            out.pixels[i * 3 + c] = static_cast<std::uint8_t>(buf[c * oplane + i]);
        }
    }
    return out;
}

ImageU8 modcrop(const ImageU8& img, size_t m) {
    const size_t h = img.height / m * m, w = img.width / m * m;
    if (h == 0 || w == 0) throw DimensionError("modcrop: image smaller than the modulus");
    ImageU8 out(h, w);
    for (size_t y = 0; y < h; ++y) {
        std::copy_n(img.pixels.begin() + y * img.width * 3, w * 3, out.pixels.begin() + y * w * 3);
    }
    return out;
}

} // namespace ditn
