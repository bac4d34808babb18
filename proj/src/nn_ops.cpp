#include "ditn/nn_ops.hpp"

#include "ditn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace ditn {

namespace {

using std::ptrdiff_t;
using std::size_t;

// Channel axis and (batch, channels, positions) view of a feature tensor.
struct FeatureView {
    size_t batch;
    size_t channels;
    size_t positions;
};

FeatureView feature_view(const Tensor& x, const char* what) {
    switch (x.rank()) {
    case 2:
        return {1, x.dim(0), x.dim(1)};
    case 3:
        return {1, x.dim(0), x.dim(1) * x.dim(2)};
    case 4:
        return {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)};
    default:
        throw DimensionError(std::string(what) + ": expected C×L, C×H×W or B×C×H×W, got " + shape_str(x.shape()));
    }
}

void require_image(const Tensor& x, const char* what) {
    if (x.rank() != 3 && x.rank() != 4) {
        throw DimensionError(std::string(what) + ": expected C×H×W or B×C×H×W, got " + shape_str(x.shape()));
    }
}

} // namespace

void ConvWeights::validate() const {
    if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
        throw DimensionError("conv kernel must be C_out×C_in×k×k, got " + shape_str(kernel.shape()));
    }
    if (kernel.dim(2) % 2 == 0) throw DimensionError("conv kernel size must be odd, got " + shape_str(kernel.shape()));
    if (dilation < 1) throw DimensionError("conv dilation must be >= 1");
    if (depthwise && kernel.dim(1) != 1) {
        throw DimensionError("depthwise kernel must be C×1×k×k, got " + shape_str(kernel.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != kernel.dim(0)) {
        throw DimensionError("conv bias " + shape_str(bias.shape()) + " does not match kernel " +
                             shape_str(kernel.shape()));
    }
}

void conv2d_plane(const float* in, size_t c_in, size_t h, size_t w, const ConvWeights& cw, float* out) {
    const size_t c_out = cw.out_channels();
    const size_t k = cw.kernel_size();
    const ptrdiff_t r = static_cast<ptrdiff_t>(k / 2);
    const ptrdiff_t d = static_cast<ptrdiff_t>(cw.dilation);
    const ptrdiff_t hh = static_cast<ptrdiff_t>(h), ww = static_cast<ptrdiff_t>(w);
    const size_t plane = h * w;
    const size_t cin_per = cw.depthwise ? 1 : c_in;

    for (size_t co = 0; co < c_out; ++co) {
        float* o = out + co * plane;
        std::fill(o, o + plane, cw.bias[co]);
        const size_t ci_begin = cw.depthwise ? co : 0;
        for (size_t cl = 0; cl < cin_per; ++cl) {
            const float* ip = in + (ci_begin + cl) * plane;
            const float* kw = cw.kernel.data() + (co * cin_per + cl) * k * k;
            for (size_t ky = 0; ky < k; ++ky) {
                const ptrdiff_t dy = (static_cast<ptrdiff_t>(ky) - r) * d;
                const ptrdiff_t y0 = std::max<ptrdiff_t>(0, -dy);
                const ptrdiff_t y1 = std::min<ptrdiff_t>(hh, hh - dy);
                for (size_t kx = 0; kx < k; ++kx) {
                    const ptrdiff_t dx = (static_cast<ptrdiff_t>(kx) - r) * d;
                    const ptrdiff_t x0 = std::max<ptrdiff_t>(0, -dx);
                    const ptrdiff_t x1 = std::min<ptrdiff_t>(ww, ww - dx);
                    const float wv = kw[ky * k + kx];
                    for (ptrdiff_t y = y0; y < y1; ++y) {
                        float* orow = o + y * ww;
                        const float* irow = ip + (y + dy) * ww + dx;
                        for (ptrdiff_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
}

Tensor conv2d(const Tensor& input, const ConvWeights& w) {
    require_image(input, "conv2d");
    w.validate();
    const bool batched = input.rank() == 4;
    const size_t b = batched ? input.dim(0) : 1;
    const size_t c = input.dim(batched ? 1 : 0);
    const size_t h = input.dim(batched ? 2 : 1);
    const size_t wd = input.dim(batched ? 3 : 2);
    if (c != w.in_channels()) {
        throw DimensionError("conv2d: input " + shape_str(input.shape()) + " has " + std::to_string(c) +
                             " channels, kernel " + shape_str(w.kernel.shape()) + " expects " +
                             std::to_string(w.in_channels()));
    }
    const size_t co = w.out_channels();
    Tensor out(batched ? Shape{b, co, h, wd} : Shape{co, h, wd});
    for (size_t i = 0; i < b; ++i) {
        conv2d_plane(input.data() + i * c * h * wd, c, h, wd, w, out.data() + i * co * h * wd);
    }
    return out;
}

Tensor pixel_shuffle(const Tensor& input, size_t s) {
    if (input.rank() != 3) throw DimensionError("pixel_shuffle: expected C×H×W, got " + shape_str(input.shape()));
    if (s < 1 || input.dim(0) % (s * s) != 0) {
        throw DimensionError("pixel_shuffle: " + std::to_string(input.dim(0)) + " channels not divisible by s²=" +
                             std::to_string(s * s));
    }
    const size_t c = input.dim(0) / (s * s), h = input.dim(1), w = input.dim(2);
    Tensor out({c, h * s, w * s});
    const size_t ow = w * s;
    for (size_t oc = 0; oc < c; ++oc) {
        for (size_t i = 0; i < s; ++i) {
            for (size_t j = 0; j < s; ++j) {
                const float* src = input.data() + ((oc * s + i) * s + j) * h * w;
                float* dst = out.data() + oc * h * s * ow;
                for (size_t y = 0; y < h; ++y) {
                    for (size_t x = 0; x < w; ++x) dst[(y * s + i) * ow + x * s + j] = src[y * w + x];
                }
            }
        }
    }
    return out;
}

PatchBatch unfold_patches(const Tensor& f, size_t p, OpCounters& ctr) {
    if (f.rank() != 3) throw DimensionError("unfold_patches: expected C×H×W, got " + shape_str(f.shape()));
    const size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
    if (p == 0 || h % p != 0 || w % p != 0) {
        throw DimensionError("unfold_patches: " + std::to_string(h) + "x" + std::to_string(w) +
                             " is not divisible by patch size " + std::to_string(p) + "; pad the input first");
    }
    const size_t gh = h / p, gw = w / p;
    PatchBatch out{Tensor({gh * gw, c, p, p})};
    float* dst = out.data.data();
    for (size_t gy = 0; gy < gh; ++gy) {
        for (size_t gx = 0; gx < gw; ++gx) {
            for (size_t ch = 0; ch < c; ++ch) {
                for (size_t i = 0; i < p; ++i) {
                    const float* src = f.data() + (ch * h + gy * p + i) * w + gx * p;
                    std::memcpy(dst, src, p * sizeof(float));
                    dst += p;
                }
            }
        }
    }
    ++ctr.unfolds;
    return out;
}

Tensor fold_patches(const PatchBatch& patches, size_t h, size_t w, OpCounters& ctr) {
    const Tensor& d = patches.data;
    if (d.rank() != 4 || d.dim(2) != d.dim(3)) {
        throw DimensionError("fold_patches: expected B×C×P×P, got " + shape_str(d.shape()));
    }
    const size_t p = d.dim(2), c = d.dim(1);
    if (h % p != 0 || w % p != 0 || (h / p) * (w / p) != d.dim(0)) {
        throw DimensionError("fold_patches: " + shape_str(d.shape()) + " does not tile " + std::to_string(h) + "x" +
                             std::to_string(w));
    }
    const size_t gh = h / p, gw = w / p;
    Tensor out({c, h, w});
    const float* src = d.data();
    for (size_t gy = 0; gy < gh; ++gy) {
        for (size_t gx = 0; gx < gw; ++gx) {
            for (size_t ch = 0; ch < c; ++ch) {
                for (size_t i = 0; i < p; ++i) {
                    std::memcpy(out.data() + (ch * h + gy * p + i) * w + gx * p, src, p * sizeof(float));
                    src += p;
                }
            }
        }
    }
    ++ctr.folds;
    return out;
}

NormParams NormParams::layer_norm(size_t channels) {
    NormParams n;
    n.mode = NormMode::layer_norm;
    n.gain = Tensor::full({channels}, 1.0f);
    n.bias = Tensor({channels});
    return n;
}

NormParams NormParams::tanh_conv(size_t channels) {
    NormParams n;
    n.mode = NormMode::tanh_conv;
    n.conv_weight = Tensor::eye(channels);
    n.conv_bias = Tensor({channels});
    return n;
}

size_t NormParams::channels() const {
    return mode == NormMode::layer_norm ? gain.numel() : conv_bias.numel();
}

void NormParams::validate() const {
    if (mode == NormMode::layer_norm) {
        if (gain.rank() != 1 || bias.shape() != gain.shape() || !conv_weight.empty() || !conv_bias.empty()) {
            throw DimensionError("layer_norm params need gain/bias of shape [C] and nothing else");
        }
        if (!(eps > 0.0f)) throw DimensionError("layer_norm eps must be positive");
    } else {
        const size_t c = conv_bias.numel();
        if (conv_bias.rank() != 1 || conv_weight.shape() != Shape{c, c} || !gain.empty() || !bias.empty()) {
            throw DimensionError("tanh_conv params need conv_weight [C×C], conv_bias [C] and nothing else");
        }
    }
}

Tensor normalize_pre_affine(const Tensor& x, const NormParams& params) {
    const auto v = feature_view(x, "normalize");
    if (params.mode == NormMode::tanh_conv) return map(x, UnaryFn::tanh);
    Tensor out = x;
    const float inv_c = 1.0f / static_cast<float>(v.channels);
    for (size_t b = 0; b < v.batch; ++b) {
        float* base = out.data() + b * v.channels * v.positions;
        for (size_t l = 0; l < v.positions; ++l) {
            float mean = 0.0f;
            for (size_t c = 0; c < v.channels; ++c) mean += base[c * v.positions + l];
            mean *= inv_c;
            float var = 0.0f;
            for (size_t c = 0; c < v.channels; ++c) {
                const float dv = base[c * v.positions + l] - mean;
                var += dv * dv;
            }
            var *= inv_c;
            const float inv_std = 1.0f / std::sqrt(var + params.eps);
            for (size_t c = 0; c < v.channels; ++c) {
                float& e = base[c * v.positions + l];
                e = (e - mean) * inv_std;
            }
        }
    }
    return out;
}

Tensor normalize(const Tensor& x, const NormParams& params) {
    params.validate();
    const auto v = feature_view(x, "normalize");
    if (v.channels != params.channels()) {
        throw DimensionError("normalize: input " + shape_str(x.shape()) + " vs " + std::to_string(params.channels()) +
                             " norm channels");
    }
    Tensor bounded = normalize_pre_affine(x, params);
    if (params.mode == NormMode::layer_norm) {
        for (size_t b = 0; b < v.batch; ++b) {
            float* base = bounded.data() + b * v.channels * v.positions;
            for (size_t c = 0; c < v.channels; ++c) {
                const float g = params.gain[c], bb = params.bias[c];
                float* row = base + c * v.positions;
                for (size_t l = 0; l < v.positions; ++l) row[l] = row[l] * g + bb;
            }
        }
        return bounded;
    }
    Tensor out(x.shape());
    for (size_t b = 0; b < v.batch; ++b) {
        const size_t off = b * v.channels * v.positions;
        float* o = out.data() + off;
        for (size_t c = 0; c < v.channels; ++c) std::fill(o + c * v.positions, o + (c + 1) * v.positions, params.conv_bias[c]);
        kernels::gemm(params.conv_weight.data(), bounded.data() + off, o, v.channels, v.channels, v.positions, true);
    }
    return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x) {
    require_image(x, "split_channels");
    const bool batched = x.rank() == 4;
    const size_t b = batched ? x.dim(0) : 1;
    const size_t c2 = x.dim(batched ? 1 : 0);
    if (c2 % 2 != 0) {
        throw DimensionError("split_channels: odd channel count in " + shape_str(x.shape()));
    }
    const size_t c = c2 / 2;
    const size_t plane = x.numel() / (b * c2);
    Shape half = x.shape();
    half[batched ? 1 : 0] = c;
    Tensor x1(half), x2(half);
    for (size_t i = 0; i < b; ++i) {
        const float* src = x.data() + i * c2 * plane;
        std::memcpy(x1.data() + i * c * plane, src, c * plane * sizeof(float));
        std::memcpy(x2.data() + i * c * plane, src + c * plane, c * plane * sizeof(float));
    }
    return {std::move(x1), std::move(x2)};
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_image(a, "concat_channels");
    if (a.shape() != b.shape()) {
        throw DimensionError("concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const bool batched = a.rank() == 4;
    const size_t n = batched ? a.dim(0) : 1;
    const size_t chunk = a.numel() / n;
    Shape s = a.shape();
    s[batched ? 1 : 0] *= 2;
    Tensor out(s);
    for (size_t i = 0; i < n; ++i) {
        std::memcpy(out.data() + 2 * i * chunk, a.data() + i * chunk, chunk * sizeof(float));
        std::memcpy(out.data() + (2 * i + 1) * chunk, b.data() + i * chunk, chunk * sizeof(float));
    }
    return out;
}

void GdfnWeights::validate(size_t channels) const {
    expand.validate();
    depthwise.validate();
    project.validate();
    const size_t h = project.in_channels();
    if (expand.in_channels() != channels || expand.out_channels() != 2 * h || !depthwise.depthwise ||
        depthwise.out_channels() != 2 * h || project.out_channels() != channels) {
        throw DimensionError("gdfn: channel chain " + shape_str(expand.kernel.shape()) + " -> " +
                             shape_str(depthwise.kernel.shape()) + " -> " + shape_str(project.kernel.shape()) +
                             " is inconsistent for C=" + std::to_string(channels));
    }
}

Tensor gdfn(const Tensor& x, const GdfnWeights& w, const NormParams& norm) {
    require_image(x, "gdfn");
    w.validate(x.dim(x.rank() == 4 ? 1 : 0));
    Tensor hidden = conv2d(conv2d(normalize(x, norm), w.expand), w.depthwise);
    auto [h1, h2] = split_channels(hidden);
    Tensor gated = mul(map(h1, UnaryFn::gelu), h2);
    return add(x, conv2d(gated, w.project));
}

} // namespace ditn
