#pragma once

#include "ditn/counters.hpp"
#include "ditn/tensor.hpp"

#include <utility>

namespace ditn {

/// Square-kernel convolution with zero same-padding. Dense kernels are
/// C_out×C_in×k×k; depthwise kernels are C×1×k×k.
struct ConvWeights {
    Tensor kernel;
    Tensor bias;
    std::size_t dilation = 1;
    bool depthwise = false;

    std::size_t out_channels() const { return kernel.dim(0); }
    std::size_t in_channels() const { return depthwise ? kernel.dim(0) : kernel.dim(1); }
    std::size_t kernel_size() const { return kernel.dim(2); }

    /// Throws DimensionError unless the invariants hold (odd k, dilation >= 1,
    /// bias length C_out).
    void validate() const;
};

/// Same-padded convolution of a C_in×H×W image, or of each item of a
/// B×C_in×H×W batch.
Tensor conv2d(const Tensor& input, const ConvWeights& w);

/// Raw form of conv2d for one C_in×H×W plane stack; `out` holds C_out×H×W.
void conv2d_plane(const float* in, std::size_t c_in, std::size_t h, std::size_t w, const ConvWeights& cw,
                  float* out);

/// (C·s²)×H×W -> C×(sH)×(sW)
Tensor pixel_shuffle(const Tensor& input, std::size_t s);

/// The unfolded representation: B patches stored as B×C×P×P. Each patch is
/// contiguous, so its token matrix C×P² is the same memory.
struct PatchBatch {
    Tensor data;

    std::size_t batch() const { return data.dim(0); }
    std::size_t channels() const { return data.dim(1); }
    std::size_t patch_size() const { return data.dim(2); }
    std::size_t tokens() const { return data.dim(2) * data.dim(3); }
    std::size_t patch_stride() const { return channels() * tokens(); }
};

/// Partitions C×H×W into non-overlapping p×p patches, row-major over the
/// patch grid. Always a copy; counts one unfold.
PatchBatch unfold_patches(const Tensor& f, std::size_t p, OpCounters& ctr);

/// Inverse of unfold_patches; counts one fold.
Tensor fold_patches(const PatchBatch& patches, std::size_t h, std::size_t w, OpCounters& ctr);

enum class NormMode { layer_norm, tanh_conv };

/// layer_norm: y = g ⊙ (x − μ)/sqrt(σ² + eps) + b over the channel axis.
/// tanh_conv:  y = W · tanh(x) + B, a 1×1 convolution after tanh bounding.
struct NormParams {
    NormMode mode = NormMode::layer_norm;
    Tensor gain;
    Tensor bias;
    Tensor conv_weight;
    Tensor conv_bias;
    float eps = 1e-6f;

    static NormParams layer_norm(std::size_t channels);
    static NormParams tanh_conv(std::size_t channels);

    std::size_t channels() const;
    void validate() const;
};

/// Channel-axis normalization of C×L, C×H×W, or B×C×H×W features.
Tensor normalize(const Tensor& x, const NormParams& params);

/// Normalization without the affine part: the standardized (layer_norm) or
/// tanh-bounded (tanh_conv) activations.
Tensor normalize_pre_affine(const Tensor& x, const NormParams& params);

/// 2C channels -> first C, last C. Accepts C×H×W or B×C×H×W.
std::pair<Tensor, Tensor> split_channels(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

struct GdfnWeights {
    ConvWeights expand;    // 1×1, C -> 2h
    ConvWeights depthwise; // 3×3 depthwise on 2h
    ConvWeights project;   // 1×1, h -> C
    float expansion = 1.5f;

    std::size_t hidden() const { return project.in_channels(); }
    void validate(std::size_t channels) const;
};

/// Gated feed-forward residual block:
/// x + project(gelu(h1) ⊙ h2), (h1, h2) = split(depthwise(expand(normalize(x)))).
Tensor gdfn(const Tensor& x, const GdfnWeights& w, const NormParams& norm);

} // namespace ditn
