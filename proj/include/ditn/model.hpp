#pragma once

#include "ditn/attention.hpp"
#include "ditn/config.hpp"
#include "ditn/counters.hpp"
#include "ditn/nn_ops.hpp"
#include "ditn/weights_io.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ditn {

enum class AttentionPath { reference, fused };

std::string_view path_name(AttentionPath path);
AttentionPath parse_path(std::string_view name);

struct ItlWeights {
    NormParams norm1;
    IsaWeights isa;
    NormParams norm2;
    GdfnWeights ffn;
};

struct SalWeights {
    NormParams norm1;
    ConvWeights in_conv;              // 1×1, C -> 2C
    std::vector<ConvWeights> dconvs;  // depthwise, dilated
    ConvWeights out_conv;             // 1×1, C -> C
    NormParams norm2;
    GdfnWeights ffn;
};

struct UfoneWeights {
    std::vector<ItlWeights> itls;
    std::vector<SalWeights> sals;
    ConvWeights conv; // trailing 3×3
};

/// Configuration plus validated weights, bound into per-layer views.
/// Immutable after construction; forwards may share one instance.
class Model {
public:
    /// Throws ConfigError when the store does not hold exactly the tensors the
    /// configuration requires, with exactly the expected shapes.
    Model(ModelConfig cfg, WeightStore weights);

    const ModelConfig& config() const noexcept { return cfg_; }
    const WeightStore& weights() const noexcept { return store_; }
    const ConvWeights& shallow() const noexcept { return shallow_; }
    const std::vector<UfoneWeights>& ufones() const noexcept { return ufones_; }
    const ConvWeights& deep() const noexcept { return deep_; }
    const ConvWeights& recon() const noexcept { return recon_; }

private:
    ModelConfig cfg_;
    WeightStore store_;
    ConvWeights shallow_;
    std::vector<UfoneWeights> ufones_;
    ConvWeights deep_;
    ConvWeights recon_;
};

/// tokens + ISA(norm1(tokens)), then the GDFN residual block, per patch.
PatchBatch itl_forward(const PatchBatch& tokens, const ItlWeights& w, AttentionPath path, OpCounters& ctr);

/// Spatial dilated attention branch on an already normalized C×H×W input:
/// out_conv(dconvs(x1) ⊙ x2) with (x1, x2) = split(in_conv(x)).
Tensor sda_branch(const Tensor& normed, const SalWeights& w);

/// f + SDA(norm1(f)), then the GDFN residual block over the full plane.
Tensor sal_forward(const Tensor& f, const SalWeights& w, OpCounters& ctr);

/// Unfold once, M ITLs, fold once, N SALs, trailing conv, unit residual.
Tensor ufone_forward(const Tensor& f, const UfoneWeights& w, const ModelConfig& cfg, AttentionPath path,
                     OpCounters& ctr);

/// Bottom/right mirror padding (no edge repeat) to h×w.
Tensor reflect_pad(const Tensor& img, std::size_t h, std::size_t w);

/// F_SF + F_DF on the padded grid (the input of the reconstruction head).
Tensor ditn_features(const Tensor& img, const Model& model, AttentionPath path, OpCounters& ctr);

/// 3×H×W in [0,1] -> 3×sH×sW, clamped to [0,1].
Tensor ditn_forward(const Tensor& img, const Model& model, AttentionPath path, OpCounters& ctr);

std::uint64_t count_params(const Model& model);
std::uint64_t count_params(const ModelConfig& cfg);
/// Parameter totals per top-level component: shallow, ufone.<k>, deep, recon.
std::vector<std::pair<std::string, std::uint64_t>> count_params_breakdown(const Model& model);
std::vector<std::pair<std::string, std::uint64_t>> count_params_breakdown(const ModelConfig& cfg);

/// Multiply-accumulates of one same-padded convolution.
std::uint64_t conv2d_macs(std::size_t c_in, std::size_t c_out, std::size_t k, bool depthwise, std::size_t h,
                          std::size_t w);

/// Multiply-accumulates (one MAC = one FLOP) of a forward producing an
/// out_h×out_w image, counted on the padded grid the engine executes. Convs
/// (including tanh_conv's 1×1) and attention matmuls only.
std::uint64_t estimate_flops(const ModelConfig& cfg, std::size_t out_h, std::size_t out_w);
std::uint64_t estimate_flops(const Model& model, std::size_t out_h, std::size_t out_w);

/// Recovers the structural configuration from tensor names and shapes. Patch
/// size and SDA dilation are not recorded in weights and come from `base`.
ModelConfig infer_config(const WeightStore& store, const ModelConfig& base = {});

} // namespace ditn
