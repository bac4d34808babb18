#pragma once

#include "ditn/counters.hpp"
#include "ditn/nn_ops.hpp"
#include "ditn/tensor.hpp"

#include <functional>

namespace ditn {

/// Eps guard for the L2 normalization of query/key rows.
inline constexpr float kQkNormEps = 1e-12f;

/// Single-head inner-patch self-attention weights. The packed projection
/// stacks the query, key and value matrices (rows [0,C), [C,2C), [2C,3C)).
struct IsaWeights {
    Tensor qkv_packed; // 3C×C
    Tensor qkv_bias;   // 3C
    float alpha = 1.0f;
    ConvWeights out_conv;

    std::size_t channels() const { return qkv_packed.dim(1); }
    void validate() const;
};

struct QkvTensors {
    PatchBatch q;
    PatchBatch k;
    PatchBatch v;
};

/// Three GEMMs per patch against the sliced projection matrices.
QkvTensors qkv_project_reference(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr);

/// One triple-channel GEMM per patch against the packed matrix; output rows
/// are routed by offset into the Q, K and V buffers.
QkvTensors qkv_project_fused(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr);

/// Called once per patch with the C×C row-stochastic attention matrix.
using AttentionProbe = std::function<void(std::size_t patch, const Tensor& attention)>;

/// Attention branch out_conv(A·V) with A = softmax(Q̂·K̂ᵀ / α), computed across
/// channels. Unfused graph: every stage is materialized for the whole batch.
/// The caller owns normalization and the residual add.
PatchBatch isa_reference(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr,
                         const AttentionProbe& probe = {});

/// Same result as isa_reference, one patch at a time through a fixed arena.
PatchBatch isa_fused(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr);

/// Floats in the fused path's per-worker arena: packed QKV, scores, A·V.
std::size_t fused_arena_floats(std::size_t channels, std::size_t tokens);

} // namespace ditn
