#include "ditn/attention.hpp"

#include "ditn/error.hpp"

#include <vector>

namespace ditn {

namespace {

using std::size_t;

constexpr std::uint64_t bytes_of(size_t floats) { return static_cast<std::uint64_t>(floats) * sizeof(float); }

void check_tokens(const PatchBatch& tokens, const IsaWeights& w) {
    w.validate();
    if (tokens.data.rank() != 4) {
        throw DimensionError("attention: expected B×C×P×P patches, got " + shape_str(tokens.data.shape()));
    }
    if (tokens.channels() != w.channels()) {
        throw DimensionError("attention: patches " + shape_str(tokens.data.shape()) + " vs projection " +
                             shape_str(w.qkv_packed.shape()));
    }
}

void add_row_bias(float* rows, const float* bias, size_t n_rows, size_t n_cols) {
    for (size_t r = 0; r < n_rows; ++r) {
        const float b = bias[r];
        float* row = rows + r * n_cols;
        for (size_t j = 0; j < n_cols; ++j) row[j] += b;
    }
}

void divide_all(float* v, size_t n, float alpha) {
    for (size_t i = 0; i < n; ++i) v[i] /= alpha;
}

} // namespace

void IsaWeights::validate() const {
    if (qkv_packed.rank() != 2 || qkv_packed.dim(0) != 3 * qkv_packed.dim(1)) {
        throw DimensionError("qkv_packed must be 3C×C, got " + shape_str(qkv_packed.shape()));
    }
    if (qkv_bias.shape() != Shape{qkv_packed.dim(0)}) {
        throw DimensionError("qkv_bias must be [3C], got " + shape_str(qkv_bias.shape()));
    }
    if (!(alpha > 0.0f)) throw DimensionError("attention temperature alpha must be positive");
    out_conv.validate();
    const size_t c = channels();
    if (out_conv.depthwise || out_conv.in_channels() != c || out_conv.out_channels() != c) {
        throw DimensionError("attention out_conv must map C->C, got " + shape_str(out_conv.kernel.shape()));
    }
}

size_t fused_arena_floats(size_t channels, size_t tokens) {
    return 3 * channels * tokens + channels * channels + channels * tokens;
}

QkvTensors qkv_project_reference(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr) {
    check_tokens(tokens, w);
    const size_t c = tokens.channels(), t = tokens.tokens(), stride = tokens.patch_stride();
    QkvTensors out{PatchBatch{Tensor(tokens.data.shape())}, PatchBatch{Tensor(tokens.data.shape())},
                   PatchBatch{Tensor(tokens.data.shape())}};
    const Tensor slices[3] = {slice_rows(w.qkv_packed, 0, c), slice_rows(w.qkv_packed, c, 2 * c),
                              slice_rows(w.qkv_packed, 2 * c, 3 * c)};
    Tensor* dst[3] = {&out.q.data, &out.k.data, &out.v.data};
    for (size_t b = 0; b < tokens.batch(); ++b) {
        const float* x = tokens.data.data() + b * stride;
        for (size_t s = 0; s < 3; ++s) {
            float* o = dst[s]->data() + b * stride;
            kernels::gemm(slices[s].data(), x, o, c, c, t, false);
            add_row_bias(o, w.qkv_bias.data() + s * c, c, t);
            ++ctr.gemm_calls;
        }
    }
    ctr.intermediate_tensors_materialized += 3;
    return out;
}

QkvTensors qkv_project_fused(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr) {
    check_tokens(tokens, w);
    const size_t c = tokens.channels(), t = tokens.tokens(), stride = tokens.patch_stride();
    QkvTensors out{PatchBatch{Tensor(tokens.data.shape())}, PatchBatch{Tensor(tokens.data.shape())},
                   PatchBatch{Tensor(tokens.data.shape())}};
    float* regions[3] = {out.q.data.data(), out.k.data.data(), out.v.data.data()};
    std::vector<float*> rows(3 * c);
    for (size_t b = 0; b < tokens.batch(); ++b) {
        for (size_t r = 0; r < 3 * c; ++r) rows[r] = regions[r / c] + b * stride + (r % c) * t;
        kernels::gemm_routed(w.qkv_packed.data(), tokens.data.data() + b * stride, rows, c, t);
        ++ctr.gemm_calls;
        for (size_t s = 0; s < 3; ++s) add_row_bias(regions[s] + b * stride, w.qkv_bias.data() + s * c, c, t);
    }
    ctr.intermediate_tensors_materialized += 3;
    return out;
}

PatchBatch isa_reference(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr, const AttentionProbe& probe) {
    QkvTensors qkv = qkv_project_reference(tokens, w, ctr);
    const size_t bsz = tokens.batch(), c = tokens.channels(), t = tokens.tokens(), stride = tokens.patch_stride();
    const size_t p = tokens.patch_size();
    ScratchLease qkv_lease(ctr, bytes_of(3 * bsz * stride));

    // Q̂, K̂
    Tensor q_hat = qkv.q.data;
    Tensor k_hat = qkv.k.data;
    ScratchLease norm_lease(ctr, bytes_of(2 * bsz * stride));
    ctr.intermediate_tensors_materialized += 2;
    for (size_t r = 0; r < bsz * c; ++r) {
        kernels::l2_normalize_row(q_hat.data() + r * t, t, kQkNormEps);
        kernels::l2_normalize_row(k_hat.data() + r * t, t, kQkNormEps);
    }

    // Q̂·K̂ᵀ / α
    Tensor scores({bsz, c, c});
    ScratchLease scores_lease(ctr, bytes_of(bsz * c * c));
    ++ctr.intermediate_tensors_materialized;
    for (size_t b = 0; b < bsz; ++b) {
        kernels::gemm_abt(q_hat.data() + b * stride, k_hat.data() + b * stride, scores.data() + b * c * c, c, t, c);
        ++ctr.gemm_calls;
    }
    divide_all(scores.data(), scores.numel(), w.alpha);

    Tensor attn = scores;
    ScratchLease attn_lease(ctr, bytes_of(bsz * c * c));
    ++ctr.intermediate_tensors_materialized;
    for (size_t r = 0; r < bsz * c; ++r) kernels::softmax_row(attn.data() + r * c, c);
    if (probe) {
        for (size_t b = 0; b < bsz; ++b) {
            probe(b, Tensor({c, c}, std::vector<float>(attn.data() + b * c * c, attn.data() + (b + 1) * c * c)));
        }
    }

    // A·V
    Tensor av(tokens.data.shape());
    ScratchLease av_lease(ctr, bytes_of(bsz * stride));
    ++ctr.intermediate_tensors_materialized;
    for (size_t b = 0; b < bsz; ++b) {
        kernels::gemm(attn.data() + b * c * c, qkv.v.data.data() + b * stride, av.data() + b * stride, c, c, t,
                      false);
        ++ctr.gemm_calls;
    }

    PatchBatch out{Tensor(tokens.data.shape())};
    for (size_t b = 0; b < bsz; ++b) {
        conv2d_plane(av.data() + b * stride, c, p, p, w.out_conv, out.data.data() + b * stride);
    }
    return out;
}

PatchBatch isa_fused(const PatchBatch& tokens, const IsaWeights& w, OpCounters& ctr) {
    check_tokens(tokens, w);
    const size_t bsz = tokens.batch(), c = tokens.channels(), t = tokens.tokens(), stride = tokens.patch_stride();
    const size_t p = tokens.patch_size();

    std::vector<float> arena(fused_arena_floats(c, t));
    ScratchLease lease(ctr, bytes_of(arena.size()));
    float* qkv = arena.data();
    float* q = qkv;
    float* k = qkv + c * t;
    float* v = qkv + 2 * c * t;
    float* scores = qkv + 3 * c * t;
    float* av = scores + c * c;
    std::vector<float*> rows(3 * c);
    for (size_t r = 0; r < 3 * c; ++r) rows[r] = qkv + r * t;

    PatchBatch out{Tensor(tokens.data.shape())};
    for (size_t b = 0; b < bsz; ++b) {
        kernels::gemm_routed(w.qkv_packed.data(), tokens.data.data() + b * stride, rows, c, t);
        ++ctr.gemm_calls;
        add_row_bias(qkv, w.qkv_bias.data(), 3 * c, t);
        for (size_t r = 0; r < c; ++r) {
            kernels::l2_normalize_row(q + r * t, t, kQkNormEps);
            kernels::l2_normalize_row(k + r * t, t, kQkNormEps);
        }
        kernels::gemm_abt(q, k, scores, c, t, c);
        ++ctr.gemm_calls;
        for (size_t r = 0; r < c; ++r) {
            divide_all(scores + r * c, c, w.alpha);
            kernels::softmax_row(scores + r * c, c);
        }
        kernels::gemm(scores, v, av, c, c, t, false);
        ++ctr.gemm_calls;
        conv2d_plane(av, c, p, p, w.out_conv, out.data.data() + b * stride);
    }
    return out;
}

} // namespace ditn
