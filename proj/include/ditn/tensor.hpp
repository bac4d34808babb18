#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ditn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major float32 array. Every dimension is >= 1; a
/// default-constructed tensor is the empty placeholder with rank 0 and no data.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<float> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, float value);
    /// n×n identity.
    static Tensor eye(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> values() const noexcept { return data_; }
    std::span<float> values() noexcept { return data_; }
    const float* data() const noexcept { return data_.data(); }
    float* data() noexcept { return data_.data(); }

    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    /// Rank-2 element access.
    float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    float& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }

    /// Metadata-only reinterpretation; element count must match.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    bool bitwise_equal(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Max absolute elementwise difference. Shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// Raw kernels over contiguous row-major buffers. The reduction over k is
// always ascending so results are reproducible bit for bit.
namespace kernels {

/// out[M×N] (=|+=) a[M×K] · b[K×N]
void gemm(const float* a, const float* b, float* out, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate);

/// out[M×N] = a[M×K] · b[N×K]ᵀ
void gemm_abt(const float* a, const float* b, float* out, std::size_t m, std::size_t k,
              std::size_t n);

/// One GEMM a[M×K] · b[K×N] whose output row i is written to rows[i].
void gemm_routed(const float* a, const float* b, std::span<float* const> rows, std::size_t k,
                 std::size_t n);

void softmax_row(float* row, std::size_t n);
void l2_normalize_row(float* row, std::size_t n, float eps);

} // namespace kernels

// ---------------------------------------------------------------------------

/// a (M×K) · b (K×N). When `accumulate_into` is given it must be M×N and its
/// values are the starting sums.
Tensor gemm(const Tensor& a, const Tensor& b, const Tensor* accumulate_into = nullptr);

/// a (M×K) · bᵀ where b is N×K.
Tensor gemm_abt(const Tensor& a, const Tensor& b);

Tensor softmax_rows(const Tensor& a);
Tensor l2_normalize_rows(const Tensor& a, float eps);

enum class BinaryOp { add, mul };
enum class UnaryFn { tanh, gelu };

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op);
Tensor map(const Tensor& a, UnaryFn fn);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

float gelu(float x);

/// Rows [begin, end) of a rank-2 tensor.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

} // namespace ditn
