#include "ditn/tensor.hpp"

#include "ditn/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace ditn {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

namespace {

void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have rank >= 1");
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero dimension");
    }
}

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

} // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                             " values");
    }
}

Tensor Tensor::full(Shape shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::eye(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
    return t;
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy = *this;
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    check_shape(shape);
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data_);
    return t;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0);
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    float m = 0.0f;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

namespace kernels {

void gemm(const float* a, const float* b, float* out, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        float* orow = out + i * n;
        if (!accumulate) std::fill(orow, orow + n, 0.0f);
        const float* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

void gemm_abt(const float* a, const float* b, float* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            float s = 0.0f;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            out[i * n + j] = s;
        }
    }
}

void gemm_routed(const float* a, const float* b, std::span<float* const> rows, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        float* orow = rows[i];
        std::fill(orow, orow + n, 0.0f);
        const float* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

void softmax_row(float* row, std::size_t n) {
    float mx = row[0];
    for (std::size_t j = 0; j < n; ++j) {
        if (std::isnan(row[j])) throw NumericError("softmax_rows: NaN input");
        mx = std::max(mx, row[j]);
    }
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    const float inv = 1.0f / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

void l2_normalize_row(float* row, std::size_t n, float eps) {
    float ss = 0.0f;
    for (std::size_t j = 0; j < n; ++j) ss += row[j] * row[j];
    const float denom = std::max(std::sqrt(ss), eps);
    for (std::size_t j = 0; j < n; ++j) row[j] /= denom;
}

} // namespace kernels

Tensor gemm(const Tensor& a, const Tensor& b, const Tensor* accumulate_into) {
    require_rank2(a, "gemm");
    require_rank2(b, "gemm");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("gemm: inner dimensions differ: " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    if (accumulate_into) {
        if (accumulate_into->shape() != out.shape()) {
            throw DimensionError("gemm: accumulator " + shape_str(accumulate_into->shape()) + " does not match " +
                                 shape_str(out.shape()));
        }
        out = *accumulate_into;
    }
    kernels::gemm(a.data(), b.data(), out.data(), m, k, n, accumulate_into != nullptr);
    return out;
}

Tensor gemm_abt(const Tensor& a, const Tensor& b) {
    require_rank2(a, "gemm_abt");
    require_rank2(b, "gemm_abt");
    if (a.dim(1) != b.dim(1)) {
        throw DimensionError("gemm_abt: inner dimensions differ: " + shape_str(a.shape()) + " · " +
                             shape_str(b.shape()) + "ᵀ");
    }
    Tensor out({a.dim(0), b.dim(0)});
    kernels::gemm_abt(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(0));
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    require_rank2(a, "softmax_rows");
    Tensor out = a;
    for (std::size_t i = 0; i < a.dim(0); ++i) kernels::softmax_row(out.data() + i * a.dim(1), a.dim(1));
    return out;
}

Tensor l2_normalize_rows(const Tensor& a, float eps) {
    require_rank2(a, "l2_normalize_rows");
    if (!(eps > 0.0f)) throw std::invalid_argument("l2_normalize_rows: eps must be positive");
    Tensor out = a;
    for (std::size_t i = 0; i < a.dim(0); ++i) kernels::l2_normalize_row(out.data() + i * a.dim(1), a.dim(1), eps);
    return out;
}

float gelu(float x) {
    return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f));
}

Tensor elementwise(const Tensor& a, const Tensor& b, BinaryOp op) {
    if (a.shape() != b.shape()) {
        throw DimensionError("elementwise: shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor out = a;
    float* o = out.data();
    const float* q = b.data();
    const std::size_t n = out.numel();
    switch (op) {
    case BinaryOp::add:
        for (std::size_t i = 0; i < n; ++i) o[i] += q[i];
        break;
    case BinaryOp::mul:
        for (std::size_t i = 0; i < n; ++i) o[i] *= q[i];
        break;
    }
    return out;
}

Tensor map(const Tensor& a, UnaryFn fn) {
    Tensor out = a;
    float* o = out.data();
    const std::size_t n = out.numel();
    switch (fn) {
    case UnaryFn::tanh:
        for (std::size_t i = 0; i < n; ++i) o[i] = std::tanh(o[i]);
        break;
    case UnaryFn::gelu:
        for (std::size_t i = 0; i < n; ++i) o[i] = gelu(o[i]);
        break;
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::add); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, BinaryOp::mul); }

Tensor scale(const Tensor& a, float factor) {
    Tensor out = a;
    for (auto& v : out.values()) v *= factor;
    return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require_rank2(a, "slice_rows");
    if (begin >= end || end > a.dim(0)) {
        throw DimensionError("slice_rows: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") for " + shape_str(a.shape()));
    }
    const std::size_t cols = a.dim(1);
    std::vector<float> v(a.data() + begin * cols, a.data() + end * cols);
    return Tensor({end - begin, cols}, std::move(v));
}

} // namespace ditn
