#pragma once

#include <cstdint>

namespace ditn {

/// Per-forward instrumentation. Passed explicitly through every layer call so
/// concurrent forwards never share state.
struct OpCounters {
    std::uint64_t unfolds = 0;
    std::uint64_t folds = 0;
    std::uint64_t gemm_calls = 0;
    std::uint64_t peak_scratch_bytes = 0;
    std::uint64_t intermediate_tensors_materialized = 0;

    void acquire_scratch(std::uint64_t bytes) noexcept {
        live_scratch_ += bytes;
        if (live_scratch_ > peak_scratch_bytes) peak_scratch_bytes = live_scratch_;
    }
    void release_scratch(std::uint64_t bytes) noexcept { live_scratch_ -= bytes; }
    std::uint64_t live_scratch_bytes() const noexcept { return live_scratch_; }

    /// Folds a worker's record into this one. Peaks of concurrently running
    /// workers add up.
    void merge_concurrent(const OpCounters& worker) noexcept {
        unfolds += worker.unfolds;
        folds += worker.folds;
        gemm_calls += worker.gemm_calls;
        intermediate_tensors_materialized += worker.intermediate_tensors_materialized;
        peak_scratch_bytes += worker.peak_scratch_bytes;
    }

private:
    std::uint64_t live_scratch_ = 0;
};

/// Accounts `bytes` of scratch for the lifetime of the lease.
class ScratchLease {
public:
    ScratchLease(OpCounters& ctr, std::uint64_t bytes) noexcept : ctr_(ctr), bytes_(bytes) {
        ctr_.acquire_scratch(bytes_);
    }
    ~ScratchLease() { ctr_.release_scratch(bytes_); }
    ScratchLease(const ScratchLease&) = delete;
    ScratchLease& operator=(const ScratchLease&) = delete;

private:
    OpCounters& ctr_;
    std::uint64_t bytes_;
};

} // namespace ditn
