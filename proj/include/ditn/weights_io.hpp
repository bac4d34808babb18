#pragma once

#include "ditn/config.hpp"
#include "ditn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ditn {

/// Named tensors in insertion order. Names are unique.
class WeightStore {
public:
    using Entry = std::pair<std::string, Tensor>;

    /// Throws FormatError on a duplicate name.
    void insert(std::string name, Tensor tensor);
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    /// Throws std::out_of_range naming the missing tensor.
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    bool bitwise_equal(const WeightStore& other) const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// DITNW1 file magic, including its terminating NUL.
inline constexpr char kWeightMagic[7] = {'D', 'I', 'T', 'N', 'W', '1', '\0'};

/// Serialized DITNW1 bytes: magic, u32 count, per tensor (u16 name length,
/// name, u8 rank, u32 dims, f32 payload), trailing CRC-32 of everything after
/// the magic. All integers and floats little-endian.
std::vector<std::uint8_t> serialize_weights(const WeightStore& store);
WeightStore deserialize_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

/// CRC-32 (IEEE) of the serialized store, i.e. the file's trailing checksum.
std::uint32_t weights_crc(const WeightStore& store);

/// Deterministic initialization keyed by (seed, tensor name). Dense and
/// depthwise kernels ~ U(−a, a) with a = sqrt(1/fan_in); biases 0; α = 1;
/// norm gains 1; tanh_conv weights identity plus U(−0.01, 0.01) noise.
WeightStore random_init(const ModelConfig& cfg, std::uint64_t seed);

/// Counter-based generator: uniform in [0, 1) from (key, counter).
float uniform01(std::uint64_t key, std::uint64_t counter);
std::uint64_t name_key(std::uint64_t seed, std::string_view name);

/// Tensor of U(lo, hi) values drawn from the counter-based generator.
Tensor random_uniform(Shape shape, std::uint64_t key, float lo, float hi);

} // namespace ditn
