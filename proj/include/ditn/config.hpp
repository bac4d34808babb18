#pragma once

#include "ditn/nn_ops.hpp"
#include "ditn/tensor.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ditn {

/// Architecture hyperparameters. Defaults describe DITN-Tiny at ×2.
struct ModelConfig {
    std::size_t scale = 2;
    std::size_t channels = 60;
    std::size_t ufone_count = 1;
    std::size_t itl_per_ufone = 4;
    std::size_t sal_per_ufone = 4;
    std::size_t patch_size = 8;
    std::size_t sda_kernel = 7;
    std::size_t sda_dilation = 3;
    std::size_t sda_depth = 3;
    NormMode norm_mode = NormMode::layer_norm;
    float ffn_expansion = 1.5f;
    std::size_t itl_out_conv_kernel = 1;

    /// GDFN hidden width floor(e·C).
    std::size_t ffn_hidden() const;
    void validate() const;

    bool operator==(const ModelConfig&) const = default;

    static ModelConfig ditn(std::size_t scale);
    static ModelConfig ditn_tiny(std::size_t scale);
    static ModelConfig ditn_real(std::size_t scale);
    /// "ditn", "ditn-tiny" or "ditn-real".
    static ModelConfig preset(std::string_view name, std::size_t scale);
};

/// Parses `key = value` lines over `base`. Blank lines and `#` comments are
/// skipped; unknown keys and malformed values throw ConfigError.
ModelConfig parse_config(std::string_view text, ModelConfig base = {});
ModelConfig load_config(const std::filesystem::path& path, ModelConfig base = {});
std::string format_config(const ModelConfig& cfg);

std::string_view norm_mode_name(NormMode mode);

enum class InitKind { fan_in_uniform, zero, one, identity_noise };

struct TensorSpec {
    std::string name;
    Shape shape;
    InitKind init;
    std::size_t fan_in = 0;
};

/// Every weight tensor the configuration needs, in execution order.
std::vector<TensorSpec> weight_layout(const ModelConfig& cfg);

} // namespace ditn
