#include "ditn/config.hpp"

#include "ditn/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ditn {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t parse_count(std::string_view key, std::string_view v) {
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + std::string(key) + "' expects a non-negative integer, got '" +
                          std::string(v) + "'");
    }
    return out;
}

float parse_real(std::string_view key, std::string_view v) {
    std::string s(v);
    std::size_t pos = 0;
    float out = 0.0f;
    try {
        out = std::stof(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || s.empty()) {
        throw ConfigError("config: '" + std::string(key) + "' expects a number, got '" + s + "'");
    }
    return out;
}

NormMode parse_norm(std::string_view v) {
    if (v == "layer_norm") return NormMode::layer_norm;
    if (v == "tanh_conv") return NormMode::tanh_conv;
    throw ConfigError("config: norm_mode must be layer_norm or tanh_conv, got '" + std::string(v) + "'");
}

void add_conv(std::vector<TensorSpec>& out, const std::string& prefix, std::size_t c_out, std::size_t c_in,
              std::size_t k, bool depthwise = false) {
    const std::size_t cin_per = depthwise ? 1 : c_in;
    out.push_back({prefix + ".weight", {c_out, cin_per, k, k}, InitKind::fan_in_uniform, cin_per * k * k});
    out.push_back({prefix + ".bias", {c_out}, InitKind::zero});
}

void add_norm(std::vector<TensorSpec>& out, const std::string& prefix, const ModelConfig& cfg) {
    const std::size_t c = cfg.channels;
    if (cfg.norm_mode == NormMode::layer_norm) {
        out.push_back({prefix + ".gain", {c}, InitKind::one});
        out.push_back({prefix + ".bias", {c}, InitKind::zero});
    } else {
        out.push_back({prefix + ".conv_weight", {c, c}, InitKind::identity_noise, c});
        out.push_back({prefix + ".conv_bias", {c}, InitKind::zero});
    }
}

void add_ffn(std::vector<TensorSpec>& out, const std::string& prefix, const ModelConfig& cfg) {
    const std::size_t c = cfg.channels, h = cfg.ffn_hidden();
    add_conv(out, prefix + ".expand", 2 * h, c, 1);
    add_conv(out, prefix + ".dwconv", 2 * h, 2 * h, 3, true);
    add_conv(out, prefix + ".project", c, h, 1);
}

} // namespace

std::size_t ModelConfig::ffn_hidden() const {
    return static_cast<std::size_t>(std::floor(static_cast<double>(ffn_expansion) * channels + 1e-4));
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (scale < 1) fail("scale must be >= 1");
    if (channels < 1) fail("channels must be >= 1");
    if (ufone_count < 1) fail("ufone_count must be >= 1");
    if (itl_per_ufone + sal_per_ufone < 1) fail("itl_per_ufone + sal_per_ufone must be >= 1");
    if (patch_size < 1) fail("patch_size must be >= 1");
    if (sda_kernel < 1 || sda_kernel % 2 == 0) fail("sda_kernel must be odd");
    if (sda_dilation < 1) fail("sda_dilation must be >= 1");
    if (sda_depth < 1) fail("sda_depth must be >= 1");
    if (!(ffn_expansion > 0.0f) || ffn_hidden() < 1) fail("ffn_expansion must give a hidden width >= 1");
    if (itl_out_conv_kernel < 1 || itl_out_conv_kernel % 2 == 0) fail("itl_out_conv_kernel must be odd");
}

ModelConfig ModelConfig::ditn(std::size_t scale) {
    ModelConfig c;
    c.scale = scale;
    c.ufone_count = 3;
    return c;
}

ModelConfig ModelConfig::ditn_tiny(std::size_t scale) {
    ModelConfig c;
    c.scale = scale;
    c.ufone_count = 1;
    return c;
}

ModelConfig ModelConfig::ditn_real(std::size_t scale) {
    ModelConfig c = ditn_tiny(scale);
    c.norm_mode = NormMode::tanh_conv;
    return c;
}

ModelConfig ModelConfig::preset(std::string_view name, std::size_t scale) {
    if (name == "ditn") return ditn(scale);
    if (name == "ditn-tiny") return ditn_tiny(scale);
    if (name == "ditn-real") return ditn_real(scale);
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected ditn, ditn-tiny or ditn-real)");
}

std::string_view norm_mode_name(NormMode mode) {
    return mode == NormMode::layer_norm ? "layer_norm" : "tanh_conv";
}

ModelConfig parse_config(std::string_view text, ModelConfig cfg) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto val = trim(line.substr(eq + 1));
        if (key == "scale") cfg.scale = parse_count(key, val);
        else if (key == "channels") cfg.channels = parse_count(key, val);
        else if (key == "ufone_count") cfg.ufone_count = parse_count(key, val);
        else if (key == "itl_per_ufone") cfg.itl_per_ufone = parse_count(key, val);
        else if (key == "sal_per_ufone") cfg.sal_per_ufone = parse_count(key, val);
        else if (key == "patch_size") cfg.patch_size = parse_count(key, val);
        else if (key == "sda_kernel") cfg.sda_kernel = parse_count(key, val);
        else if (key == "sda_dilation") cfg.sda_dilation = parse_count(key, val);
        else if (key == "sda_depth") cfg.sda_depth = parse_count(key, val);
        else if (key == "norm_mode") cfg.norm_mode = parse_norm(val);
        else if (key == "ffn_expansion") cfg.ffn_expansion = parse_real(key, val);
        else if (key == "itl_out_conv_kernel") cfg.itl_out_conv_kernel = parse_count(key, val);
        else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
    cfg.validate();
    return cfg;
}

ModelConfig load_config(const std::filesystem::path& path, ModelConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), base);
}

std::string format_config(const ModelConfig& cfg) {
    std::ostringstream os;
    os << "scale = " << cfg.scale << '\n'
       << "channels = " << cfg.channels << '\n'
       << "ufone_count = " << cfg.ufone_count << '\n'
       << "itl_per_ufone = " << cfg.itl_per_ufone << '\n'
       << "sal_per_ufone = " << cfg.sal_per_ufone << '\n'
       << "patch_size = " << cfg.patch_size << '\n'
       << "sda_kernel = " << cfg.sda_kernel << '\n'
       << "sda_dilation = " << cfg.sda_dilation << '\n'
       << "sda_depth = " << cfg.sda_depth << '\n'
       << "norm_mode = " << norm_mode_name(cfg.norm_mode) << '\n'
       << "ffn_expansion = " << cfg.ffn_expansion << '\n'
       << "itl_out_conv_kernel = " << cfg.itl_out_conv_kernel << '\n';
    return os.str();
}

std::vector<TensorSpec> weight_layout(const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t c = cfg.channels;
    std::vector<TensorSpec> out;
    add_conv(out, "shallow", c, 3, 3);
    for (std::size_t u = 0; u < cfg.ufone_count; ++u) {
        const std::string up = "ufone." + std::to_string(u);
        for (std::size_t m = 0; m < cfg.itl_per_ufone; ++m) {
            const std::string p = up + ".itl." + std::to_string(m);
            add_norm(out, p + ".norm1", cfg);
            out.push_back({p + ".isa.qkv_packed", {3 * c, c}, InitKind::fan_in_uniform, c});
            out.push_back({p + ".isa.qkv_bias", {3 * c}, InitKind::zero});
            out.push_back({p + ".isa.alpha", {1}, InitKind::one});
            add_conv(out, p + ".isa.out_conv", c, c, cfg.itl_out_conv_kernel);
            add_norm(out, p + ".norm2", cfg);
            add_ffn(out, p + ".ffn", cfg);
        }
        for (std::size_t n = 0; n < cfg.sal_per_ufone; ++n) {
            const std::string p = up + ".sal." + std::to_string(n);
            add_norm(out, p + ".norm1", cfg);
            add_conv(out, p + ".sda.in_conv", 2 * c, c, 1);
            for (std::size_t d = 0; d < cfg.sda_depth; ++d) {
                add_conv(out, p + ".sda.dconv." + std::to_string(d), c, c, cfg.sda_kernel, true);
            }
            add_conv(out, p + ".sda.out_conv", c, c, 1);
            add_norm(out, p + ".norm2", cfg);
            add_ffn(out, p + ".ffn", cfg);
        }
        add_conv(out, up + ".conv", c, c, 3);
    }
    add_conv(out, "deep", c, c, 3);
    add_conv(out, "recon", 3 * cfg.scale * cfg.scale, c, 3);
    return out;
}

} // namespace ditn
