#include "ditn/model.hpp"

#include "ditn/error.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace ditn {

namespace {

using std::size_t;

ConvWeights bind_conv(const WeightStore& s, const std::string& prefix, size_t dilation = 1, bool depthwise = false) {
    ConvWeights cw{s.get(prefix + ".weight"), s.get(prefix + ".bias"), dilation, depthwise};
    cw.validate();
    return cw;
}

NormParams bind_norm(const WeightStore& s, const std::string& prefix, NormMode mode) {
    NormParams n;
    n.mode = mode;
    if (mode == NormMode::layer_norm) {
        n.gain = s.get(prefix + ".gain");
        n.bias = s.get(prefix + ".bias");
    } else {
        n.conv_weight = s.get(prefix + ".conv_weight");
        n.conv_bias = s.get(prefix + ".conv_bias");
    }
    n.validate();
    return n;
}

GdfnWeights bind_ffn(const WeightStore& s, const std::string& prefix, const ModelConfig& cfg) {
    GdfnWeights g{bind_conv(s, prefix + ".expand"), bind_conv(s, prefix + ".dwconv", 1, true),
                  bind_conv(s, prefix + ".project"), cfg.ffn_expansion};
    g.validate(cfg.channels);
    return g;
}

void check_layout(const ModelConfig& cfg, const WeightStore& store) {
    const auto layout = weight_layout(cfg);
    std::set<std::string> expected;
    for (const auto& spec : layout) {
        expected.insert(spec.name);
        if (!store.contains(spec.name)) throw ConfigError("weights: missing tensor '" + spec.name + "'");
        const auto& got = store.get(spec.name).shape();
        if (got != spec.shape) {
            throw ConfigError("weights: tensor '" + spec.name + "' has shape " + shape_str(got) + ", expected " +
                              shape_str(spec.shape));
        }
    }
    for (const auto& [name, t] : store) {
        if (!expected.count(name)) throw ConfigError("weights: unexpected tensor '" + name + "' for this config");
    }
}

Tensor crop_clamp(const Tensor& img, size_t h, size_t w) {
    const size_t c = img.dim(0), sh = img.dim(1), sw = img.dim(2);
    Tensor out({c, h, w});
    for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < h; ++y) {
            const float* src = img.data() + (ch * sh + y) * sw;
            float* dst = out.data() + (ch * h + y) * w;
            for (size_t x = 0; x < w; ++x) dst[x] = std::clamp(src[x], 0.0f, 1.0f);
        }
    }
    return out;
}

size_t round_up(size_t v, size_t m) { return (v + m - 1) / m * m; }

size_t mirror(size_t i, size_t n) {
    if (n == 1) return 0;
    const size_t period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
}

std::string component_of(const std::string& name) {
    const auto dot = name.find('.');
    const std::string head = name.substr(0, dot);
    if (head == "ufone") return name.substr(0, name.find('.', dot + 1));
    return head;
}

} // namespace

std::string_view path_name(AttentionPath path) { return path == AttentionPath::fused ? "fused" : "reference"; }

AttentionPath parse_path(std::string_view name) {
    if (name == "reference") return AttentionPath::reference;
    if (name == "fused") return AttentionPath::fused;
    throw ConfigError("unknown attention path '" + std::string(name) + "' (expected reference or fused)");
}

Model::Model(ModelConfig cfg, WeightStore weights) : cfg_(cfg), store_(std::move(weights)) {
    cfg_.validate();
    check_layout(cfg_, store_);
    const auto& s = store_;
    shallow_ = bind_conv(s, "shallow");
    for (size_t u = 0; u < cfg_.ufone_count; ++u) {
        const std::string up = "ufone." + std::to_string(u);
        UfoneWeights unit;
        for (size_t m = 0; m < cfg_.itl_per_ufone; ++m) {
            const std::string p = up + ".itl." + std::to_string(m);
            ItlWeights itl;
            itl.norm1 = bind_norm(s, p + ".norm1", cfg_.norm_mode);
            itl.isa.qkv_packed = s.get(p + ".isa.qkv_packed");
            itl.isa.qkv_bias = s.get(p + ".isa.qkv_bias");
            itl.isa.alpha = s.get(p + ".isa.alpha")[0];
            itl.isa.out_conv = bind_conv(s, p + ".isa.out_conv");
            itl.isa.validate();
            itl.norm2 = bind_norm(s, p + ".norm2", cfg_.norm_mode);
            itl.ffn = bind_ffn(s, p + ".ffn", cfg_);
            unit.itls.push_back(std::move(itl));
        }
        for (size_t n = 0; n < cfg_.sal_per_ufone; ++n) {
            const std::string p = up + ".sal." + std::to_string(n);
            SalWeights sal;
            sal.norm1 = bind_norm(s, p + ".norm1", cfg_.norm_mode);
            sal.in_conv = bind_conv(s, p + ".sda.in_conv");
            for (size_t d = 0; d < cfg_.sda_depth; ++d) {
                sal.dconvs.push_back(bind_conv(s, p + ".sda.dconv." + std::to_string(d), cfg_.sda_dilation, true));
            }
            sal.out_conv = bind_conv(s, p + ".sda.out_conv");
            sal.norm2 = bind_norm(s, p + ".norm2", cfg_.norm_mode);
            sal.ffn = bind_ffn(s, p + ".ffn", cfg_);
            unit.sals.push_back(std::move(sal));
        }
        unit.conv = bind_conv(s, up + ".conv");
        ufones_.push_back(std::move(unit));
    }
    deep_ = bind_conv(s, "deep");
    recon_ = bind_conv(s, "recon");
}

PatchBatch itl_forward(const PatchBatch& tokens, const ItlWeights& w, AttentionPath path, OpCounters& ctr) {
    PatchBatch normed{normalize(tokens.data, w.norm1)};
    PatchBatch attended = path == AttentionPath::fused ? isa_fused(normed, w.isa, ctr) : isa_reference(normed, w.isa, ctr);
    Tensor x = add(tokens.data, attended.data);
    return PatchBatch{gdfn(x, w.ffn, w.norm2)};
}

Tensor sda_branch(const Tensor& normed, const SalWeights& w) {
    auto [x1, x2] = split_channels(conv2d(normed, w.in_conv));
    for (const auto& dc : w.dconvs) x1 = conv2d(x1, dc);
    return conv2d(mul(x1, x2), w.out_conv);
}

Tensor sal_forward(const Tensor& f, const SalWeights& w, OpCounters&) {
    Tensor y = add(f, sda_branch(normalize(f, w.norm1), w));
    return gdfn(y, w.ffn, w.norm2);
}

Tensor ufone_forward(const Tensor& f, const UfoneWeights& w, const ModelConfig& cfg, AttentionPath path,
                     OpCounters& ctr) {
    Tensor x = f;
    if (!w.itls.empty()) {
        PatchBatch tokens = unfold_patches(f, cfg.patch_size, ctr);
        for (const auto& itl : w.itls) tokens = itl_forward(tokens, itl, path, ctr);
        x = fold_patches(tokens, f.dim(1), f.dim(2), ctr);
    }
    for (const auto& sal : w.sals) x = sal_forward(x, sal, ctr);
    return add(f, conv2d(x, w.conv));
}

Tensor reflect_pad(const Tensor& img, size_t h, size_t w) {
    if (img.rank() != 3) throw DimensionError("reflect_pad: expected C×H×W, got " + shape_str(img.shape()));
    const size_t c = img.dim(0), ih = img.dim(1), iw = img.dim(2);
    if (h < ih || w < iw) throw DimensionError("reflect_pad: target smaller than input");
    if (h == ih && w == iw) return img;
    Tensor out({c, h, w});
    for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < h; ++y) {
            const float* src = img.data() + (ch * ih + mirror(y, ih)) * iw;
            float* dst = out.data() + (ch * h + y) * w;
            for (size_t x = 0; x < w; ++x) dst[x] = src[mirror(x, iw)];
        }
    }
    return out;
}

Tensor ditn_features(const Tensor& img, const Model& model, AttentionPath path, OpCounters& ctr) {
    if (img.empty() || img.rank() != 3 || img.dim(0) != 3) {
        throw DimensionError("ditn_forward: expected a non-empty 3×H×W image, got " + shape_str(img.shape()));
    }
    const auto& cfg = model.config();
    const size_t p = cfg.patch_size;
    Tensor x = reflect_pad(img, round_up(img.dim(1), p), round_up(img.dim(2), p));
    Tensor shallow = conv2d(x, model.shallow());
    Tensor f = shallow;
    for (const auto& unit : model.ufones()) f = ufone_forward(f, unit, cfg, path, ctr);
    return add(shallow, conv2d(f, model.deep()));
}

Tensor ditn_forward(const Tensor& img, const Model& model, AttentionPath path, OpCounters& ctr) {
    Tensor feat = ditn_features(img, model, path, ctr);
    const size_t s = model.config().scale;
    Tensor up = pixel_shuffle(conv2d(feat, model.recon()), s);
    return crop_clamp(up, img.dim(1) * s, img.dim(2) * s);
}

std::uint64_t count_params(const Model& model) {
    std::uint64_t n = 0;
    for (const auto& [name, t] : model.weights()) n += t.numel();
    return n;
}

std::uint64_t count_params(const ModelConfig& cfg) {
    std::uint64_t n = 0;
    for (const auto& spec : weight_layout(cfg)) n += shape_numel(spec.shape);
    return n;
}

namespace {

template <class Range, class Numel>
std::vector<std::pair<std::string, std::uint64_t>> breakdown(const Range& items, Numel numel) {
    std::vector<std::pair<std::string, std::uint64_t>> out;
    for (const auto& item : items) {
        const auto [name, count] = numel(item);
        const std::string comp = component_of(name);
        if (out.empty() || out.back().first != comp) out.emplace_back(comp, 0);
        out.back().second += count;
    }
    return out;
}

} // namespace

std::vector<std::pair<std::string, std::uint64_t>> count_params_breakdown(const Model& model) {
    return breakdown(model.weights(), [](const WeightStore::Entry& e) {
        return std::pair<std::string, std::uint64_t>{e.first, e.second.numel()};
    });
}

std::vector<std::pair<std::string, std::uint64_t>> count_params_breakdown(const ModelConfig& cfg) {
    return breakdown(weight_layout(cfg), [](const TensorSpec& s) {
        return std::pair<std::string, std::uint64_t>{s.name, shape_numel(s.shape)};
    });
}

std::uint64_t conv2d_macs(size_t c_in, size_t c_out, size_t k, bool depthwise, size_t h, size_t w) {
    const std::uint64_t per_out = depthwise ? k * k : c_in * k * k;
    return per_out * c_out * h * w;
}

std::uint64_t estimate_flops(const ModelConfig& cfg, size_t out_h, size_t out_w) {
    cfg.validate();
    const size_t s = cfg.scale, c = cfg.channels, hid = cfg.ffn_hidden();
    const size_t h = round_up((out_h + s - 1) / s, cfg.patch_size);
    const size_t w = round_up((out_w + s - 1) / s, cfg.patch_size);
    const std::uint64_t hw = static_cast<std::uint64_t>(h) * w;

    const std::uint64_t norm = cfg.norm_mode == NormMode::tanh_conv ? conv2d_macs(c, c, 1, false, h, w) : 0;
    const std::uint64_t ffn = conv2d_macs(c, 2 * hid, 1, false, h, w) + conv2d_macs(2 * hid, 2 * hid, 3, true, h, w) +
                              conv2d_macs(hid, c, 1, false, h, w);
    // Per patch: QKV 3C·C·P², scores C·C·P², A·V C·C·P²; summed over patches.
    const std::uint64_t attention = 3 * c * c * hw + 2 * c * c * hw;
    const std::uint64_t itl =
        2 * norm + attention + conv2d_macs(c, c, cfg.itl_out_conv_kernel, false, h, w) + ffn;
    const std::uint64_t sal = 2 * norm + conv2d_macs(c, 2 * c, 1, false, h, w) +
                              cfg.sda_depth * conv2d_macs(c, c, cfg.sda_kernel, true, h, w) +
                              conv2d_macs(c, c, 1, false, h, w) + ffn;
    const std::uint64_t unit =
        cfg.itl_per_ufone * itl + cfg.sal_per_ufone * sal + conv2d_macs(c, c, 3, false, h, w);

    return conv2d_macs(3, c, 3, false, h, w) + cfg.ufone_count * unit + conv2d_macs(c, c, 3, false, h, w) +
           conv2d_macs(c, 3 * s * s, 3, false, h, w);
}

std::uint64_t estimate_flops(const Model& model, size_t out_h, size_t out_w) {
    return estimate_flops(model.config(), out_h, out_w);
}

ModelConfig infer_config(const WeightStore& store, const ModelConfig& base) {
    auto need = [&](const std::string& name) -> const Tensor& {
        if (!store.contains(name)) throw ConfigError("weights: cannot infer config, missing '" + name + "'");
        return store.get(name);
    };
    ModelConfig cfg = base;
    cfg.channels = need("shallow.weight").dim(0);
    const size_t recon_out = need("recon.weight").dim(0);
    size_t s = 1;
    while (3 * s * s < recon_out) ++s;
    if (3 * s * s != recon_out) throw ConfigError("weights: recon head width is not 3·s²");
    cfg.scale = s;

    std::map<size_t, std::pair<size_t, size_t>> units; // ufone -> (itl count, sal count)
    size_t depth = 0;
    for (const auto& [name, t] : store) {
        if (name.rfind("ufone.", 0) != 0) continue;
        const size_t u = std::stoul(name.substr(6));
        auto& [m, n] = units[u];
        const auto rest = name.substr(name.find('.', 6) + 1);
        if (rest.rfind("itl.", 0) == 0) m = std::max(m, std::stoul(rest.substr(4)) + 1);
        if (rest.rfind("sal.", 0) == 0) n = std::max(n, std::stoul(rest.substr(4)) + 1);
        if (const auto pos = rest.find(".sda.dconv."); pos != std::string::npos) {
            depth = std::max(depth, std::stoul(rest.substr(pos + 11)) + 1);
        }
    }
    if (units.empty()) throw ConfigError("weights: no ufone tensors found");
    cfg.ufone_count = units.size();
    cfg.itl_per_ufone = units.begin()->second.first;
    cfg.sal_per_ufone = units.begin()->second.second;
    const std::string l0 = cfg.itl_per_ufone ? "ufone.0.itl.0" : "ufone.0.sal.0";
    cfg.norm_mode = store.contains(l0 + ".norm1.gain") ? NormMode::layer_norm : NormMode::tanh_conv;
    cfg.ffn_expansion =
        static_cast<float>(need(l0 + ".ffn.project.weight").dim(1)) / static_cast<float>(cfg.channels);
    if (cfg.itl_per_ufone) cfg.itl_out_conv_kernel = need("ufone.0.itl.0.isa.out_conv.weight").dim(2);
    if (cfg.sal_per_ufone) {
        cfg.sda_kernel = need("ufone.0.sal.0.sda.dconv.0.weight").dim(2);
        cfg.sda_depth = depth;
    }
    cfg.validate();
    return cfg;
}

} // namespace ditn
