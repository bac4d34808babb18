#include "ditn/cli.hpp"

#include "ditn/attention.hpp"
#include "ditn/config.hpp"
#include "ditn/error.hpp"
#include "ditn/image.hpp"
#include "ditn/metrics.hpp"
#include "ditn/model.hpp"
#include "ditn/weights_io.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace ditn {

namespace fs = std::filesystem;

namespace {

using std::size_t;

/// Raised for bad flag values that CLI11 cannot validate on its own.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::pair<size_t, size_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument(s);
        size_t a = 0, b = 0;
        const size_t h = std::stoul(s.substr(0, x), &a);
        const size_t w = std::stoul(s.substr(x + 1), &b);
        if (a != x || b != s.size() - x - 1 || h == 0 || w == 0) throw std::invalid_argument(s);
        return {h, w};
    } catch (const std::logic_error&) {
        throw UsageError("size must look like HxW with positive integers, got '" + s + "'");
    }
}

std::string fmt_metric(double v, int precision = 4) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

void print_counters(std::ostream& os, const std::string& prefix, const OpCounters& c) {
    os << prefix << ".unfolds = " << c.unfolds << '\n'
       << prefix << ".folds = " << c.folds << '\n'
       << prefix << ".gemm_calls = " << c.gemm_calls << '\n'
       << prefix << ".peak_scratch_bytes = " << c.peak_scratch_bytes << '\n'
       << prefix << ".intermediate_tensors = " << c.intermediate_tensors_materialized << '\n';
}

ModelConfig resolve_config(const std::string& config_path, const std::string& preset, size_t scale) {
    ModelConfig base = ModelConfig::preset(preset, scale);
    if (config_path.empty()) return base;
    return load_config(config_path, base);
}

Model load_model(const std::string& weights_path, const std::string& config_path) {
    if (!fs::exists(weights_path)) throw IoError("weight file not found: " + weights_path);
    WeightStore store = load_weights(weights_path);
    const ModelConfig base = config_path.empty() ? ModelConfig{} : load_config(config_path);
    ModelConfig cfg = infer_config(store, base);
    return Model(cfg, std::move(store));
}

// ---------------------------------------------------------------------------

struct UpscaleArgs {
    std::string weights, config, path = "fused", input, output;
    size_t scale = 0;
};

int cmd_upscale(const UpscaleArgs& a, std::ostream& out, std::ostream& err) {
    const AttentionPath path = parse_path(a.path);
    Model model = load_model(a.weights, a.config);
    if (model.config().scale != a.scale) {
        throw UsageError("--scale " + std::to_string(a.scale) + " does not match the weights (x" +
                         std::to_string(model.config().scale) + ")");
    }
    const ImageU8 lr = load_image(a.input);
    OpCounters ctr;
    const Tensor sr = ditn_forward(to_float(lr), model, path, ctr);
    const ImageU8 result = to_u8(sr);
    save_image(result, a.output);
    out << "wrote " << a.output << " (" << result.width << "x" << result.height << ")\n";
    err << "path = " << path_name(path) << '\n';
    print_counters(err, "counters", ctr);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
    std::uint64_t seed = 0;
    size_t trials = 100;
    bool inject_fault = false;
};

IsaWeights random_isa(size_t c, std::uint64_t key) {
    IsaWeights w;
    const float a = std::sqrt(1.0f / static_cast<float>(c));
    w.qkv_packed = random_uniform({3 * c, c}, key ^ 1, -a, a);
    w.qkv_bias = random_uniform({3 * c}, key ^ 2, -0.1f, 0.1f);
    w.alpha = 0.25f + 2.0f * uniform01(key, 3);
    w.out_conv = ConvWeights{random_uniform({c, c, 1, 1}, key ^ 4, -a, a), random_uniform({c}, key ^ 5, -0.1f, 0.1f)};
    return w;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
    constexpr float kIsaTol = 1e-5f, kQkvTol = 1e-6f;
    constexpr size_t kChannels = 60, kPatch = 8;
    float isa_dev = 0.0f, qkv_dev = 0.0f;
    for (size_t t = 0; t < a.trials; ++t) {
        const std::uint64_t key = name_key(a.seed, "verify.trial." + std::to_string(t));
        const size_t batch = 1 + static_cast<size_t>(uniform01(key, 0) * 16.0f);
        const IsaWeights w = random_isa(kChannels, key);
        const PatchBatch tokens{random_uniform({batch, kChannels, kPatch, kPatch}, key ^ 7, -1.0f, 1.0f)};
        OpCounters rc, fc;
        const auto qr = qkv_project_reference(tokens, w, rc);
        const auto qf = qkv_project_fused(tokens, w, fc);
        qkv_dev = std::max({qkv_dev, max_abs_diff(qr.q.data, qf.q.data), max_abs_diff(qr.k.data, qf.k.data),
                            max_abs_diff(qr.v.data, qf.v.data)});
        const PatchBatch ref = isa_reference(tokens, w, rc);
        PatchBatch fused = isa_fused(tokens, w, fc);
        if (a.inject_fault && t == 0) fused.data[0] += 1e-3f;
        isa_dev = std::max(isa_dev, max_abs_diff(ref.data, fused.data));
    }

    // Fold/unfold roundtrip over assorted shapes.
    bool roundtrip_ok = true;
    for (size_t t = 0; t < std::max<size_t>(a.trials / 10, 1); ++t) {
        const std::uint64_t key = name_key(a.seed, "verify.fold." + std::to_string(t));
        const size_t c = 1 + static_cast<size_t>(uniform01(key, 0) * 8.0f);
        const size_t p = 1 + static_cast<size_t>(uniform01(key, 1) * 8.0f);
        const size_t gh = 1 + static_cast<size_t>(uniform01(key, 2) * 4.0f);
        const size_t gw = 1 + static_cast<size_t>(uniform01(key, 3) * 4.0f);
        const Tensor f = random_uniform({c, gh * p, gw * p}, key ^ 9, -1.0f, 1.0f);
        OpCounters ctr;
        roundtrip_ok = roundtrip_ok && fold_patches(unfold_patches(f, p, ctr), gh * p, gw * p, ctr).bitwise_equal(f);
    }

    // Impulse response of the default dilated stack (3 × depthwise 7×7, dilation 3).
    const ModelConfig cfg;
    const size_t reach = cfg.sda_depth * (cfg.sda_kernel - 1) / 2 * cfg.sda_dilation;
    const size_t side = 2 * reach + 1 + 2 * cfg.sda_dilation;
    Tensor impulse({1, side, side});
    const size_t center = side / 2;
    impulse[center * side + center] = 1.0f;
    ConvWeights ones{Tensor::full({1, 1, cfg.sda_kernel, cfg.sda_kernel}, 1.0f), Tensor({1}), cfg.sda_dilation, true};
    Tensor resp = impulse;
    for (size_t d = 0; d < cfg.sda_depth; ++d) resp = conv2d(resp, ones);
    bool footprint_ok = true;
    size_t min_off = side, max_off = 0;
    for (size_t y = 0; y < side; ++y) {
        for (size_t x = 0; x < side; ++x) {
            const long dy = static_cast<long>(y) - static_cast<long>(center);
            const long dx = static_cast<long>(x) - static_cast<long>(center);
            const long r = static_cast<long>(reach), d = static_cast<long>(cfg.sda_dilation);
            const bool expect = std::labs(dy) <= r && std::labs(dx) <= r && dy % d == 0 && dx % d == 0;
            const bool nonzero = resp[y * side + x] != 0.0f;
            footprint_ok = footprint_ok && expect == nonzero;
            if (nonzero) {
                min_off = std::min(min_off, y);
                max_off = std::max(max_off, y);
            }
        }
    }
    const size_t extent = max_off >= min_off ? max_off - min_off + 1 : 0;

    const bool isa_ok = isa_dev <= kIsaTol, qkv_ok = qkv_dev <= kQkvTol;
    const bool pass = isa_ok && qkv_ok && roundtrip_ok && footprint_ok;
    out << "isa fused vs reference      max |diff| = " << std::scientific << std::setprecision(3) << isa_dev
        << "  (tol " << kIsaTol << ")  " << (isa_ok ? "ok" : "FAIL") << '\n'
        << "qkv fused vs reference      max |diff| = " << qkv_dev << "  (tol " << kQkvTol << ")  "
        << (qkv_ok ? "ok" : "FAIL") << '\n'
        << std::defaultfloat << "fold/unfold roundtrip       " << (roundtrip_ok ? "bitwise ok" : "FAIL") << '\n'
        << "dilated receptive field     " << extent << "x" << extent << "  " << (footprint_ok ? "ok" : "FAIL")
        << '\n';
    out << "verify.trials = " << a.trials << '\n'
        << "verify.isa_max_abs_diff = " << std::scientific << isa_dev << '\n'
        << "verify.qkv_max_abs_diff = " << qkv_dev << std::defaultfloat << '\n'
        << "verify.roundtrip = " << (roundtrip_ok ? "pass" : "fail") << '\n'
        << "verify.receptive_field = " << extent << '\n'
        << "verify.result = " << (pass ? "pass" : "fail") << '\n';
    return pass ? kExitOk : kExitVerifyFailed;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string size = "64x64", path = "both", preset = "ditn-tiny", config;
    size_t scale = 2, repeats = 3;
    std::uint64_t seed = 0;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    const auto [h, w] = parse_size(a.size);
    const ModelConfig cfg = resolve_config(a.config, a.preset, a.scale);
    const Model model(cfg, random_init(cfg, a.seed));
    const Tensor img = random_uniform({3, h, w}, name_key(a.seed, "bench.input"), 0.0f, 1.0f);

    std::vector<AttentionPath> paths;
    if (a.path == "both") paths = {AttentionPath::reference, AttentionPath::fused};
    else paths = {parse_path(a.path)};

    std::map<AttentionPath, OpCounters> counters;
    out << "bench " << a.preset << " x" << cfg.scale << " on " << h << "x" << w << ", " << a.repeats
        << " repeats\n";
    out << std::left << std::setw(10) << "path" << std::right << std::setw(12) << "median_ms" << std::setw(9)
        << "unfolds" << std::setw(7) << "folds" << std::setw(12) << "gemm_calls" << std::setw(16) << "peak_scratch_B"
        << std::setw(15) << "intermediates" << '\n';
    std::ostringstream kv;
    for (AttentionPath p : paths) {
        std::vector<double> ms;
        OpCounters ctr;
        for (size_t r = 0; r < a.repeats; ++r) {
            OpCounters run;
            const auto t0 = std::chrono::steady_clock::now();
            (void)ditn_forward(img, model, p, run);
            const auto t1 = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            ctr = run;
        }
        std::sort(ms.begin(), ms.end());
        const double median = ms[ms.size() / 2];
        counters[p] = ctr;
        const std::string name(path_name(p));
        out << std::left << std::setw(10) << name << std::right << std::setw(12) << fmt_metric(median, 2)
            << std::setw(9) << ctr.unfolds << std::setw(7) << ctr.folds << std::setw(12) << ctr.gemm_calls
            << std::setw(16) << ctr.peak_scratch_bytes << std::setw(15) << ctr.intermediate_tensors_materialized
            << '\n';
        kv << "bench." << name << ".median_ms = " << fmt_metric(median, 3) << '\n';
        print_counters(kv, "bench." + name, ctr);
    }
    out << kv.str();
    if (counters.size() == 2) {
        const auto& ref = counters[AttentionPath::reference];
        const auto& fused = counters[AttentionPath::fused];
        const bool ok = fused.peak_scratch_bytes <= ref.peak_scratch_bytes;
        out << "bench.fused_scratch_le_reference = " << (ok ? "true" : "false") << '\n';
        if (!ok) return kExitVerifyFailed;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string lr, hr, weights, config, method = "network", path = "fused";
    size_t scale = 0;
    std::optional<size_t> crop;
};

std::map<std::string, fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::map<std::string, fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") files.emplace(e.path().filename().string(), e.path());
    }
    return files;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    if (a.method != "network" && a.method != "bicubic") {
        throw UsageError("--method must be network or bicubic, got '" + a.method + "'");
    }
    const bool bicubic = a.method == "bicubic";
    std::optional<Model> model;
    AttentionPath path = parse_path(a.path);
    if (!bicubic) {
        if (a.weights.empty()) throw UsageError("--weights is required for --method network");
        model.emplace(load_model(a.weights, a.config));
        if (model->config().scale != a.scale) {
            throw UsageError("--scale " + std::to_string(a.scale) + " does not match the weights (x" +
                             std::to_string(model->config().scale) + ")");
        }
    }
    const auto hr_files = list_pngs(a.hr);
    std::map<std::string, fs::path> lr_files;
    if (!a.lr.empty()) {
        lr_files = list_pngs(a.lr);
        std::vector<std::string> orphans;
        for (const auto& [n, p] : hr_files) {
            if (!lr_files.count(n)) orphans.push_back("hr/" + n);
        }
        for (const auto& [n, p] : lr_files) {
            if (!hr_files.count(n)) orphans.push_back("lr/" + n);
        }
        if (!orphans.empty()) {
            std::string msg = "unmatched image files:";
            for (const auto& o : orphans) msg += " " + o;
            throw UsageError(msg);
        }
    }
    if (hr_files.empty()) throw UsageError("no PNG files in " + a.hr);

    const size_t s = a.scale;
    const size_t crop = a.crop.value_or(s);
    std::vector<ImageScore> scores;
    for (const auto& [name, hr_path] : hr_files) {
        const ImageU8 hr = modcrop(load_image(hr_path), s);
        const ImageU8 lr =
            a.lr.empty() ? bicubic_resize(hr, hr.height / s, hr.width / s) : load_image(lr_files.at(name));
        ImageU8 sr;
        if (bicubic) {
            sr = bicubic_resize(lr, lr.height * s, lr.width * s);
        } else {
            OpCounters ctr;
            sr = to_u8(ditn_forward(to_float(lr), *model, path, ctr));
        }
        if (sr.height != hr.height || sr.width != hr.width) {
            throw DimensionError(name + ": output " + std::to_string(sr.width) + "x" + std::to_string(sr.height) +
                                 " does not match HR " + std::to_string(hr.width) + "x" + std::to_string(hr.height));
        }
        scores.push_back({name, psnr_y(sr, hr, crop), ssim_y(sr, hr, crop)});
    }
    const EvalResult r = summarize(std::move(scores));
    for (const auto& im : r.per_image) {
        out << std::left << std::setw(24) << im.name << std::right << "  PSNR " << std::setw(8)
            << fmt_metric(im.psnr_db, 2) << " dB  SSIM " << fmt_metric(im.ssim, 4) << '\n';
    }
    out << "average over " << r.n_images << " images: PSNR " << fmt_metric(r.psnr_db, 2) << " dB, SSIM "
        << fmt_metric(r.ssim, 4) << '\n';
    out << "eval.method = " << a.method << '\n'
        << "eval.scale = " << s << '\n'
        << "eval.crop = " << crop << '\n'
        << "eval.n_images = " << r.n_images << '\n'
        << "eval.psnr_db = " << fmt_metric(r.psnr_db, 4) << '\n'
        << "eval.ssim = " << fmt_metric(r.ssim, 6) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ParamsArgs {
    std::string config, preset = "ditn-tiny", out_size = "1280x720";
    size_t scale = 2;
};

int cmd_params(const ParamsArgs& a, std::ostream& out) {
    const ModelConfig cfg = resolve_config(a.config, a.preset, a.scale);
    const auto [ow, oh] = parse_size(a.out_size); // WxH, as in 1280x720
    const auto parts = count_params_breakdown(cfg);
    const std::uint64_t total = count_params(cfg);
    const std::uint64_t macs = estimate_flops(cfg, oh, ow);
    out << "configuration:\n" << format_config(cfg);
    out << "parameters:\n";
    for (const auto& [name, n] : parts) out << "  " << std::left << std::setw(10) << name << std::right << std::setw(10) << n << '\n';
    out << "  " << std::left << std::setw(10) << "total" << std::right << std::setw(10) << total << "  ("
        << fmt_metric(total / 1e6, 3) << "M)\n";
    out << "FLOPs for a " << ow << "x" << oh << " output: " << fmt_metric(macs / 1e9, 2)
        << "G (multiply-accumulates counted once; convs and attention matmuls only)\n";
    for (const auto& [name, n] : parts) out << "params." << name << " = " << n << '\n';
    out << "params.total = " << total << '\n'
        << "flops.output = " << ow << "x" << oh << '\n'
        << "flops.macs = " << macs << '\n'
        << "flops.convention = mac_once\n";
    return kExitOk;
}

struct InitArgs {
    std::string config, preset = "ditn-tiny", output;
    size_t scale = 2;
    std::uint64_t seed = 0;
};

int cmd_init_weights(const InitArgs& a, std::ostream& out) {
    const ModelConfig cfg = resolve_config(a.config, a.preset, a.scale);
    const WeightStore store = random_init(cfg, a.seed);
    save_weights(store, a.output);
    out << "wrote " << store.size() << " tensors to " << a.output << '\n'
        << "weights.tensors = " << store.size() << '\n'
        << "weights.params = " << count_params(cfg) << '\n'
        << "weights.crc32 = " << std::hex << std::setw(8) << std::setfill('0') << weights_crc(store) << std::dec
        << std::setfill(' ') << '\n';
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"DITN super-resolution inference engine", "ditn"};
    app.require_subcommand(1);

    UpscaleArgs up;
    auto* c_up = app.add_subcommand("upscale", "Super-resolve one PNG");
    c_up->add_option("--weights", up.weights, "DITNW1 weight file")->required();
    c_up->add_option("--scale", up.scale, "Upscaling factor")->required()->check(CLI::Range(1, 8));
    c_up->add_option("--path", up.path, "Attention path: reference or fused")
        ->check(CLI::IsMember({"reference", "fused"}));
    c_up->add_option("--config", up.config, "Config file for patch_size / sda_dilation");
    c_up->add_option("input", up.input, "Input PNG")->required();
    c_up->add_option("output", up.output, "Output PNG")->required();

    VerifyArgs ver;
    auto* c_ver = app.add_subcommand("verify", "Run the fused-vs-reference and structural oracle suites");
    c_ver->add_option("--seed", ver.seed, "Random seed");
    c_ver->add_option("--trials", ver.trials, "Random attention trials")->check(CLI::PositiveNumber);
    c_ver->add_flag("--inject-fault", ver.inject_fault)->group("");

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "Time both attention paths and report operator counters");
    c_bench->add_option("--size", bench.size, "LR input size HxW");
    c_bench->add_option("--scale", bench.scale, "Upscaling factor")->check(CLI::Range(1, 8));
    c_bench->add_option("--path", bench.path, "reference, fused or both")
        ->check(CLI::IsMember({"reference", "fused", "both"}));
    c_bench->add_option("--repeats", bench.repeats, "Timed runs per path")->check(CLI::PositiveNumber);
    c_bench->add_option("--preset", bench.preset, "ditn, ditn-tiny or ditn-real");
    c_bench->add_option("--config", bench.config, "Config file applied over the preset");
    c_bench->add_option("--seed", bench.seed, "Weight/input seed");

    EvalArgs ev;
    auto* c_eval = app.add_subcommand("eval", "Average Y-channel PSNR/SSIM over an image set");
    c_eval->add_option("--hr", ev.hr, "Directory of HR PNGs")->required();
    c_eval->add_option("--lr", ev.lr, "Directory of LR PNGs (same filenames); synthesized by bicubic if omitted");
    c_eval->add_option("--weights", ev.weights, "DITNW1 weight file");
    c_eval->add_option("--config", ev.config, "Config file for patch_size / sda_dilation");
    c_eval->add_option("--scale", ev.scale, "Upscaling factor")->required()->check(CLI::Range(1, 8));
    c_eval->add_option("--method", ev.method, "network or bicubic")->check(CLI::IsMember({"network", "bicubic"}));
    c_eval->add_option("--path", ev.path, "Attention path")->check(CLI::IsMember({"reference", "fused"}));
    c_eval->add_option("--crop", ev.crop, "Border shave in pixels (default: scale)");

    ParamsArgs par;
    auto* c_par = app.add_subcommand("params", "Report parameter counts and FLOPs");
    c_par->add_option("--config", par.config, "Config file applied over the preset");
    c_par->add_option("--preset", par.preset, "ditn, ditn-tiny or ditn-real");
    c_par->add_option("--scale", par.scale, "Upscaling factor")->check(CLI::Range(1, 8));
    c_par->add_option("--out-size", par.out_size, "Output size WxH for the FLOPs estimate");

    InitArgs init;
    auto* c_init = app.add_subcommand("init-weights", "Write seeded random weights");
    c_init->add_option("--config", init.config, "Config file applied over the preset");
    c_init->add_option("--preset", init.preset, "ditn, ditn-tiny or ditn-real");
    c_init->add_option("--scale", init.scale, "Upscaling factor")->check(CLI::Range(1, 8));
    c_init->add_option("--seed", init.seed, "Seed");
    c_init->add_option("output", init.output, "Output .ditnw path")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (c_up->parsed()) return cmd_upscale(up, out, err);
        if (c_ver->parsed()) return cmd_verify(ver, out);
        if (c_bench->parsed()) return cmd_bench(bench, out);
        if (c_eval->parsed()) return cmd_eval(ev, out);
        if (c_par->parsed()) return cmd_params(par, out);
        if (c_init->parsed()) return cmd_init_weights(init, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace ditn
