#include "ditn/config.hpp"
#include "ditn/error.hpp"
#include "ditn/model.hpp"
#include "ditn/weights_io.hpp"

#include <doctest.h>

using namespace ditn;

namespace {

WeightStore zero_ufones(const WeightStore& src) {
    WeightStore out;
    for (const auto& [name, t] : src) {
        const bool zero = name.rfind("ufone.", 0) == 0 && !name.ends_with(".alpha");
        out.insert(name, zero ? Tensor(t.shape()) : t);
    }
    return out;
}

ModelConfig small_cfg(size_t scale = 2) {
    ModelConfig cfg = ModelConfig::ditn_tiny(scale);
    cfg.channels = 8;
    cfg.itl_per_ufone = 1;
    cfg.sal_per_ufone = 1;
    cfg.patch_size = 4;
    return cfg;
}

} // namespace

TEST_CASE("presets") {
    const auto d = ModelConfig::ditn(2), t = ModelConfig::ditn_tiny(2), r = ModelConfig::ditn_real(2);
    CHECK(d.ufone_count == 3);
    CHECK(t.ufone_count == 1);
    CHECK(r.ufone_count == 1);
    CHECK(r.norm_mode == NormMode::tanh_conv);
    CHECK(t.channels == 60);
    CHECK(t.ffn_hidden() == 90);
    CHECK(ModelConfig::preset("ditn-real", 3) == ModelConfig::ditn_real(3));
    CHECK_THROWS_AS(ModelConfig::preset("nope", 2), ConfigError);
}

TEST_CASE("config text parsing") {
    const ModelConfig cfg = parse_config("# tiny\nchannels = 32\nnorm_mode = tanh_conv\n\nufone_count=2\n");
    CHECK(cfg.channels == 32);
    CHECK(cfg.ufone_count == 2);
    CHECK(cfg.norm_mode == NormMode::tanh_conv);
    CHECK(parse_config(format_config(cfg)) == cfg);
    CHECK_THROWS_AS(parse_config("bogus = 1"), ConfigError);
    CHECK_THROWS_AS(parse_config("channels = abc"), ConfigError);
    CHECK_THROWS_AS(parse_config("sda_kernel = 4"), ConfigError);
    CHECK_THROWS_AS(parse_config("itl_per_ufone = 0\nsal_per_ufone = 0"), ConfigError);
}

TEST_CASE("parameter counts") {
    for (size_t s : {2, 3, 4}) {
        CHECK(count_params(ModelConfig::ditn(s)) - count_params(ModelConfig::ditn_tiny(s)) ==
              2 * count_params_breakdown(ModelConfig::ditn_tiny(s))[1].second);
        CHECK(count_params(ModelConfig::ditn_real(s)) - count_params(ModelConfig::ditn_tiny(s)) == 56640);
    }
    CHECK(count_params(ModelConfig::ditn(3)) - count_params(ModelConfig::ditn(2)) == 8115);
    CHECK(count_params(ModelConfig::ditn(4)) - count_params(ModelConfig::ditn(3)) == 11361);
    const auto parts = count_params_breakdown(ModelConfig::ditn_tiny(2));
    REQUIRE(parts.size() == 4);
    CHECK(parts[0] == std::pair<std::string, std::uint64_t>{"shallow", 3 * 60 * 9 + 60});
    CHECK(parts[1].first == "ufone.0");
    CHECK(parts[2].second == 60 * 60 * 9 + 60);
    CHECK(parts[3].second == 60 * 12 * 9 + 12);
    const Model m(ModelConfig::ditn_tiny(2), random_init(ModelConfig::ditn_tiny(2), 1));
    CHECK(count_params(m) == count_params(m.config()));
}

TEST_CASE("model rejects mismatched weights") {
    const ModelConfig cfg = small_cfg();
    WeightStore w = random_init(cfg, 3);
    CHECK_THROWS_AS(Model(ModelConfig::ditn_tiny(2), w), ConfigError);
    w.insert("extra", Tensor({1}));
    CHECK_THROWS_AS(Model(cfg, w), ConfigError);
    WeightStore bad;
    for (const auto& [n, t] : random_init(cfg, 3)) bad.insert(n, n == "deep.bias" ? Tensor({7}) : t);
    CHECK_THROWS_AS(Model(cfg, bad), ConfigError);
}

TEST_CASE("reflect pad") {
    const Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor p = reflect_pad(x, 4, 5);
    CHECK(p.shape() == Shape{1, 4, 5});
    const std::vector<float> expect{1, 2, 3, 2, 1, 4, 5, 6, 5, 4, 1, 2, 3, 2, 1, 4, 5, 6, 5, 4};
    for (size_t i = 0; i < expect.size(); ++i) CHECK(p[i] == expect[i]);
    CHECK(reflect_pad(Tensor({1, 1, 1}, {7}), 3, 2)[5] == 7.0f);
    CHECK_THROWS_AS(reflect_pad(x, 1, 3), DimensionError);
}

TEST_CASE("zero-weight units are residual identities") {
    const ModelConfig cfg = small_cfg();
    const Model m(cfg, zero_ufones(random_init(cfg, 5)));
    const Tensor img = random_uniform({3, 7, 9}, 6, 0.0f, 1.0f);
    OpCounters ctr;
    const Tensor shallow = conv2d(reflect_pad(img, 8, 12), m.shallow());
    CHECK(ufone_forward(shallow, m.ufones()[0], cfg, AttentionPath::fused, ctr).bitwise_equal(shallow));
    CHECK(ufone_forward(shallow, m.ufones()[0], cfg, AttentionPath::reference, ctr).bitwise_equal(shallow));
    const Tensor deep = conv2d(shallow, m.deep());
    CHECK(ditn_features(img, m, AttentionPath::fused, ctr).bitwise_equal(add(shallow, deep)));
}

TEST_CASE("forward shape, range and path agreement") {
    const ModelConfig cfg = small_cfg(3);
    const Model m(cfg, random_init(cfg, 9));
    const Tensor img = random_uniform({3, 5, 11}, 10, 0.0f, 1.0f);
    OpCounters rc, fc;
    const Tensor ref = ditn_forward(img, m, AttentionPath::reference, rc);
    const Tensor fused = ditn_forward(img, m, AttentionPath::fused, fc);
    CHECK(ref.shape() == Shape{3, 15, 33});
    CHECK(max_abs_diff(ref, fused) <= 1e-4f);
    for (float v : fused.values()) CHECK((v >= 0.0f && v <= 1.0f));
    CHECK(rc.unfolds == 1);
    CHECK(rc.folds == 1);
    CHECK(fc.gemm_calls < rc.gemm_calls);
    CHECK_THROWS_AS(ditn_forward(Tensor({1, 4, 4}), m, AttentionPath::fused, fc), DimensionError);
}

TEST_CASE("reshape counts scale with the unit count") {
    ModelConfig cfg = small_cfg();
    cfg.ufone_count = 3;
    const Model m(cfg, random_init(cfg, 11));
    OpCounters ctr;
    (void)ditn_forward(random_uniform({3, 8, 8}, 12, 0.0f, 1.0f), m, AttentionPath::fused, ctr);
    CHECK(ctr.unfolds == 3);
    CHECK(ctr.folds == 3);
    cfg.itl_per_ufone = 0;
    const Model no_itl(cfg, random_init(cfg, 11));
    OpCounters c2;
    (void)ditn_forward(random_uniform({3, 8, 8}, 12, 0.0f, 1.0f), no_itl, AttentionPath::fused, c2);
    CHECK(c2.unfolds == 0);
}

TEST_CASE("tanh_conv model runs") {
    ModelConfig cfg = small_cfg();
    cfg.norm_mode = NormMode::tanh_conv;
    const Model m(cfg, random_init(cfg, 13));
    OpCounters ctr;
    CHECK(ditn_forward(random_uniform({3, 4, 4}, 14, 0.0f, 1.0f), m, AttentionPath::fused, ctr).shape() ==
          Shape{3, 8, 8});
}

TEST_CASE("config inference from weights") {
    for (const ModelConfig& cfg : {ModelConfig::ditn(4), ModelConfig::ditn_real(3), small_cfg(2)}) {
        ModelConfig base;
        base.patch_size = cfg.patch_size;
        CHECK(infer_config(random_init(cfg, 1), base) == cfg);
    }
}

TEST_CASE("flop estimate") {
    CHECK(conv2d_macs(3, 60, 3, false, 10, 10) == 3ull * 60 * 9 * 100);
    CHECK(conv2d_macs(60, 60, 7, true, 10, 10) == 60ull * 49 * 100);
    const double g = estimate_flops(ModelConfig::ditn(4), 720, 1280) / 1e9;
    CHECK(g > 58.1 * 0.8);
    CHECK(g < 58.1 * 1.2);
}
