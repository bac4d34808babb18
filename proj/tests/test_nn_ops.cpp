#include "ditn/counters.hpp"
#include "ditn/error.hpp"
#include "ditn/nn_ops.hpp"
#include "ditn/weights_io.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace ditn;

namespace {

Tensor rand_t(Shape s, std::uint64_t key, float lo = -1.0f, float hi = 1.0f) {
    return random_uniform(std::move(s), key, lo, hi);
}

ConvWeights delta_conv(size_t c, size_t k) {
    Tensor kern({c, c, k, k});
    for (size_t i = 0; i < c; ++i) kern[((i * c + i) * k + k / 2) * k + k / 2] = 1.0f;
    return {kern, Tensor({c})};
}

} // namespace

TEST_CASE("conv2d with a delta kernel is the identity") {
    const Tensor x = rand_t({3, 7, 5}, 1);
    CHECK(conv2d(x, delta_conv(3, 3)).bitwise_equal(x));
}

TEST_CASE("conv2d matches a nested-loop oracle") {
    struct Case {
        size_t cin, cout, k, dil;
        bool dw;
    };
    for (const Case& cs : {Case{3, 5, 3, 1, false}, Case{4, 4, 7, 3, true}, Case{6, 2, 1, 1, false},
                           Case{5, 5, 3, 1, true}, Case{2, 3, 5, 2, false}}) {
        const Tensor x = rand_t({cs.cin, 9, 11}, cs.cin * 7 + cs.k);
        ConvWeights w{rand_t({cs.cout, cs.dw ? 1 : cs.cin, cs.k, cs.k}, 99 + cs.k), rand_t({cs.cout}, 5), cs.dil,
                      cs.dw};
        const Tensor y = conv2d(x, w);
        CHECK(y.shape() == Shape{cs.cout, 9, 11});
        CHECK(oracle::max_diff(oracle::conv2d(x, w), y.data()) <= 1e-5);
    }
}

TEST_CASE("conv2d batched input applies per sample") {
    const Tensor x = rand_t({2, 3, 4, 4}, 3);
    ConvWeights w{rand_t({2, 3, 3, 3}, 4), rand_t({2}, 6)};
    const Tensor y = conv2d(x, w);
    const Tensor y1 = conv2d(slice_rows(x.reshaped({2, 48}), 1, 2).reshaped({3, 4, 4}), w);
    for (size_t i = 0; i < 32; ++i) CHECK(y[32 + i] == y1[i]);
}

TEST_CASE("conv weight invariants") {
    CHECK_THROWS_AS(conv2d(Tensor({1, 4, 4}), ConvWeights{Tensor({1, 1, 2, 2}), Tensor({1})}), DimensionError);
    CHECK_THROWS_AS(conv2d(Tensor({1, 4, 4}), ConvWeights{Tensor({1, 1, 3, 3}), Tensor({1}), 0}), DimensionError);
    CHECK_THROWS_AS(conv2d(Tensor({2, 4, 4}), ConvWeights{Tensor({1, 1, 3, 3}), Tensor({1})}), DimensionError);
    CHECK_THROWS_AS(conv2d(Tensor({1, 4, 4}), ConvWeights{Tensor({1, 1, 3, 3}), Tensor({2})}), DimensionError);
}

TEST_CASE("stacked dilated depthwise impulse response") {
    // Enumerate reachable offsets independently: sums of three taps from {-9..9 step 3}.
    std::set<std::pair<long, long>> reach;
    for (long a = -3; a <= 3; ++a)
        for (long b = -3; b <= 3; ++b)
            for (long c = -3; c <= 3; ++c)
                for (long d = -3; d <= 3; ++d)
                    for (long e = -3; e <= 3; ++e)
                        for (long f = -3; f <= 3; ++f) reach.insert({3 * (a + b + c), 3 * (d + e + f)});
    const size_t side = 61, mid = 30;
    Tensor x({1, side, side});
    x[mid * side + mid] = 1.0f;
    ConvWeights ones{Tensor::full({1, 1, 7, 7}, 1.0f), Tensor({1}), 3, true};

    SUBCASE("single layer") {
        const Tensor y = conv2d(x, ones);
        for (size_t yy = 0; yy < side; ++yy)
            for (size_t xx = 0; xx < side; ++xx) {
                const long dy = long(yy) - long(mid), dx = long(xx) - long(mid);
                const bool expect = std::abs(dy) <= 9 && std::abs(dx) <= 9 && dy % 3 == 0 && dx % 3 == 0;
                CHECK((y[yy * side + xx] != 0.0f) == expect);
            }
    }
    SUBCASE("three layers span 55x55") {
        Tensor y = x;
        for (int i = 0; i < 3; ++i) y = conv2d(y, ones);
        long lo = 100, hi = -100;
        for (size_t yy = 0; yy < side; ++yy)
            for (size_t xx = 0; xx < side; ++xx) {
                const long dy = long(yy) - long(mid), dx = long(xx) - long(mid);
                const bool nz = y[yy * side + xx] != 0.0f;
                CHECK(nz == (reach.count({dy, dx}) == 1));
                if (nz) lo = std::min(lo, dy), hi = std::max(hi, dy);
            }
        CHECK(hi - lo + 1 == 55);
    }
}

TEST_CASE("pixel shuffle") {
    const Tensor y = pixel_shuffle(Tensor({4, 1, 1}, {1, 2, 3, 4}), 2);
    CHECK(y.shape() == Shape{1, 2, 2});
    CHECK(y.values()[0] == 1.0f);
    CHECK(y.values()[3] == 4.0f);
    const Tensor r = rand_t({12, 3, 5}, 17);
    CHECK(pixel_shuffle(r, 1).bitwise_equal(r));
    const Tensor s = pixel_shuffle(r, 2);
    CHECK(s.shape() == Shape{3, 6, 10});
    for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < 2; ++i)
            for (size_t j = 0; j < 2; ++j)
                for (size_t h = 0; h < 3; ++h)
                    for (size_t w = 0; w < 5; ++w)
                        CHECK(r[((c * 4 + i * 2 + j) * 3 + h) * 5 + w] == s[(c * 6 + h * 2 + i) * 10 + w * 2 + j]);
    CHECK_THROWS_AS(pixel_shuffle(Tensor({3, 2, 2}), 2), DimensionError);
}

TEST_CASE("unfold and fold") {
    OpCounters ctr;
    SUBCASE("single patch") {
        const PatchBatch pb = unfold_patches(Tensor({1, 2, 2}, {1, 2, 3, 4}), 2, ctr);
        CHECK(pb.batch() == 1);
        CHECK(pb.data.values()[3] == 4.0f);
    }
    SUBCASE("patch order is row-major over the grid") {
        std::vector<float> v(16);
        for (size_t i = 0; i < 16; ++i) v[i] = float(i);
        const PatchBatch pb = unfold_patches(Tensor({1, 4, 4}, v), 2, ctr);
        CHECK(pb.batch() == 4);
        CHECK(pb.data[0] == 0.0f);  // top-left
        CHECK(pb.data[4] == 2.0f);  // top-right
        CHECK(pb.data[8] == 8.0f);  // bottom-left
        CHECK(pb.data[12] == 10.0f); // bottom-right
    }
    SUBCASE("roundtrip and counting") {
        const Tensor f = rand_t({4, 16, 24}, 21);
        const PatchBatch pb = unfold_patches(f, 8, ctr);
        CHECK(fold_patches(pb, 16, 24, ctr).bitwise_equal(f));
        CHECK(ctr.unfolds == 1);
        CHECK(ctr.folds == 1);
        const PatchBatch again = unfold_patches(fold_patches(pb, 16, 24, ctr), 8, ctr);
        CHECK(again.data.bitwise_equal(pb.data));
    }
    CHECK_THROWS_AS(unfold_patches(Tensor({1, 6, 8}), 4, ctr), DimensionError);
    CHECK_THROWS_AS(fold_patches(PatchBatch{Tensor({3, 1, 2, 2})}, 4, 4, ctr), DimensionError);
}

TEST_CASE("layer_norm") {
    NormParams ln = NormParams::layer_norm(2);
    SUBCASE("constant column gives zeros") {
        const Tensor y = normalize(Tensor({2, 1}, {5, 5}), ln);
        CHECK(y[0] == 0.0f);
        CHECK(y[1] == 0.0f);
    }
    SUBCASE("two-point standardization") {
        ln.eps = 1e-12f;
        const Tensor y = normalize(Tensor({2, 1}, {1, 3}), ln);
        CHECK(y[0] == doctest::Approx(-1.0));
        CHECK(y[1] == doctest::Approx(1.0));
    }
    SUBCASE("per-position statistics") {
        const NormParams p = NormParams::layer_norm(60);
        const Tensor x = rand_t({60, 8, 8}, 31, -3.0f, 5.0f);
        const Tensor y = normalize_pre_affine(x, p);
        for (size_t l = 0; l < 64; ++l) {
            double m = 0, v = 0;
            for (size_t c = 0; c < 60; ++c) m += y[c * 64 + l];
            m /= 60;
            for (size_t c = 0; c < 60; ++c) v += (y[c * 64 + l] - m) * (y[c * 64 + l] - m);
            v /= 60;
            CHECK(std::abs(m) <= 1e-5);
            CHECK(std::abs(v - 1.0) <= 1e-4);
        }
    }
    SUBCASE("gain and bias are applied per channel") {
        ln.gain = Tensor({2}, {2, 3});
        ln.bias = Tensor({2}, {1, -1});
        ln.eps = 1e-12f;
        const Tensor y = normalize(Tensor({2, 1}, {1, 3}), ln);
        CHECK(y[0] == doctest::Approx(-1.0));
        CHECK(y[1] == doctest::Approx(2.0));
    }
}

TEST_CASE("tanh_conv") {
    const NormParams t = NormParams::tanh_conv(4);
    CHECK(normalize(Tensor({4, 3}), t).bitwise_equal(Tensor({4, 3})));
    const Tensor x = rand_t({4, 5, 5}, 41, -50.0f, 50.0f);
    const Tensor pre = normalize_pre_affine(x, t);
    for (float v : pre.values()) CHECK(std::abs(v) <= 1.0f);
    NormParams w = t;
    w.conv_weight = rand_t({4, 4}, 42);
    w.conv_bias = rand_t({4}, 43);
    const Tensor y = normalize(x, w);
    for (size_t c = 0; c < 4; ++c)
        for (size_t l = 0; l < 25; ++l) {
            double s = w.conv_bias[c];
            for (size_t k = 0; k < 4; ++k) s += w.conv_weight.at(c, k) * std::tanh(double(x[k * 25 + l]));
            CHECK(y[c * 25 + l] == doctest::Approx(s).epsilon(1e-5));
        }
    NormParams bad = t;
    bad.gain = Tensor({4});
    CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("split and concat channels") {
    const auto [a, b] = split_channels(Tensor({2, 1, 1}, {5, 7}));
    CHECK(a[0] == 5.0f);
    CHECK(b[0] == 7.0f);
    const Tensor x = rand_t({6, 3, 2}, 51);
    const auto [x1, x2] = split_channels(x);
    CHECK(x1.shape() == Shape{3, 3, 2});
    CHECK(x1[0] == x[0]);
    CHECK(x2[0] == x[18]);
    CHECK(concat_channels(x1, x2).bitwise_equal(x));
    CHECK_THROWS_AS(split_channels(Tensor({3, 1, 1})), DimensionError);
}

TEST_CASE("gdfn") {
    const size_t c = 60, h = 90;
    GdfnWeights zero{{Tensor({2 * h, c, 1, 1}), Tensor({2 * h})},
                     {Tensor({2 * h, 1, 3, 3}), Tensor({2 * h}), 1, true},
                     {Tensor({c, h, 1, 1}), Tensor({c})}};
    const Tensor x = rand_t({c, 8, 8}, 61);
    SUBCASE("zero branch is a pure residual") {
        const Tensor y = gdfn(x, zero, NormParams::layer_norm(c));
        CHECK(y.shape() == x.shape());
        CHECK(y.bitwise_equal(x));
    }
    SUBCASE("identity-like weights match a scalar oracle") {
        // C=4, h=2: expand routes channels {0,1} to h1 and {2,3} to h2, project picks h back into channels 0,1.
        const size_t cc = 4, hh = 2;
        GdfnWeights w{{Tensor({2 * hh, cc, 1, 1}), Tensor({2 * hh})},
                      {Tensor({2 * hh, 1, 3, 3}), Tensor({2 * hh}), 1, true},
                      {Tensor({cc, hh, 1, 1}), Tensor({cc})}};
        for (size_t i = 0; i < 4; ++i) w.expand.kernel[i * cc + i] = 1.0f;
        for (size_t i = 0; i < 4; ++i) w.depthwise.kernel[i * 9 + 4] = 1.0f;
        for (size_t i = 0; i < 2; ++i) w.project.kernel[i * hh + i] = 1.0f;
        const Tensor xs = rand_t({cc, 3, 3}, 62);
        const NormParams ln = NormParams::layer_norm(cc);
        const Tensor n = normalize(xs, ln);
        const Tensor y = gdfn(xs, w, ln);
        for (size_t l = 0; l < 9; ++l) {
            for (size_t ch = 0; ch < 2; ++ch) {
                const double g = 0.5 * n[ch * 9 + l] * (1.0 + std::erf(n[ch * 9 + l] / std::sqrt(2.0)));
                CHECK(y[ch * 9 + l] == doctest::Approx(xs[ch * 9 + l] + g * n[(ch + 2) * 9 + l]).epsilon(1e-5));
            }
            for (size_t ch = 2; ch < 4; ++ch) CHECK(y[ch * 9 + l] == xs[ch * 9 + l]);
        }
    }
}
