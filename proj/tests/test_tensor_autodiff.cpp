#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "test_util.hpp"
#include "upl/autodiff.hpp"
#include "upl/gradcheck.hpp"

using namespace upl;
using testutil::random_tensor;

namespace {

Tensor5d to_tensor(const oracle::Vol& v) {
    Tensor5d t({v.n, v.c, v.d, v.h, v.w});
    for (std::size_t i = 0; i < v.data.size(); ++i) t.data[i] = v.data[i];
    return t;
}

oracle::Vol to_vol(const Tensor5d& t) {
    oracle::Vol v(t.shape[0], t.shape[1], t.shape[2], t.shape[3], t.shape[4]);
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = t.data[i];
    return v;
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("conv3d matches the hand-derived sliding window example") {
    auto x = constant(Tensor5d({1, 1, 1, 1, 3}));
    x->value.data = {1, 2, 3};
    auto w = constant(Tensor5d({1, 1, 1, 1, 3}));
    w->value.data = {1, 1, 1};
    auto y = conv3d(x, w);
    CHECK(y->value.data[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(y->value.data[1] == doctest::Approx(6.0).epsilon(1e-14));
    CHECK(y->value.data[2] == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("conv3d with a centered delta kernel is the identity") {
    Rng rng(3);
    auto x = constant(random_tensor<double>({1, 1, 4, 4, 4}, rng));
    Tensor5d w({1, 1, 3, 3, 3});
    w.at(0, 0, 1, 1, 1) = 1.0;
    auto y = conv3d(x, constant(w));
    for (std::int64_t i = 0; i < x->value.numel(); ++i) CHECK(y->value.data[i] == x->value.data[i]);
}

TEST_CASE("conv3d equals the naive nested-loop oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.index(2));
        const std::int64_t cin = 1 + static_cast<std::int64_t>(rng.index(2));
        const std::int64_t cout = 1 + static_cast<std::int64_t>(rng.index(2));
        const std::int64_t d = 2 + static_cast<std::int64_t>(rng.index(3));
        const std::int64_t k = rng.uniform() < 0.5 ? 1 : 3;
        auto x = random_tensor<double>({n, cin, d, d, d}, rng);
        auto w = random_tensor<double>({cout, cin, k, k, k}, rng);
        Tensor5d b({1, cout, 1, 1, 1});
        for (auto& v : b.data) v = rng.uniform(-0.5, 0.5);
        std::vector<double> bias_vec(b.data.begin(), b.data.end());

        auto y = conv3d(constant(x), constant(w), constant(b));
        const oracle::Vol expect = oracle::conv3d(to_vol(x), to_vol(w), bias_vec);
        REQUIRE(y->value.numel() == static_cast<std::int64_t>(expect.data.size()));
        for (std::size_t i = 0; i < expect.data.size(); ++i) {
            CHECK(std::abs(y->value.data[i] - expect.data[i]) < 1e-12);
        }
    }
}

TEST_CASE("conv3d with zero bias is linear in its input") {
    Rng rng(5);
    auto x = random_tensor<double>({1, 2, 3, 3, 3}, rng);
    auto w = constant(random_tensor<double>({2, 2, 3, 3, 3}, rng));
    auto y1 = conv3d(constant(x), w);
    Tensor5d xs = x;
    for (auto& v : xs.data) v *= 3.5;
    auto y2 = conv3d(constant(xs), w);
    for (std::int64_t i = 0; i < y1->value.numel(); ++i) {
        CHECK(std::abs(y2->value.data[i] - 3.5 * y1->value.data[i]) < 1e-12);
    }
}

TEST_CASE("conv3d rejects even kernels and channel mismatches") {
    Rng rng(7);
    auto x = constant(random_tensor<double>({1, 2, 3, 3, 3}, rng));
    CHECK_THROWS_AS((void)conv3d(x, constant(random_tensor<double>({1, 2, 2, 2, 2}, rng))), std::invalid_argument);
    CHECK_THROWS_AS((void)conv3d(x, constant(random_tensor<double>({1, 3, 3, 3, 3}, rng))), std::invalid_argument);
}

TEST_CASE("relu values and gradient") {
    auto x = make_leaf(Tensor5d({1, 1, 1, 1, 3}), true);
    x->value.data = {-1, 0, 2};
    auto y = relu(x);
    CHECK(y->value.data[0] == 0.0);
    CHECK(y->value.data[1] == 0.0);
    CHECK(y->value.data[2] == 2.0);

    auto loss = reduce(y, ReduceKind::kSum);
    backward(loss);
    CHECK(x->grad.data[0] == 0.0);
    CHECK(x->grad.data[1] == 0.0);  // subgradient 0 at 0
    CHECK(x->grad.data[2] == 1.0);
}

TEST_CASE("relu on an all-negative tensor is zero with zero gradient") {
    Rng rng(13);
    auto x = make_leaf(random_tensor<double>({1, 1, 2, 2, 2}, rng, -2.0, -0.1), true);
    auto loss = reduce(relu(x), ReduceKind::kSum);
    CHECK(loss->value.scalar() == 0.0);
    backward(loss);
    for (auto g : x->grad.data) CHECK(g == 0.0);
}

TEST_CASE("relu gradient matches finite differences away from zero") {
    Tensor5d p({1, 1, 1, 1, 2});
    p.data = {-0.5, 0.5};
    const double err = grad_check<double>(
        [](const NodePtr<double>& x) { return reduce(relu(x), ReduceKind::kMean); }, p, 1e-6);
    CHECK(err < 1e-6);
}

TEST_CASE("prelu degenerates to relu at slope 0 and identity at slope 1") {
    Rng rng(17);
    auto x = constant(random_tensor<double>({1, 2, 2, 2, 2}, rng));
    auto zero_slope = constant(Tensor5d({1, 2, 1, 1, 1}));
    auto one_slope = constant(Tensor5d::full({1, 2, 1, 1, 1}, 1.0));
    auto y0 = prelu(x, zero_slope);
    auto yr = relu(x);
    auto y1 = prelu(x, one_slope);
    for (std::int64_t i = 0; i < x->value.numel(); ++i) {
        CHECK(y0->value.data[i] == yr->value.data[i]);
        CHECK(y1->value.data[i] == x->value.data[i]);
    }
}

TEST_CASE("prelu negative-side values and slope gradient") {
    auto x = make_leaf(Tensor5d({1, 1, 1, 1, 1}), true);
    x->value.data = {-2.0};
    auto slope = make_leaf(Tensor5d({1, 1, 1, 1, 1}), true);
    slope->value.data = {0.25};
    auto y = prelu(x, slope);
    CHECK(y->value.data[0] == doctest::Approx(-0.5));
    backward(reduce(y, ReduceKind::kSum));
    CHECK(slope->grad.data[0] == doctest::Approx(-2.0));
    CHECK(x->grad.data[0] == doctest::Approx(0.25));
}

TEST_CASE("prelu rejects slope count mismatch") {
    Rng rng(19);
    auto x = constant(random_tensor<double>({1, 3, 2, 2, 2}, rng));
    CHECK_THROWS_AS((void)prelu(x, constant(Tensor5d({1, 2, 1, 1, 1}))), std::invalid_argument);
}

TEST_CASE("batchnorm3d normalizes to zero mean and unit variance") {
    Rng rng(23);
    // large spread keeps the eps correction below the tolerance
    auto x = constant(random_tensor<double>({2, 2, 2, 2, 2}, rng, -100.0, 100.0));
    auto gamma = constant(Tensor5d::full({1, 2, 1, 1, 1}, 1.0));
    auto beta = constant(Tensor5d({1, 2, 1, 1, 1}));
    BnStateT<double> state(2);
    auto y = batchnorm3d(x, gamma, beta, state, Mode::kTrain);
    for (std::int64_t c = 0; c < 2; ++c) {
        double mean = 0.0, var = 0.0;
        std::int64_t count = 0;
        for (std::int64_t n = 0; n < 2; ++n)
            for (std::int64_t z = 0; z < 2; ++z)
                for (std::int64_t yy = 0; yy < 2; ++yy)
                    for (std::int64_t xx = 0; xx < 2; ++xx) {
                        mean += y->value.at(n, c, z, yy, xx);
                        ++count;
                    }
        mean /= static_cast<double>(count);
        for (std::int64_t n = 0; n < 2; ++n)
            for (std::int64_t z = 0; z < 2; ++z)
                for (std::int64_t yy = 0; yy < 2; ++yy)
                    for (std::int64_t xx = 0; xx < 2; ++xx) {
                        const double d = y->value.at(n, c, z, yy, xx) - mean;
                        var += d * d;
                    }
        var /= static_cast<double>(count);
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("batchnorm3d maps a constant channel to beta") {
    auto x = constant(Tensor5d::full({1, 1, 2, 2, 2}, 7.0));
    auto gamma = constant(Tensor5d::full({1, 1, 1, 1, 1}, 1.0));
    auto beta = constant(Tensor5d::full({1, 1, 1, 1, 1}, 0.375));
    BnStateT<double> state(1);
    auto y = batchnorm3d(x, gamma, beta, state, Mode::kTrain);
    for (auto v : y->value.data) CHECK(v == doctest::Approx(0.375));
}

TEST_CASE("batchnorm3d eval before any update is an error") {
    auto x = constant(Tensor5d::full({1, 1, 2, 2, 2}, 1.0));
    auto gamma = constant(Tensor5d::full({1, 1, 1, 1, 1}, 1.0));
    auto beta = constant(Tensor5d({1, 1, 1, 1, 1}));
    BnStateT<double> state(1);
    CHECK_THROWS_WITH_AS((void)batchnorm3d(x, gamma, beta, state, Mode::kEval),
                         doctest::Contains("uninitialized"), std::runtime_error);
    (void)batchnorm3d(x, gamma, beta, state, Mode::kTrain);
    CHECK_NOTHROW((void)batchnorm3d(x, gamma, beta, state, Mode::kEval));
}

TEST_CASE("maxpool3d reduces disjoint 2-windows") {
    Tensor5d x({1, 1, 2, 2, 4});
    // W axis carries [1,2,3,4]; other axes constant copies
    for (std::int64_t z = 0; z < 2; ++z)
        for (std::int64_t y = 0; y < 2; ++y)
            for (std::int64_t w = 0; w < 4; ++w) x.at(0, 0, z, y, w) = static_cast<double>(w + 1);
    auto y = maxpool3d(constant(x));
    CHECK(y->value.shape == Shape5{1, 1, 1, 1, 2});
    CHECK(y->value.data[0] == 2.0);  // max of window [1,2]
    CHECK(y->value.data[1] == 4.0);  // max of window [3,4]
}

TEST_CASE("maxpool3d halves constant tensors and keeps the max") {
    auto y = maxpool3d(constant(Tensor5d::full({1, 1, 5, 4, 4}, 0.25)));
    CHECK(y->value.shape == Shape5{1, 1, 2, 2, 2});  // odd extent truncated
    for (auto v : y->value.data) CHECK(v == 0.25);

    Rng rng(29);
    auto x = random_tensor<double>({1, 2, 4, 4, 4}, rng);
    auto p = maxpool3d(constant(x));
    double in_max = x.data[0], out_max = p->value.data[0];
    for (auto v : x.data) in_max = std::max(in_max, v);
    for (auto v : p->value.data) out_max = std::max(out_max, v);
    CHECK(out_max == in_max);  // 4^3 is fully covered by the pooling windows
}

TEST_CASE("maxpool3d output bounded by window max and mean") {
    Rng rng(31);
    auto x = random_tensor<double>({1, 1, 4, 4, 4}, rng);
    auto p = maxpool3d(constant(x));
    std::int64_t oi = 0;
    for (std::int64_t z = 0; z < 2; ++z)
        for (std::int64_t y = 0; y < 2; ++y)
            for (std::int64_t w = 0; w < 2; ++w, ++oi) {
                double mx = -1e9, mean = 0.0;
                for (std::int64_t dz = 0; dz < 2; ++dz)
                    for (std::int64_t dy = 0; dy < 2; ++dy)
                        for (std::int64_t dw = 0; dw < 2; ++dw) {
                            const double v = x.at(0, 0, 2 * z + dz, 2 * y + dy, 2 * w + dw);
                            mx = std::max(mx, v);
                            mean += v / 8.0;
                        }
                CHECK(p->value.data[oi] == mx);
                CHECK(p->value.data[oi] >= mean);
            }
}

TEST_CASE("maxpool3d rejects spatial dims below 2") {
    CHECK_THROWS_AS((void)maxpool3d(constant(Tensor5d::full({1, 1, 1, 4, 4}, 0.0))), std::invalid_argument);
}

TEST_CASE("gaussian_filter3d keeps constant volumes constant in the interior") {
    auto y = gaussian_filter3d(constant(Tensor5d::full({1, 1, 9, 9, 9}, 0.6)), 1.5, 3);
    CHECK(y->value.at(0, 0, 4, 4, 4) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("gaussian_filter3d impulse response is the separable kernel product") {
    Tensor5d x({1, 1, 7, 7, 7});
    x.at(0, 0, 3, 3, 3) = 1.0;
    const double sigma = 1.2;
    const std::int64_t radius = 2;
    auto y = gaussian_filter3d(constant(x), sigma, radius);

    // independent 1D kernel
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (std::int64_t i = -radius; i <= radius; ++i) {
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[static_cast<std::size_t>(i + radius)];
    }
    for (auto& v : k) v /= sum;
    for (std::int64_t dz = -radius; dz <= radius; ++dz)
        for (std::int64_t dy = -radius; dy <= radius; ++dy)
            for (std::int64_t dx = -radius; dx <= radius; ++dx) {
                const double expect = k[static_cast<std::size_t>(dz + radius)] * k[static_cast<std::size_t>(dy + radius)] *
                                      k[static_cast<std::size_t>(dx + radius)];
                CHECK(y->value.at(0, 0, 3 + dz, 3 + dy, 3 + dx) == doctest::Approx(expect).epsilon(1e-12));
            }
}

TEST_CASE("gaussian_filter3d is linear") {
    Rng rng(37);
    auto x = random_tensor<double>({1, 1, 5, 5, 5}, rng);
    auto y = random_tensor<double>({1, 1, 5, 5, 5}, rng);
    Tensor5d combo(x.shape);
    for (std::int64_t i = 0; i < combo.numel(); ++i) combo.data[i] = 2.0 * x.data[i] - 0.7 * y.data[i];
    auto fc = gaussian_filter3d(constant(combo), 1.5, 3);
    auto fx = gaussian_filter3d(constant(x), 1.5, 3);
    auto fy = gaussian_filter3d(constant(y), 1.5, 3);
    for (std::int64_t i = 0; i < combo.numel(); ++i) {
        CHECK(std::abs(fc->value.data[i] - (2.0 * fx->value.data[i] - 0.7 * fy->value.data[i])) < 1e-12);
    }
    CHECK_THROWS_AS((void)gaussian_filter3d(constant(x), 0.0, 3), std::invalid_argument);
}

TEST_CASE("reduce mean and sum") {
    auto x = make_leaf(Tensor5d({1, 1, 1, 1, 3}), true);
    x->value.data = {1, 2, 3};
    CHECK(reduce(x, ReduceKind::kMean)->value.scalar() == doctest::Approx(2.0));

    auto zeros = make_leaf(Tensor5d({1, 1, 2, 2, 2}), true);
    auto s = reduce(zeros, ReduceKind::kSum);
    CHECK(s->value.scalar() == 0.0);
    backward(s);
    for (auto g : zeros->grad.data) CHECK(g == 1.0);

    CHECK_THROWS_AS((void)reduce(constant(Tensor5d({0, 1, 1, 1, 1})), ReduceKind::kMean), std::invalid_argument);
}

TEST_CASE("reduce mean gradient matches finite differences") {
    Rng rng(41);
    const double err = grad_check<double>(
        [](const NodePtr<double>& x) { return reduce(x, ReduceKind::kMean); },
        random_tensor<double>({1, 1, 2, 2, 2}, rng), 1e-6);
    CHECK(err < 1e-8);
}

TEST_CASE("zip and map match their definitions") {
    Rng rng(43);
    auto xv = random_tensor<double>({1, 1, 2, 2, 2}, rng);
    auto x = constant(xv);
    auto diff = zip(x, x, ZipKind::kSub);
    for (auto v : diff->value.data) CHECK(v == 0.0);

    auto sq = map(constant(Tensor5d({1, 1, 1, 1, 2})), MapKind::kSquare);
    auto sq_in = constant(Tensor5d({1, 1, 1, 1, 2}));
    sq_in->value.data = {-2, 3};
    sq = map(sq_in, MapKind::kSquare);
    CHECK(sq->value.data[0] == 4.0);
    CHECK(sq->value.data[1] == 9.0);

    CHECK_THROWS_AS((void)zip(x, constant(Tensor5d({1, 1, 1, 2, 2})), ZipKind::kAdd), std::invalid_argument);
    CHECK_THROWS_AS((void)map(sq_in, MapKind::kSqrt), std::domain_error);
}

TEST_CASE("composed squared norm equals the direct oracle") {
    Rng rng(47);
    auto xv = random_tensor<double>({1, 1, 3, 3, 3}, rng);
    auto yv = random_tensor<double>({1, 1, 3, 3, 3}, rng);
    auto composed = reduce(map(zip(constant(xv), constant(yv), ZipKind::kSub), MapKind::kSquare), ReduceKind::kSum);
    double direct = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) {
        const double d = xv.data[i] - yv.data[i];
        direct += d * d;
    }
    CHECK(std::abs(composed->value.scalar() - direct) < 1e-12);
}

TEST_CASE("backward on mean and sum-of-squares leaves the expected gradients") {
    Rng rng(53);
    auto x = make_leaf(random_tensor<double>({1, 1, 2, 2, 2}, rng), true);
    backward(reduce(x, ReduceKind::kMean));
    for (auto g : x->grad.data) CHECK(g == doctest::Approx(1.0 / 8.0));

    auto x2 = make_leaf(random_tensor<double>({1, 1, 2, 2, 2}, rng), true);
    backward(reduce(map(x2, MapKind::kSquare), ReduceKind::kSum));
    for (std::int64_t i = 0; i < x2->value.numel(); ++i) {
        CHECK(x2->grad.data[i] == doctest::Approx(2.0 * x2->value.data[i]));
    }
}

TEST_CASE("backward rejects non-scalar losses") {
    auto x = make_leaf(Tensor5d::full({1, 1, 1, 1, 2}, 1.0), true);
    CHECK_THROWS_AS(backward(map(x, MapKind::kSquare)), std::invalid_argument);
}

TEST_CASE("backward twice on the same graph is bit-identical") {
    Rng rng(59);
    auto x = make_leaf(random_tensor<double>({1, 2, 3, 3, 3}, rng), true);
    auto w = make_leaf(random_tensor<double>({2, 2, 3, 3, 3}, rng, -0.3, 0.3), true);
    auto loss = reduce(map(relu(conv3d(x, w)), MapKind::kSquare), ReduceKind::kMean);
    backward(loss);
    const auto gx = x->grad.data;
    const auto gw = w->grad.data;
    backward(loss);
    CHECK(x->grad.data == gx);
    CHECK(w->grad.data == gw);
}

TEST_CASE("grad_check on an identity mean is exact") {
    Rng rng(61);
    const double err = grad_check<double>(
        [](const NodePtr<double>& x) { return reduce(x, ReduceKind::kMean); },
        random_tensor<double>({1, 1, 2, 2, 2}, rng), 1e-5);
    CHECK(err < 1e-10);
}

TEST_CASE("grad_check covers a conv+batchnorm+prelu chain") {
    Rng rng(67);
    auto w = random_tensor<double>({2, 1, 3, 3, 3}, rng, -0.4, 0.4);
    auto b = random_tensor<double>({1, 2, 1, 1, 1}, rng, -0.1, 0.1);
    auto slope = Tensor5d::full({1, 2, 1, 1, 1}, 0.25);
    auto gamma = Tensor5d::full({1, 2, 1, 1, 1}, 1.1);
    auto beta = random_tensor<double>({1, 2, 1, 1, 1}, rng, -0.1, 0.1);
    const double err = grad_check<double>(
        [&](const NodePtr<double>& x) {
            BnStateT<double> state(2);  // fresh per call: reentrant
            auto h = conv3d(x, constant(w), constant(b));
            h = batchnorm3d(h, constant(gamma), constant(beta), state, Mode::kTrain, /*track_stats=*/false);
            h = prelu(h, constant(slope));
            return reduce(map(h, MapKind::kSquare), ReduceKind::kMean);
        },
        random_tensor<double>({1, 1, 4, 4, 4}, rng), 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check flows through conv weights") {
    Rng rng(71);
    auto x = random_tensor<double>({1, 2, 3, 3, 3}, rng);
    const double err = grad_check<double>(
        [&](const NodePtr<double>& w) {
            return reduce(map(conv3d(constant(x), w), MapKind::kSquare), ReduceKind::kMean);
        },
        random_tensor<double>({2, 2, 3, 3, 3}, rng, -0.4, 0.4), 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check covers depthwise conv, gelu, layernorm and channel attention") {
    Rng rng(73);
    auto dw = random_tensor<double>({2, 1, 3, 3, 3}, rng, -0.4, 0.4);
    const double err_dw = grad_check<double>(
        [&](const NodePtr<double>& x) {
            return reduce(map(depthwise_conv3d(x, constant(dw)), MapKind::kSquare), ReduceKind::kMean);
        },
        random_tensor<double>({1, 2, 3, 3, 3}, rng), 1e-5);
    CHECK(err_dw < 1e-4);

    const double err_gelu = grad_check<double>(
        [](const NodePtr<double>& x) { return reduce(gelu(x), ReduceKind::kMean); },
        random_tensor<double>({1, 1, 2, 2, 2}, rng), 1e-5);
    CHECK(err_gelu < 1e-4);

    auto gamma = Tensor5d::full({1, 3, 1, 1, 1}, 1.2);
    auto beta = random_tensor<double>({1, 3, 1, 1, 1}, rng, -0.2, 0.2);
    const double err_ln = grad_check<double>(
        [&](const NodePtr<double>& x) {
            return reduce(map(layernorm_channels(x, constant(gamma), constant(beta)), MapKind::kSquare),
                          ReduceKind::kMean);
        },
        random_tensor<double>({2, 3, 2, 2, 2}, rng), 1e-5);
    CHECK(err_ln < 1e-4);

    auto k = random_tensor<double>({1, 3, 2, 2, 2}, rng);
    auto v = random_tensor<double>({1, 3, 2, 2, 2}, rng);
    const double err_attn = grad_check<double>(
        [&](const NodePtr<double>& q) {
            auto scores = map(channel_scores(q, constant(k)), MapKind::kScale, 0.5);
            return reduce(map(channel_mix(channel_softmax(scores), constant(v)), MapKind::kSquare),
                          ReduceKind::kMean);
        },
        random_tensor<double>({1, 3, 2, 2, 2}, rng), 1e-5);
    CHECK(err_attn < 1e-4);
}

TEST_CASE("mul_scalar scales values and routes gradients to both inputs") {
    Rng rng(79);
    auto x = make_leaf(random_tensor<double>({1, 1, 2, 2, 2}, rng), true);
    auto s = make_leaf(Tensor5d::scalar_tensor(1.5), true);
    auto loss = reduce(mul_scalar(x, s), ReduceKind::kSum);
    backward(loss);
    double xsum = 0.0;
    for (auto v : x->value.data) xsum += v;
    CHECK(s->grad.data[0] == doctest::Approx(xsum));
    for (auto g : x->grad.data) CHECK(g == doctest::Approx(1.5));
}

TEST_CASE("frozen parents receive no gradient storage work") {
    Rng rng(83);
    auto x = make_leaf(random_tensor<double>({1, 1, 3, 3, 3}, rng), true);
    auto w = make_leaf(random_tensor<double>({1, 1, 3, 3, 3}, rng), false);  // frozen
    auto loss = reduce(map(conv3d(x, w), MapKind::kSquare), ReduceKind::kMean);
    backward(loss);
    CHECK(x->has_grad());
    CHECK_FALSE(w->has_grad());
}

TEST_SUITE_END();
