#include <cmath>

#include "doctest.h"
#include "copdflow/nn.hpp"
#include "oracles.hpp"

using namespace copdflow;
using namespace copdflow::nn;
using T64 = TensorT<double>;

TEST_CASE("conv2d shape formula, valid padding") {
    Rng rng(1);
    Conv2DT<double> conv(1, 8, 5, 1, Padding::valid, WeightInit::he, rng);
    auto y = conv.forward(T64({1, 1, 128, 128}), Mode::infer);
    CHECK(y.shape == Shape{1, 8, 124, 124});

    Conv2DT<double> conv2(1, 4, 4, 2, Padding::same, WeightInit::he, rng);
    auto y2 = conv2.forward(T64({2, 1, 128, 128}), Mode::infer);
    CHECK(y2.shape == Shape{2, 4, 64, 64});

    CHECK_THROWS_AS(conv.forward(T64({1, 2, 8, 8}), Mode::infer), ShapeError);
}

TEST_CASE("conv2d equals the naive 6-loop oracle exactly") {
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const int s = trial % 2 + 1;
        Conv2DT<double> conv(3, 5, 3, s, Padding::valid, WeightInit::he, rng);
        conv.bias = randn<double>(rng, {5});
        auto x = randn<double>(rng, {2, 3, 9, 11});
        auto got = conv.forward(x, Mode::infer);
        auto want = oracles::naive_conv2d(x, conv.weights, conv.bias, s, 0, 0,
                                          got.shape[2], got.shape[3]);
        CHECK(got.shape == want.shape);
        for (std::int64_t i = 0; i < got.numel(); ++i) CHECK(got.data[i] == want.data[i]);
    }
}

TEST_CASE("conv2d same padding matches oracle with explicit pads") {
    Rng rng(19);
    Conv2DT<double> conv(2, 4, 4, 2, Padding::same, WeightInit::he, rng);
    conv.bias = randn<double>(rng, {4});
    auto x = randn<double>(rng, {1, 2, 12, 12});
    auto got = conv.forward(x, Mode::infer);
    CHECK(got.shape == Shape{1, 4, 6, 6});
    // (6-1)*2+4-12 = 2 total, split 1/1
    auto want = oracles::naive_conv2d(x, conv.weights, conv.bias, 2, 1, 1, 6, 6);
    for (std::int64_t i = 0; i < got.numel(); ++i) CHECK(got.data[i] == want.data[i]);
}

TEST_CASE("transposed conv shape formula") {
    Rng rng(2);
    TransposedConv2DT<double> tc(3, 2, 4, 2, 1, 0, WeightInit::he, rng);
    auto y = tc.forward(T64({1, 3, 8, 8}), Mode::infer);
    CHECK(y.shape == Shape{1, 2, 16, 16});

    TransposedConv2DT<double> tc2(2, 1, 3, 2, 0, 1, WeightInit::he, rng);
    auto y2 = tc2.forward(T64({1, 2, 5, 5}), Mode::infer);
    // (5-1)*2 + 3 + 1 = 12
    CHECK(y2.shape == Shape{1, 1, 12, 12});
}

TEST_CASE("transposed conv is the adjoint of conv") {
    Rng rng(23);
    for (int s : {1, 2}) {
        const std::int64_t k = 4, ic = 3, oc = 5, h = 10, w = 10;
        Conv2DT<double> conv(ic, oc, k, s, Padding::valid, WeightInit::he, rng);
        std::fill(conv.bias.data.begin(), conv.bias.data.end(), 0.0);
        auto x = randn<double>(rng, {2, ic, h, w});
        auto cx = conv.forward(x, Mode::infer);

        TransposedConv2DT<double> tconv(oc, ic, k, s, 0, 0, WeightInit::he, rng);
        tconv.weights = T64({oc, ic, k, k}, conv.weights.data);  // shared kernel
        std::fill(tconv.bias.data.begin(), tconv.bias.data.end(), 0.0);
        auto y = randn<double>(rng, cx.shape);
        auto ty = tconv.forward(y, Mode::infer);
        CHECK(ty.shape == x.shape);

        double lhs = 0, rhs = 0;
        for (std::int64_t i = 0; i < cx.numel(); ++i) lhs += cx.data[i] * y.data[i];
        for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x.data[i] * ty.data[i];
        CHECK(std::abs(lhs - rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("maxpool forward and tie-break") {
    MaxPool2DT<double> pool;
    auto y = pool.forward(T64({1, 1, 2, 2}, {1, 2, 3, 4}), Mode::infer);
    CHECK(y.shape == Shape{1, 1, 1, 1});
    CHECK(y.data[0] == 4.0);

    // tie: gradient routes to the lowest flat index
    auto yt = pool.forward(T64({1, 1, 2, 2}, {7, 7, 7, 7}), Mode::train);
    auto dx = pool.backward(T64({1, 1, 1, 1}, {1.0}));
    CHECK(dx.data == std::vector<double>{1, 0, 0, 0});

    // odd input: trailing row/col dropped
    auto yo = pool.forward(T64({1, 1, 5, 5}), Mode::infer);
    CHECK(yo.shape == Shape{1, 1, 2, 2});
}

TEST_CASE("maxpool grad mass conservation") {
    Rng rng(31);
    MaxPool2DT<double> pool;
    auto x = randn<double>(rng, {2, 3, 8, 8});
    pool.forward(x, Mode::train);
    auto g = randn<double>(rng, {2, 3, 4, 4});
    auto dx = pool.backward(g);
    CHECK(oracles::rel_error({sum(dx)}, {sum(g)}) < 1e-12);
}

TEST_CASE("batchnorm: train-mode normalization before affine") {
    Rng rng(4);
    BatchNormT<double> bn(3);
    auto x = randn<double>(rng, {4, 3, 6, 6}, 2.0, 3.0);
    auto y = bn.forward(x, Mode::train);
    // gamma=1, beta=0 at init: per-channel output is normalized
    const std::int64_t m = 4 * 6 * 6;
    for (int c = 0; c < 3; ++c) {
        double s = 0, s2 = 0;
        for (int n = 0; n < 4; ++n)
            for (int p = 0; p < 36; ++p) {
                double v = y.data[((n * 3 + c) * 36) + p];
                s += v;
            }
        const double mu = s / m;
        for (int n = 0; n < 4; ++n)
            for (int p = 0; p < 36; ++p) {
                double v = y.data[((n * 3 + c) * 36) + p] - mu;
                s2 += v * v;
            }
        CHECK(std::abs(mu) < 1e-6);
        CHECK(std::abs(s2 / m - 1.0) < 1e-4);
    }
}

TEST_CASE("batchnorm: constant input yields beta") {
    BatchNormT<double> bn(2);
    bn.beta.data = {0.7, -0.3};
    auto x = T64::full({3, 2, 4, 4}, 5.0);
    auto y = bn.forward(x, Mode::train);
    for (int n = 0; n < 3; ++n)
        for (int c = 0; c < 2; ++c)
            for (int p = 0; p < 16; ++p)
                CHECK(y.data[(n * 2 + c) * 16 + p] == doctest::Approx(bn.beta.data[c]));
}

TEST_CASE("batchnorm and dropout inference are pure") {
    Rng rng(6);
    BatchNormT<double> bn(4);
    // push some stats in
    bn.forward(randn<double>(rng, {4, 4, 5, 5}), Mode::train);
    const auto rm = bn.running_mean.data;
    const auto rv = bn.running_var.data;
    auto x = randn<double>(rng, {2, 4, 5, 5});
    auto y1 = bn.forward(x, Mode::infer);
    auto y2 = bn.forward(x, Mode::infer);
    CHECK(y1.data == y2.data);
    CHECK(bn.running_mean.data == rm);
    CHECK(bn.running_var.data == rv);

    DropoutT<double> drop(0.5, 99);
    auto d1 = drop.forward(x, Mode::infer);
    CHECK(d1.data == x.data);
}

TEST_CASE("dropout train mode: inverted scaling preserves expectation") {
    DropoutT<double> drop(0.25, 1234);
    auto x = T64::full({1, 40000}, 1.0);
    auto y = drop.forward(x, Mode::train);
    int kept = 0;
    for (double v : y.data) {
        CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
        if (v != 0.0) ++kept;
    }
    CHECK(mean(y) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(kept > 28000);
    CHECK(kept < 32000);
}

TEST_CASE("activation basics") {
    ActivationT<double> relu(Act::relu);
    auto y = relu.forward(T64({1, 4}, {-2, -0.5, 0.5, 2}), Mode::train);
    CHECK(y.data == std::vector<double>{0, 0, 0.5, 2});
    auto dx = relu.backward(T64({1, 4}, {1, 1, 1, 1}));
    CHECK(dx.data == std::vector<double>{0, 0, 1, 1});

    ActivationT<double> lrelu(Act::leaky_relu, 0.2);
    auto y2 = lrelu.forward(T64({1, 2}, {-1.0, 3.0}), Mode::infer);
    CHECK(y2.data[0] == doctest::Approx(-0.2));
    CHECK(y2.data[1] == 3.0);

    ActivationT<double> sig(Act::sigmoid);
    auto y3 = sig.forward(T64({1, 1}, {0.0}), Mode::infer);
    CHECK(y3.data[0] == doctest::Approx(0.5));
}

TEST_CASE("dense: exact affine map and zero-grad case") {
    Rng rng(8);
    DenseT<double> dense(3, 2, WeightInit::he, rng);
    dense.weights = T64({2, 3}, {1, 2, 3, 4, 5, 6});
    dense.bias = T64({2}, {0.5, -0.5});
    auto y = dense.forward(T64({1, 3}, {1, 1, 1}), Mode::train);
    CHECK(y.data == std::vector<double>{6.5, 14.5});

    dense.zero_grads();
    dense.backward(T64({1, 2}));
    for (double v : dense.grad_weights.data) CHECK(v == 0.0);
    for (double v : dense.grad_bias.data) CHECK(v == 0.0);
}

TEST_CASE("backward without forward is a contract error") {
    Rng rng(10);
    DenseT<double> dense(3, 2, WeightInit::he, rng);
    CHECK_THROWS_AS(dense.backward(T64({1, 2})), ContractError);
    dense.forward(T64({1, 3}), Mode::train);
    dense.backward(T64({1, 2}));
    CHECK_THROWS_AS(dense.backward(T64({1, 2})), ContractError);  // cache consumed
    // infer-mode forward does not arm the cache
    dense.forward(T64({1, 3}), Mode::infer);
    CHECK_THROWS_AS(dense.backward(T64({1, 2})), ContractError);
}

TEST_CASE("softmax cross entropy hand values") {
    auto [l0, g0] = softmax_cross_entropy(T64({1, 3}), {1});
    CHECK(l0 == doctest::Approx(std::log(3.0)));

    auto [l1, g1] = softmax_cross_entropy(T64({1, 3}, {30, -30, -30}), {0});
    CHECK(l1 < 1e-8);

    CHECK_THROWS_AS(softmax_cross_entropy(T64({1, 3}), {3}), ContractError);
    CHECK_THROWS_AS(softmax_cross_entropy(T64({1, 3}), {0, 1}), ContractError);
}

TEST_CASE("binary cross entropy hand values") {
    auto [l, g] = binary_cross_entropy(0.5, 1);
    CHECK(l == doctest::Approx(std::log(2.0)));
    auto [l2, g2] = binary_cross_entropy(1.0 - 1e-9, 1);
    CHECK(l2 < 1e-6);
    CHECK_THROWS_AS(binary_cross_entropy(0.5, 2), ContractError);
}

TEST_CASE("adam: zero grad leaves params, increments t") {
    AdamT<double> opt(0.1);
    T64 p({3}, {1, 2, 3});
    T64 g({3});
    opt.step({&p}, {&g});
    CHECK(p.data == std::vector<double>{1, 2, 3});
    CHECK(opt.t == 1);
}

TEST_CASE("adam: first step magnitude is ~lr") {
    AdamT<double> opt(0.01);
    T64 p({1}, {5.0});
    T64 g({1}, {3.7});
    opt.step({&p}, {&g});
    CHECK(std::abs(5.0 - p.data[0]) == doctest::Approx(0.01).epsilon(1e-4));
}

TEST_CASE("adam: 200 steps on x^2 from x=5 converges") {
    AdamT<double> opt(0.1);
    T64 x({1}, {5.0});
    T64 g({1});
    for (int i = 0; i < 200; ++i) {
        g.data[0] = 2.0 * x.data[0];
        opt.step({&x}, {&g});
    }
    CHECK(std::abs(x.data[0]) < 0.5);
}

TEST_CASE("adam shape mismatch is a contract error") {
    AdamT<double> opt(0.1);
    T64 p({3}), g({2});
    CHECK_THROWS_AS(opt.step({&p}, {&g}), ContractError);
}

TEST_CASE("sequential wiring and shape trace") {
    Rng rng(12);
    SequentialT<double> net;
    net.emplace<Conv2DT<double>>(1, 2, 3, 1, Padding::valid, WeightInit::he, rng);
    net.emplace<ActivationT<double>>(Act::relu);
    net.emplace<MaxPool2DT<double>>();
    net.emplace<FlattenT<double>>();
    net.emplace<DenseT<double>>(2 * 3 * 3, 4, WeightInit::he, rng);

    std::vector<Shape> trace;
    auto y = net.forward_trace(T64({2, 1, 8, 8}), Mode::train, trace);
    CHECK(y.shape == Shape{2, 4});
    CHECK(trace == std::vector<Shape>{{2, 1, 8, 8},
                                      {2, 2, 6, 6},
                                      {2, 2, 6, 6},
                                      {2, 2, 3, 3},
                                      {2, 18},
                                      {2, 4}});
    auto dx = net.backward(T64(y.shape));
    CHECK(dx.shape == Shape{2, 1, 8, 8});
    CHECK(net.params().size() == 4);
}
