// Finite-difference verification of every layer and both losses, 64-bit.

#include <functional>
#include <memory>

#include "doctest.h"
#include "copdflow/nn.hpp"
#include "oracles.hpp"

using namespace copdflow;
using namespace copdflow::nn;
using T64 = TensorT<double>;

namespace {

constexpr double kTol = 1e-4;

// Projection loss L = <forward(x), G> with fixed random G; checks the input
// gradient and every parameter gradient against central differences.
void check_layer(LayerT<double>& layer, T64 x, Rng& rng,
                 const std::function<void()>& prepare = {}) {
    if (prepare) prepare();
    auto y0 = layer.forward(x, Mode::train);
    auto G = randn<double>(rng, y0.shape);

    auto loss = [&] {
        auto y = layer.forward(x, Mode::train);
        double l = 0;
        for (std::int64_t i = 0; i < y.numel(); ++i) l += y.data[i] * G.data[i];
        return l;
    };

    if (prepare) prepare();
    layer.forward(x, Mode::train);
    layer.zero_grads();
    auto dx = layer.backward(G);

    auto fd_x = oracles::numeric_grad<double>(loss, x, 1e-5, prepare);
    const double ex = oracles::rel_error(oracles::to_doubles(dx), fd_x);
    INFO(layer.name() << " input grad rel err " << ex);
    CHECK(ex < kTol);

    auto params = layer.params();
    auto grads = layer.grads();
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto fd_p = oracles::numeric_grad<double>(loss, *params[pi], 1e-5, prepare);
        const double ep = oracles::rel_error(oracles::to_doubles(*grads[pi]), fd_p);
        INFO(layer.name() << " param " << pi << " grad rel err " << ep);
        CHECK(ep < kTol);
    }
}

// Pushes values away from the relu/maxpool kink so finite differences stay
// on one side.
T64 kink_safe(T64 t) {
    for (auto& v : t.data) v += (v >= 0 ? 0.01 : -0.01);
    return t;
}

}  // namespace

TEST_CASE("gradcheck: conv2d over random shapes") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(1000 + seed);
        const int s = seed % 2 + 1;
        const auto pad = seed % 3 == 0 ? Padding::same : Padding::valid;
        const std::int64_t ic = 1 + rng.bounded(3), oc = 1 + rng.bounded(4);
        const std::int64_t k = 2 + rng.bounded(3);
        const std::int64_t h = k + 2 + rng.bounded(4);
        Conv2DT<double> conv(ic, oc, k, s, pad, WeightInit::he, rng);
        conv.bias = randn<double>(rng, {oc}, 0.0, 0.5);
        check_layer(conv, randn<double>(rng, {2, ic, h, h}), rng);
    }
}

TEST_CASE("gradcheck: transposed conv over random shapes") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(2000 + seed);
        const int s = seed % 2 + 1;
        const int pad = seed % 3 == 0 ? 1 : 0;
        const int op = (s == 2 && seed % 4 == 1) ? 1 : 0;
        const std::int64_t ic = 1 + rng.bounded(3), oc = 1 + rng.bounded(3);
        const std::int64_t k = 2 + pad + rng.bounded(2);
        const std::int64_t h = 3 + rng.bounded(3);
        TransposedConv2DT<double> tconv(ic, oc, k, s, pad, op, WeightInit::he, rng);
        tconv.bias = randn<double>(rng, {oc}, 0.0, 0.5);
        check_layer(tconv, randn<double>(rng, {2, ic, h, h}), rng);
    }
}

TEST_CASE("gradcheck: batchnorm rank-4 and rank-2") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(3000 + seed);
        const std::int64_t c = 1 + rng.bounded(4);
        BatchNormT<double> bn(c);
        bn.gamma = randn<double>(rng, {c}, 1.0, 0.2);
        bn.beta = randn<double>(rng, {c}, 0.0, 0.2);
        if (seed % 2 == 0) {
            check_layer(bn, randn<double>(rng, {3, c, 4, 4}, 0.5, 1.5), rng);
        } else {
            check_layer(bn, randn<double>(rng, {7, c}, -0.5, 2.0), rng);
        }
    }
}

TEST_CASE("gradcheck: dense") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(4000 + seed);
        const std::int64_t in = 1 + rng.bounded(6), out = 1 + rng.bounded(5);
        DenseT<double> dense(in, out, WeightInit::he, rng);
        dense.bias = randn<double>(rng, {out}, 0.0, 0.5);
        check_layer(dense, randn<double>(rng, {3, in}), rng);
    }
}

TEST_CASE("gradcheck: activations") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(5000 + seed);
        auto x = kink_safe(randn<double>(rng, {2, 3, 4, 4}));
        ActivationT<double> relu(Act::relu);
        check_layer(relu, x, rng);
        ActivationT<double> lrelu(Act::leaky_relu, 0.2);
        check_layer(lrelu, x, rng);
        ActivationT<double> th(Act::tanh_act);
        check_layer(th, randn<double>(rng, {2, 8}), rng);
        ActivationT<double> sig(Act::sigmoid);
        check_layer(sig, randn<double>(rng, {2, 8}), rng);
    }
}

TEST_CASE("gradcheck: maxpool") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(6000 + seed);
        MaxPool2DT<double> pool;
        check_layer(pool, randn<double>(rng, {2, 2, 6, 6}), rng);
    }
}

TEST_CASE("gradcheck: dropout with frozen mask") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(7000 + seed);
        DropoutT<double> drop(0.4, 0);
        auto prepare = [&, seed] { drop.reseed(8000 + seed); };
        check_layer(drop, randn<double>(rng, {3, 10}), rng, prepare);
    }
}

TEST_CASE("gradcheck: softmax cross entropy < 1e-6") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(9000 + seed);
        auto logits = randn<double>(rng, {4, 3}, 0.0, 2.0);
        std::vector<int> labels;
        for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.bounded(3)));

        auto [l, g] = softmax_cross_entropy(logits, labels);
        auto loss = [&] { return softmax_cross_entropy(logits, labels).first; };
        auto fd = oracles::numeric_grad<double>(loss, logits, 1e-6);
        CHECK(oracles::rel_error(oracles::to_doubles(g), fd) < 1e-6);
    }
}

TEST_CASE("gradcheck: binary cross entropy < 1e-6") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(9500 + seed);
        T64 p({1}, {0.05 + 0.9 * rng.uniform()});
        const int target = static_cast<int>(rng.bounded(2));
        auto [l, g] = binary_cross_entropy(p.data[0], target);
        auto loss = [&] { return binary_cross_entropy(p.data[0], target).first; };
        auto fd = oracles::numeric_grad<double>(loss, p, 1e-7);
        CHECK(oracles::rel_error({g}, fd) < 1e-6);
    }
}
