// Rough throughput probe for the conv kernels; guides training-budget defaults.

#include <chrono>
#include <cstdio>

#include "copdflow/nn.hpp"

using namespace copdflow;
using namespace copdflow::nn;
using Clock = std::chrono::steady_clock;

template <class F>
double time_ms(F f, int reps) {
    auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) f();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

int main() {
    Rng rng(1);
    const int B = 8;

    // discriminator-ish conv: 32 -> 64 ch, 32x32 -> 16x16, k4 s2
    Conv2DT<real> conv(32, 64, 4, 2, Padding::same, WeightInit::normal02, rng);
    auto x = randn<real>(rng, {B, 32, 32, 32});
    auto y = conv.forward(x, Mode::train);
    auto g = randn<real>(rng, y.shape);
    const double conv_gflop = 2.0 * B * 64 * 16 * 16 * 32 * 16 / 1e9;
    double fwd = time_ms([&] { conv.forward(x, Mode::train); }, 10);
    double bwd = time_ms([&] { conv.backward(g); conv.forward(x, Mode::train); }, 10) - fwd;
    std::printf("conv fwd %.2f ms (%.1f GFLOP/s)  bwd %.2f ms (%.1f GFLOP/s)\n", fwd,
                conv_gflop / fwd * 1e3, bwd, 2 * conv_gflop / bwd * 1e3);

    // generator-ish tconv: 128 -> 64 ch, 16x16 -> 32x32, k4 s2 p1
    TransposedConv2DT<real> tconv(128, 64, 4, 2, 1, 0, WeightInit::normal02, rng);
    auto xt = randn<real>(rng, {B, 128, 16, 16});
    auto yt = tconv.forward(xt, Mode::train);
    auto gt = randn<real>(rng, yt.shape);
    const double t_gflop = 2.0 * B * 16 * 16 * 128 * 64 * 16 / 1e9;
    double tfwd = time_ms([&] { tconv.forward(xt, Mode::train); }, 10);
    double tbwd = time_ms([&] { tconv.backward(gt); tconv.forward(xt, Mode::train); }, 10) - tfwd;
    std::printf("tconv fwd %.2f ms (%.1f GFLOP/s)  bwd %.2f ms (%.1f GFLOP/s)\n", tfwd,
                t_gflop / tfwd * 1e3, tbwd, 2 * t_gflop / tbwd * 1e3);

    // classifier-ish conv: 8 -> 16 ch, 62x62 -> 58x58, k5 s1 valid
    Conv2DT<real> cl(8, 16, 5, 1, Padding::valid, WeightInit::he, rng);
    auto xc = randn<real>(rng, {B, 8, 62, 62});
    auto yc = cl.forward(xc, Mode::train);
    auto gc = randn<real>(rng, yc.shape);
    const double c_gflop = 2.0 * B * 16 * 58 * 58 * 8 * 25 / 1e9;
    double cfwd = time_ms([&] { cl.forward(xc, Mode::train); }, 10);
    double cbwd = time_ms([&] { cl.backward(gc); cl.forward(xc, Mode::train); }, 10) - cfwd;
    std::printf("clf conv fwd %.2f ms (%.1f GFLOP/s)  bwd %.2f ms (%.1f GFLOP/s)\n", cfwd,
                c_gflop / cfwd * 1e3, cbwd, 2 * c_gflop / cbwd * 1e3);
    return 0;
}
