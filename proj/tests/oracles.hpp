#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <cmath>
#include <functional>
#include <vector>

#include "copdflow/tensor.hpp"

namespace oracles {

using copdflow::Shape;
using copdflow::TensorT;

// Naive direct convolution, NCHW, valid or explicit padding, stride s.
// Per-output accumulation starts at the bias and reduces in (ky, kx, ic)
// order so results are comparable bit-for-bit with the production kernel.
template <class T>
TensorT<T> naive_conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                        int stride, std::int64_t pad_top, std::int64_t pad_left,
                        std::int64_t oh, std::int64_t ow) {
    const std::int64_t n = x.shape[0], ic = x.shape[1], h = x.shape[2], ww = x.shape[3];
    const std::int64_t oc = w.shape[0], k = w.shape[2];
    TensorT<T> y({n, oc, oh, ow});
    for (std::int64_t ni = 0; ni < n; ++ni)
        for (std::int64_t o = 0; o < oc; ++o)
            for (std::int64_t oy = 0; oy < oh; ++oy)
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    T acc = b.data[o];
                    for (std::int64_t ky = 0; ky < k; ++ky)
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t iy = oy * stride + ky - pad_top;
                            const std::int64_t ix = ox * stride + kx - pad_left;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                            for (std::int64_t i = 0; i < ic; ++i)
                                acc += w.data[((o * ic + i) * k + ky) * k + kx] *
                                       x.data[((ni * ic + i) * h + iy) * ww + ix];
                        }
                    y.data[((ni * oc + o) * oh + oy) * ow + ox] = acc;
                }
    return y;
}

// Central finite differences: (f(x+h) - f(x-h)) / 2h elementwise over `x`.
// `prepare` runs before every evaluation (e.g. to re-seed a dropout mask).
template <class T>
std::vector<double> numeric_grad(const std::function<double()>& f, TensorT<T>& x,
                                 double h = 1e-5,
                                 const std::function<void()>& prepare = {}) {
    std::vector<double> g(static_cast<std::size_t>(x.numel()));
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        const T orig = x.data[i];
        x.data[i] = static_cast<T>(double(orig) + h);
        if (prepare) prepare();
        const double fp = f();
        x.data[i] = static_cast<T>(double(orig) - h);
        if (prepare) prepare();
        const double fm = f();
        x.data[i] = orig;
        g[static_cast<std::size_t>(i)] = (fp - fm) / (2.0 * h);
    }
    return g;
}

// L2 relative error between two gradient vectors.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double na = 0, nb = 0, nd = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
        const double d = a[i] - b[i];
        nd += d * d;
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nb));
    if (denom < 1e-12) return std::sqrt(nd);  // both ~zero: absolute
    return std::sqrt(nd) / denom;
}

template <class T>
std::vector<double> to_doubles(const TensorT<T>& t) {
    std::vector<double> out(t.data.begin(), t.data.end());
    return out;
}

}  // namespace oracles
