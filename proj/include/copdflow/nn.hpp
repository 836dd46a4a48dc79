#pragma once

// Forward/backward passes for the layer zoo, the two losses, and Adam.
// No autodiff graph: each layer caches what its own backward needs during a
// train-mode forward. Convolutions run channels-last internally (activations
// are transposed at the layer boundary) so the hot loops vectorize over
// output channels; the public tensor layout is NCHW throughout.
//
// Determinism: every accumulation order is fixed and single-threaded, so any
// sequence of calls with the same seeds is bit-reproducible.

#include <array>
#include <cstring>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "copdflow/tensor.hpp"

namespace copdflow::nn {

enum class Mode { train, infer };
enum class Padding { valid, same };
enum class Act { relu, leaky_relu, tanh_act, sigmoid };
enum class WeightInit { he, normal02 };

constexpr int kMaxChannels = 512;  // stack scratch bound for channel loops

namespace detail {

template <class T>
std::vector<T> nchw_to_nhwc(const TensorT<T>& x) {
    const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    std::vector<T> out(static_cast<std::size_t>(x.numel()));
    for (std::int64_t ni = 0; ni < n; ++ni)
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T* src = x.data.data() + ((ni * c + ci) * h) * w;
            T* dst = out.data() + (ni * h * w) * c + ci;
            for (std::int64_t p = 0; p < h * w; ++p) dst[p * c] = src[p];
        }
    return out;
}

template <class T>
TensorT<T> nhwc_to_nchw(const std::vector<T>& v, std::int64_t n, std::int64_t c,
                        std::int64_t h, std::int64_t w) {
    TensorT<T> out({n, c, h, w});
    for (std::int64_t ni = 0; ni < n; ++ni)
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T* src = v.data() + (ni * h * w) * c + ci;
            T* dst = out.data.data() + ((ni * c + ci) * h) * w;
            for (std::int64_t p = 0; p < h * w; ++p) dst[p] = src[p * c];
        }
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layer interface
// ---------------------------------------------------------------------------
template <class T>
class LayerT {
public:
    virtual ~LayerT() = default;
    virtual TensorT<T> forward(const TensorT<T>& x, Mode mode) = 0;
    /// Consumes the cache of the last train-mode forward; accumulates into
    /// parameter grads and returns the input gradient.
    virtual TensorT<T> backward(const TensorT<T>& grad_out) = 0;
    virtual std::vector<TensorT<T>*> params() { return {}; }
    virtual std::vector<TensorT<T>*> grads() { return {}; }
    virtual std::string name() const = 0;

    void zero_grads() {
        for (auto* g : grads()) std::fill(g->data.begin(), g->data.end(), T(0));
    }

protected:
    void require_cache(bool have, const std::string& who) const {
        if (!have) throw ContractError(who + ": backward without matching train-mode forward");
    }
};

// ---------------------------------------------------------------------------
// Conv2D: weights [oc, ic, kh, kw], bias [oc].
// valid: out = floor((in - k) / stride) + 1
// same:  out = ceil(in / stride), zero padding split low/high (extra on high)
// ---------------------------------------------------------------------------
template <class T>
class Conv2DT : public LayerT<T> {
public:
    TensorT<T> weights, bias, grad_weights, grad_bias;
    int stride;
    Padding padding;

    Conv2DT(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, int stride_,
            Padding padding_, WeightInit init, Rng& rng)
        : weights({out_ch, in_ch, k, k}),
          bias({out_ch}),
          grad_weights({out_ch, in_ch, k, k}),
          grad_bias({out_ch}),
          stride(stride_),
          padding(padding_) {
        const double std =
            init == WeightInit::he ? std::sqrt(2.0 / double(in_ch * k * k)) : 0.02;
        for (auto& v : weights.data) v = static_cast<T>(std * rng.gaussian());
    }

    std::string name() const override { return "conv2d"; }
    std::vector<TensorT<T>*> params() override { return {&weights, &bias}; }
    std::vector<TensorT<T>*> grads() override { return {&grad_weights, &grad_bias}; }

    static std::int64_t out_dim(std::int64_t in, std::int64_t k, int s, Padding p) {
        return p == Padding::valid ? (in - k) / s + 1 : (in + s - 1) / s;
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        check_input(x);
        const std::int64_t n = x.shape[0], ic = x.shape[1], h = x.shape[2], w = x.shape[3];
        const std::int64_t oc = weights.shape[0], k = weights.shape[2];
        const std::int64_t oh = out_dim(h, k, stride, padding);
        const std::int64_t ow = out_dim(w, k, stride, padding);
        if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: input too small for kernel");
        pad_top_ = pad_left_ = 0;
        if (padding == Padding::same) {
            pad_top_ = std::max<std::int64_t>(0, (oh - 1) * stride + k - h) / 2;
            pad_left_ = std::max<std::int64_t>(0, (ow - 1) * stride + k - w) / 2;
        }

        std::vector<T> xh = detail::nchw_to_nhwc(x);
        // weights -> [kh, kw, ic, oc]
        std::vector<T> wh(static_cast<std::size_t>(weights.numel()));
        for (std::int64_t o = 0; o < oc; ++o)
            for (std::int64_t i = 0; i < ic; ++i)
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        wh[((ky * k + kx) * ic + i) * oc + o] =
                            weights.data[((o * ic + i) * k + ky) * k + kx];

        std::vector<T> yh(static_cast<std::size_t>(n * oh * ow * oc));
        std::array<T, kMaxChannels> acc;
        for (std::int64_t ni = 0; ni < n; ++ni) {
            const T* xb = xh.data() + ni * h * w * ic;
            T* yb = yh.data() + ni * oh * ow * oc;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    for (std::int64_t o = 0; o < oc; ++o) acc[o] = bias.data[o];
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy * stride + ky - pad_top_;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox * stride + kx - pad_left_;
                            if (ix < 0 || ix >= w) continue;
                            const T* xp = xb + (iy * w + ix) * ic;
                            const T* wp = wh.data() + ((ky * k + kx) * ic) * oc;
                            for (std::int64_t i = 0; i < ic; ++i) {
                                const T xv = xp[i];
                                const T* wrow = wp + i * oc;
                                for (std::int64_t o = 0; o < oc; ++o) acc[o] += xv * wrow[o];
                            }
                        }
                    }
                    T* yp = yb + (oy * ow + ox) * oc;
                    for (std::int64_t o = 0; o < oc; ++o) yp[o] = acc[o];
                }
            }
        }

        if (mode == Mode::train) {
            cached_xh_ = std::move(xh);
            in_shape_ = x.shape;
            have_cache_ = true;
        }
        return detail::nhwc_to_nchw(yh, n, oc, oh, ow);
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "conv2d");
        const std::int64_t n = in_shape_[0], ic = in_shape_[1], h = in_shape_[2],
                           w = in_shape_[3];
        const std::int64_t oc = weights.shape[0], k = weights.shape[2];
        const std::int64_t oh = grad_out.shape[2], ow = grad_out.shape[3];
        if (grad_out.shape[0] != n || grad_out.shape[1] != oc)
            throw ShapeError("conv2d backward: grad_out mismatch");

        std::vector<T> gh = detail::nchw_to_nhwc(grad_out);
        // weights -> [kh, kw, oc, ic] for the input gradient
        std::vector<T> wt(static_cast<std::size_t>(weights.numel()));
        for (std::int64_t o = 0; o < oc; ++o)
            for (std::int64_t i = 0; i < ic; ++i)
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        wt[((ky * k + kx) * oc + o) * ic + i] =
                            weights.data[((o * ic + i) * k + ky) * k + kx];

        std::vector<T> dxh(static_cast<std::size_t>(n * h * w * ic), T(0));
        std::vector<T> dwh(static_cast<std::size_t>(weights.numel()), T(0));
        for (std::int64_t ni = 0; ni < n; ++ni) {
            const T* xb = cached_xh_.data() + ni * h * w * ic;
            const T* gb = gh.data() + ni * oh * ow * oc;
            T* dxb = dxh.data() + ni * h * w * ic;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    const T* gp = gb + (oy * ow + ox) * oc;
                    for (std::int64_t o = 0; o < oc; ++o) grad_bias.data[o] += gp[o];
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t iy = oy * stride + ky - pad_top_;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ix = ox * stride + kx - pad_left_;
                            if (ix < 0 || ix >= w) continue;
                            const T* xp = xb + (iy * w + ix) * ic;
                            T* dxp = dxb + (iy * w + ix) * ic;
                            T* dwp = dwh.data() + ((ky * k + kx) * ic) * oc;
                            const T* wp = wt.data() + ((ky * k + kx) * oc) * ic;
                            for (std::int64_t o = 0; o < oc; ++o) {
                                const T gv = gp[o];
                                const T* wrow = wp + o * ic;
                                for (std::int64_t i = 0; i < ic; ++i) dxp[i] += gv * wrow[i];
                            }
                            for (std::int64_t i = 0; i < ic; ++i) {
                                const T xv = xp[i];
                                T* dwrow = dwp + i * oc;
                                for (std::int64_t o = 0; o < oc; ++o) dwrow[o] += xv * gp[o];
                            }
                        }
                    }
                }
            }
        }
        // scatter [kh,kw,ic,oc] grads back into [oc,ic,kh,kw]
        for (std::int64_t o = 0; o < oc; ++o)
            for (std::int64_t i = 0; i < ic; ++i)
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        grad_weights.data[((o * ic + i) * k + ky) * k + kx] +=
                            dwh[((ky * k + kx) * ic + i) * oc + o];

        have_cache_ = false;
        return detail::nhwc_to_nchw(dxh, n, ic, h, w);
    }

private:
    void check_input(const TensorT<T>& x) const {
        if (x.rank() != 4) throw ShapeError("conv2d expects [n,c,h,w]");
        if (x.shape[1] != weights.shape[1])
            throw ShapeError("conv2d: input channels " + std::to_string(x.shape[1]) +
                             " != " + std::to_string(weights.shape[1]));
        if (weights.shape[0] > kMaxChannels || weights.shape[1] > kMaxChannels)
            throw ShapeError("conv2d: channel count exceeds kMaxChannels");
    }

    std::vector<T> cached_xh_;
    Shape in_shape_;
    std::int64_t pad_top_ = 0, pad_left_ = 0;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// TransposedConv2D: weights [ic, oc, kh, kw], bias [oc].
// out = (in - 1) * stride + k + output_padding - 2 * padding
// ---------------------------------------------------------------------------
template <class T>
class TransposedConv2DT : public LayerT<T> {
public:
    TensorT<T> weights, bias, grad_weights, grad_bias;
    int stride;
    int padding;
    int output_padding;

    TransposedConv2DT(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, int stride_,
                      int padding_, int output_padding_, WeightInit init, Rng& rng)
        : weights({in_ch, out_ch, k, k}),
          bias({out_ch}),
          grad_weights({in_ch, out_ch, k, k}),
          grad_bias({out_ch}),
          stride(stride_),
          padding(padding_),
          output_padding(output_padding_) {
        const double std =
            init == WeightInit::he ? std::sqrt(2.0 / double(in_ch * k * k)) : 0.02;
        for (auto& v : weights.data) v = static_cast<T>(std * rng.gaussian());
    }

    std::string name() const override { return "transposed_conv2d"; }
    std::vector<TensorT<T>*> params() override { return {&weights, &bias}; }
    std::vector<TensorT<T>*> grads() override { return {&grad_weights, &grad_bias}; }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        if (x.rank() != 4) throw ShapeError("transposed_conv2d expects [n,c,h,w]");
        if (x.shape[1] != weights.shape[0])
            throw ShapeError("transposed_conv2d: input channels mismatch");
        const std::int64_t n = x.shape[0], ic = x.shape[1], h = x.shape[2], w = x.shape[3];
        const std::int64_t oc = weights.shape[1], k = weights.shape[2];
        const std::int64_t oh = (h - 1) * stride + k + output_padding - 2 * padding;
        const std::int64_t ow = (w - 1) * stride + k + output_padding - 2 * padding;
        if (oh <= 0 || ow <= 0) throw ShapeError("transposed_conv2d: empty output");

        std::vector<T> xh = detail::nchw_to_nhwc(x);
        // weights -> [kh, kw, ic, oc]
        std::vector<T> wh(static_cast<std::size_t>(weights.numel()));
        for (std::int64_t i = 0; i < ic; ++i)
            for (std::int64_t o = 0; o < oc; ++o)
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        wh[((ky * k + kx) * ic + i) * oc + o] =
                            weights.data[((i * oc + o) * k + ky) * k + kx];

        std::vector<T> yh(static_cast<std::size_t>(n * oh * ow * oc));
        for (std::int64_t ni = 0; ni < n; ++ni) {
            T* yb = yh.data() + ni * oh * ow * oc;
            for (std::int64_t p = 0; p < oh * ow; ++p)
                for (std::int64_t o = 0; o < oc; ++o) yb[p * oc + o] = bias.data[o];
            const T* xb = xh.data() + ni * h * w * ic;
            for (std::int64_t iy = 0; iy < h; ++iy) {
                for (std::int64_t ix = 0; ix < w; ++ix) {
                    const T* xp = xb + (iy * w + ix) * ic;
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t oy = iy * stride + ky - padding;
                        if (oy < 0 || oy >= oh) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ox = ix * stride + kx - padding;
                            if (ox < 0 || ox >= ow) continue;
                            T* yp = yb + (oy * ow + ox) * oc;
                            const T* wp = wh.data() + ((ky * k + kx) * ic) * oc;
                            for (std::int64_t i = 0; i < ic; ++i) {
                                const T xv = xp[i];
                                const T* wrow = wp + i * oc;
                                for (std::int64_t o = 0; o < oc; ++o) yp[o] += xv * wrow[o];
                            }
                        }
                    }
                }
            }
        }

        if (mode == Mode::train) {
            cached_xh_ = std::move(xh);
            in_shape_ = x.shape;
            have_cache_ = true;
        }
        return detail::nhwc_to_nchw(yh, n, oc, oh, ow);
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "transposed_conv2d");
        const std::int64_t n = in_shape_[0], ic = in_shape_[1], h = in_shape_[2],
                           w = in_shape_[3];
        const std::int64_t oc = weights.shape[1], k = weights.shape[2];
        const std::int64_t oh = grad_out.shape[2], ow = grad_out.shape[3];

        std::vector<T> gh = detail::nchw_to_nhwc(grad_out);
        // weights -> [kh, kw, oc, ic]
        std::vector<T> wt(static_cast<std::size_t>(weights.numel()));
        for (std::int64_t i = 0; i < ic; ++i)
            for (std::int64_t o = 0; o < oc; ++o)
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        wt[((ky * k + kx) * oc + o) * ic + i] =
                            weights.data[((i * oc + o) * k + ky) * k + kx];

        std::vector<T> dxh(static_cast<std::size_t>(n * h * w * ic), T(0));
        std::vector<T> dwh(static_cast<std::size_t>(weights.numel()), T(0));
        for (std::int64_t o = 0; o < oc; ++o) {
            double acc = 0;
            for (std::int64_t ni = 0; ni < n; ++ni)
                for (std::int64_t p = 0; p < oh * ow; ++p)
                    acc += static_cast<double>(gh[(ni * oh * ow + p) * oc + o]);
            grad_bias.data[o] += static_cast<T>(acc);
        }
        for (std::int64_t ni = 0; ni < n; ++ni) {
            const T* xb = cached_xh_.data() + ni * h * w * ic;
            const T* gb = gh.data() + ni * oh * ow * oc;
            T* dxb = dxh.data() + ni * h * w * ic;
            for (std::int64_t iy = 0; iy < h; ++iy) {
                for (std::int64_t ix = 0; ix < w; ++ix) {
                    const T* xp = xb + (iy * w + ix) * ic;
                    T* dxp = dxb + (iy * w + ix) * ic;
                    for (std::int64_t ky = 0; ky < k; ++ky) {
                        const std::int64_t oy = iy * stride + ky - padding;
                        if (oy < 0 || oy >= oh) continue;
                        for (std::int64_t kx = 0; kx < k; ++kx) {
                            const std::int64_t ox = ix * stride + kx - padding;
                            if (ox < 0 || ox >= ow) continue;
                            const T* gp = gb + (oy * ow + ox) * oc;
                            const T* wp = wt.data() + ((ky * k + kx) * oc) * ic;
                            T* dwp = dwh.data() + ((ky * k + kx) * ic) * oc;
                            for (std::int64_t o = 0; o < oc; ++o) {
                                const T gv = gp[o];
                                const T* wrow = wp + o * ic;
                                for (std::int64_t i = 0; i < ic; ++i) dxp[i] += gv * wrow[i];
                            }
                            for (std::int64_t i = 0; i < ic; ++i) {
                                const T xv = xp[i];
                                T* dwrow = dwp + i * oc;
                                for (std::int64_t o = 0; o < oc; ++o) dwrow[o] += xv * gp[o];
                            }
                        }
                    }
                }
            }
        }
        for (std::int64_t i = 0; i < ic; ++i)
            for (std::int64_t o = 0; o < oc; ++o)
                for (std::int64_t ky = 0; ky < k; ++ky)
                    for (std::int64_t kx = 0; kx < k; ++kx)
                        grad_weights.data[((i * oc + o) * k + ky) * k + kx] +=
                            dwh[((ky * k + kx) * ic + i) * oc + o];

        have_cache_ = false;
        return detail::nhwc_to_nchw(dxh, n, ic, h, w);
    }

private:
    std::vector<T> cached_xh_;
    Shape in_shape_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// BatchNorm over channel axis. Rank-4 inputs normalize per channel over
// (n,h,w); rank-2 inputs over the batch. Running stats follow the usual
// convention: biased variance normalizes the batch, unbiased variance feeds
// the running estimate, and stats update only in train mode.
// ---------------------------------------------------------------------------
template <class T>
class BatchNormT : public LayerT<T> {
public:
    TensorT<T> gamma, beta, grad_gamma, grad_beta;
    TensorT<T> running_mean, running_var;
    T momentum;
    T eps;

    explicit BatchNormT(std::int64_t channels, T momentum_ = T(0.1), T eps_ = T(1e-5))
        : gamma(TensorT<T>::full({channels}, T(1))),
          beta({channels}),
          grad_gamma({channels}),
          grad_beta({channels}),
          running_mean({channels}),
          running_var(TensorT<T>::full({channels}, T(1))),
          momentum(momentum_),
          eps(eps_) {}

    std::string name() const override { return "batchnorm"; }
    std::vector<TensorT<T>*> params() override { return {&gamma, &beta}; }
    std::vector<TensorT<T>*> grads() override { return {&grad_gamma, &grad_beta}; }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        const auto [c, m] = layout(x);
        TensorT<T> y(x.shape);
        if (mode == Mode::infer) {
            for (std::int64_t ci = 0; ci < c; ++ci) {
                const T inv = T(1) / std::sqrt(running_var.data[ci] + eps);
                const T g = gamma.data[ci] * inv;
                const T b = beta.data[ci] - running_mean.data[ci] * g;
                for_channel(x, ci, [&](std::int64_t idx) { y.data[idx] = g * x.data[idx] + b; });
            }
            return y;
        }

        cached_xhat_.assign(x.data.size(), T(0));
        inv_std_.assign(static_cast<std::size_t>(c), T(0));
        for (std::int64_t ci = 0; ci < c; ++ci) {
            double s = 0, s2 = 0;
            for_channel(x, ci, [&](std::int64_t idx) { s += double(x.data[idx]); });
            const double mu = s / double(m);
            for_channel(x, ci, [&](std::int64_t idx) {
                const double d = double(x.data[idx]) - mu;
                s2 += d * d;
            });
            const double var = s2 / double(m);
            const T inv = static_cast<T>(1.0 / std::sqrt(var + double(eps)));
            inv_std_[ci] = inv;
            for_channel(x, ci, [&](std::int64_t idx) {
                const T xh = static_cast<T>((double(x.data[idx]) - mu) * double(inv));
                cached_xhat_[idx] = xh;
                y.data[idx] = gamma.data[ci] * xh + beta.data[ci];
            });
            const double unbiased = m > 1 ? var * double(m) / double(m - 1) : var;
            running_mean.data[ci] =
                (T(1) - momentum) * running_mean.data[ci] + momentum * static_cast<T>(mu);
            running_var.data[ci] =
                (T(1) - momentum) * running_var.data[ci] + momentum * static_cast<T>(unbiased);
        }
        in_shape_ = x.shape;
        have_cache_ = true;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "batchnorm");
        if (grad_out.shape != in_shape_) throw ShapeError("batchnorm backward: shape mismatch");
        const auto [c, m] = layout(grad_out);
        TensorT<T> dx(grad_out.shape);
        for (std::int64_t ci = 0; ci < c; ++ci) {
            double sum_g = 0, sum_gx = 0;
            for_channel(grad_out, ci, [&](std::int64_t idx) {
                sum_g += double(grad_out.data[idx]);
                sum_gx += double(grad_out.data[idx]) * double(cached_xhat_[idx]);
            });
            grad_beta.data[ci] += static_cast<T>(sum_g);
            grad_gamma.data[ci] += static_cast<T>(sum_gx);
            const double g = double(gamma.data[ci]);
            const double inv = double(inv_std_[ci]);
            const double c1 = sum_g / double(m);
            const double c2 = sum_gx / double(m);
            for_channel(grad_out, ci, [&](std::int64_t idx) {
                dx.data[idx] = static_cast<T>(
                    g * inv *
                    (double(grad_out.data[idx]) - c1 - double(cached_xhat_[idx]) * c2));
            });
        }
        have_cache_ = false;
        return dx;
    }

private:
    std::pair<std::int64_t, std::int64_t> layout(const TensorT<T>& x) const {
        if (x.rank() == 4) {
            if (x.shape[1] != gamma.shape[0]) throw ShapeError("batchnorm: channel mismatch");
            return {x.shape[1], x.shape[0] * x.shape[2] * x.shape[3]};
        }
        if (x.rank() == 2) {
            if (x.shape[1] != gamma.shape[0]) throw ShapeError("batchnorm: feature mismatch");
            return {x.shape[1], x.shape[0]};
        }
        throw ShapeError("batchnorm expects rank 2 or 4");
    }

    template <class F>
    void for_channel(const TensorT<T>& x, std::int64_t ci, F f) const {
        if (x.rank() == 4) {
            const std::int64_t n = x.shape[0], c = x.shape[1], hw = x.shape[2] * x.shape[3];
            for (std::int64_t ni = 0; ni < n; ++ni) {
                const std::int64_t base = (ni * c + ci) * hw;
                for (std::int64_t p = 0; p < hw; ++p) f(base + p);
            }
        } else {
            const std::int64_t n = x.shape[0], c = x.shape[1];
            for (std::int64_t ni = 0; ni < n; ++ni) f(ni * c + ci);
        }
    }

    std::vector<T> cached_xhat_;
    std::vector<T> inv_std_;
    Shape in_shape_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// Dense: weights [out, in], y = x W^T + b.
// ---------------------------------------------------------------------------
template <class T>
class DenseT : public LayerT<T> {
public:
    TensorT<T> weights, bias, grad_weights, grad_bias;

    DenseT(std::int64_t in, std::int64_t out, WeightInit init, Rng& rng)
        : weights({out, in}), bias({out}), grad_weights({out, in}), grad_bias({out}) {
        const double std = init == WeightInit::he ? std::sqrt(2.0 / double(in)) : 0.02;
        for (auto& v : weights.data) v = static_cast<T>(std * rng.gaussian());
    }

    std::string name() const override { return "dense"; }
    std::vector<TensorT<T>*> params() override { return {&weights, &bias}; }
    std::vector<TensorT<T>*> grads() override { return {&grad_weights, &grad_bias}; }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        if (x.rank() != 2 || x.shape[1] != weights.shape[1])
            throw ShapeError("dense: expected [n," + std::to_string(weights.shape[1]) + "]");
        const std::int64_t n = x.shape[0], in = weights.shape[1], out = weights.shape[0];
        TensorT<T> y({n, out});
        for (std::int64_t ni = 0; ni < n; ++ni) {
            const T* xp = x.data.data() + ni * in;
            T* yp = y.data.data() + ni * out;
            for (std::int64_t o = 0; o < out; ++o) {
                const T* wp = weights.data.data() + o * in;
                T acc = bias.data[o];
                for (std::int64_t i = 0; i < in; ++i) acc += wp[i] * xp[i];
                yp[o] = acc;
            }
        }
        if (mode == Mode::train) {
            cached_x_ = x;
            have_cache_ = true;
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "dense");
        const std::int64_t n = cached_x_.shape[0], in = weights.shape[1],
                           out = weights.shape[0];
        if (grad_out.shape != Shape{n, out}) throw ShapeError("dense backward: grad mismatch");
        TensorT<T> dx({n, in});
        for (std::int64_t ni = 0; ni < n; ++ni) {
            const T* gp = grad_out.data.data() + ni * out;
            const T* xp = cached_x_.data.data() + ni * in;
            T* dxp = dx.data.data() + ni * in;
            for (std::int64_t o = 0; o < out; ++o) {
                const T gv = gp[o];
                grad_bias.data[o] += gv;
                const T* wp = weights.data.data() + o * in;
                T* dwp = grad_weights.data.data() + o * in;
                for (std::int64_t i = 0; i < in; ++i) {
                    dxp[i] += gv * wp[i];
                    dwp[i] += gv * xp[i];
                }
            }
        }
        have_cache_ = false;
        return dx;
    }

private:
    TensorT<T> cached_x_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// Dropout: inverted scaling at train time, identity at inference.
// ---------------------------------------------------------------------------
template <class T>
class DropoutT : public LayerT<T> {
public:
    T rate;

    DropoutT(T rate_, std::uint64_t seed) : rate(rate_), rng_(seed) {
        if (!(rate >= T(0) && rate < T(1))) throw DomainError("dropout rate must be in [0,1)");
    }

    std::string name() const override { return "dropout"; }
    void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        if (mode == Mode::infer) return x;
        const T keep_scale = T(1) / (T(1) - rate);
        mask_.assign(x.data.size(), T(0));
        TensorT<T> y(x.shape);
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const bool keep = rng_.uniform() >= double(rate);
            mask_[i] = keep ? keep_scale : T(0);
            y.data[i] = x.data[i] * mask_[i];
        }
        in_shape_ = x.shape;
        have_cache_ = true;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "dropout");
        if (grad_out.shape != in_shape_) throw ShapeError("dropout backward: shape mismatch");
        TensorT<T> dx(grad_out.shape);
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = grad_out.data[i] * mask_[i];
        have_cache_ = false;
        return dx;
    }

private:
    Rng rng_;
    std::vector<T> mask_;
    Shape in_shape_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// MaxPool2D, window 2 stride 2 (odd trailing rows/cols are dropped). The
// gradient routes to the lowest-index argmax of each window.
// ---------------------------------------------------------------------------
template <class T>
class MaxPool2DT : public LayerT<T> {
public:
    std::string name() const override { return "maxpool2d"; }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        if (x.rank() != 4) throw ShapeError("maxpool2d expects [n,c,h,w]");
        const std::int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
        const std::int64_t oh = h / 2, ow = w / 2;
        if (oh == 0 || ow == 0) throw ShapeError("maxpool2d: input smaller than window");
        TensorT<T> y({n, c, oh, ow});
        if (mode == Mode::train) argmax_.assign(static_cast<std::size_t>(n * c * oh * ow), 0);
        for (std::int64_t nc = 0; nc < n * c; ++nc) {
            const T* xp = x.data.data() + nc * h * w;
            T* yp = y.data.data() + nc * oh * ow;
            for (std::int64_t oy = 0; oy < oh; ++oy) {
                for (std::int64_t ox = 0; ox < ow; ++ox) {
                    std::int64_t best_idx = (2 * oy) * w + 2 * ox;
                    T best = xp[best_idx];
                    const std::int64_t cand[3] = {(2 * oy) * w + 2 * ox + 1,
                                                  (2 * oy + 1) * w + 2 * ox,
                                                  (2 * oy + 1) * w + 2 * ox + 1};
                    for (std::int64_t idx : cand) {
                        if (xp[idx] > best) {
                            best = xp[idx];
                            best_idx = idx;
                        }
                    }
                    yp[oy * ow + ox] = best;
                    if (mode == Mode::train)
                        argmax_[static_cast<std::size_t>(nc * oh * ow + oy * ow + ox)] = best_idx;
                }
            }
        }
        if (mode == Mode::train) {
            in_shape_ = x.shape;
            have_cache_ = true;
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "maxpool2d");
        const std::int64_t n = in_shape_[0], c = in_shape_[1], h = in_shape_[2],
                           w = in_shape_[3];
        const std::int64_t oh = grad_out.shape[2], ow = grad_out.shape[3];
        TensorT<T> dx(in_shape_);
        for (std::int64_t nc = 0; nc < n * c; ++nc) {
            const T* gp = grad_out.data.data() + nc * oh * ow;
            T* dxp = dx.data.data() + nc * h * w;
            for (std::int64_t p = 0; p < oh * ow; ++p)
                dxp[argmax_[static_cast<std::size_t>(nc * oh * ow + p)]] += gp[p];
        }
        have_cache_ = false;
        return dx;
    }

private:
    std::vector<std::int64_t> argmax_;
    Shape in_shape_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------
template <class T>
class ActivationT : public LayerT<T> {
public:
    Act kind;
    T alpha;  // leaky_relu slope

    explicit ActivationT(Act kind_, T alpha_ = T(0.01)) : kind(kind_), alpha(alpha_) {}

    std::string name() const override {
        switch (kind) {
            case Act::relu: return "relu";
            case Act::leaky_relu: return "leaky_relu";
            case Act::tanh_act: return "tanh";
            default: return "sigmoid";
        }
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        TensorT<T> y(x.shape);
        switch (kind) {
            case Act::relu:
                for (std::int64_t i = 0; i < x.numel(); ++i)
                    y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
                break;
            case Act::leaky_relu:
                for (std::int64_t i = 0; i < x.numel(); ++i)
                    y.data[i] = x.data[i] > T(0) ? x.data[i] : alpha * x.data[i];
                break;
            case Act::tanh_act:
                for (std::int64_t i = 0; i < x.numel(); ++i) y.data[i] = std::tanh(x.data[i]);
                break;
            case Act::sigmoid:
                for (std::int64_t i = 0; i < x.numel(); ++i)
                    y.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
                break;
        }
        if (mode == Mode::train) {
            cache_ = (kind == Act::tanh_act || kind == Act::sigmoid) ? y : x;
            have_cache_ = true;
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, name());
        if (grad_out.shape != cache_.shape) throw ShapeError("activation backward: shape mismatch");
        TensorT<T> dx(grad_out.shape);
        switch (kind) {
            case Act::relu:
                for (std::int64_t i = 0; i < dx.numel(); ++i)
                    dx.data[i] = cache_.data[i] > T(0) ? grad_out.data[i] : T(0);
                break;
            case Act::leaky_relu:
                for (std::int64_t i = 0; i < dx.numel(); ++i)
                    dx.data[i] = cache_.data[i] > T(0) ? grad_out.data[i]
                                                       : alpha * grad_out.data[i];
                break;
            case Act::tanh_act:
                for (std::int64_t i = 0; i < dx.numel(); ++i)
                    dx.data[i] = grad_out.data[i] * (T(1) - cache_.data[i] * cache_.data[i]);
                break;
            case Act::sigmoid:
                for (std::int64_t i = 0; i < dx.numel(); ++i)
                    dx.data[i] = grad_out.data[i] * cache_.data[i] * (T(1) - cache_.data[i]);
                break;
        }
        have_cache_ = false;
        return dx;
    }

private:
    TensorT<T> cache_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// Reshape (per-batch-item target shape) and Flatten.
// ---------------------------------------------------------------------------
template <class T>
class ReshapeT : public LayerT<T> {
public:
    explicit ReshapeT(Shape item_shape) : item_shape_(std::move(item_shape)) {}
    std::string name() const override { return "reshape"; }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        Shape out{x.shape[0]};
        out.insert(out.end(), item_shape_.begin(), item_shape_.end());
        if (mode == Mode::train) {
            in_shape_ = x.shape;
            have_cache_ = true;
        }
        return x.reshaped(out);
    }
    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "reshape");
        have_cache_ = false;
        return grad_out.reshaped(in_shape_);
    }

private:
    Shape item_shape_, in_shape_;
    bool have_cache_ = false;
};

template <class T>
class FlattenT : public LayerT<T> {
public:
    std::string name() const override { return "flatten"; }
    TensorT<T> forward(const TensorT<T>& x, Mode mode) override {
        if (mode == Mode::train) {
            in_shape_ = x.shape;
            have_cache_ = true;
        }
        return x.reshaped({x.shape[0], x.numel() / x.shape[0]});
    }
    TensorT<T> backward(const TensorT<T>& grad_out) override {
        this->require_cache(have_cache_, "flatten");
        have_cache_ = false;
        return grad_out.reshaped(in_shape_);
    }

private:
    Shape in_shape_;
    bool have_cache_ = false;
};

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------
template <class T>
class SequentialT {
public:
    std::vector<std::unique_ptr<LayerT<T>>> layers;

    template <class L, class... Args>
    L* emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers.push_back(std::move(layer));
        return raw;
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        TensorT<T> cur = x;
        for (auto& l : layers) cur = l->forward(cur, mode);
        return cur;
    }

    /// Forward that records each intermediate output shape (input shape first).
    TensorT<T> forward_trace(const TensorT<T>& x, Mode mode, std::vector<Shape>& trace) {
        trace.clear();
        trace.push_back(x.shape);
        TensorT<T> cur = x;
        for (auto& l : layers) {
            cur = l->forward(cur, mode);
            trace.push_back(cur.shape);
        }
        return cur;
    }

    TensorT<T> backward(const TensorT<T>& grad_out) {
        TensorT<T> cur = grad_out;
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) cur = (*it)->backward(cur);
        return cur;
    }

    std::vector<TensorT<T>*> params() {
        std::vector<TensorT<T>*> out;
        for (auto& l : layers)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    std::vector<TensorT<T>*> grads() {
        std::vector<TensorT<T>*> out;
        for (auto& l : layers)
            for (auto* g : l->grads()) out.push_back(g);
        return out;
    }
    void zero_grads() {
        for (auto& l : layers) l->zero_grads();
    }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean softmax cross-entropy over the batch, stabilized by max-subtraction.
/// grad = (softmax - onehot) / batch.
template <class T>
std::pair<double, TensorT<T>> softmax_cross_entropy(const TensorT<T>& logits,
                                                    const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects [n,k]");
    const std::int64_t n = logits.shape[0], k = logits.shape[1];
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw ContractError("softmax_cross_entropy: label count mismatch");
    TensorT<T> grad({n, k});
    double loss = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k)
            throw ContractError("softmax_cross_entropy: label out of range");
        const T* lp = logits.data.data() + i * k;
        double mx = lp[0];
        for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, double(lp[j]));
        double denom = 0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(double(lp[j]) - mx);
        for (std::int64_t j = 0; j < k; ++j) {
            const double p = std::exp(double(lp[j]) - mx) / denom;
            grad.data[i * k + j] =
                static_cast<T>((p - (j == labels[i] ? 1.0 : 0.0)) / double(n));
            if (j == labels[i]) loss += -(double(lp[j]) - mx - std::log(denom));
        }
    }
    return {loss / double(n), std::move(grad)};
}

/// Softmax probabilities (row-wise), max-subtraction stabilized.
template <class T>
TensorT<T> softmax(const TensorT<T>& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax expects [n,k]");
    const std::int64_t n = logits.shape[0], k = logits.shape[1];
    TensorT<T> out({n, k});
    for (std::int64_t i = 0; i < n; ++i) {
        const T* lp = logits.data.data() + i * k;
        double mx = lp[0];
        for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, double(lp[j]));
        double denom = 0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(double(lp[j]) - mx);
        for (std::int64_t j = 0; j < k; ++j)
            out.data[i * k + j] = static_cast<T>(std::exp(double(lp[j]) - mx) / denom);
    }
    return out;
}

constexpr double kBceEps = 1e-7;

/// Binary cross-entropy on one probability; p is clamped to [eps, 1-eps].
inline std::pair<double, double> binary_cross_entropy(double p, int target) {
    if (target != 0 && target != 1) throw ContractError("bce: target must be 0 or 1");
    p = std::min(std::max(p, kBceEps), 1.0 - kBceEps);
    const double loss = -(target * std::log(p) + (1 - target) * std::log(1.0 - p));
    const double grad = (p - target) / (p * (1.0 - p));
    return {loss, grad};
}

/// Mean BCE over a batch of probabilities against one shared target.
template <class T>
std::pair<double, TensorT<T>> binary_cross_entropy_batch(const TensorT<T>& probs, int target) {
    const std::int64_t n = probs.numel();
    TensorT<T> grad(probs.shape);
    double loss = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        auto [l, g] = binary_cross_entropy(double(probs.data[i]), target);
        loss += l;
        grad.data[i] = static_cast<T>(g / double(n));
    }
    return {loss / double(n), std::move(grad)};
}

// ---------------------------------------------------------------------------
// Adam with bias correction. m/v buffers are lazily sized on the first step.
// ---------------------------------------------------------------------------
template <class T>
class AdamT {
public:
    T lr, beta1, beta2, eps;
    long t = 0;
    std::vector<TensorT<T>> m, v;

    AdamT(T lr_, T beta1_ = T(0.9), T beta2_ = T(0.999), T eps_ = T(1e-8))
        : lr(lr_), beta1(beta1_), beta2(beta2_), eps(eps_) {}

    void step(const std::vector<TensorT<T>*>& params, const std::vector<TensorT<T>*>& grads) {
        if (params.size() != grads.size())
            throw ContractError("adam: params/grads count mismatch");
        if (m.empty()) {
            for (auto* p : params) {
                m.emplace_back(p->shape);
                v.emplace_back(p->shape);
            }
        }
        if (m.size() != params.size()) throw ContractError("adam: state size mismatch");
        ++t;
        const double bc1 = 1.0 - std::pow(double(beta1), double(t));
        const double bc2 = 1.0 - std::pow(double(beta2), double(t));
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            TensorT<T>& p = *params[pi];
            const TensorT<T>& g = *grads[pi];
            if (p.shape != g.shape || p.shape != m[pi].shape)
                throw ContractError("adam: shape mismatch at param " + std::to_string(pi));
            T* mp = m[pi].data.data();
            T* vp = v[pi].data.data();
            T* pp = p.data.data();
            const T* gp = g.data.data();
            for (std::int64_t i = 0; i < p.numel(); ++i) {
                mp[i] = beta1 * mp[i] + (T(1) - beta1) * gp[i];
                vp[i] = beta2 * vp[i] + (T(1) - beta2) * gp[i] * gp[i];
                const double mhat = double(mp[i]) / bc1;
                const double vhat = double(vp[i]) / bc2;
                pp[i] -= static_cast<T>(double(lr) * mhat / (std::sqrt(vhat) + double(eps)));
            }
        }
    }
};

}  // namespace copdflow::nn
