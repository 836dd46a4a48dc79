#pragma once

// Dense row-major N-d arrays plus the seedable RNG used across the project.
// Two precision profiles exist: the pipeline scalar `real` is chosen at
// configure time (COPDFLOW_REAL_DOUBLE), while numeric conformance tests
// instantiate TensorT<double> directly regardless of the build profile.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "copdflow/errors.hpp"

namespace copdflow {

#ifdef COPDFLOW_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

inline void check_shape_valid(const Shape& s) {
    for (auto d : s)
        if (d <= 0) throw ShapeError("invalid dimension in " + shape_str(s));
}

// ---------------------------------------------------------------------------
// Rng: splitmix64 core with a fixed, documented Gaussian transform.
//
// Stream contract (identical across any implementation of this artifact):
//   next_u64:  state += 0x9E3779B97F4A7C15
//              z = state
//              z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//              z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//              return z ^ (z >> 31)
//   uniform:   (next_u64() >> 11) * 2^-53                   in [0,1)
//   gaussian:  Box-Muller; each pair consumes exactly two draws:
//              u1 = ((next_u64() >> 11) + 1) * 2^-53        in (0,1]
//              u2 = (next_u64() >> 11) * 2^-53              in [0,1)
//              z0 = sqrt(-2 ln u1) * cos(2 pi u2)   (returned first)
//              z1 = sqrt(-2 ln u1) * sin(2 pi u2)   (returned second)
//   bounded:   (next_u64() * n) >> 64 via 128-bit multiply
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; second member of each pair is cached.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform integer in [0, n).
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// In-place Fisher-Yates shuffle.
    template <class V>
    void shuffle(V& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Derives an independent child seed from a parent seed and a stream path.
/// Each path element is folded in with one splitmix64 scramble step.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = seed;
    for (std::uint64_t p : path) {
        Rng r(s ^ (p + 0x9E3779B97F4A7C15ULL));
        s = r.next_u64();
    }
    return s;
}

// ---------------------------------------------------------------------------
// TensorT: shape + flat row-major data. Values are plain; all operations are
// pure functions returning fresh tensors.
//
// Row-major indexing: flat(i0..ik) = sum_j i_j * stride_j with stride_k = 1
// and stride_j = stride_{j+1} * shape_{j+1}.
// ---------------------------------------------------------------------------
template <class T>
struct TensorT {
    Shape shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(Shape s) : shape(std::move(s)) {
        check_shape_valid(shape);
        data.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
    }
    TensorT(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        check_shape_valid(shape);
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    std::vector<std::int64_t> strides() const {
        std::vector<std::int64_t> st(shape.size(), 1);
        for (int i = rank() - 2; i >= 0; --i) st[i] = st[i + 1] * shape[i + 1];
        return st;
    }

    T& at(std::initializer_list<std::int64_t> idx) {
        return data[static_cast<std::size_t>(flat_index(idx))];
    }
    const T& at(std::initializer_list<std::int64_t> idx) const {
        return data[static_cast<std::size_t>(flat_index(idx))];
    }

    std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const {
        if (static_cast<int>(idx.size()) != rank())
            throw ShapeError("index rank mismatch for " + shape_str(shape));
        std::int64_t flat = 0;
        int d = 0;
        for (auto i : idx) {
            if (i < 0 || i >= shape[d]) throw ShapeError("index out of range");
            flat = flat * shape[d] + i;
            ++d;
        }
        return flat;
    }

    TensorT reshaped(Shape s) const {
        check_shape_valid(s);
        if (shape_numel(s) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
        return TensorT(std::move(s), data);
    }

    static TensorT zeros(Shape s) { return TensorT(std::move(s)); }
    static TensorT full(Shape s, T v) {
        TensorT t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = TensorT<real>;

/// Gaussian-filled tensor; consumes gaussians from `rng` in flat order.
template <class T>
TensorT<T> randn(Rng& rng, Shape shape, double mean = 0.0, double stddev = 1.0) {
    if (stddev < 0) throw DomainError("randn: stddev must be >= 0");
    TensorT<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(mean + stddev * rng.gaussian());
    return t;
}

// --- elementwise -----------------------------------------------------------

template <class T, class F>
TensorT<T> map(const TensorT<T>& t, F f) {
    TensorT<T> out(t.shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) out.data[i] = f(t.data[i]);
    return out;
}

template <class T, class F>
TensorT<T> zip(const TensorT<T>& a, const TensorT<T>& b, F f) {
    if (a.shape != b.shape)
        throw ShapeError("zip: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    TensorT<T> out(a.shape);
    for (std::int64_t i = 0; i < a.numel(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return zip(a, b, [](T x, T y) { return x + y; });
}
template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return zip(a, b, [](T x, T y) { return x - y; });
}
template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    return zip(a, b, [](T x, T y) { return x * y; });
}
template <class T>
TensorT<T> scale(const TensorT<T>& t, T s) {
    return map(t, [s](T x) { return x * s; });
}
template <class T>
TensorT<T> clamp(const TensorT<T>& t, T lo, T hi) {
    return map(t, [lo, hi](T x) { return std::min(std::max(x, lo), hi); });
}
template <class T>
TensorT<T> exp(const TensorT<T>& t) {
    return map(t, [](T x) { return std::exp(x); });
}
template <class T>
TensorT<T> log(const TensorT<T>& t) {
    for (T v : t.data)
        if (!(v > T(0))) throw DomainError("log of non-positive value");
    return map(t, [](T x) { return std::log(x); });
}
template <class T>
TensorT<T> tanh(const TensorT<T>& t) {
    return map(t, [](T x) { return std::tanh(x); });
}

// --- matmul ----------------------------------------------------------------

/// Rank-2 matrix product. Reduction order over k is ascending per output
/// element, so results are bit-reproducible.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 operands");
    if (a.shape[1] != b.shape[0])
        throw ShapeError("matmul: " + shape_str(a.shape) + " x " + shape_str(b.shape));
    const std::int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    TensorT<T> out({m, n});
    const T* pa = a.data.data();
    const T* pb = b.data.data();
    T* po = out.data.data();
    for (std::int64_t i = 0; i < m; ++i) {
        T* orow = po + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const T av = pa[i * k + kk];
            const T* brow = pb + kk * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// --- reductions --------------------------------------------------------------

enum class ReduceKind { sum, mean, max, argmax };

/// Reduce along one axis; the axis is removed from the output shape (a full
/// reduction yields shape [1]). argmax ties break toward the lowest index.
template <class T>
TensorT<T> reduce(const TensorT<T>& t, ReduceKind kind, int axis) {
    if (axis < 0 || axis >= t.rank()) throw ShapeError("reduce: axis out of range");
    Shape out_shape;
    for (int d = 0; d < t.rank(); ++d)
        if (d != axis) out_shape.push_back(t.shape[d]);
    if (out_shape.empty()) out_shape.push_back(1);

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= t.shape[d];
    for (int d = axis + 1; d < t.rank(); ++d) inner *= t.shape[d];
    const std::int64_t n = t.shape[axis];

    TensorT<T> out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t i = 0; i < inner; ++i) {
            const T* base = t.data.data() + (o * n) * inner + i;
            T acc;
            if (kind == ReduceKind::sum || kind == ReduceKind::mean) {
                acc = T(0);
                for (std::int64_t j = 0; j < n; ++j) acc += base[j * inner];
                if (kind == ReduceKind::mean) acc /= static_cast<T>(n);
            } else {
                T best = base[0];
                std::int64_t best_j = 0;
                for (std::int64_t j = 1; j < n; ++j) {
                    if (base[j * inner] > best) {
                        best = base[j * inner];
                        best_j = j;
                    }
                }
                acc = (kind == ReduceKind::max) ? best : static_cast<T>(best_j);
            }
            out.data[o * inner + i] = acc;
        }
    }
    return out;
}

template <class T>
double sum(const TensorT<T>& t) {
    double acc = 0;
    for (T v : t.data) acc += static_cast<double>(v);
    return acc;
}
template <class T>
double mean(const TensorT<T>& t) {
    return sum(t) / static_cast<double>(t.numel());
}
template <class T>
T max_value(const TensorT<T>& t) {
    T best = t.data[0];
    for (T v : t.data) best = std::max(best, v);
    return best;
}
/// Flat argmax with lowest-index tie break.
template <class T>
std::int64_t argmax_flat(const TensorT<T>& t) {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < t.numel(); ++i)
        if (t.data[i] > t.data[best]) best = i;
    return best;
}

}  // namespace copdflow
