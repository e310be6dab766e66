#pragma once

// Dense row-major tensor substrate. Every kernel in the library works on
// these: contiguous storage, no strides or views, copies at desk scale.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace agentattn {

struct dimension_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
// Multiply-accumulate counter, incremented by matmul. Thread-local so
// concurrent benchmark runs do not race.
inline thread_local std::uint64_t mac_count = 0;
}  // namespace detail

inline void reset_mac_count() { detail::mac_count = 0; }
inline std::uint64_t mac_count() { return detail::mac_count; }

template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
        : shape_(std::move(shape)) {
        check_shape();
        data_.assign(numel_(), fill);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (numel_() != data_.size())
            throw dimension_error("tensor: shape/data size mismatch");
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    const std::vector<T>& data() const { return data_; }
    std::vector<T>& data() { return data_; }
    const T* ptr() const { return data_.data(); }
    T* ptr() { return data_.data(); }

    // 2-D accessors (row-major)
    T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    T at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    // 3-D accessors
    T& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    T at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        Tensor out(*this);
        out.shape_ = std::move(new_shape);
        out.check_shape();
        if (out.numel_() != out.data_.size())
            throw dimension_error("reshape: element count mismatch");
        return out;
    }

private:
    std::size_t numel_() const {
        return std::accumulate(shape_.begin(), shape_.end(), std::size_t(1),
                               std::multiplies<>());
    }
    void check_shape() const {
        if (shape_.empty()) throw dimension_error("tensor: rank must be >= 1");
        for (std::size_t d : shape_)
            if (d == 0) throw dimension_error("tensor: zero-sized dimension");
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

// ---------------------------------------------------------------------------
// elementwise helpers

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw dimension_error("add: shape mismatch");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
    Tensor<T> out = a;
    for (T& v : out.data()) v *= s;
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw dimension_error("transpose2d: rank must be 2");
    const std::size_t m = a.dim(0), p = a.dim(1);
    Tensor<T> out({p, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

// ---------------------------------------------------------------------------
// matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw dimension_error("matmul: operands must be rank 2");
    const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
    if (b.dim(0) != k)
        throw dimension_error("matmul: inner dimensions " + std::to_string(k) +
                              " vs " + std::to_string(b.dim(0)));
    Tensor<T> c({m, p});
    const T* pa = a.ptr();
    const T* pb = b.ptr();
    T* pc = c.ptr();
    // i-k-j order keeps both b and c rows contiguous
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = pc + i * p;
        for (std::size_t t = 0; t < k; ++t) {
            const T av = pa[i * k + t];
            const T* brow = pb + t * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
        }
    }
    detail::mac_count += static_cast<std::uint64_t>(m) * k * p;
    return c;
}

// ---------------------------------------------------------------------------
// row softmax with max subtraction

template <typename T>
Tensor<T> row_softmax(const Tensor<T>& a, T scale) {
    if (a.rank() != 2) throw dimension_error("row_softmax: rank must be 2");
    if (!(scale > T(0))) throw config_error("row_softmax: scale must be > 0");
    const std::size_t m = a.dim(0), p = a.dim(1);
    Tensor<T> out({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < p; ++j) mx = std::max(mx, scale * a.at(i, j));
        T sum = T(0);
        for (std::size_t j = 0; j < p; ++j) {
            const T e = std::exp(scale * a.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < p; ++j) out.at(i, j) *= inv;
    }
    return out;
}

// Backward of y = row_softmax(x, scale) given y and dL/dy.
// dL/dx[i][j] = scale * y[i][j] * (dy[i][j] - sum_t dy[i][t]*y[i][t])
template <typename T>
Tensor<T> row_softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, T scale) {
    if (!y.same_shape(dy)) throw dimension_error("row_softmax_backward: shape mismatch");
    const std::size_t m = y.dim(0), p = y.dim(1);
    Tensor<T> dx({m, p});
    for (std::size_t i = 0; i < m; ++i) {
        T dot = T(0);
        for (std::size_t j = 0; j < p; ++j) dot += dy.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < p; ++j)
            dx.at(i, j) = scale * y.at(i, j) * (dy.at(i, j) - dot);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// adaptive average pooling over an h x w x c map
// bin i covers [floor(i*h/out_h), ceil((i+1)*h/out_h))

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 3) throw dimension_error("adaptive_avg_pool2d: rank must be 3");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (out_h < 1 || out_h > h || out_w < 1 || out_w > w)
        throw dimension_error("adaptive_avg_pool2d: output exceeds input");
    Tensor<T> out({out_h, out_w, c});
    for (std::size_t oi = 0; oi < out_h; ++oi) {
        const std::size_t i0 = (oi * h) / out_h;
        const std::size_t i1 = ((oi + 1) * h + out_h - 1) / out_h;
        for (std::size_t oj = 0; oj < out_w; ++oj) {
            const std::size_t j0 = (oj * w) / out_w;
            const std::size_t j1 = ((oj + 1) * w + out_w - 1) / out_w;
            const T inv = T(1) / T((i1 - i0) * (j1 - j0));
            for (std::size_t ch = 0; ch < c; ++ch) {
                T s = T(0);
                for (std::size_t i = i0; i < i1; ++i)
                    for (std::size_t j = j0; j < j1; ++j) s += x.at(i, j, ch);
                out.at(oi, oj, ch) = s * inv;
            }
        }
    }
    return out;
}

// Scatter gradient of adaptive_avg_pool2d back to the input grid.
template <typename T>
Tensor<T> adaptive_avg_pool2d_backward(const Tensor<T>& dout, std::size_t h, std::size_t w) {
    const std::size_t out_h = dout.dim(0), out_w = dout.dim(1), c = dout.dim(2);
    Tensor<T> dx({h, w, c});
    for (std::size_t oi = 0; oi < out_h; ++oi) {
        const std::size_t i0 = (oi * h) / out_h;
        const std::size_t i1 = ((oi + 1) * h + out_h - 1) / out_h;
        for (std::size_t oj = 0; oj < out_w; ++oj) {
            const std::size_t j0 = (oj * w) / out_w;
            const std::size_t j1 = ((oj + 1) * w + out_w - 1) / out_w;
            const T inv = T(1) / T((i1 - i0) * (j1 - j0));
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T g = dout.at(oi, oj, ch) * inv;
                for (std::size_t i = i0; i < i1; ++i)
                    for (std::size_t j = j0; j < j1; ++j) dx.at(i, j, ch) += g;
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// bilinear resize, align-corners-false with edge clamping

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 3) throw dimension_error("bilinear_resize: rank must be 3");
    const std::size_t h0 = x.dim(0), w0 = x.dim(1), c = x.dim(2);
    if (out_h < 1 || out_w < 1) throw dimension_error("bilinear_resize: zero output");
    Tensor<T> out({out_h, out_w, c});
    auto src = [](std::size_t i, std::size_t n_out, std::size_t n_in) {
        double s = (double(i) + 0.5) * double(n_in) / double(n_out) - 0.5;
        return std::clamp(s, 0.0, double(n_in - 1));
    };
    for (std::size_t oi = 0; oi < out_h; ++oi) {
        const double sy = src(oi, out_h, h0);
        const std::size_t y0 = std::size_t(std::floor(sy));
        const std::size_t y1 = std::min(y0 + 1, h0 - 1);
        const double fy = sy - double(y0);
        for (std::size_t oj = 0; oj < out_w; ++oj) {
            const double sx = src(oj, out_w, w0);
            const std::size_t x0 = std::size_t(std::floor(sx));
            const std::size_t x1 = std::min(x0 + 1, w0 - 1);
            const double fx = sx - double(x0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double top = double(x.at(y0, x0, ch)) * (1.0 - fx) +
                                   double(x.at(y0, x1, ch)) * fx;
                const double bot = double(x.at(y1, x0, ch)) * (1.0 - fx) +
                                   double(x.at(y1, x1, ch)) * fx;
                out.at(oi, oj, ch) = T(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// depthwise 2-D correlation, stride 1, zero padding, odd kernel

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& kernel) {
    if (x.rank() != 3 || kernel.rank() != 3)
        throw dimension_error("depthwise_conv2d: rank must be 3");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
    if (kernel.dim(2) != c) throw dimension_error("depthwise_conv2d: channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0)
        throw config_error("depthwise_conv2d: kernel dims must be odd");
    const std::ptrdiff_t ph = std::ptrdiff_t(kh) / 2, pw = std::ptrdiff_t(kw) / 2;
    Tensor<T> out({h, w, c});
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                T s = T(0);
                for (std::size_t ki = 0; ki < kh; ++ki) {
                    const std::ptrdiff_t ii = std::ptrdiff_t(i) + std::ptrdiff_t(ki) - ph;
                    if (ii < 0 || ii >= std::ptrdiff_t(h)) continue;
                    for (std::size_t kj = 0; kj < kw; ++kj) {
                        const std::ptrdiff_t jj = std::ptrdiff_t(j) + std::ptrdiff_t(kj) - pw;
                        if (jj < 0 || jj >= std::ptrdiff_t(w)) continue;
                        s += x.at(std::size_t(ii), std::size_t(jj), ch) * kernel.at(ki, kj, ch);
                    }
                }
                out.at(i, j, ch) = s;
            }
        }
    }
    return out;
}

// Gradient of depthwise_conv2d w.r.t. its input: correlation with the
// spatially flipped kernel (same padding).
template <typename T>
Tensor<T> depthwise_conv2d_backward_input(const Tensor<T>& dout, const Tensor<T>& kernel) {
    const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), c = kernel.dim(2);
    Tensor<T> flipped({kh, kw, c});
    for (std::size_t i = 0; i < kh; ++i)
        for (std::size_t j = 0; j < kw; ++j)
            for (std::size_t ch = 0; ch < c; ++ch)
                flipped.at(i, j, ch) = kernel.at(kh - 1 - i, kw - 1 - j, ch);
    return depthwise_conv2d(dout, flipped);
}

// ---------------------------------------------------------------------------
// seeded initialization

template <typename T>
Tensor<T> random_normal(std::vector<std::size_t> shape, std::mt19937_64& rng,
                        T stddev = T(1), T mean = T(0)) {
    Tensor<T> out(std::move(shape));
    std::normal_distribution<double> dist{double(mean), double(stddev)};
    for (T& v : out.data()) v = T(dist(rng));
    return out;
}

// Truncated normal in [-2*std, 2*std], RPE-style bias init.
template <typename T>
Tensor<T> random_trunc_normal(std::vector<std::size_t> shape, std::mt19937_64& rng,
                              T stddev = T(0.02)) {
    Tensor<T> out(std::move(shape));
    std::normal_distribution<double> dist(0.0, double(stddev));
    for (T& v : out.data()) {
        double x;
        do {
            x = dist(rng);
        } while (std::abs(x) > 2.0 * double(stddev));
        v = T(x);
    }
    return out;
}

template <typename T>
Tensor<T> random_uniform(std::vector<std::size_t> shape, std::mt19937_64& rng,
                         T lo = T(-1), T hi = T(1)) {
    Tensor<T> out(std::move(shape));
    std::uniform_real_distribution<double> dist{double(lo), double(hi)};
    for (T& v : out.data()) v = T(dist(rng));
    return out;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw dimension_error("max_abs_diff: shape mismatch");
    T m = T(0);
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace agentattn
