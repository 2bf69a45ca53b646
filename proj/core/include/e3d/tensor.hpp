#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace e3d {

using index_t = std::int64_t;

// (n, c, d, h, w), row-major, w fastest.
struct Shape5 {
    index_t n = 0, c = 0, d = 0, h = 0, w = 0;

    index_t numel() const { return n * c * d * h * w; }
    index_t spatial() const { return d * h * w; }

    bool operator==(const Shape5&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << d << "," << h << "," << w << ")";
        return os.str();
    }
};

template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape5 shape, T fill = T(0))
        : shape_(shape), data_(static_cast<size_t>(check_shape(shape).numel()), fill) {}

    Tensor(Shape5 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        check_shape(shape);
        if (static_cast<index_t>(data_.size()) != shape_.numel()) {
            throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_.str());
        }
    }

    const Shape5& shape() const { return shape_; }
    index_t numel() const { return shape_.numel(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    T& operator[](index_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](index_t i) const { return data_[static_cast<size_t>(i)]; }

    index_t flat(index_t n, index_t c, index_t d, index_t h, index_t w) const {
        return (((n * shape_.c + c) * shape_.d + d) * shape_.h + h) * shape_.w + w;
    }

    T& at(index_t n, index_t c, index_t d, index_t h, index_t w) {
        return data_[static_cast<size_t>(flat(n, c, d, h, w))];
    }
    const T& at(index_t n, index_t c, index_t d, index_t h, index_t w) const {
        return data_[static_cast<size_t>(flat(n, c, d, h, w))];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static const Shape5& check_shape(const Shape5& s) {
        if (s.n < 0 || s.c < 0 || s.d < 0 || s.h < 0 || s.w < 0) {
            throw std::invalid_argument("Tensor: negative dimension in shape " + s.str());
        }
        return s;
    }

    Shape5 shape_{};
    std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    Tensor<To> out(t.shape());
    for (index_t i = 0; i < t.numel(); ++i) out[i] = static_cast<To>(t[i]);
    return out;
}

template <typename T>
Tensor<T> elem_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("elem_add: shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    }
    Tensor<T> out(a.shape());
    for (index_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
void elem_add_inplace(Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("elem_add: shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    }
    for (index_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

// out[n,ch,...] = o[n,ch,...] * u[ch]
template <typename T>
Tensor<T> channel_broadcast_mul(const Tensor<T>& o, std::span<const T> u) {
    const Shape5& s = o.shape();
    if (static_cast<index_t>(u.size()) != s.c) {
        throw std::invalid_argument("channel_broadcast_mul: weight length " +
                                    std::to_string(u.size()) + " != channel count " +
                                    std::to_string(s.c));
    }
    for (T v : u) {
        if (!std::isfinite(static_cast<double>(v))) {
            throw std::invalid_argument("channel_broadcast_mul: non-finite channel weight");
        }
    }
    Tensor<T> out(s);
    const index_t vol = s.spatial();
    for (index_t n = 0; n < s.n; ++n) {
        for (index_t c = 0; c < s.c; ++c) {
            const index_t base = (n * s.c + c) * vol;
            for (index_t i = 0; i < vol; ++i) out[base + i] = o[base + i] * u[static_cast<size_t>(c)];
        }
    }
    return out;
}

// Half-pixel-centered bilinear sampling of one (h_in, w_in) plane into (h_out, w_out).
// Edge-clamped; a constant plane maps to the same constant.
template <typename T>
void bilinear_plane(const T* src, index_t h_in, index_t w_in, T* dst, index_t h_out,
                    index_t w_out) {
    const double sy = static_cast<double>(h_in) / static_cast<double>(h_out);
    const double sx = static_cast<double>(w_in) / static_cast<double>(w_out);
    for (index_t y = 0; y < h_out; ++y) {
        double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h_in - 1));
        const index_t y0 = static_cast<index_t>(std::floor(fy));
        const index_t y1 = std::min(y0 + 1, h_in - 1);
        const double wy = fy - static_cast<double>(y0);
        for (index_t x = 0; x < w_out; ++x) {
            double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w_in - 1));
            const index_t x0 = static_cast<index_t>(std::floor(fx));
            const index_t x1 = std::min(x0 + 1, w_in - 1);
            const double wx = fx - static_cast<double>(x0);
            const double v00 = static_cast<double>(src[y0 * w_in + x0]);
            const double v01 = static_cast<double>(src[y0 * w_in + x1]);
            const double v10 = static_cast<double>(src[y1 * w_in + x0]);
            const double v11 = static_cast<double>(src[y1 * w_in + x1]);
            const double top = v00 + (v01 - v00) * wx;
            const double bot = v10 + (v11 - v10) * wx;
            dst[y * w_out + x] = static_cast<T>(top + (bot - top) * wy);
        }
    }
}

// Resizes h and w by the given factors; d is preserved.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double factor_h, double factor_w) {
    if (factor_h <= 0 || factor_w <= 0) {
        throw std::invalid_argument("bilinear_resize: scale factors must be positive");
    }
    const Shape5& s = x.shape();
    const index_t h_out = static_cast<index_t>(std::llround(static_cast<double>(s.h) * factor_h));
    const index_t w_out = static_cast<index_t>(std::llround(static_cast<double>(s.w) * factor_w));
    if (h_out < 1 || w_out < 1) {
        throw std::invalid_argument("bilinear_resize: output dimension would be zero (input " +
                                    s.str() + ")");
    }
    Tensor<T> out(Shape5{s.n, s.c, s.d, h_out, w_out});
    for (index_t n = 0; n < s.n; ++n) {
        for (index_t c = 0; c < s.c; ++c) {
            for (index_t d = 0; d < s.d; ++d) {
                const T* src = x.data().data() + x.flat(n, c, d, 0, 0);
                T* dst = out.data().data() + out.flat(n, c, d, 0, 0);
                bilinear_plane(src, s.h, s.w, dst, h_out, w_out);
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, double factor) {
    return bilinear_resize(x, factor, factor);
}

}  // namespace e3d
