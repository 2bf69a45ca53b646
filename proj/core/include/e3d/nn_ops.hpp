#pragma once

#include <array>
#include <limits>
#include <optional>

#include "e3d/tensor.hpp"

namespace e3d {

using Triple = std::array<index_t, 3>;  // (d, h, w) order

template <typename T>
struct ConvParams {
    Tensor<T> weights;        // (c_out, c_in, kd, kh, kw)
    std::vector<T> bias;      // length c_out, empty = no bias
    Triple stride{1, 1, 1};
    Triple pad{0, 0, 0};

    index_t c_out() const { return weights.shape().n; }
    index_t c_in() const { return weights.shape().c; }
    Triple kernel() const { return {weights.shape().d, weights.shape().h, weights.shape().w}; }

    void validate() const {
        const auto k = kernel();
        for (int i = 0; i < 3; ++i) {
            if (k[i] < 1) throw std::invalid_argument("ConvParams: kernel dims must be >= 1");
            if (stride[i] < 1) throw std::invalid_argument("ConvParams: strides must be >= 1");
            if (pad[i] < 0) throw std::invalid_argument("ConvParams: paddings must be >= 0");
        }
        if (!bias.empty() && static_cast<index_t>(bias.size()) != c_out()) {
            throw std::invalid_argument("ConvParams: bias length must equal c_out");
        }
    }
};

template <typename T>
Shape5 conv_out_shape(const Shape5& in, const ConvParams<T>& p) {
    if (in.c != p.c_in()) {
        throw std::invalid_argument("conv: input has " + std::to_string(in.c) +
                                    " channels, kernel expects " + std::to_string(p.c_in()));
    }
    const auto k = p.kernel();
    const index_t dims_in[3] = {in.d, in.h, in.w};
    index_t dims_out[3];
    for (int i = 0; i < 3; ++i) {
        const index_t padded = dims_in[i] + 2 * p.pad[i];
        if (padded < k[i]) {
            throw std::invalid_argument("conv: kernel extent " + std::to_string(k[i]) +
                                        " exceeds padded input " + std::to_string(padded));
        }
        dims_out[i] = (padded - k[i]) / p.stride[i] + 1;
    }
    return Shape5{in.n, p.c_out(), dims_out[0], dims_out[1], dims_out[2]};
}

namespace detail {

// Zero-padded copy of x, padding on d/h/w only.
template <typename T>
Tensor<T> pad_input(const Tensor<T>& x, const Triple& pad) {
    const Shape5& s = x.shape();
    if (pad[0] == 0 && pad[1] == 0 && pad[2] == 0) return x;
    Tensor<T> out(Shape5{s.n, s.c, s.d + 2 * pad[0], s.h + 2 * pad[1], s.w + 2 * pad[2]});
    for (index_t n = 0; n < s.n; ++n)
        for (index_t c = 0; c < s.c; ++c)
            for (index_t d = 0; d < s.d; ++d)
                for (index_t h = 0; h < s.h; ++h) {
                    const T* src = x.data().data() + x.flat(n, c, d, h, 0);
                    T* dst = out.data().data() + out.flat(n, c, d + pad[0], h + pad[1], pad[2]);
                    std::copy(src, src + s.w, dst);
                }
    return out;
}

}  // namespace detail

// Direct 3D convolution; per output element the sum runs in (ci, kd, kh, kw)
// order so results do not depend on thread count.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const ConvParams<T>& p) {
    p.validate();
    const Shape5 out_shape = conv_out_shape(x.shape(), p);
    const Tensor<T> xp = detail::pad_input(x, p.pad);
    const Shape5& ps = xp.shape();
    Tensor<T> out(out_shape);
    const auto k = p.kernel();
    const auto& w = p.weights;
    for (index_t n = 0; n < out_shape.n; ++n) {
        for (index_t co = 0; co < out_shape.c; ++co) {
            const T b = p.bias.empty() ? T(0) : p.bias[static_cast<size_t>(co)];
            for (index_t z = 0; z < out_shape.d; ++z) {
                for (index_t y = 0; y < out_shape.h; ++y) {
                    for (index_t xo = 0; xo < out_shape.w; ++xo) {
                        T acc = b;
                        for (index_t ci = 0; ci < ps.c; ++ci) {
                            for (index_t a = 0; a < k[0]; ++a) {
                                for (index_t bb = 0; bb < k[1]; ++bb) {
                                    const T* xrow = xp.data().data() +
                                                    xp.flat(n, ci, z * p.stride[0] + a,
                                                            y * p.stride[1] + bb,
                                                            xo * p.stride[2]);
                                    const T* wrow = w.data().data() + w.flat(co, ci, a, bb, 0);
                                    for (index_t cc = 0; cc < k[2]; ++cc) {
                                        acc += wrow[cc] * xrow[cc];
                                    }
                                }
                            }
                        }
                        out.at(n, co, z, y, xo) = acc;
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> d_input;
    Tensor<T> d_weights;
    std::vector<T> d_bias;  // empty when the layer has no bias
};

template <typename T>
ConvGrads<T> conv_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& g) {
    p.validate();
    const Shape5 out_shape = conv_out_shape(x.shape(), p);
    if (!(g.shape() == out_shape)) {
        throw std::invalid_argument("conv_backward: gradient shape " + g.shape().str() +
                                    " != forward output shape " + out_shape.str());
    }
    const Tensor<T> xp = detail::pad_input(x, p.pad);
    const Shape5& ps = xp.shape();
    const auto k = p.kernel();
    const auto& w = p.weights;

    Tensor<T> dxp(ps);
    Tensor<T> dw(w.shape());
    std::vector<T> db(p.bias.empty() ? 0 : p.bias.size(), T(0));

    for (index_t n = 0; n < out_shape.n; ++n) {
        for (index_t co = 0; co < out_shape.c; ++co) {
            for (index_t z = 0; z < out_shape.d; ++z) {
                for (index_t y = 0; y < out_shape.h; ++y) {
                    for (index_t xo = 0; xo < out_shape.w; ++xo) {
                        const T gv = g.at(n, co, z, y, xo);
                        if (!db.empty()) db[static_cast<size_t>(co)] += gv;
                        for (index_t ci = 0; ci < ps.c; ++ci) {
                            for (index_t a = 0; a < k[0]; ++a) {
                                for (index_t bb = 0; bb < k[1]; ++bb) {
                                    const index_t base = xp.flat(n, ci, z * p.stride[0] + a,
                                                                 y * p.stride[1] + bb,
                                                                 xo * p.stride[2]);
                                    const T* xrow = xp.data().data() + base;
                                    T* dxrow = dxp.data().data() + base;
                                    const index_t wbase = w.flat(co, ci, a, bb, 0);
                                    const T* wrow = w.data().data() + wbase;
                                    T* dwrow = dw.data().data() + wbase;
                                    for (index_t cc = 0; cc < k[2]; ++cc) {
                                        dxrow[cc] += wrow[cc] * gv;
                                        dwrow[cc] += xrow[cc] * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Crop the padding back off.
    const Shape5& s = x.shape();
    Tensor<T> dx(s);
    if (p.pad[0] == 0 && p.pad[1] == 0 && p.pad[2] == 0) {
        dx = std::move(dxp);
    } else {
        for (index_t n = 0; n < s.n; ++n)
            for (index_t c = 0; c < s.c; ++c)
                for (index_t d = 0; d < s.d; ++d)
                    for (index_t h = 0; h < s.h; ++h) {
                        const T* src = dxp.data().data() +
                                       dxp.flat(n, c, d + p.pad[0], h + p.pad[1], p.pad[2]);
                        T* dst = dx.data().data() + dx.flat(n, c, d, h, 0);
                        std::copy(src, src + s.w, dst);
                    }
    }
    return ConvGrads<T>{std::move(dx), std::move(dw), std::move(db)};
}

// ---------------------------------------------------------------------------
// Max pooling

struct MaxPoolCtx {
    Shape5 in_shape;
    Shape5 out_shape;
    std::vector<index_t> argmax;  // flat input index per output element
};

template <typename T>
std::pair<Tensor<T>, MaxPoolCtx> maxpool3d_forward(const Tensor<T>& x, Triple size, Triple stride,
                                                   Triple pad) {
    const Shape5& s = x.shape();
    const index_t dims_in[3] = {s.d, s.h, s.w};
    index_t dims_out[3];
    for (int i = 0; i < 3; ++i) {
        const index_t padded = dims_in[i] + 2 * pad[i];
        if (padded < size[i]) {
            throw std::invalid_argument("maxpool3d: window larger than padded input");
        }
        dims_out[i] = (padded - size[i]) / stride[i] + 1;
    }
    const Shape5 out_shape{s.n, s.c, dims_out[0], dims_out[1], dims_out[2]};
    Tensor<T> out(out_shape);
    MaxPoolCtx ctx{s, out_shape, std::vector<index_t>(static_cast<size_t>(out_shape.numel()))};
    index_t oi = 0;
    for (index_t n = 0; n < s.n; ++n) {
        for (index_t c = 0; c < s.c; ++c) {
            for (index_t z = 0; z < dims_out[0]; ++z) {
                for (index_t y = 0; y < dims_out[1]; ++y) {
                    for (index_t xo = 0; xo < dims_out[2]; ++xo) {
                        T best = -std::numeric_limits<T>::infinity();
                        index_t best_idx = -1;
                        for (index_t a = 0; a < size[0]; ++a) {
                            const index_t d = z * stride[0] + a - pad[0];
                            if (d < 0 || d >= s.d) continue;
                            for (index_t b = 0; b < size[1]; ++b) {
                                const index_t h = y * stride[1] + b - pad[1];
                                if (h < 0 || h >= s.h) continue;
                                for (index_t cc = 0; cc < size[2]; ++cc) {
                                    const index_t w = xo * stride[2] + cc - pad[2];
                                    if (w < 0 || w >= s.w) continue;
                                    const T v = x.at(n, c, d, h, w);
                                    // strict > keeps the lowest flat index on ties
                                    if (v > best) {
                                        best = v;
                                        best_idx = x.flat(n, c, d, h, w);
                                    }
                                }
                            }
                        }
                        out[oi] = best;
                        ctx.argmax[static_cast<size_t>(oi)] = best_idx;
                        ++oi;
                    }
                }
            }
        }
    }
    return {std::move(out), std::move(ctx)};
}

template <typename T>
Tensor<T> maxpool3d_backward(const MaxPoolCtx& ctx, const Tensor<T>& g) {
    if (!(g.shape() == ctx.out_shape)) {
        throw std::invalid_argument("maxpool3d_backward: gradient shape mismatch");
    }
    Tensor<T> dx(ctx.in_shape);
    for (index_t i = 0; i < g.numel(); ++i) {
        dx[ctx.argmax[static_cast<size_t>(i)]] += g[i];
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Global average pooling: (n,c,d,h,w) -> (n,c,1,1,1)

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const Shape5& s = x.shape();
    const index_t vol = s.spatial();
    if (vol < 1) throw std::invalid_argument("global_avg_pool: empty spatial volume");
    Tensor<T> out(Shape5{s.n, s.c, 1, 1, 1});
    for (index_t n = 0; n < s.n; ++n) {
        for (index_t c = 0; c < s.c; ++c) {
            const index_t base = (n * s.c + c) * vol;
            T acc = T(0);
            for (index_t i = 0; i < vol; ++i) acc += x[base + i];
            out.at(n, c, 0, 0, 0) = acc / static_cast<T>(vol);
        }
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape5& in_shape, const Tensor<T>& g) {
    if (!(g.shape() == Shape5{in_shape.n, in_shape.c, 1, 1, 1})) {
        throw std::invalid_argument("global_avg_pool_backward: gradient shape mismatch");
    }
    const index_t vol = in_shape.spatial();
    Tensor<T> dx(in_shape);
    for (index_t n = 0; n < in_shape.n; ++n) {
        for (index_t c = 0; c < in_shape.c; ++c) {
            const T share = g.at(n, c, 0, 0, 0) / static_cast<T>(vol);
            const index_t base = (n * in_shape.c + c) * vol;
            for (index_t i = 0; i < vol; ++i) dx[base + i] = share;
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (index_t i = 0; i < x.numel(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

// Subgradient at exactly 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& g) {
    if (!x.same_shape(g)) throw std::invalid_argument("relu_backward: shape mismatch");
    Tensor<T> dx(x.shape());
    for (index_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? g[i] : T(0);
    return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (index_t i = 0; i < x.numel(); ++i) {
        out[i] = T(1) / (T(1) + std::exp(-x[i]));
    }
    return out;
}

// Takes the forward *output* s; derivative is s(1-s).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& s, const Tensor<T>& g) {
    if (!s.same_shape(g)) throw std::invalid_argument("sigmoid_backward: shape mismatch");
    Tensor<T> dx(s.shape());
    for (index_t i = 0; i < s.numel(); ++i) dx[i] = g[i] * s[i] * (T(1) - s[i]);
    return dx;
}

}  // namespace e3d
