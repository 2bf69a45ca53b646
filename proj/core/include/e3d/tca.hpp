#pragma once

#include <optional>

#include "e3d/nn_ops.hpp"

namespace e3d {

// Temporal channel-aware block: two 3x3x3 convolutions, a channel gate driven
// by global average pooling, and a residual shortcut.  The gate layers are
// 1x1x1 convolutions acting on the pooled (n,c,1,1,1) descriptor.
template <typename T>
struct TcaBlockParams {
    ConvParams<T> conv1;        // 3^3, stride 1x1x1 or 1x2x2
    ConvParams<T> conv2;        // 3^3, stride 1
    ConvParams<T> gate_reduce;  // 1^3, c -> c/r
    ConvParams<T> gate_expand;  // 1^3, c/r -> c
    std::optional<ConvParams<T>> shortcut_proj;  // 1^3, present iff downsampling
    bool global_context = true;

    bool downsamples() const {
        return conv1.stride != Triple{1, 1, 1};
    }

    void validate() const {
        conv1.validate();
        conv2.validate();
        gate_reduce.validate();
        gate_expand.validate();
        const index_t c = conv1.c_in();
        if (conv1.c_out() != c || conv2.c_in() != c || conv2.c_out() != c) {
            throw std::invalid_argument("TcaBlockParams: conv1/conv2 must preserve channel count");
        }
        if (gate_reduce.c_in() != c || gate_expand.c_out() != c ||
            gate_reduce.c_out() != gate_expand.c_in()) {
            throw std::invalid_argument("TcaBlockParams: gate layer channel counts inconsistent");
        }
        if (gate_reduce.c_out() < 1) {
            throw std::invalid_argument("TcaBlockParams: gate hidden width must be >= 1");
        }
        if (downsamples() != shortcut_proj.has_value()) {
            throw std::invalid_argument(
                "TcaBlockParams: shortcut_proj must be present exactly when the block downsamples");
        }
        if (shortcut_proj) shortcut_proj->validate();
    }
};

// Saved forward intermediates, enough to run the exact backward pass.
template <typename T>
struct TcaTrace {
    Tensor<T> input;
    Tensor<T> pre_act;     // conv1 output, pre-ReLU
    Tensor<T> mid;         // relu(pre_act)
    Tensor<T> features;    // conv2 output O
    Tensor<T> pooled;      // (n,c,1,1,1) descriptor v
    Tensor<T> hidden_pre;  // gate_reduce output, pre-ReLU
    Tensor<T> hidden;      // relu(hidden_pre)
    Tensor<T> gate;        // sigmoid output u, (n,c,1,1,1)
    Tensor<T> output;
};

template <typename T>
struct TcaBlockGrads {
    ConvGrads<T> conv1;
    ConvGrads<T> conv2;
    ConvGrads<T> gate_reduce;
    ConvGrads<T> gate_expand;
    std::optional<ConvGrads<T>> shortcut_proj;
};

// Per-channel gate u = sigmoid(W2 relu(W1 gap(o))), one value per batch item
// and channel, returned as an (n,c,1,1,1) tensor.
template <typename T>
Tensor<T> channel_gate(const Tensor<T>& o, const TcaBlockParams<T>& p) {
    const Tensor<T> v = global_avg_pool(o);
    const Tensor<T> h = relu(conv_forward(v, p.gate_reduce));
    return sigmoid(conv_forward(h, p.gate_expand));
}

template <typename T>
TcaTrace<T> tca_forward(const Tensor<T>& x, const TcaBlockParams<T>& p) {
    p.validate();
    TcaTrace<T> t;
    t.input = x;
    t.pre_act = conv_forward(x, p.conv1);
    t.mid = relu(t.pre_act);
    t.features = conv_forward(t.mid, p.conv2);

    Tensor<T> modulated;
    if (p.global_context) {
        t.pooled = global_avg_pool(t.features);
        t.hidden_pre = conv_forward(t.pooled, p.gate_reduce);
        t.hidden = relu(t.hidden_pre);
        t.gate = sigmoid(conv_forward(t.hidden, p.gate_expand));
        modulated = Tensor<T>(t.features.shape());
        const Shape5& s = t.features.shape();
        const index_t vol = s.spatial();
        for (index_t n = 0; n < s.n; ++n)
            for (index_t c = 0; c < s.c; ++c) {
                const T u = t.gate.at(n, c, 0, 0, 0);
                const index_t base = (n * s.c + c) * vol;
                for (index_t i = 0; i < vol; ++i) modulated[base + i] = t.features[base + i] * u;
            }
    } else {
        modulated = t.features;
    }

    if (p.shortcut_proj) {
        t.output = elem_add(conv_forward(x, *p.shortcut_proj), modulated);
    } else {
        if (!(modulated.shape() == x.shape())) {
            throw std::invalid_argument(
                "tca_forward: non-downsampling block changed shape; shortcut_proj missing");
        }
        t.output = elem_add(x, modulated);
    }
    return t;
}

template <typename T>
std::pair<Tensor<T>, TcaBlockGrads<T>> tca_backward(const TcaTrace<T>& t,
                                                    const TcaBlockParams<T>& p,
                                                    const Tensor<T>& g) {
    if (!(g.shape() == t.output.shape())) {
        throw std::invalid_argument("tca_backward: gradient shape mismatch");
    }
    TcaBlockGrads<T> grads;

    Tensor<T> d_features;
    if (p.global_context) {
        const Shape5& s = t.features.shape();
        const index_t vol = s.spatial();
        // direct path: d(O.u)/dO = u; gate path: du accumulates <g, O> per channel
        d_features = Tensor<T>(s);
        Tensor<T> d_gate(t.gate.shape());
        for (index_t n = 0; n < s.n; ++n)
            for (index_t c = 0; c < s.c; ++c) {
                const T u = t.gate.at(n, c, 0, 0, 0);
                const index_t base = (n * s.c + c) * vol;
                T acc = T(0);
                for (index_t i = 0; i < vol; ++i) {
                    d_features[base + i] = g[base + i] * u;
                    acc += g[base + i] * t.features[base + i];
                }
                d_gate.at(n, c, 0, 0, 0) = acc;
            }
        const Tensor<T> d_logits = sigmoid_backward(t.gate, d_gate);
        grads.gate_expand = conv_backward(t.hidden, p.gate_expand, d_logits);
        const Tensor<T> d_hidden_pre = relu_backward(t.hidden_pre, grads.gate_expand.d_input);
        grads.gate_reduce = conv_backward(t.pooled, p.gate_reduce, d_hidden_pre);
        const Tensor<T> d_pooled =
            global_avg_pool_backward(t.features.shape(), grads.gate_reduce.d_input);
        elem_add_inplace(d_features, d_pooled);
    } else {
        d_features = g;
        // zero-shaped gate grads so the parameter walk stays uniform
        grads.gate_expand = ConvGrads<T>{Tensor<T>(Shape5{0, 0, 0, 0, 0}),
                                         Tensor<T>(p.gate_expand.weights.shape()),
                                         std::vector<T>(p.gate_expand.bias.size(), T(0))};
        grads.gate_reduce = ConvGrads<T>{Tensor<T>(Shape5{0, 0, 0, 0, 0}),
                                         Tensor<T>(p.gate_reduce.weights.shape()),
                                         std::vector<T>(p.gate_reduce.bias.size(), T(0))};
    }

    grads.conv2 = conv_backward(t.mid, p.conv2, d_features);
    const Tensor<T> d_pre = relu_backward(t.pre_act, grads.conv2.d_input);
    grads.conv1 = conv_backward(t.input, p.conv1, d_pre);

    Tensor<T> d_input = grads.conv1.d_input;
    if (p.shortcut_proj) {
        grads.shortcut_proj = conv_backward(t.input, *p.shortcut_proj, g);
        elem_add_inplace(d_input, grads.shortcut_proj->d_input);
    } else {
        elem_add_inplace(d_input, g);
    }
    return {std::move(d_input), std::move(grads)};
}

}  // namespace e3d
