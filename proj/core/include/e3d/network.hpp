#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "e3d/rng.hpp"
#include "e3d/tca.hpp"

namespace e3d {

enum class Variant { E3D, E2D };

inline std::string to_string(Variant v) { return v == Variant::E3D ? "E3D" : "E2D"; }

inline Variant variant_from_string(const std::string& s) {
    if (s == "E3D") return Variant::E3D;
    if (s == "E2D") return Variant::E2D;
    throw std::invalid_argument("unknown network variant: " + s);
}

struct NetConfig {
    Variant variant = Variant::E3D;
    index_t in_channels = 1;
    index_t stem_channels = 16;
    int block_count = 8;
    std::vector<int> downsample_blocks = {1, 3, 5};  // 1-based block indices
    int reduction_ratio = 4;
    bool global_context = true;
    int clip_length = 16;

    // Stem halves H and W; each downsampling block halves them again.
    index_t spatial_factor() const {
        return index_t(1) << (1 + downsample_blocks.size());
    }

    void validate(bool strict_factor = true) const {
        if (in_channels < 1) throw std::invalid_argument("NetConfig: in_channels must be >= 1");
        if (stem_channels < 1) throw std::invalid_argument("NetConfig: stem_channels must be >= 1");
        if (block_count < static_cast<int>(downsample_blocks.size())) {
            throw std::invalid_argument("NetConfig: block_count < |downsample_blocks|");
        }
        if (reduction_ratio < 1) throw std::invalid_argument("NetConfig: reduction_ratio must be >= 1");
        if (stem_channels % reduction_ratio != 0) {
            throw std::invalid_argument(
                "NetConfig: channel count not divisible by reduction ratio");
        }
        if (clip_length < 1) throw std::invalid_argument("NetConfig: clip_length must be >= 1");
        for (int b : downsample_blocks) {
            if (b < 1 || b > block_count) {
                throw std::invalid_argument("NetConfig: downsample block index out of range");
            }
        }
        if (strict_factor && downsample_blocks.size() != 3) {
            throw std::invalid_argument(
                "NetConfig: |downsample_blocks| must be 3 for the 1/16 output factor");
        }
    }
};

template <typename T>
struct Network {
    NetConfig cfg;
    ConvParams<T> stem;  // 7^3 (E3D) or 7x7 (E2D), stride halves H and W
    Triple pool_size{3, 3, 3};
    Triple pool_stride{1, 1, 1};
    Triple pool_pad{1, 1, 1};
    std::vector<TcaBlockParams<T>> blocks;
    ConvParams<T> head;  // 1^3, c -> 1
};

template <typename T>
struct NetTrace {
    Tensor<T> input;
    Tensor<T> stem_pre;  // stem conv output, pre-ReLU
    Tensor<T> stem_act;
    MaxPoolCtx pool_ctx;
    Tensor<T> pooled;
    std::vector<TcaTrace<T>> block_traces;
    Tensor<T> output;
};

template <typename T>
struct NetGrads {
    ConvGrads<T> stem;
    std::vector<TcaBlockGrads<T>> blocks;
    ConvGrads<T> head;
    Tensor<T> d_input;
};

namespace detail {

// Zero-mean uniform scaled by 1/sqrt(fan_in), biases zero.
template <typename T>
ConvParams<T> init_conv(index_t c_out, index_t c_in, Triple kernel, Triple stride, Triple pad,
                        Rng& rng, bool with_bias = true) {
    ConvParams<T> p;
    p.weights = Tensor<T>(Shape5{c_out, c_in, kernel[0], kernel[1], kernel[2]});
    const double fan_in =
        static_cast<double>(c_in) * static_cast<double>(kernel[0] * kernel[1] * kernel[2]);
    const double scale = 1.0 / std::sqrt(fan_in);
    for (index_t i = 0; i < p.weights.numel(); ++i) {
        p.weights[i] = static_cast<T>(rng.uniform(-scale, scale));
    }
    if (with_bias) p.bias.assign(static_cast<size_t>(c_out), T(0));
    p.stride = stride;
    p.pad = pad;
    return p;
}

}  // namespace detail

template <typename T>
Network<T> build_network(const NetConfig& cfg, std::uint64_t seed, bool strict_factor = true) {
    cfg.validate(strict_factor);
    const bool flat = cfg.variant == Variant::E2D;  // temporal extents collapse to 1
    Rng rng(seed);
    Network<T> net;
    net.cfg = cfg;

    const index_t c = cfg.stem_channels;
    const Triple stem_k = flat ? Triple{1, 7, 7} : Triple{7, 7, 7};
    const Triple stem_p = flat ? Triple{0, 3, 3} : Triple{3, 3, 3};
    net.stem = detail::init_conv<T>(c, cfg.in_channels, stem_k, Triple{1, 2, 2}, stem_p, rng);

    net.pool_size = flat ? Triple{1, 3, 3} : Triple{3, 3, 3};
    net.pool_stride = Triple{1, 1, 1};
    net.pool_pad = flat ? Triple{0, 1, 1} : Triple{1, 1, 1};

    const Triple conv_k = flat ? Triple{1, 3, 3} : Triple{3, 3, 3};
    const Triple conv_p = flat ? Triple{0, 1, 1} : Triple{1, 1, 1};
    const index_t c_hidden = c / cfg.reduction_ratio;
    for (int b = 1; b <= cfg.block_count; ++b) {
        const bool down = std::find(cfg.downsample_blocks.begin(), cfg.downsample_blocks.end(),
                                    b) != cfg.downsample_blocks.end();
        TcaBlockParams<T> blk;
        const Triple s1 = down ? Triple{1, 2, 2} : Triple{1, 1, 1};
        blk.conv1 = detail::init_conv<T>(c, c, conv_k, s1, conv_p, rng);
        blk.conv2 = detail::init_conv<T>(c, c, conv_k, Triple{1, 1, 1}, conv_p, rng);
        blk.gate_reduce =
            detail::init_conv<T>(c_hidden, c, Triple{1, 1, 1}, Triple{1, 1, 1}, Triple{0, 0, 0}, rng);
        blk.gate_expand =
            detail::init_conv<T>(c, c_hidden, Triple{1, 1, 1}, Triple{1, 1, 1}, Triple{0, 0, 0}, rng);
        if (down) {
            blk.shortcut_proj = detail::init_conv<T>(c, c, Triple{1, 1, 1}, s1, Triple{0, 0, 0}, rng);
        }
        blk.global_context = cfg.global_context;
        blk.validate();
        net.blocks.push_back(std::move(blk));
    }

    net.head = detail::init_conv<T>(1, c, Triple{1, 1, 1}, Triple{1, 1, 1}, Triple{0, 0, 0}, rng);
    return net;
}

template <typename T>
void check_input_shape(const Shape5& s, const Network<T>& net) {
    const index_t f = net.cfg.spatial_factor();
    if (s.c != net.cfg.in_channels) {
        throw std::invalid_argument("network_forward: input has " + std::to_string(s.c) +
                                    " channels, network expects " +
                                    std::to_string(net.cfg.in_channels));
    }
    if (s.h < f || s.w < f || s.h % f != 0 || s.w % f != 0) {
        throw std::invalid_argument("network_forward: spatial dims " + s.str() +
                                    " must be >= and divisible by " + std::to_string(f));
    }
    if (net.cfg.variant == Variant::E3D && s.d < 1) {
        throw std::invalid_argument("network_forward: empty temporal axis");
    }
}

template <typename T>
NetTrace<T> network_forward(const Tensor<T>& x, const Network<T>& net) {
    check_input_shape(x.shape(), net);
    NetTrace<T> t;
    t.input = x;
    t.stem_pre = conv_forward(x, net.stem);
    t.stem_act = relu(t.stem_pre);
    auto [pooled, ctx] = maxpool3d_forward(t.stem_act, net.pool_size, net.pool_stride, net.pool_pad);
    t.pooled = std::move(pooled);
    t.pool_ctx = std::move(ctx);
    const Tensor<T>* cur = &t.pooled;
    t.block_traces.reserve(net.blocks.size());
    for (const auto& blk : net.blocks) {
        t.block_traces.push_back(tca_forward(*cur, blk));
        cur = &t.block_traces.back().output;
    }
    t.output = conv_forward(*cur, net.head);
    return t;
}

template <typename T>
NetGrads<T> network_backward(const NetTrace<T>& t, const Network<T>& net, const Tensor<T>& g) {
    if (!(g.shape() == t.output.shape())) {
        throw std::invalid_argument("network_backward: gradient shape " + g.shape().str() +
                                    " != output shape " + t.output.shape().str());
    }
    NetGrads<T> grads;
    grads.blocks.resize(net.blocks.size());
    const Tensor<T>& head_in =
        net.blocks.empty() ? t.pooled : t.block_traces.back().output;
    grads.head = conv_backward(head_in, net.head, g);
    Tensor<T> d = grads.head.d_input;
    for (index_t b = static_cast<index_t>(net.blocks.size()) - 1; b >= 0; --b) {
        auto [dx, bg] = tca_backward(t.block_traces[static_cast<size_t>(b)],
                                     net.blocks[static_cast<size_t>(b)], d);
        grads.blocks[static_cast<size_t>(b)] = std::move(bg);
        d = std::move(dx);
    }
    d = maxpool3d_backward(t.pool_ctx, d);
    d = relu_backward(t.stem_pre, d);
    grads.stem = conv_backward(t.input, net.stem, d);
    grads.d_input = grads.stem.d_input;
    return grads;
}

// ---------------------------------------------------------------------------
// Flat parameter walk, declaration order. Used by the optimizer and the
// checkpoint writer; both sides must agree on this order.

template <typename T>
struct ParamRef {
    std::string name;
    std::span<T> values;
};

template <typename T, typename Net>
std::vector<ParamRef<T>> param_refs(Net& net) {
    std::vector<ParamRef<T>> out;
    auto add_conv = [&out](const std::string& name, auto& conv) {
        out.push_back({name + ".w", conv.weights.data()});
        if (!conv.bias.empty()) out.push_back({name + ".b", std::span<T>(conv.bias)});
    };
    add_conv("stem", net.stem);
    for (size_t b = 0; b < net.blocks.size(); ++b) {
        const std::string base = "block" + std::to_string(b);
        add_conv(base + ".conv1", net.blocks[b].conv1);
        add_conv(base + ".conv2", net.blocks[b].conv2);
        add_conv(base + ".gate_reduce", net.blocks[b].gate_reduce);
        add_conv(base + ".gate_expand", net.blocks[b].gate_expand);
        if (net.blocks[b].shortcut_proj) add_conv(base + ".shortcut", *net.blocks[b].shortcut_proj);
    }
    add_conv("head", net.head);
    return out;
}

template <typename T>
std::vector<ParamRef<T>> grad_refs(NetGrads<T>& grads, const Network<T>& net) {
    std::vector<ParamRef<T>> out;
    auto add = [&out](const std::string& name, ConvGrads<T>& g, bool has_bias) {
        out.push_back({name + ".w", g.d_weights.data()});
        if (has_bias) out.push_back({name + ".b", std::span<T>(g.d_bias)});
    };
    add("stem", grads.stem, !net.stem.bias.empty());
    for (size_t b = 0; b < grads.blocks.size(); ++b) {
        const std::string base = "block" + std::to_string(b);
        auto& bg = grads.blocks[b];
        const auto& bp = net.blocks[b];
        add(base + ".conv1", bg.conv1, !bp.conv1.bias.empty());
        add(base + ".conv2", bg.conv2, !bp.conv2.bias.empty());
        add(base + ".gate_reduce", bg.gate_reduce, !bp.gate_reduce.bias.empty());
        add(base + ".gate_expand", bg.gate_expand, !bp.gate_expand.bias.empty());
        if (bg.shortcut_proj) add(base + ".shortcut", *bg.shortcut_proj, !bp.shortcut_proj->bias.empty());
    }
    add("head", grads.head, !net.head.bias.empty());
    return out;
}

}  // namespace e3d
