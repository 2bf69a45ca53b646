#include <doctest.h>

#include "e3d/network.hpp"
#include "e3d/rng.hpp"
#include "e3d/tca.hpp"

using namespace e3d;

namespace {

Tensor<double> random_tensor(Shape5 s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> t(s);
    for (index_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1, 1);
    return t;
}

ConvParams<double> zero_conv(index_t co, index_t ci, Triple k, Triple stride, Triple pad) {
    ConvParams<double> p;
    p.weights = Tensor<double>(Shape5{co, ci, k[0], k[1], k[2]});
    p.bias.assign(static_cast<size_t>(co), 0.0);
    p.stride = stride;
    p.pad = pad;
    return p;
}

TcaBlockParams<double> zero_block(index_t c, index_t hidden, bool downsample) {
    TcaBlockParams<double> p;
    const Triple s1 = downsample ? Triple{1, 2, 2} : Triple{1, 1, 1};
    p.conv1 = zero_conv(c, c, {3, 3, 3}, s1, {1, 1, 1});
    p.conv2 = zero_conv(c, c, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    p.gate_reduce = zero_conv(hidden, c, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    p.gate_expand = zero_conv(c, hidden, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    if (downsample) p.shortcut_proj = zero_conv(c, c, {1, 1, 1}, s1, {0, 0, 0});
    return p;
}

}  // namespace

TEST_SUITE("tca") {

TEST_CASE("channel_gate is 0.5 everywhere with zero gate weights") {
    auto o = random_tensor(Shape5{2, 4, 2, 3, 3}, 1);
    auto p = zero_block(4, 1, false);
    auto u = channel_gate(o, p);
    REQUIRE(u.shape() == Shape5{2, 4, 1, 1, 1});
    for (index_t i = 0; i < u.numel(); ++i) CHECK(u[i] == doctest::Approx(0.5));
}

TEST_CASE("channel_gate hidden width follows the reduction ratio") {
    NetConfig cfg;
    cfg.stem_channels = 8;
    cfg.reduction_ratio = 4;
    auto net = build_network<double>(cfg, 1);
    CHECK(net.blocks[0].gate_reduce.c_out() == 2);
    CHECK(net.blocks[0].gate_expand.c_in() == 2);
}

TEST_CASE("channel_gate scalar oracle") {
    // c=2, hidden 1, W1=[1,1], W2=[1;-1], pooled v=(1,3) -> u=(sigmoid(4), sigmoid(-4))
    TcaBlockParams<double> p = zero_block(2, 1, false);
    p.gate_reduce.weights.at(0, 0, 0, 0, 0) = 1.0;
    p.gate_reduce.weights.at(0, 1, 0, 0, 0) = 1.0;
    p.gate_expand.weights.at(0, 0, 0, 0, 0) = 1.0;
    p.gate_expand.weights.at(1, 0, 0, 0, 0) = -1.0;
    Tensor<double> o(Shape5{1, 2, 1, 1, 2}, {1, 1, 3, 3});  // channel means 1 and 3
    auto u = channel_gate(o, p);
    CHECK(u[0] == doctest::Approx(0.98201379).epsilon(1e-6));
    CHECK(u[1] == doctest::Approx(0.01798621).epsilon(1e-6));
}

TEST_CASE("gate values stay in (0,1) and respond monotonically") {
    auto o = random_tensor(Shape5{1, 4, 2, 4, 4}, 2);
    Rng rng(3);
    auto p = zero_block(4, 1, false);
    for (index_t i = 0; i < p.gate_reduce.weights.numel(); ++i)
        p.gate_reduce.weights[i] = rng.uniform(-1, 1);
    for (index_t i = 0; i < p.gate_expand.weights.numel(); ++i)
        p.gate_expand.weights[i] = rng.uniform(-1, 1);
    auto u = channel_gate(o, p);
    for (index_t i = 0; i < u.numel(); ++i) {
        CHECK(u[i] > 0.0);
        CHECK(u[i] < 1.0);
    }
    // raising one expand-layer bias raises exactly that channel's gate
    for (index_t ch = 0; ch < 4; ++ch) {
        auto bumped = p;
        bumped.gate_expand.bias[static_cast<size_t>(ch)] += 0.7;
        auto u2 = channel_gate(o, bumped);
        for (index_t i = 0; i < u.numel(); ++i) {
            if (i == ch) {
                CHECK(u2[i] > u[i]);
            } else {
                CHECK(u2[i] == doctest::Approx(u[i]));
            }
        }
    }
}

TEST_CASE("zero-parameter non-downsampling block is the exact identity") {
    auto x = random_tensor(Shape5{1, 4, 2, 6, 6}, 4);
    auto p = zero_block(4, 1, false);
    auto t = tca_forward(x, p);
    for (index_t i = 0; i < x.numel(); ++i) CHECK(t.output[i] == x[i]);
}

TEST_CASE("zero gate_expand gives x + 0.5 * O") {
    Rng rng(5);
    auto x = random_tensor(Shape5{1, 4, 2, 6, 6}, 6);
    auto p = zero_block(4, 1, false);
    for (index_t i = 0; i < p.conv1.weights.numel(); ++i) p.conv1.weights[i] = rng.uniform(-1, 1);
    for (index_t i = 0; i < p.conv2.weights.numel(); ++i) p.conv2.weights[i] = rng.uniform(-1, 1);
    for (index_t i = 0; i < p.gate_reduce.weights.numel(); ++i)
        p.gate_reduce.weights[i] = rng.uniform(-1, 1);
    // gate_expand stays zero -> u = sigmoid(0) = 0.5
    auto t = tca_forward(x, p);
    auto features = conv_forward(relu(conv_forward(x, p.conv1)), p.conv2);
    for (index_t i = 0; i < x.numel(); ++i) {
        CHECK(t.output[i] == doctest::Approx(x[i] + 0.5 * features[i]).epsilon(1e-12));
    }
}

TEST_CASE("disabling global_context leaves the plain residual composition") {
    Rng rng(7);
    auto x = random_tensor(Shape5{1, 4, 2, 6, 6}, 8);
    auto p = zero_block(4, 1, false);
    for (index_t i = 0; i < p.conv1.weights.numel(); ++i) p.conv1.weights[i] = rng.uniform(-1, 1);
    for (index_t i = 0; i < p.conv2.weights.numel(); ++i) p.conv2.weights[i] = rng.uniform(-1, 1);
    for (index_t i = 0; i < p.gate_expand.weights.numel(); ++i)
        p.gate_expand.weights[i] = rng.uniform(-1, 1);  // must be ignored
    p.global_context = false;
    auto t = tca_forward(x, p);
    auto features = conv_forward(relu(conv_forward(x, p.conv1)), p.conv2);
    for (index_t i = 0; i < x.numel(); ++i) {
        CHECK(t.output[i] == doctest::Approx(x[i] + features[i]).epsilon(1e-12));
    }
}

TEST_CASE("downsampling block halves H and W") {
    auto x = random_tensor(Shape5{1, 16, 16, 32, 32}, 9);
    NetConfig cfg;
    cfg.stem_channels = 16;
    auto net = build_network<double>(cfg, 10);
    // block index 0 (1-based 1) downsamples in the default config
    auto t = tca_forward(x, net.blocks[0]);
    CHECK(t.output.shape() == Shape5{1, 16, 16, 16, 16});
}

TEST_CASE("block validation catches inconsistent configs") {
    auto p = zero_block(4, 1, false);
    p.shortcut_proj = zero_conv(4, 4, {1, 1, 1}, {1, 1, 1}, {0, 0, 0});
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);  // proj without downsampling

    auto q = zero_block(4, 1, true);
    q.shortcut_proj.reset();  // downsampling without proj
    CHECK_THROWS_AS(q.validate(), std::invalid_argument);

    auto r = zero_block(4, 1, false);
    r.conv2 = zero_conv(5, 4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});  // channel change
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
}

}  // TEST_SUITE
