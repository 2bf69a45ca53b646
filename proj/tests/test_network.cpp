#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "e3d/checkpoint.hpp"
#include "e3d/network.hpp"
#include "e3d/rng.hpp"

using namespace e3d;

namespace {

Tensor<float> random_input(Shape5 s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(s);
    for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(0, 1));
    return t;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("default config builds eight blocks with 1/16 output") {
    NetConfig cfg;
    auto net = build_network<float>(cfg, 1);
    CHECK(net.blocks.size() == 8);
    CHECK(net.cfg.spatial_factor() == 16);
    auto t = network_forward(random_input(Shape5{1, 1, 16, 64, 64}, 2), net);
    CHECK(t.output.shape() == Shape5{1, 1, 16, 4, 4});
}

TEST_CASE("shape law holds across T and H,W grids") {
    NetConfig cfg;
    cfg.stem_channels = 4;
    auto net = build_network<float>(cfg, 3);
    for (index_t T : {4, 8}) {
        for (index_t dim : {32, 64}) {
            auto t = network_forward(random_input(Shape5{1, 1, T, dim, dim}, 4), net);
            CHECK(t.output.shape() == Shape5{1, 1, T, dim / 16, dim / 16});
        }
    }
}

TEST_CASE("E2D variant accepts single frames and keeps 2D kernels") {
    NetConfig cfg;
    cfg.variant = Variant::E2D;
    cfg.in_channels = 3;
    cfg.stem_channels = 4;
    auto net = build_network<float>(cfg, 5);
    CHECK(net.stem.kernel() == Triple{1, 7, 7});
    CHECK(net.pool_size == Triple{1, 3, 3});
    for (const auto& b : net.blocks) {
        CHECK(b.conv1.kernel() == Triple{1, 3, 3});
        CHECK(b.conv1.stride[0] == 1);
    }
    auto t = network_forward(random_input(Shape5{1, 3, 1, 64, 64}, 6), net);
    CHECK(t.output.shape() == Shape5{1, 1, 1, 4, 4});
}

TEST_CASE("zero head weights give an all-zero density output") {
    NetConfig cfg;
    cfg.stem_channels = 4;
    auto net = build_network<float>(cfg, 7);
    net.head.weights.fill(0.0f);
    std::fill(net.head.bias.begin(), net.head.bias.end(), 0.0f);
    auto t = network_forward(random_input(Shape5{1, 1, 4, 32, 32}, 8), net);
    for (index_t i = 0; i < t.output.numel(); ++i) CHECK(t.output[i] == 0.0f);
}

TEST_CASE("non-divisible spatial dims are rejected, not cropped") {
    NetConfig cfg;
    cfg.stem_channels = 4;
    auto net = build_network<float>(cfg, 9);
    CHECK_THROWS_AS(network_forward(random_input(Shape5{1, 1, 4, 40, 32}, 10), net),
                    std::invalid_argument);
    CHECK_THROWS_AS(network_forward(random_input(Shape5{1, 2, 4, 32, 32}, 11), net),
                    std::invalid_argument);
}

TEST_CASE("block-count ablation grid builds") {
    for (int blocks : {4, 6, 8, 10}) {
        NetConfig cfg;
        cfg.stem_channels = 4;
        cfg.block_count = blocks;
        // the default {1,3,5} spacing needs at least 5 blocks
        if (blocks < 5) cfg.downsample_blocks = {1, 3, blocks};
        auto net = build_network<float>(cfg, 12);
        CHECK(static_cast<int>(net.blocks.size()) == blocks);
        int down = 0;
        for (const auto& b : net.blocks) down += b.downsamples();
        CHECK(down == 3);
    }
}

TEST_CASE("config validation names violations") {
    NetConfig cfg;
    cfg.block_count = 2;  // fewer blocks than downsample indices
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    NetConfig cfg2;
    cfg2.stem_channels = 6;  // not divisible by r=4
    CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);

    NetConfig cfg3;
    cfg3.downsample_blocks = {1, 3};  // breaks the 1/16 law
    CHECK_THROWS_AS(cfg3.validate(), std::invalid_argument);
    CHECK_NOTHROW(cfg3.validate(/*strict_factor=*/false));
}

TEST_CASE("zero upstream gradient zeroes every parameter gradient") {
    NetConfig cfg;
    cfg.stem_channels = 4;
    cfg.block_count = 2;
    cfg.downsample_blocks = {1};
    auto net = build_network<double>(cfg, 13, false);
    Rng rng(14);
    Tensor<double> x(Shape5{1, 1, 2, 16, 16});
    for (index_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform(0, 1);
    auto trace = network_forward(x, net);
    Tensor<double> g(trace.output.shape());
    auto grads = network_backward(trace, net, g);
    for (auto& r : grad_refs(grads, net)) {
        for (double v : r.values) CHECK(v == 0.0);
    }
}

TEST_CASE("checkpoint round trip restores parameters and config") {
    NetConfig cfg;
    cfg.stem_channels = 4;
    cfg.clip_length = 4;
    cfg.global_context = false;
    auto net = build_network<float>(cfg, 15);
    const std::string path =
        (std::filesystem::temp_directory_path() / "e3d_test_ckpt.bin").string();
    save_checkpoint(path, net, 15, 123);
    auto ckpt = load_checkpoint<float>(path);
    CHECK(ckpt.step == 123);
    CHECK(ckpt.net.cfg.global_context == false);
    CHECK(ckpt.net.cfg.clip_length == 4);
    auto a = param_refs<const float>(static_cast<const Network<float>&>(net));
    auto b = param_refs<const float>(static_cast<const Network<float>&>(ckpt.net));
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].values.size() == b[i].values.size());
        for (size_t j = 0; j < a[i].values.size(); ++j) CHECK(a[i].values[j] == b[i].values[j]);
    }
    std::remove(path.c_str());
}

}  // TEST_SUITE
