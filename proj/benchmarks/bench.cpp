#include <benchmark/benchmark.h>

#include "e3d/density.hpp"
#include "e3d/network.hpp"
#include "e3d/rng.hpp"

using namespace e3d;

namespace {

Tensor<float> random_input(Shape5 s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(s);
    for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    return t;
}

void BM_Conv3dForward(benchmark::State& state) {
    Rng rng(1);
    ConvParams<float> p;
    p.weights = Tensor<float>(Shape5{16, 16, 3, 3, 3});
    for (index_t i = 0; i < p.weights.numel(); ++i)
        p.weights[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
    p.bias.assign(16, 0.0f);
    p.pad = {1, 1, 1};
    const auto x = random_input(Shape5{1, 16, 8, 32, 32}, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(conv_forward(x, p));
    }
}
BENCHMARK(BM_Conv3dForward)->Unit(benchmark::kMillisecond);

void BM_TcaBlockForward(benchmark::State& state) {
    NetConfig cfg;
    cfg.stem_channels = 16;
    cfg.block_count = 1;
    cfg.downsample_blocks = {};
    auto net = build_network<float>(cfg, 3, false);
    const auto x = random_input(Shape5{1, 16, 8, 32, 32}, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tca_forward(x, net.blocks[0]).output);
    }
}
BENCHMARK(BM_TcaBlockForward)->Unit(benchmark::kMillisecond);

void BM_NetworkForward(benchmark::State& state) {
    NetConfig cfg;
    cfg.stem_channels = 16;
    auto net = build_network<float>(cfg, 5);
    const auto x = random_input(Shape5{1, 1, 8, 64, 64}, 6);
    for (auto _ : state) {
        benchmark::DoNotOptimize(network_forward(x, net).output);
    }
}
BENCHMARK(BM_NetworkForward)->Unit(benchmark::kMillisecond);

void BM_RenderDensity(benchmark::State& state) {
    Rng rng(7);
    HeadPoints pts;
    for (int i = 0; i < 100; ++i) {
        pts.points.push_back({rng.uniform(0.0, 237.0), rng.uniform(0.0, 157.0)});
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(render_density(pts, 4.0, 158, 238));
    }
}
BENCHMARK(BM_RenderDensity)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
