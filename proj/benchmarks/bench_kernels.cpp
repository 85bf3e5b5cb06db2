#include <benchmark/benchmark.h>

#include "rfn/data.hpp"
#include "rfn/losses.hpp"
#include "rfn/metrics.hpp"
#include "rfn/networks.hpp"
#include "rfn/ops.hpp"
#include "rfn/random.hpp"
#include "rfn/strategies.hpp"

namespace {

using namespace rfn;
using namespace rfn::ops;

Tensor<float> noise(Shape s, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(s);
    for (auto& v : t.data()) v = float(rng.uniform());
    return t;
}

// args: channels in/out, side
void BM_Conv2dForward(benchmark::State& state) {
    const auto c = std::size_t(state.range(0)), side = std::size_t(state.range(1));
    const auto x = Var<float>::leaf(noise({1, c, side, side}, 1));
    const auto w = Var<float>::leaf(noise({c, c, 3, 3}, 2));
    const auto b = Var<float>::leaf(Tensor<float>(Shape{c}));
    NoGradGuard guard;
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, PadMode::reflect));
    state.SetItemsProcessed(state.iterations() * std::int64_t(c * c * 9 * side * side));
}
BENCHMARK(BM_Conv2dForward)->Args({16, 64})->Args({64, 32})->Args({112, 16})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
    const auto c = std::size_t(state.range(0)), side = std::size_t(state.range(1));
    const auto x = Var<float>::leaf(noise({1, c, side, side}, 1), true);
    const auto w = Var<float>::leaf(noise({c, c, 3, 3}, 2), true);
    const auto b = Var<float>::leaf(Tensor<float>(Shape{c}), true);
    for (auto _ : state) {
        backward(sum(conv2d(x, w, b, 1, PadMode::reflect)));
    }
    state.SetItemsProcessed(state.iterations() * std::int64_t(c * c * 9 * side * side));
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_SsimLoss(benchmark::State& state) {
    const auto side = std::size_t(state.range(0));
    const auto x = Var<float>::leaf(noise({4, 1, side, side}, 3), true);
    const auto y = Var<float>::leaf(noise({4, 1, side, side}, 4));
    for (auto _ : state) backward(loss::l_auto(x, y).total);
}
BENCHMARK(BM_SsimLoss)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_FuseForward(benchmark::State& state) {
    const auto side = std::size_t(state.range(0));
    const auto w = init_weights<float>(ArchitectureConfig{}, 1);
    const ImagePair<float> pair{noise({1, 1, side, side}, 5), noise({1, 1, side, side}, 6), "b"};
    for (auto _ : state) benchmark::DoNotOptimize(fuse_forward(pair, w));
}
BENCHMARK(BM_FuseForward)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_NuclearStrategy(benchmark::State& state) {
    const auto a = noise({1, 64, 32, 32}, 7), b = noise({1, 64, 32, 32}, 8);
    for (auto _ : state) benchmark::DoNotOptimize(strategy::fuse_nuclear(a, b));
}
BENCHMARK(BM_NuclearStrategy)->Unit(benchmark::kMillisecond);

void BM_EvaluateAll(benchmark::State& state) {
    const auto side = std::size_t(state.range(0));
    const auto p = data::synth_pair(side, 9);
    Image f(side, side);
    for (std::size_t i = 0; i < f.size(); ++i) f.pixels[i] = 0.5 * (p.ir.pixels[i] + p.vi.pixels[i]);
    for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate_all(f, p.ir, p.vi));
}
BENCHMARK(BM_EvaluateAll)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
