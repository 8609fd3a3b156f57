#include "blend/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace {

using blend::kernels::ConvGeometry;

struct Buffers {
    ConvGeometry g;
    std::vector<double> in, weight, bias, out;

    explicit Buffers(int channels, int size)
    {
        g.in_c = g.out_c = channels;
        g.in_h = g.in_w = size;
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-1, 1);
        auto fill = [&](std::vector<double>& v, std::size_t n) {
            v.resize(n);
            for (auto& x : v)
                x = u(rng);
        };
        fill(in, static_cast<std::size_t>(channels) * size * size);
        fill(weight, static_cast<std::size_t>(channels) * channels * 9);
        fill(bias, channels);
        out.assign(static_cast<std::size_t>(channels) * g.out_h() * g.out_w(), 0.0);
    }
};

void conv_args(benchmark::internal::Benchmark* b)
{
    for (int c : {8, 32})
        for (int s : {32, 64})
            b->Args({c, s});
}

void BM_ConvForwardParallel(benchmark::State& state)
{
    Buffers buf(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        blend::kernels::conv2d_forward(buf.in.data(), buf.weight.data(), buf.bias.data(), buf.out.data(), buf.g);
        benchmark::DoNotOptimize(buf.out.data());
    }
    state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(buf.g.macs()), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvForwardReference(benchmark::State& state)
{
    Buffers buf(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        blend::kernels::reference::conv2d_forward(buf.in.data(), buf.weight.data(), buf.bias.data(), buf.out.data(),
                                                  buf.g);
        benchmark::DoNotOptimize(buf.out.data());
    }
    state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(buf.g.macs()), benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvBackwardWeightParallel(benchmark::State& state)
{
    Buffers buf(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    std::vector<double> gw(buf.weight.size()), gb(buf.bias.size());
    for (auto _ : state) {
        blend::kernels::conv2d_backward_weight(buf.in.data(), buf.out.data(), gw.data(), gb.data(), buf.g);
        benchmark::DoNotOptimize(gw.data());
    }
}

void BM_ConvBackwardWeightReference(benchmark::State& state)
{
    Buffers buf(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    std::vector<double> gw(buf.weight.size()), gb(buf.bias.size());
    for (auto _ : state) {
        blend::kernels::reference::conv2d_backward_weight(buf.in.data(), buf.out.data(), gw.data(), gb.data(), buf.g);
        benchmark::DoNotOptimize(gw.data());
    }
}

} // namespace

BENCHMARK(BM_ConvForwardParallel)->Apply(conv_args)->UseRealTime();
BENCHMARK(BM_ConvForwardReference)->Apply(conv_args)->UseRealTime();
BENCHMARK(BM_ConvBackwardWeightParallel)->Apply(conv_args)->UseRealTime();
BENCHMARK(BM_ConvBackwardWeightReference)->Apply(conv_args)->UseRealTime();

BENCHMARK_MAIN();
