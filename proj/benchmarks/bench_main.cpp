#include <benchmark/benchmark.h>

#include "capforge/decoder.hpp"
#include "capforge/encoder.hpp"
#include "capforge/graph.hpp"
#include "capforge/infer.hpp"
#include "capforge/rng.hpp"
#include "capforge/tensor.hpp"

using namespace capforge;

static void BM_MatmulForwardBackward(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::uniform({n, n}, rng, -1.0f, 1.0f);
    Tensor b = Tensor::uniform({n, n}, rng, -1.0f, 1.0f);
    for (auto _ : state) {
        a.zero_grad();
        b.zero_grad();
        Graph g;
        NodeId y = g.sum(g.matmul(g.param(a), g.param(b)));
        g.backward(y);
        benchmark::DoNotOptimize(g.value(y).values[0]);
    }
    state.SetItemsProcessed(state.iterations() * 2 * static_cast<long>(n) * n * n);
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(64)->Arg(128)->Arg(256);

static void BM_LstmStep(benchmark::State& state) {
    const int hidden = static_cast<int>(state.range(0));
    DecoderConfig cfg{1, hidden, hidden, 0.0f};
    Rng rng(2);
    DecoderParams p = DecoderParams::init(cfg, 64, rng);
    LstmState s = LstmState::zeros(cfg);
    StepInput in;
    in.token = 3;
    for (auto _ : state) {
        auto [dist, next] = step_distribution(p, s, in);
        benchmark::DoNotOptimize(dist.values[0]);
        s = std::move(next);
    }
}
BENCHMARK(BM_LstmStep)->Arg(128)->Arg(512);

static void BM_ConvEncode(benchmark::State& state) {
    Rng rng(3);
    EncoderSpec spec = EncoderSpec::plain_desk(256, static_cast<int>(state.range(0)));
    EncoderParams p = EncoderParams::init(spec, rng);
    Tensor img = Tensor::uniform({32, 32, 3}, rng, 0.0f, 1.0f);
    for (auto _ : state) {
        Tensor f = encode_image(p, img);
        benchmark::DoNotOptimize(f.values[0]);
    }
}
BENCHMARK(BM_ConvEncode)->Arg(8)->Arg(16);

static void BM_BeamSearch(benchmark::State& state) {
    const int k = static_cast<int>(state.range(0));
    DecoderConfig cfg{1, 128, 128, 0.0f};
    Rng rng(4);
    DecoderParams p = DecoderParams::init(cfg, 40, rng);
    Tensor feat = Tensor::uniform({128}, rng, -1.0f, 1.0f);
    DecoderStepper stepper(p);
    BeamConfig bc;
    bc.k = k;
    for (auto _ : state) {
        DecodeResult r = beam_search(stepper, feat, bc);
        benchmark::DoNotOptimize(r.logprob);
    }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Arg(20);

BENCHMARK_MAIN();
