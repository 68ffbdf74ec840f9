#include <benchmark/benchmark.h>

#include "hfw/backbones.hpp"
#include "hfw/fewshot.hpp"
#include "hfw/train.hpp"

using namespace hfw;

namespace {

void BM_matmul(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(1);
    TensorF a = TensorF::normal({n, n}, 0, 1, rng);
    TensorF b = TensorF::normal({n, n}, 0, 1, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        TensorF c = matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_hfw_forward(benchmark::State& state) {
    const int64_t d = state.range(0);
    HfwConfig cfg;
    cfg.d = d;
    cfg.heads = 4;
    ParamStore<float> store(2);
    HfwParams<float> p = HfwParams<float>::init(store, "hfw", cfg);
    Rng rng(3);
    TensorF x = TensorF::normal({8, 16, d}, 0, 1, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        auto r = hfw_forward(x, p, cfg);
        benchmark::DoNotOptimize(r.out.values().data());
    }
}
BENCHMARK(BM_hfw_forward)->Arg(64)->Arg(128);

void BM_block_forward(benchmark::State& state) {
    FlatBackboneConfig cfg;
    cfg.depth = 1;
    cfg.d = state.range(0);
    cfg.heads = 4;
    cfg.patch = 8;
    cfg.image = 32;
    Model<float> m = Model<float>::flat(cfg, 4);
    Rng rng(5);
    TensorF x = TensorF::normal({8, 16, cfg.d}, 0, 1, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        TensorF y = block_forward(x, m.flat_parts().blocks[0], cfg.heads);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_block_forward)->Arg(64)->Arg(128);

void BM_episode_embed(benchmark::State& state) {
    FlatBackboneConfig cfg;
    cfg.depth = 2;
    cfg.d = 64;
    cfg.heads = 4;
    cfg.patch = 8;
    cfg.image = 32;
    cfg.hfw = HfwConfig{};
    Model<float> m = Model<float>::flat(cfg, 6);
    Rng rng(7);
    TensorF support = TensorF::normal({5, 3, 32, 32}, 0, 1, rng);
    TensorF query = TensorF::normal({75, 3, 32, 32}, 0, 1, rng);
    NoGradGuard ng;
    for (auto _ : state) {
        auto [s, q] = m.embed_episode(support, query);
        benchmark::DoNotOptimize(q.values().data());
    }
}
BENCHMARK(BM_episode_embed);

void BM_train_step(benchmark::State& state) {
    FlatBackboneConfig cfg;
    cfg.depth = 2;
    cfg.d = 64;
    cfg.heads = 4;
    cfg.patch = 8;
    cfg.image = 32;
    cfg.hfw = HfwConfig{};
    Model<float> m = Model<float>::flat(cfg, 8);
    OptimizerState<float> optim(m.params(), {});
    Rng rng(9);
    TensorF support = TensorF::normal({5, 3, 32, 32}, 0, 1, rng);
    TensorF query = TensorF::normal({75, 3, 32, 32}, 0, 1, rng);
    const std::vector<int64_t> s_labels{0, 1, 2, 3, 4};
    std::vector<int64_t> q_labels(75);
    for (size_t i = 0; i < 75; ++i) q_labels[i] = static_cast<int64_t>(i / 15);
    for (auto _ : state) {
        m.params().zero_grads();
        auto out = run_episode(m, support, s_labels, query, q_labels, 5, 1);
        out.loss.backward();
        clip_grads(m.params(), 1.0);
        adamw_step(m.params(), optim, 5e-4);
    }
}
BENCHMARK(BM_train_step);

}  // namespace

BENCHMARK_MAIN();
