#include "fedd2s/baselines.hpp"

#include <benchmark/benchmark.h>

using namespace fedd2s;

namespace {

Tensor batch_for(const ModelSpec& spec, std::size_t rows) {
    auto shape = spec.input_shape();
    shape.insert(shape.begin(), rows);
    Tensor x(shape);
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : x.values()) v = u(rng);
    return x;
}

void BM_ForwardM1(benchmark::State& state) {
    const auto spec = make_m1({28, 28, 1}, 10);
    const auto params = ModelParams::he_uniform(spec, 1);
    const auto x = batch_for(spec, static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(forward(spec, params, x));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardM1)->Arg(1)->Arg(32);

void BM_ForwardBackwardM1(benchmark::State& state) {
    const auto spec = make_m1({28, 28, 1}, 10);
    const auto params = ModelParams::he_uniform(spec, 1);
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto x = batch_for(spec, rows);
    Labels y(rows, 3);
    for (auto _ : state) {
        const auto trace = trace_range(spec, params, x, 0, spec.depth());
        const auto ce = cross_entropy_with_grad(trace.output(), y, 1.0);
        benchmark::DoNotOptimize(backward(spec, params, trace, ce.grad, LayerRange::all(spec)));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackwardM1)->Arg(32);

void BM_DirichletPartition(benchmark::State& state) {
    Dataset ds;
    ds.num_classes = 10;
    ds.inputs = Tensor({50000, 1, 1, 1});
    for (std::size_t i = 0; i < 50000; ++i) ds.labels.push_back(static_cast<std::int32_t>(i % 10));
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(dirichlet_partition(ds, 50, 0.1, ++seed));
}
BENCHMARK(BM_DirichletPartition);

void BM_DeskRound(benchmark::State& state) {
    RunConfig cfg;
    cfg.architecture = "desk";
    cfg.blob_classes = 4;
    cfg.blob_per_class = 150;
    cfg.blob_dims = 64;
    cfg.clients = 8;
    cfg.participation = 0.5;
    cfg.rounds = 30;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    const auto data = load_run_dataset(cfg);
    const auto spec = build_architecture(cfg.architecture, data.sample_shape(), data.num_classes);
    cfg = resolve_config(cfg, spec);
    auto fed = build_federation(cfg, data);
    const auto drop = DropConfig::from_names(spec, cfg.drop_set, *cfg.z0);
    std::size_t round = 0;
    for (auto _ : state) benchmark::DoNotOptimize(run_round(fed, cfg, drop, ++round));
}
BENCHMARK(BM_DeskRound)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
