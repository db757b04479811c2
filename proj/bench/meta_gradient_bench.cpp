#include <benchmark/benchmark.h>

#include <map>
#include <utility>

#include <omp.h>

#include "norml/meta.hpp"
#include "norml/meta_reference.hpp"

using namespace norml;

namespace {

struct Problem {
  MetaParams params;
  std::vector<TaskBatch> batches;
};

// Point-agent meta-iteration: `hidden` units per layer, `tasks` tasks, K=25, H=10.
const Problem& problem(int hidden, int tasks) {
  static std::map<std::pair<int, int>, Problem> cache;
  auto [it, fresh] = cache.try_emplace({hidden, tasks});
  if (fresh) {
    MetaInit init;
    init.policy_hidden = {hidden, hidden};
    init.advantage_hidden = {hidden, hidden};
    init.policy_scheme.output_gain = 0.1;
    init.advantage_scheme.output_gain = 0.01;
    Rng rng(42);
    Rng init_rng = rng.split(0);
    it->second.params = init_meta_params(init, Variant::Norml, init_rng);
    Rng task_rng = rng.split(1);
    for (int i = 0; i < tasks; ++i) {
      const auto u = static_cast<std::uint64_t>(i);
      it->second.batches.push_back(build_task_batch(it->second.params, Variant::Norml,
                                                    sample_task(EnvKind::PointShaped, task_rng), 25, 10, 0.99,
                                                    rng.split(2).split(u), rng.split(3).split(u)));
    }
  }
  return it->second;
}

void BM_TapeReference(benchmark::State& state) {
  const auto& p = problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::meta_gradient(p.params, Variant::Norml, p.batches, PpoConfig{}));
  }
}

void BM_FastSerial(benchmark::State& state) {
  const auto& p = problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  for (auto _ : state) benchmark::DoNotOptimize(meta_gradient(p.params, Variant::Norml, p.batches, PpoConfig{}));
  omp_set_num_threads(saved);
}

void BM_FastParallel(benchmark::State& state) {
  const auto& p = problem(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  state.counters["threads"] = omp_get_max_threads();
  for (auto _ : state) benchmark::DoNotOptimize(meta_gradient(p.params, Variant::Norml, p.batches, PpoConfig{}));
}

void BM_CollectRollouts(benchmark::State& state) {
  const auto& p = problem(static_cast<int>(state.range(0)), 1);
  std::uint64_t k = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(collect(p.params.theta, {EnvKind::PointShaped, 1.0}, 25, 10, Rng(k++)));
  }
}

}  // namespace

BENCHMARK(BM_TapeReference)->Args({8, 2})->Args({50, 2})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FastSerial)->Args({8, 2})->Args({50, 2})->Args({50, 10})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FastParallel)->Args({8, 2})->Args({50, 2})->Args({50, 10})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CollectRollouts)->Arg(50)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
