#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lcsim/attention.hpp"
#include "lcsim/costmodel.hpp"
#include "lcsim/presets.hpp"
#include "lcsim/scheduler.hpp"
#include "lcsim/simulator.hpp"
#include "lcsim/workload.hpp"

using namespace lcsim;

namespace {

RuntimePredictor h100_8b() {
  return RuntimePredictor(model_preset("llama3-8b"), hardware_preset("h100-80gb"), {8, 1, 1});
}

void BM_PredictChunk(benchmark::State& state) {
  const auto pred = h100_8b();
  std::int64_t kv = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pred.predict_chunk_time(kv, 4096, 16));
    kv = (kv + 4096) % 10'000'000;
  }
}
BENCHMARK(BM_PredictChunk);

void BM_PackBatch(benchmark::State& state) {
  const auto pred = h100_8b();
  const auto n = state.range(0);
  std::vector<Request> reqs(static_cast<std::size_t>(2 * n));
  std::vector<Request*> queue, decoding;
  for (std::int64_t i = 0; i < 2 * n; ++i) {
    Request& r = reqs[static_cast<std::size_t>(i)];
    r.id = i;
    r.prefill_tokens = 1000 + 997 * i;
    r.decode_tokens = 64;
    r.assigned_kvp_ranks = {0};
    assign_deadline(r, SLOSpec{}, pred);
    if (i < n) {
      queue.push_back(&r);
    } else {
      r.phase = Phase::Decoding;
      r.prefill_done_tokens = r.prefill_tokens;
      r.token_ts = {1.0};
      decoding.push_back(&r);
    }
  }
  const SchedulerConfig cfg;
  for (auto _ : state) {
    const auto order = prioritize(queue, Policy::ILRS, 1.0, pred);
    benchmark::DoNotOptimize(pack_batch({order, decoding, {}, 1.0, 0.05}, SLOSpec{}, cfg, pred));
  }
}
BENCHMARK(BM_PackBatch)->Arg(8)->Arg(64)->Arg(512);

void BM_MergeShards(benchmark::State& state) {
  using namespace lcsim::attention;
  const auto shards = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  const std::size_t q = 8, n = 512, d = 64;
  Matrix Q(q, d), K(n, d), V(n, d);
  for (auto* m : {&Q, &K, &V})
    for (auto& x : m->data) x = g(rng);
  const auto offset = static_cast<std::int64_t>(n);  // queries see every key
  for (auto _ : state) {
    std::vector<PartialAttention> parts;
    for (std::size_t s = 0; s < shards; ++s) {
      const std::size_t lo = s * n / shards, hi = (s + 1) * n / shards;
      parts.push_back(partial_attention(Q, K.slice_rows(lo, hi), V.slice_rows(lo, hi),
                                        offset - static_cast<std::int64_t>(lo)));
    }
    benchmark::DoNotOptimize(merge_partials(parts));
  }
}
BENCHMARK(BM_MergeShards)->Arg(1)->Arg(4)->Arg(8);

void BM_SimulateTrace(benchmark::State& state) {
  TraceSpec spec;
  spec.qps = static_cast<double>(state.range(0));
  spec.duration = 120;
  spec.seed = 5;
  spec.long_fraction = 0.05;
  const Trace trace = generate_trace(spec);
  SimConfig cfg;
  cfg.model = model_preset("llama3-8b");
  cfg.hw = hardware_preset("h100-80gb");
  cfg.par = {8, 1, 1};
  cfg.horizon = 600;
  cfg.record_batch_log = false;
  for (auto _ : state) benchmark::DoNotOptimize(run(trace, cfg).steps);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(trace.size()));
}
BENCHMARK(BM_SimulateTrace)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace

// The distro benchmark_main archive is LTO bytecode from another gcc.
BENCHMARK_MAIN();
