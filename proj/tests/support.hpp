#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lcsim/costmodel.hpp"
#include "lcsim/presets.hpp"
#include "lcsim/scheduler.hpp"

namespace lcsim::testing {

inline ModelConfig tiny_model(std::int64_t hq = 2, std::int64_t hkv = 1, std::int64_t d = 4,
                              std::int64_t layers = 1) {
  ModelConfig m;
  m.name = "tiny";
  m.num_query_heads = hq;
  m.num_kv_heads = hkv;
  m.head_dim = d;
  m.num_layers = layers;
  m.mlp_flops_per_token = 1.0;
  m.weight_bytes = 0.0;
  return m;
}

/// Hardware with a chosen compute/bandwidth ratio and no calibration losses.
inline HardwareProfile ratio_hw(double peak, double bw) {
  HardwareProfile hw = hardware_preset("h100-80gb");
  hw.peak_flops = peak;
  hw.mem_bandwidth = bw;
  hw.compute_efficiency = 1.0;
  hw.bandwidth_efficiency = 1.0;
  return hw;
}

inline Request make_request(std::int64_t id, double arrival, std::int64_t prefill,
                            std::int64_t decode = 1) {
  Request r;
  r.id = id;
  r.arrival_time = arrival;
  r.prefill_tokens = prefill;
  r.decode_tokens = decode;
  r.assigned_kvp_ranks = {0};
  return r;
}

struct ChunkingOutcome {
  double prefill_time = 0.0;     // sum of step times until the prefill is done
  double decode_p95 = 0.0;       // nearest-rank P95 of co-batched decode step latency
  double decode_max = 0.0;
  std::int64_t steps = 0;
};

/// One long prefill sharing every step with `decodes` running decodes of
/// `decode_ctx` cached tokens each; steps are packed by pack_batch.
inline ChunkingOutcome chunking_scenario(const RuntimePredictor& pred, const SchedulerConfig& cfg,
                                         std::int64_t prefill, int decodes,
                                         std::int64_t decode_ctx, double target) {
  Request head = make_request(0, 0.0, prefill);
  head.phase = Phase::Prefilling;
  std::vector<Request> dec;
  for (int i = 0; i < decodes; ++i) {
    Request d = make_request(1 + i, 0.0, decode_ctx, 1'000'000);
    d.phase = Phase::Decoding;
    d.prefill_done_tokens = decode_ctx;
    d.token_ts = {0.0};
    dec.push_back(d);
  }
  std::vector<Request*> dp;
  for (auto& d : dec) dp.push_back(&d);
  std::vector<Request*> q{&head};
  ChunkingOutcome out;
  std::vector<double> lat;
  while (head.remaining_prefill() > 0) {
    PackInput in{q, dp, StageWork{}, out.prefill_time, target};
    const BatchPlan plan = pack_batch(in, SLOSpec{}, cfg, pred);
    head.prefill_done_tokens += plan.prefill_entries.at(0).chunk_tokens;
    const double t = pred.traversal_time(plan.predicted_step_time, plan.tokens());
    out.prefill_time += plan.predicted_step_time;
    lat.push_back(t);
    ++out.steps;
  }
  std::sort(lat.begin(), lat.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(lat.size())));
  out.decode_p95 = lat[std::max<std::size_t>(rank, 1) - 1];
  out.decode_max = lat.back();
  return out;
}

}  // namespace lcsim::testing
