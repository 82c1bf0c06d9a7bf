#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lcsim/costmodel.hpp"

namespace lcsim {

struct StageInterval {
  double start = 0.0;
  double end = 0.0;
};

/// entries[i][s] is chunk i on stage s.
struct PipelineSchedule {
  int stages = 0;
  std::vector<std::vector<StageInterval>> entries;

  std::size_t chunks() const { return entries.size(); }
  double makespan() const;
};

/// Earliest-start SPP schedule. Chunk i enters stage s once it left stage s-1
/// (plus `comm`) and chunk i-1 left stage s. Each inter-stage link is assumed
/// to carry one transfer at a time without blocking compute.
PipelineSchedule build_spp_schedule(const std::vector<std::vector<double>>& chunk_stage_times,
                                    double comm);

/// T_p / p + comm * n / c.
double spp_closed_form(double sequential_time, std::int64_t n, std::int64_t c, double comm,
                       int p_spp);

struct SppPrefillTime {
  double closed_form = 0.0;
  double makespan = 0.0;
  double sequential = 0.0;  // T_p(n, c)
};

/// `chunk_time(i, tokens)` is the unpipelined whole-model time of chunk i
/// (1-based); each stage takes 1/p_spp of it. The last chunk may be partial.
SppPrefillTime spp_prefill_time(std::int64_t n, std::int64_t c,
                                const std::function<double(std::int64_t, std::int64_t)>& chunk_time,
                                double comm, int p_spp);

/// attn / p + (total - attn) + comm.
double kvp_decode_time(double attn_time, double total_time, int p_kvp, double comm);
/// Same form for one prefill chunk; `chunk_index` is only range-checked.
double kvp_chunk_time(std::int64_t chunk_index, std::int64_t chunk, double attn_time,
                      double total_time, int p_kvp, double comm);

/// Attention/total split of one single-request decode step on one stage
/// without KVP, used to feed kvp_decode_time.
struct DecodeSplit {
  double attention = 0.0;
  double total = 0.0;
};
DecodeSplit decode_split(const ModelConfig& model, const HardwareProfile& hw,
                         ParallelismConfig par, std::int64_t context_tokens);

/// TPOT of a lone decode at `context_tokens` with p_kvp ranks: per-stage
/// time from kvp_decode_time, times the pipeline traversal.
double modeled_tpot(const ModelConfig& model, const HardwareProfile& hw, ParallelismConfig par,
                    std::int64_t context_tokens);

struct MemoryCheck {
  bool feasible = false;
  double per_device_bytes = 0.0;
  double headroom_bytes = 0.0;  // capacity - per_device_bytes; negative when infeasible
};

/// Weights split over tp*spp, KV over (heads split by tp) * spp * kvp, plus the
/// hardware's activation reserve.
MemoryCheck memory_feasible(std::int64_t max_context, const ModelConfig& model,
                            const HardwareProfile& hw, const ParallelismConfig& par,
                            double weight_bytes);

/// KV tokens one device's spare memory can hold once weights and reserve fit.
std::int64_t kv_token_capacity(const ModelConfig& model, const HardwareProfile& hw,
                               const ParallelismConfig& par);

}  // namespace lcsim
