#include "lcsim/parallel_timing.hpp"

#include <algorithm>
#include <cmath>

#include "lcsim/errors.hpp"

namespace lcsim {

double PipelineSchedule::makespan() const {
  if (entries.empty()) return 0.0;
  double m = 0.0;
  for (const auto& row : entries) m = std::max(m, row.back().end);
  return m;
}

PipelineSchedule build_spp_schedule(const std::vector<std::vector<double>>& times, double comm) {
  if (times.empty() || times.front().empty()) {
    throw ConfigError("build_spp_schedule: empty time table");
  }
  if (comm < 0) throw ConfigError("build_spp_schedule: negative comm");
  const std::size_t stages = times.front().size();
  PipelineSchedule sched;
  sched.stages = static_cast<int>(stages);
  sched.entries.resize(times.size(), std::vector<StageInterval>(stages));
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i].size() != stages) throw ConfigError("build_spp_schedule: ragged time table");
    for (std::size_t s = 0; s < stages; ++s) {
      const double t = times[i][s];
      if (t < 0 || !std::isfinite(t)) throw ConfigError("build_spp_schedule: bad stage time");
      double start = 0.0;
      if (s > 0) start = sched.entries[i][s - 1].end + comm;
      if (i > 0) start = std::max(start, sched.entries[i - 1][s].end);
      sched.entries[i][s] = {start, start + t};
    }
  }
  return sched;
}

double spp_closed_form(double sequential_time, std::int64_t n, std::int64_t c, double comm,
                       int p_spp) {
  if (c < 1 || p_spp < 1) throw ConfigError("spp_closed_form: need c >= 1, p_spp >= 1");
  return sequential_time / p_spp + comm * static_cast<double>(n) / static_cast<double>(c);
}

SppPrefillTime spp_prefill_time(std::int64_t n, std::int64_t c,
                                const std::function<double(std::int64_t, std::int64_t)>& chunk_time,
                                double comm, int p_spp) {
  if (c < 1 || n < c || p_spp < 1) {
    throw ConfigError("spp_prefill_time: need n >= c >= 1 and p_spp >= 1");
  }
  const std::int64_t chunks = (n + c - 1) / c;
  std::vector<std::vector<double>> table(static_cast<std::size_t>(chunks));
  SppPrefillTime out;
  for (std::int64_t i = 1; i <= chunks; ++i) {
    const std::int64_t tokens = std::min(c, n - (i - 1) * c);
    const double t = chunk_time(i, tokens);
    out.sequential += t;
    table[static_cast<std::size_t>(i - 1)].assign(static_cast<std::size_t>(p_spp), t / p_spp);
  }
  out.closed_form = spp_closed_form(out.sequential, n, c, p_spp > 1 ? comm : 0.0, p_spp);
  out.makespan = build_spp_schedule(table, comm).makespan();
  return out;
}

double kvp_decode_time(double attn_time, double total_time, int p_kvp, double comm) {
  if (p_kvp < 1) throw ConfigError("kvp: p_kvp must be >= 1");
  if (attn_time < 0 || comm < 0) throw ConfigError("kvp: times must be >= 0");
  if (attn_time > total_time) throw ConfigError("kvp: attention time exceeds total time");
  return attn_time / p_kvp + (total_time - attn_time) + comm;
}

double kvp_chunk_time(std::int64_t chunk_index, std::int64_t chunk, double attn_time,
                      double total_time, int p_kvp, double comm) {
  if (chunk_index < 1 || chunk < 1) throw ConfigError("kvp: chunk index and size must be >= 1");
  return kvp_decode_time(attn_time, total_time, p_kvp, comm);
}

DecodeSplit decode_split(const ModelConfig& model, const HardwareProfile& hw,
                         ParallelismConfig par, std::int64_t context_tokens) {
  par.kvp = 1;
  const RuntimePredictor pred(model, hw, par);
  StageWork work;
  pred.add_decodes(work, 1, context_tokens);
  const StageCost cost = pred.cost(work);
  return {cost.attention_time, cost.total};
}

double modeled_tpot(const ModelConfig& model, const HardwareProfile& hw, ParallelismConfig par,
                    std::int64_t context_tokens) {
  const DecodeSplit split = decode_split(model, hw, par, context_tokens);
  const RuntimePredictor pred(model, hw, par);
  const double comm = par.kvp > 1 ? pred.kvp_comm(1) * pred.calibration_scale() : 0.0;
  const double stage = kvp_decode_time(split.attention, split.total, par.kvp, comm);
  return pred.traversal_time(stage, 1);
}

MemoryCheck memory_feasible(std::int64_t max_context, const ModelConfig& model,
                            const HardwareProfile& hw, const ParallelismConfig& par,
                            double weight_bytes) {
  const double tp = static_cast<double>(par.tp);
  const double spp = static_cast<double>(par.spp);
  const double kv_split = std::min(tp, static_cast<double>(model.num_kv_heads)) * spp *
                          static_cast<double>(par.kvp);
  MemoryCheck m;
  m.per_device_bytes = weight_bytes / (tp * spp) + kv_cache_bytes(max_context, model) / kv_split +
                       hw.activation_reserve_bytes;
  m.headroom_bytes = hw.mem_capacity - m.per_device_bytes;
  m.feasible = m.headroom_bytes >= 0;
  return m;
}

std::int64_t kv_token_capacity(const ModelConfig& model, const HardwareProfile& hw,
                               const ParallelismConfig& par) {
  ParallelismConfig one = par;
  one.kvp = 1;
  const MemoryCheck base = memory_feasible(0, model, hw, one, model.weight_bytes);
  if (!base.feasible) return 0;
  // Bytes per cached token on one device of one KVP rank.
  const double per_token = kv_cache_bytes(1, model) /
                           (std::min<double>(par.tp, static_cast<double>(model.num_kv_heads)) *
                            static_cast<double>(par.spp));
  return static_cast<std::int64_t>(base.headroom_bytes / per_token);
}

}  // namespace lcsim
