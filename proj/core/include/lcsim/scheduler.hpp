#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcsim/costmodel.hpp"

namespace lcsim {

enum class Phase { Waiting, Prefilling, Decoding, Finished };
enum class Policy { FCFS, EDF, LRS, ILRS };
enum class ChunkPolicy { Adaptive, Static };

std::string_view to_string(Phase p);
std::string_view to_string(Policy p);
Policy parse_policy(std::string_view name);  // case-insensitive, throws ConfigError

struct Request {
  std::int64_t id = 0;
  double arrival_time = 0.0;
  std::int64_t prefill_tokens = 0;
  std::int64_t decode_tokens = 0;  // output tokens, including the first one
  Phase phase = Phase::Waiting;
  std::int64_t prefill_done_tokens = 0;
  double deadline_duration = 0.0;
  double deadline_ts = 0.0;
  std::vector<int> assigned_kvp_ranks;  // first entry is the home rank
  std::optional<double> first_token_ts;
  std::vector<double> token_ts;  // every emitted token, first one included

  std::int64_t remaining_prefill() const { return prefill_tokens - prefill_done_tokens; }
  std::int64_t tokens_emitted() const { return static_cast<std::int64_t>(token_ts.size()); }
  /// Tokens in the KV cache right now.
  std::int64_t kv_tokens() const {
    return prefill_done_tokens + std::max<std::int64_t>(0, tokens_emitted() - 1);
  }
  int kvp_shards() const {
    return assigned_kvp_ranks.empty() ? 1 : static_cast<int>(assigned_kvp_ranks.size());
  }
  bool waiting_for_prefill() const {
    return phase == Phase::Waiting || phase == Phase::Prefilling;
  }
};

struct SLOSpec {
  double ttft_slo_scale = 3.0;
  double ttft_slo_floor = 2.0;  // s
  double tpot_slo = 0.05;       // s
  double max_sharing_fraction = 0.5;

  void validate() const;
};

struct SchedulerConfig {
  Policy policy = Policy::ILRS;
  /// Unset: on for ILRS only.
  std::optional<bool> prefill_prefill_batching;
  ChunkPolicy chunk_policy = ChunkPolicy::Adaptive;
  std::int64_t static_chunk = 512;
  std::int64_t max_chunk = 4096;
  std::int64_t min_chunk = 0;  // 0 means min_efficient_chunk
  double packer_tolerance = 0.1;
  int max_secondary_prefills = 8;

  bool ppb_enabled() const {
    return prefill_prefill_batching.value_or(policy == Policy::ILRS);
  }
  void validate() const;
};

/// Deadline duration: max(floor, scale * isolated prefill estimate).
double deadline_duration(const Request& req, const SLOSpec& slo, const RuntimePredictor& pred);

/// Sets deadline_duration and deadline_ts.
void assign_deadline(Request& req, const SLOSpec& slo, const RuntimePredictor& pred);

/// Absolute slack: time left until the deadline minus remaining prefill time.
double absolute_slack(const Request& req, double now, const RuntimePredictor& pred);

/// Absolute slack normalized by the deadline duration; may be negative.
double relative_slack(const Request& req, double now, const RuntimePredictor& pred);

/// Stable order by policy key; ties by (arrival_time, id).
std::vector<Request*> prioritize(std::span<Request* const> queue, Policy policy, double now,
                                 const RuntimePredictor& pred);

/// Largest quantized chunk for `req` whose micro-batch, on top of `load`,
/// fits `target`. Clamped to [floor, min(remaining, max_chunk)]; returns the
/// floor (or the remainder, if smaller) when nothing fits.
std::int64_t adapt_chunk_size(const Request& req, double target, const StageWork& load,
                              const RuntimePredictor& pred, std::int64_t floor_chunk,
                              std::int64_t max_chunk);

struct PrefillEntry {
  std::int64_t request_id = 0;
  std::int64_t chunk_tokens = 0;
  std::int64_t kv_before = 0;
};

struct BatchPlan {
  std::vector<std::int64_t> decode_request_ids;
  std::vector<PrefillEntry> prefill_entries;
  std::int64_t token_budget = 0;
  double target_batch_time = 0.0;
  double predicted_step_time = 0.0;
  StageWork work;

  std::int64_t tokens() const;
  bool empty() const { return decode_request_ids.empty() && prefill_entries.empty(); }
};

struct PackInput {
  std::span<Request* const> ordered_queue;  // prefill candidates, priority order
  std::span<Request* const> decoding;       // decodes that must run this step
  StageWork base;                           // pre-existing work on this rank
  double now = 0.0;
  double target_batch_time = 0.0;  // per-stage budget
};

/// All decodes, then the head prefill, then (if enabled and the head chunk
/// leaves headroom) chunks from further queued requests, weighted toward
/// lower relative slack and capped at max_sharing_fraction of the budget.
BatchPlan pack_batch(const PackInput& in, const SLOSpec& slo, const SchedulerConfig& cfg,
                     const RuntimePredictor& pred);

/// Resolves min_chunk = 0 to the model/hardware efficient floor.
std::int64_t chunk_floor(const SchedulerConfig& cfg, const RuntimePredictor& pred);

}  // namespace lcsim
