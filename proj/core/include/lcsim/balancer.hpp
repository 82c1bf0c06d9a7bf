#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "lcsim/scheduler.hpp"

namespace lcsim {

struct KvpRankState {
  int rank = 0;
  std::int64_t resident_kv_tokens = 0;
  double pending_prefill_time = 0.0;
  std::int64_t token_limit = 0;

  std::int64_t free_tokens() const { return token_limit - resident_kv_tokens; }
};

/// Rank minimizing (pending_prefill_time, resident_kv_tokens), ties by rank
/// id, among ranks with room for `first_shard_tokens`. Throws AdmissionError.
int assign_request(std::int64_t first_shard_tokens, std::span<const KvpRankState> ranks);

struct GrowResult {
  std::vector<int> ranks;
  bool grew = false;
  bool deferred = false;  // wanted to grow but no rank had room
};

/// Appends the least-loaded rank outside `current` once the newest rank is at
/// its token limit and `incoming_tokens` more need space.
GrowResult maybe_grow_workers(std::int64_t incoming_tokens, const std::vector<int>& current,
                              std::span<const KvpRankState> all);

/// Per-rank KV residency with fill-then-spill growth. Keeps the sum of rank
/// residency equal to the sum of per-request allocations.
class KvAllocator {
 public:
  KvAllocator(int ranks, std::int64_t token_limit);

  std::span<const KvpRankState> ranks() const { return ranks_; }
  std::span<KvpRankState> ranks() { return ranks_; }
  std::int64_t token_limit() const { return limit_; }

  /// Places `tokens` of `req` starting on its newest rank; grows req's rank
  /// set when that rank fills. Overflow with no free rank stays on the newest
  /// rank and counts as a violation. Returns true if the set grew.
  bool allocate(Request& req, std::int64_t tokens);
  void release(Request& req);

  std::int64_t tokens_of(std::int64_t request_id) const;
  std::int64_t growth_violations() const { return violations_; }
  std::int64_t total_resident() const;

 private:
  std::int64_t limit_;
  std::vector<KvpRankState> ranks_;
  std::map<std::int64_t, std::map<int, std::int64_t>> held_;  // request -> rank -> tokens
  std::int64_t violations_ = 0;
};

/// Default per-rank token limit: spare KV memory over the configured number of
/// concurrent long requests per rank.
std::int64_t default_token_limit(const ModelConfig& model, const HardwareProfile& hw,
                                 const ParallelismConfig& par, int max_long_per_rank);

}  // namespace lcsim
