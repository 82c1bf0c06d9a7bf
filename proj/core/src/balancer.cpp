#include "lcsim/balancer.hpp"

#include <algorithm>
#include <tuple>

#include "lcsim/errors.hpp"
#include "lcsim/parallel_timing.hpp"

namespace lcsim {

namespace {

bool less_loaded(const KvpRankState& a, const KvpRankState& b) {
  return std::tie(a.pending_prefill_time, a.resident_kv_tokens, a.rank) <
         std::tie(b.pending_prefill_time, b.resident_kv_tokens, b.rank);
}

}  // namespace

int assign_request(std::int64_t first_shard_tokens, std::span<const KvpRankState> ranks) {
  const KvpRankState* best = nullptr;
  for (const auto& r : ranks) {
    if (r.free_tokens() < first_shard_tokens) continue;
    if (!best || less_loaded(r, *best)) best = &r;
  }
  if (!best) throw AdmissionError("no KVP rank has room for the request's first shard");
  return best->rank;
}

GrowResult maybe_grow_workers(std::int64_t incoming_tokens, const std::vector<int>& current,
                              std::span<const KvpRankState> all) {
  GrowResult out{current, false, false};
  if (current.empty() || incoming_tokens <= 0) return out;
  const auto& newest = all[static_cast<std::size_t>(current.back())];
  if (newest.free_tokens() >= incoming_tokens) return out;
  const KvpRankState* best = nullptr;
  for (const auto& r : all) {
    if (std::find(current.begin(), current.end(), r.rank) != current.end()) continue;
    if (r.free_tokens() <= 0) continue;
    if (!best || less_loaded(r, *best)) best = &r;
  }
  if (!best) {
    out.deferred = true;
    return out;
  }
  out.ranks.push_back(best->rank);
  out.grew = true;
  return out;
}

KvAllocator::KvAllocator(int ranks, std::int64_t token_limit) : limit_(token_limit) {
  if (ranks < 1) throw ConfigError("KvAllocator: need at least one rank");
  if (token_limit < 1) throw ConfigError("KvAllocator: token_limit must be >= 1");
  for (int r = 0; r < ranks; ++r) ranks_.push_back({r, 0, 0.0, token_limit});
}

bool KvAllocator::allocate(Request& req, std::int64_t tokens) {
  if (req.assigned_kvp_ranks.empty()) throw ConfigError("KvAllocator: request has no rank");
  bool grew = false;
  auto& held = held_[req.id];
  while (tokens > 0) {
    auto& newest = ranks_[static_cast<std::size_t>(req.assigned_kvp_ranks.back())];
    const std::int64_t room = std::max<std::int64_t>(0, newest.free_tokens());
    const std::int64_t put = std::min(room, tokens);
    newest.resident_kv_tokens += put;
    held[newest.rank] += put;
    tokens -= put;
    if (tokens == 0) break;
    const GrowResult g = maybe_grow_workers(tokens, req.assigned_kvp_ranks, ranks_);
    if (!g.grew) {
      ++violations_;
      newest.resident_kv_tokens += tokens;
      held[newest.rank] += tokens;
      break;
    }
    req.assigned_kvp_ranks = g.ranks;
    grew = true;
  }
  return grew;
}

void KvAllocator::release(Request& req) {
  const auto it = held_.find(req.id);
  if (it == held_.end()) return;
  for (const auto& [rank, tokens] : it->second) {
    ranks_[static_cast<std::size_t>(rank)].resident_kv_tokens -= tokens;
  }
  held_.erase(it);
}

std::int64_t KvAllocator::tokens_of(std::int64_t request_id) const {
  const auto it = held_.find(request_id);
  if (it == held_.end()) return 0;
  std::int64_t t = 0;
  for (const auto& [rank, tokens] : it->second) t += tokens;
  return t;
}

std::int64_t KvAllocator::total_resident() const {
  std::int64_t t = 0;
  for (const auto& r : ranks_) t += r.resident_kv_tokens;
  return t;
}

std::int64_t default_token_limit(const ModelConfig& model, const HardwareProfile& hw,
                                 const ParallelismConfig& par, int max_long_per_rank) {
  if (max_long_per_rank < 1) throw ConfigError("max_long_per_rank must be >= 1");
  const std::int64_t cap = kv_token_capacity(model, hw, par);
  if (cap <= 0) throw InfeasibleConfig("weights and activation reserve do not fit on a device");
  return std::max<std::int64_t>(1, cap / max_long_per_rank);
}

}  // namespace lcsim
