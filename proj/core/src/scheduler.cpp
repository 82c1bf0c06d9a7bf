#include "lcsim/scheduler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <tuple>

#include "lcsim/errors.hpp"

namespace lcsim {

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Waiting: return "waiting";
    case Phase::Prefilling: return "prefilling";
    case Phase::Decoding: return "decoding";
    case Phase::Finished: return "finished";
  }
  return "?";
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::FCFS: return "fcfs";
    case Policy::EDF: return "edf";
    case Policy::LRS: return "lrs";
    case Policy::ILRS: return "ilrs";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "fcfs") return Policy::FCFS;
  if (lower == "edf") return Policy::EDF;
  if (lower == "lrs") return Policy::LRS;
  if (lower == "ilrs") return Policy::ILRS;
  throw ConfigError("unknown policy '" + std::string(name) + "' (fcfs|edf|lrs|ilrs)");
}

void SLOSpec::validate() const {
  if (!(ttft_slo_scale >= 1.0)) throw ConfigError("slo.ttft_slo_scale must be >= 1");
  if (!(ttft_slo_floor >= 0.0)) throw ConfigError("slo.ttft_slo_floor must be >= 0");
  if (!(tpot_slo > 0.0)) throw ConfigError("slo.tpot_slo must be > 0");
  if (!(max_sharing_fraction >= 0.0 && max_sharing_fraction <= 1.0)) {
    throw ConfigError("slo.max_sharing_fraction must lie in [0, 1]");
  }
}

void SchedulerConfig::validate() const {
  if (static_chunk < 1) throw ConfigError("scheduler.static_chunk must be >= 1");
  if (max_chunk < kChunkQuantum) throw ConfigError("scheduler.max_chunk must be >= 32");
  if (min_chunk < 0 || min_chunk > max_chunk) {
    throw ConfigError("scheduler.min_chunk must lie in [0, max_chunk]");
  }
  if (!(packer_tolerance >= 0.0)) throw ConfigError("scheduler.packer_tolerance must be >= 0");
  if (max_secondary_prefills < 0) throw ConfigError("scheduler.max_secondary_prefills must be >= 0");
}

double deadline_duration(const Request& req, const SLOSpec& slo, const RuntimePredictor& pred) {
  return std::max(slo.ttft_slo_floor,
                  slo.ttft_slo_scale * pred.isolated_prefill_time(0, req.prefill_tokens));
}

void assign_deadline(Request& req, const SLOSpec& slo, const RuntimePredictor& pred) {
  req.deadline_duration = deadline_duration(req, slo, pred);
  if (!(req.deadline_duration > 0)) {
    // Zero-length prompts with a zero floor; keep the slack formula defined.
    req.deadline_duration = 1e-9;
  }
  req.deadline_ts = req.arrival_time + req.deadline_duration;
}

double absolute_slack(const Request& req, double now, const RuntimePredictor& pred) {
  if (!req.waiting_for_prefill()) {
    throw ConfigError("slack is only defined for requests with prefill work left");
  }
  return (req.deadline_ts - now) -
         pred.isolated_prefill_time(req.prefill_done_tokens, req.prefill_tokens);
}

double relative_slack(const Request& req, double now, const RuntimePredictor& pred) {
  if (!(req.deadline_duration > 0)) throw ConfigError("relative_slack: deadline_duration must be > 0");
  return absolute_slack(req, now, pred) / req.deadline_duration;
}

std::vector<Request*> prioritize(std::span<Request* const> queue, Policy policy, double now,
                                 const RuntimePredictor& pred) {
  std::vector<std::pair<double, Request*>> keyed;
  keyed.reserve(queue.size());
  for (Request* r : queue) {
    double key = 0.0;
    switch (policy) {
      case Policy::FCFS: key = r->arrival_time; break;
      case Policy::EDF: key = r->deadline_ts; break;
      case Policy::LRS: key = absolute_slack(*r, now, pred); break;
      case Policy::ILRS: key = relative_slack(*r, now, pred); break;
    }
    keyed.emplace_back(key, r);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first, a.second->arrival_time, a.second->id) <
           std::tie(b.first, b.second->arrival_time, b.second->id);
  });
  std::vector<Request*> out;
  out.reserve(keyed.size());
  for (auto& [k, r] : keyed) out.push_back(r);
  return out;
}

namespace {

double time_with(const StageWork& load, const RuntimePredictor& pred, const Request& req,
                 std::int64_t tokens) {
  StageWork w = load;
  pred.add(w, Segment{req.prefill_done_tokens, tokens, req.kvp_shards(), false});
  return pred.cost(w).total;
}

// Largest c in {min(q*k, hi)} fitting `limit`; 0 if even the smallest does not.
std::int64_t largest_fitting(const StageWork& load, const RuntimePredictor& pred,
                             const Request& req, std::int64_t lo, std::int64_t hi, double limit) {
  if (hi <= 0 || lo > hi) return 0;
  auto at = [&](std::int64_t k) { return std::min(k * kChunkQuantum, hi); };
  std::int64_t k_lo = std::max<std::int64_t>(1, (lo + kChunkQuantum - 1) / kChunkQuantum);
  std::int64_t k_hi = (hi + kChunkQuantum - 1) / kChunkQuantum;
  if (at(k_lo) < lo) return 0;
  if (time_with(load, pred, req, at(k_lo)) > limit) return 0;
  while (k_lo < k_hi) {
    const std::int64_t mid = k_lo + (k_hi - k_lo + 1) / 2;
    if (time_with(load, pred, req, at(mid)) <= limit) {
      k_lo = mid;
    } else {
      k_hi = mid - 1;
    }
  }
  return at(k_lo);
}

}  // namespace

std::int64_t adapt_chunk_size(const Request& req, double target, const StageWork& load,
                              const RuntimePredictor& pred, std::int64_t floor_chunk,
                              std::int64_t max_chunk) {
  const std::int64_t remaining = req.remaining_prefill();
  if (remaining <= 0) return 0;
  const std::int64_t hi = std::min(remaining, max_chunk);
  const std::int64_t lo = std::min(floor_chunk, hi);
  const std::int64_t fit = largest_fitting(load, pred, req, lo, hi, target);
  return fit > 0 ? fit : lo;
}

std::int64_t chunk_floor(const SchedulerConfig& cfg, const RuntimePredictor& pred) {
  if (cfg.min_chunk > 0) return cfg.min_chunk;
  return std::min(cfg.max_chunk, min_efficient_chunk(pred.model(), pred.hardware()));
}

std::int64_t BatchPlan::tokens() const {
  std::int64_t t = static_cast<std::int64_t>(decode_request_ids.size());
  for (const auto& e : prefill_entries) t += e.chunk_tokens;
  return t;
}

BatchPlan pack_batch(const PackInput& in, const SLOSpec& slo, const SchedulerConfig& cfg,
                     const RuntimePredictor& pred) {
  BatchPlan plan;
  plan.target_batch_time = in.target_batch_time;
  plan.work = in.base;
  for (Request* d : in.decoding) {
    pred.add_decodes(plan.work, 1, d->kv_tokens(), d->kvp_shards());
    plan.decode_request_ids.push_back(d->id);
  }
  plan.token_budget = static_cast<std::int64_t>(in.decoding.size()) + cfg.max_chunk;

  auto finish = [&] {
    const bool any = plan.work.any_linear || plan.work.attention_time > 0;
    plan.predicted_step_time = any ? pred.cost(plan.work).total : 0.0;
    return plan;
  };
  if (in.ordered_queue.empty()) return finish();

  // Head of queue.
  Request& head = *in.ordered_queue.front();
  std::int64_t head_chunk = 0;
  if (cfg.chunk_policy == ChunkPolicy::Static) {
    head_chunk = std::min(cfg.static_chunk, head.remaining_prefill());
  } else {
    head_chunk = adapt_chunk_size(head, in.target_batch_time, plan.work, pred,
                                  chunk_floor(cfg, pred), cfg.max_chunk);
  }
  head_chunk = std::min(head_chunk, plan.token_budget - plan.tokens());
  if (head_chunk <= 0) return finish();
  pred.add(plan.work, Segment{head.prefill_done_tokens, head_chunk, head.kvp_shards(), false});
  plan.prefill_entries.push_back({head.id, head_chunk, head.prefill_done_tokens});

  // Prefill-prefill batching.
  if (!cfg.ppb_enabled() || slo.max_sharing_fraction <= 0 || in.ordered_queue.size() < 2 ||
      cfg.max_secondary_prefills == 0) {
    return finish();
  }
  const double base = pred.cost(plan.work).total;
  if (!(base < in.target_batch_time || head_chunk < pred.linear_saturation_tokens())) {
    return finish();
  }
  const double limit = std::max(in.target_batch_time, base) * (1.0 + cfg.packer_tolerance);
  std::int64_t allowance = std::min<std::int64_t>(
      static_cast<std::int64_t>(std::floor(slo.max_sharing_fraction *
                                           static_cast<double>(plan.token_budget))),
      plan.token_budget - plan.tokens());

  const std::size_t end =
      std::min(in.ordered_queue.size(), 1 + static_cast<std::size_t>(cfg.max_secondary_prefills));
  std::vector<double> weights;
  for (std::size_t j = 1; j < end; ++j) {
    const double s = relative_slack(*in.ordered_queue[j], in.now, pred);
    weights.push_back(std::clamp(1.0 - s, 0.05, 1.0));
  }
  double weight_left = 0.0;
  for (double w : weights) weight_left += w;

  for (std::size_t j = 1; j < end && allowance > 0; ++j) {
    Request& r = *in.ordered_queue[j];
    const double w = weights[j - 1];
    const auto share = std::min<std::int64_t>(
        r.remaining_prefill(),
        static_cast<std::int64_t>(std::floor(static_cast<double>(allowance) * w / weight_left)));
    weight_left -= w;
    const std::int64_t fit = largest_fitting(plan.work, pred, r, 1, share, limit);
    if (fit <= 0) continue;
    pred.add(plan.work, Segment{r.prefill_done_tokens, fit, r.kvp_shards(), false});
    plan.prefill_entries.push_back({r.id, fit, r.prefill_done_tokens});
    allowance -= fit;
  }
  return finish();
}

}  // namespace lcsim
