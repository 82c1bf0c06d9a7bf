#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lcsim/costmodel.hpp"
#include "lcsim/scheduler.hpp"
#include "lcsim/workload.hpp"

namespace lcsim {

struct BalancerConfig {
  std::int64_t token_limit = 0;  // 0: derived from memory headroom
  int max_long_per_rank = 1;
};

struct SimConfig {
  ModelConfig model;
  HardwareProfile hw;
  ParallelismConfig par;
  SLOSpec slo;
  SchedulerConfig scheduler;
  BalancerConfig balancer;
  double horizon = std::numeric_limits<double>::infinity();
  bool exact_pipeline = false;
  bool record_batch_log = true;
  double calibration_scale = 1.0;

  void validate() const;
  /// Per-stage step budget that keeps TPOT at the SLO across the pipeline.
  double target_batch_time() const { return slo.tpot_slo / par.spp; }
};

struct RequestRecord {
  std::int64_t index = 0;
  std::string id;
  double arrival_s = 0.0;
  std::int64_t prefill_tokens = 0;
  std::int64_t decode_tokens = 0;
  double deadline_s = 0.0;  // duration
  std::int64_t prefill_done_tokens = 0;
  std::optional<double> ttft;  // unset: no first token by the horizon
  std::vector<double> token_ts;
  std::vector<double> tpot;
  bool finished = false;
  int kvp_ranks = 0;

  bool slo_violated() const;
};

struct LoggedPrefill {
  std::int64_t request = 0;
  std::int64_t tokens = 0;
};

struct BatchLogEntry {
  int replica = 0;
  std::int64_t step = 0;
  double start = 0.0;
  double stage_time = 0.0;
  double exit = 0.0;  // when the micro-batch leaves the last stage
  double predicted = 0.0;
  std::vector<std::int64_t> decodes;
  std::vector<LoggedPrefill> prefills;
};

struct SimMetrics {
  std::vector<RequestRecord> requests;
  std::int64_t slo_violations = 0;
  std::int64_t preemptions = 0;  // prefill requeues
  std::int64_t batch_overruns = 0;
  std::int64_t kvp_growth_violations = 0;
  std::int64_t admission_waits = 0;
  std::int64_t steps = 0;
  double executed_flops = 0.0;
  double moved_bytes = 0.0;
  double elapsed = 0.0;  // last micro-batch exit
  int device_count = 0;
  double mfu = 0.0;
  double mbu = 0.0;
  double horizon = std::numeric_limits<double>::infinity();
  std::vector<BatchLogEntry> batch_log;

  std::int64_t finished_count() const;
};

/// Deterministic step-level simulation of one replica (all KVP ranks).
SimMetrics run(const Trace& trace, const SimConfig& config);

/// Static partition: requests with prefill <= threshold go to the short pool,
/// the rest to the long pool. A missing pool starves its requests.
struct PoolSplit {
  std::int64_t threshold = 8192;
  std::optional<ParallelismConfig> short_pool;
  std::optional<ParallelismConfig> long_pool;
};

SimMetrics run_baseline_pools(const Trace& trace, const SimConfig& config, const PoolSplit& split);

struct AuditReport {
  std::int64_t violations = 0;
  std::vector<std::string> messages;  // first few only

  bool ok() const { return violations == 0; }
};

/// Every decoding request runs in the first micro-batch that starts after its
/// previous token left the pipeline, until it finishes.
AuditReport audit_decode_non_preemption(const SimMetrics& metrics);
/// Logged prefill tokens per request add up to its progress, and to its
/// prompt length once it produced a first token.
AuditReport audit_work_conservation(const SimMetrics& metrics);

}  // namespace lcsim
