#include "lcsim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "lcsim/balancer.hpp"
#include "lcsim/errors.hpp"
#include "lcsim/parallel_timing.hpp"

namespace lcsim {

namespace {

double tol(double x) { return 1e-9 * std::max(1.0, std::abs(x)); }

bool eligible_at(double token_ts, double start) { return token_ts <= start + tol(start); }

template <typename T>
void erase_value(std::vector<T>& v, const T& x) {
  v.erase(std::remove(v.begin(), v.end(), x), v.end());
}

class Engine {
 public:
  Engine(const Trace& trace, const SimConfig& cfg)
      : trace_(trace),
        cfg_(cfg),
        pred_(cfg.model, cfg.hw, cfg.par),
        kv_(cfg.par.kvp, cfg.balancer.token_limit > 0
                             ? cfg.balancer.token_limit
                             : default_token_limit(cfg.model, cfg.hw, cfg.par,
                                                   cfg.balancer.max_long_per_rank)),
        queues_(static_cast<std::size_t>(cfg.par.kvp)),
        decoding_(static_cast<std::size_t>(cfg.par.kvp)),
        stage_free_(static_cast<std::size_t>(cfg.par.spp), 0.0) {
    pred_.set_calibration_scale(cfg.calibration_scale);
    bubble_limit_ = (cfg.par.spp - 1) * pred_.pipeline_comm(cfg.scheduler.max_chunk) * 1.001;
    reqs_.resize(trace.size());
    counted_wait_.assign(trace.size(), false);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      if (trace[i].arrival_s < trace[i - 1].arrival_s) {
        throw ConfigError("trace must be sorted by arrival time");
      }
    }
  }

  SimMetrics run() {
    const double target = cfg_.target_batch_time();
    while (clock_ < cfg_.horizon) {
      admit();
      const bool any_prefill = std::any_of(queues_.begin(), queues_.end(),
                                           [](const auto& q) { return !q.empty(); });
      const bool any_decoding = std::any_of(decoding_.begin(), decoding_.end(),
                                            [](const auto& d) { return !d.empty(); });
      if (!any_prefill && !any_decoding) {
        if (next_ < trace_.size() && trace_[next_].arrival_s < cfg_.horizon) {
          clock_ = std::max(clock_, trace_[next_].arrival_s);
          continue;
        }
        break;
      }
      std::vector<std::vector<Request*>> eligible(decoding_.size());
      bool any_eligible = false;
      double wake = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < decoding_.size(); ++r) {
        for (auto id : decoding_[r]) {
          Request& req = reqs_[static_cast<std::size_t>(id)];
          if (eligible_at(req.token_ts.back(), clock_)) {
            eligible[r].push_back(&req);
            any_eligible = true;
          } else {
            wake = std::min(wake, req.token_ts.back());
          }
        }
      }
      if (!any_prefill && !any_eligible) {
        if (next_ < trace_.size()) wake = std::min(wake, trace_[next_].arrival_s);
        clock_ = std::max(clock_, wake);
        continue;
      }
      // A token still crossing the last inter-stage links: hold stage 1 for
      // that short bubble rather than pushing the decode a whole cycle back.
      if (wake > clock_ && wake - clock_ <= bubble_limit_) {
        clock_ = wake;
        continue;
      }
      step(eligible, target);
    }
    return finish();
  }

 private:
  void admit() {
    while (next_ < trace_.size() && trace_[next_].arrival_s <= clock_ &&
           trace_[next_].arrival_s < cfg_.horizon) {
      const auto& e = trace_[next_];
      Request& req = reqs_[next_];
      req.id = static_cast<std::int64_t>(next_);
      req.arrival_time = e.arrival_s;
      req.prefill_tokens = e.prefill_tokens;
      req.decode_tokens = e.decode_tokens;
      assign_deadline(req, cfg_.slo, pred_);
      pending_.push_back(req.id);
      ++next_;
    }
    std::deque<std::int64_t> still;
    for (auto id : pending_) {
      Request& req = reqs_[static_cast<std::size_t>(id)];
      auto ranks = kv_.ranks();
      for (auto& rs : ranks) {
        rs.pending_prefill_time = 0.0;
        for (auto qid : queues_[static_cast<std::size_t>(rs.rank)]) {
          const Request& q = reqs_[static_cast<std::size_t>(qid)];
          rs.pending_prefill_time += pred_.isolated_prefill_time(q.prefill_done_tokens, q.prefill_tokens);
        }
      }
      const std::int64_t first =
          std::min(req.prefill_tokens + req.decode_tokens, kv_.token_limit());
      try {
        const int rank = assign_request(first, kv_.ranks());
        req.assigned_kvp_ranks = {rank};
        queues_[static_cast<std::size_t>(rank)].push_back(id);
      } catch (const AdmissionError&) {
        if (!counted_wait_[static_cast<std::size_t>(id)]) {
          counted_wait_[static_cast<std::size_t>(id)] = true;
          ++m_.admission_waits;
        }
        still.push_back(id);
      }
    }
    pending_ = std::move(still);
  }

  void step(const std::vector<std::vector<Request*>>& eligible, double target) {
    const std::size_t nranks = queues_.size();
    std::vector<BatchPlan> plans(nranks);
    for (std::size_t r = 0; r < nranks; ++r) {
      std::vector<Request*> queue;
      for (auto id : queues_[r]) queue.push_back(&reqs_[static_cast<std::size_t>(id)]);
      const auto ordered = prioritize(queue, cfg_.scheduler.policy, clock_, pred_);
      PackInput in{ordered, eligible[r], StageWork{}, clock_, target};
      plans[r] = pack_batch(in, cfg_.slo, cfg_.scheduler, pred_);
    }
    // KV shards held on other ranks add attention work there.
    for (std::size_t r = 0; r < nranks; ++r) {
      auto foreign = [&](const Request& req, std::int64_t kv_before, std::int64_t tokens) {
        if (req.kvp_shards() < 2) return;
        for (std::size_t k = 1; k < req.assigned_kvp_ranks.size(); ++k) {
          pred_.add(plans[static_cast<std::size_t>(req.assigned_kvp_ranks[k])].work,
                    Segment{kv_before, tokens, req.kvp_shards(), true});
        }
      };
      for (auto id : plans[r].decode_request_ids) {
        const Request& req = reqs_[static_cast<std::size_t>(id)];
        foreign(req, req.kv_tokens(), 1);
      }
      for (const auto& e : plans[r].prefill_entries) {
        foreign(reqs_[static_cast<std::size_t>(e.request_id)], e.kv_before, e.chunk_tokens);
      }
    }

    double tau = 0.0;
    double predicted = 0.0;
    std::int64_t tokens = 0;
    for (const auto& p : plans) {
      const bool any = p.work.any_linear || p.work.attention_time > 0;
      if (any) tau = std::max(tau, pred_.cost(p.work).total);
      predicted = std::max(predicted, p.predicted_step_time);
      tokens = std::max(tokens, p.tokens());
      m_.executed_flops += p.work.model_flops;
      m_.moved_bytes += p.work.model_attention_bytes + (p.work.any_linear ? cfg_.model.weight_bytes : 0.0);
    }
    if (tau > target * (1.0 + cfg_.scheduler.packer_tolerance)) ++m_.batch_overruns;

    const int p = cfg_.par.spp;
    const double comm = pred_.pipeline_comm(std::max<std::int64_t>(tokens, 1));
    const double start = clock_;
    double exit = 0.0;
    if (cfg_.exact_pipeline) {
      double end = std::max(start, stage_free_[0]) + tau;
      stage_free_[0] = end;
      for (int s = 1; s < p; ++s) {
        const double st = std::max(end + comm, stage_free_[static_cast<std::size_t>(s)]);
        end = st + tau;
        stage_free_[static_cast<std::size_t>(s)] = end;
      }
      exit = end;
    } else {
      // Micro-batches leave the pipeline in order; a short one cannot pass
      // a longer one still ahead of it.
      exit = std::max(start + p * tau + (p - 1) * comm, last_exit_ + tau);
    }
    last_exit_ = exit;
    clock_ = start + tau;
    m_.elapsed = std::max(m_.elapsed, exit);

    BatchLogEntry log;
    log.step = m_.steps;
    log.start = start;
    log.stage_time = tau;
    log.exit = exit;
    log.predicted = predicted;

    std::set<std::int64_t> chunked;
    for (std::size_t r = 0; r < nranks; ++r) {
      for (const auto& e : plans[r].prefill_entries) {
        Request& req = reqs_[static_cast<std::size_t>(e.request_id)];
        req.prefill_done_tokens += e.chunk_tokens;
        kv_.allocate(req, e.chunk_tokens);
        chunked.insert(req.id);
        if (cfg_.record_batch_log) log.prefills.push_back({req.id, e.chunk_tokens});
        if (req.prefill_done_tokens < req.prefill_tokens) {
          req.phase = Phase::Prefilling;
          continue;
        }
        req.first_token_ts = exit;
        req.token_ts.push_back(exit);
        erase_value(queues_[r], req.id);
        if (req.tokens_emitted() >= req.decode_tokens) {
          complete(req);
        } else {
          req.phase = Phase::Decoding;
          decoding_[r].push_back(req.id);
        }
      }
      for (auto id : plans[r].decode_request_ids) {
        Request& req = reqs_[static_cast<std::size_t>(id)];
        req.token_ts.push_back(exit);
        kv_.allocate(req, 1);
        if (cfg_.record_batch_log) log.decodes.push_back(id);
        if (req.tokens_emitted() >= req.decode_tokens) {
          erase_value(decoding_[r], id);
          complete(req);
        }
      }
    }
    for (const auto& q : queues_) {
      for (auto id : q) {
        Request& req = reqs_[static_cast<std::size_t>(id)];
        if (req.phase == Phase::Prefilling && !chunked.count(id)) {
          req.phase = Phase::Waiting;
          ++m_.preemptions;
        }
      }
    }
    if (cfg_.record_batch_log) m_.batch_log.push_back(std::move(log));
    ++m_.steps;
  }

  void complete(Request& req) {
    req.phase = Phase::Finished;
    kv_.release(req);
  }

  SimMetrics finish() {
    m_.horizon = cfg_.horizon;
    m_.device_count = cfg_.par.devices();
    m_.kvp_growth_violations = kv_.growth_violations();
    m_.requests.reserve(trace_.size());
    for (std::size_t i = 0; i < trace_.size(); ++i) {
      const auto& e = trace_[i];
      const Request& req = reqs_[i];
      RequestRecord rec;
      rec.index = static_cast<std::int64_t>(i);
      rec.id = e.id;
      rec.arrival_s = e.arrival_s;
      rec.prefill_tokens = e.prefill_tokens;
      rec.decode_tokens = e.decode_tokens;
      rec.deadline_s = i < next_ ? req.deadline_duration : deadline_duration(req_for(e), cfg_.slo, pred_);
      rec.prefill_done_tokens = req.prefill_done_tokens;
      rec.token_ts = req.token_ts;
      rec.kvp_ranks = static_cast<int>(req.assigned_kvp_ranks.size());
      if (req.first_token_ts && *req.first_token_ts <= cfg_.horizon) {
        rec.ttft = *req.first_token_ts - e.arrival_s;
      }
      for (std::size_t k = 1; k < req.token_ts.size(); ++k) {
        if (req.token_ts[k] > cfg_.horizon) break;
        rec.tpot.push_back(req.token_ts[k] - req.token_ts[k - 1]);
      }
      rec.finished = req.phase == Phase::Finished && req.token_ts.back() <= cfg_.horizon;
      if (rec.slo_violated()) ++m_.slo_violations;
      m_.requests.push_back(std::move(rec));
    }
    if (m_.elapsed > 0) {
      const auto u = utilization(m_.executed_flops, m_.moved_bytes, m_.elapsed, m_.device_count, cfg_.hw);
      m_.mfu = u.mfu;
      m_.mbu = u.mbu;
    }
    return std::move(m_);
  }

  static Request req_for(const TraceEntry& e) {
    Request r;
    r.arrival_time = e.arrival_s;
    r.prefill_tokens = e.prefill_tokens;
    r.decode_tokens = e.decode_tokens;
    return r;
  }

  const Trace& trace_;
  const SimConfig& cfg_;
  RuntimePredictor pred_;
  KvAllocator kv_;
  std::vector<Request> reqs_;
  std::vector<bool> counted_wait_;
  std::vector<std::vector<std::int64_t>> queues_;
  std::vector<std::vector<std::int64_t>> decoding_;
  std::deque<std::int64_t> pending_;
  std::vector<double> stage_free_;
  double last_exit_ = 0.0;
  std::size_t next_ = 0;
  double clock_ = 0.0;
  double bubble_limit_ = 0.0;
  SimMetrics m_;
};

}  // namespace

void SimConfig::validate() const {
  model.validate();
  hw.validate();
  par.validate(model);
  slo.validate();
  scheduler.validate();
  if (!(horizon > 0)) throw ConfigError("horizon must be > 0");
  if (!(calibration_scale > 0)) throw ConfigError("calibration_scale must be > 0");
  if (balancer.token_limit < 0) throw ConfigError("balancer.token_limit must be >= 0");
  if (balancer.max_long_per_rank < 1) throw ConfigError("balancer.max_long_per_rank must be >= 1");
  const MemoryCheck mem = memory_feasible(0, model, hw, par, model.weight_bytes);
  if (!mem.feasible) {
    throw InfeasibleConfig("weights and activation reserve exceed device memory (" +
                           std::to_string(mem.per_device_bytes / 1e9) + " GB per device)");
  }
}

bool RequestRecord::slo_violated() const {
  return !ttft || *ttft > deadline_s * (1.0 + 1e-12);
}

std::int64_t SimMetrics::finished_count() const {
  return std::count_if(requests.begin(), requests.end(), [](const auto& r) { return r.finished; });
}

SimMetrics run(const Trace& trace, const SimConfig& config) {
  config.validate();
  Engine engine(trace, config);
  return engine.run();
}

SimMetrics run_baseline_pools(const Trace& trace, const SimConfig& config, const PoolSplit& split) {
  if (split.threshold < 0) throw ConfigError("pool threshold must be >= 0");
  Trace parts[2];
  std::vector<std::int64_t> index[2];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const int pool = trace[i].prefill_tokens <= split.threshold ? 0 : 1;
    parts[pool].push_back(trace[i]);
    index[pool].push_back(static_cast<std::int64_t>(i));
  }
  const std::optional<ParallelismConfig> pools[2] = {split.short_pool, split.long_pool};

  SimMetrics out;
  out.horizon = config.horizon;
  out.requests.resize(trace.size());
  for (int pool = 0; pool < 2; ++pool) {
    SimMetrics m;
    if (pools[pool]) {
      SimConfig c = config;
      c.par = *pools[pool];
      m = run(parts[pool], c);
      out.device_count += c.par.devices();
    } else {
      // No devices: nothing runs, deadlines still come from the shared shape.
      config.validate();
      RuntimePredictor pred(config.model, config.hw, config.par);
      pred.set_calibration_scale(config.calibration_scale);
      for (const auto& e : parts[pool]) {
        RequestRecord rec;
        rec.id = e.id;
        rec.arrival_s = e.arrival_s;
        rec.prefill_tokens = e.prefill_tokens;
        rec.decode_tokens = e.decode_tokens;
        Request r;
        r.prefill_tokens = e.prefill_tokens;
        rec.deadline_s = deadline_duration(r, config.slo, pred);
        m.requests.push_back(std::move(rec));
        ++m.slo_violations;
      }
    }
    for (std::size_t k = 0; k < m.requests.size(); ++k) {
      auto rec = std::move(m.requests[k]);
      rec.index = index[pool][k];
      out.requests[static_cast<std::size_t>(rec.index)] = std::move(rec);
    }
    for (auto& e : m.batch_log) {
      e.replica = pool;
      for (auto& d : e.decodes) d = index[pool][static_cast<std::size_t>(d)];
      for (auto& p : e.prefills) p.request = index[pool][static_cast<std::size_t>(p.request)];
      out.batch_log.push_back(std::move(e));
    }
    out.slo_violations += m.slo_violations;
    out.preemptions += m.preemptions;
    out.batch_overruns += m.batch_overruns;
    out.kvp_growth_violations += m.kvp_growth_violations;
    out.admission_waits += m.admission_waits;
    out.steps += m.steps;
    out.executed_flops += m.executed_flops;
    out.moved_bytes += m.moved_bytes;
    out.elapsed = std::max(out.elapsed, m.elapsed);
  }
  if (out.elapsed > 0 && out.device_count > 0) {
    const auto u = utilization(out.executed_flops, out.moved_bytes, out.elapsed, out.device_count, config.hw);
    out.mfu = u.mfu;
    out.mbu = u.mbu;
  }
  return out;
}

AuditReport audit_decode_non_preemption(const SimMetrics& metrics) {
  AuditReport rep;
  auto fail = [&](std::string msg) {
    ++rep.violations;
    if (rep.messages.size() < 8) rep.messages.push_back(std::move(msg));
  };
  std::map<int, std::vector<const BatchLogEntry*>> by_replica;
  for (const auto& e : metrics.batch_log) by_replica[e.replica].push_back(&e);
  std::map<std::int64_t, std::pair<int, std::vector<std::size_t>>> seen;  // request -> replica, positions
  for (auto& [replica, log] : by_replica) {
    for (std::size_t pos = 0; pos < log.size(); ++pos) {
      if (pos > 0 && log[pos]->start < log[pos - 1]->start) fail("log start times decrease");
      for (auto id : log[pos]->prefills) seen[id.request].first = replica;
      for (auto id : log[pos]->decodes) {
        auto& s = seen[id];
        s.first = replica;
        s.second.push_back(pos);
      }
    }
  }
  for (const auto& rec : metrics.requests) {
    const auto it = seen.find(rec.index);
    const std::size_t decode_steps = rec.token_ts.empty() ? 0 : rec.token_ts.size() - 1;
    if (it == seen.end()) {
      if (decode_steps > 0) fail("request " + std::to_string(rec.index) + " decoded outside the log");
      continue;
    }
    const auto& log = by_replica[it->second.first];
    const auto& apps = it->second.second;
    if (apps.size() != decode_steps) {
      fail("request " + std::to_string(rec.index) + ": " + std::to_string(apps.size()) +
           " decode steps for " + std::to_string(decode_steps) + " decoded tokens");
      continue;
    }
    for (std::size_t k = 0; k < apps.size(); ++k) {
      const double ready = rec.token_ts[k];
      const auto first = std::partition_point(log.begin(), log.end(), [&](const BatchLogEntry* e) {
        return !eligible_at(ready, e->start);
      });
      if (first == log.end() || static_cast<std::size_t>(first - log.begin()) != apps[k]) {
        fail("request " + std::to_string(rec.index) + " skipped a step while decoding");
        break;
      }
    }
    const bool done = static_cast<std::int64_t>(rec.token_ts.size()) >= rec.decode_tokens;
    if (!done && !rec.token_ts.empty()) {
      const double ready = rec.token_ts.back();
      const bool later = std::any_of(log.begin(), log.end(), [&](const BatchLogEntry* e) {
        return eligible_at(ready, e->start);
      });
      if (later) fail("request " + std::to_string(rec.index) + " dropped before finishing");
    }
  }
  return rep;
}

AuditReport audit_work_conservation(const SimMetrics& metrics) {
  AuditReport rep;
  auto fail = [&](std::string msg) {
    ++rep.violations;
    if (rep.messages.size() < 8) rep.messages.push_back(std::move(msg));
  };
  std::map<std::int64_t, std::int64_t> logged;
  for (const auto& e : metrics.batch_log) {
    for (const auto& p : e.prefills) logged[p.request] += p.tokens;
  }
  for (const auto& rec : metrics.requests) {
    const std::int64_t got = logged.count(rec.index) ? logged[rec.index] : 0;
    if (got != rec.prefill_done_tokens) {
      fail("request " + std::to_string(rec.index) + ": logged " + std::to_string(got) +
           " prefill tokens, progress " + std::to_string(rec.prefill_done_tokens));
    }
    if (rec.prefill_done_tokens > rec.prefill_tokens) {
      fail("request " + std::to_string(rec.index) + " over-processed its prompt");
    }
    if (!rec.token_ts.empty() && rec.prefill_done_tokens != rec.prefill_tokens) {
      fail("request " + std::to_string(rec.index) + " emitted a token before finishing prefill");
    }
  }
  return rep;
}

}  // namespace lcsim
