#include "lcsim/report.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "lcsim/errors.hpp"
#include "lcsim/parallel_timing.hpp"
#include "lcsim/presets.hpp"

namespace lcsim {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed, types are checked.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* raw(const char* key) {
    const auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  template <typename T>
  void get(const char* key, T& out) {
    const json* v = raw(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw ConfigError("");
      }
      out = v->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ModelConfig parse_model(const json& j) {
  if (j.is_string()) return model_preset(j.get<std::string>());
  Section s(j, "model");
  ModelConfig m;
  if (const json* base = s.raw("base")) {
    if (!base->is_string()) throw ConfigError("model.base: expected a preset name");
    m = model_preset(base->get<std::string>());
  }
  s.get("name", m.name);
  s.get("num_query_heads", m.num_query_heads);
  s.get("num_kv_heads", m.num_kv_heads);
  s.get("head_dim", m.head_dim);
  s.get("num_layers", m.num_layers);
  s.get("bytes_per_element", m.bytes_per_element);
  s.get("mlp_flops_per_token", m.mlp_flops_per_token);
  s.get("weight_bytes", m.weight_bytes);
  s.finish();
  return m;
}

LinkModel parse_link(const json& j, const std::string& path, LinkModel link) {
  Section s(j, path);
  s.get("latency_s", link.latency_s);
  s.get("bandwidth", link.bandwidth);
  s.finish();
  return link;
}

HardwareProfile parse_hardware(const json& j) {
  if (j.is_string()) return hardware_preset(j.get<std::string>());
  Section s(j, "hardware");
  HardwareProfile hw;
  if (const json* base = s.raw("base")) {
    if (!base->is_string()) throw ConfigError("hardware.base: expected a preset name");
    hw = hardware_preset(base->get<std::string>());
  }
  s.get("name", hw.name);
  s.get("peak_flops", hw.peak_flops);
  s.get("mem_bandwidth", hw.mem_bandwidth);
  s.get("mem_capacity", hw.mem_capacity);
  if (const json* l = s.raw("intra_server")) hw.intra_server = parse_link(*l, "hardware.intra_server", hw.intra_server);
  if (const json* l = s.raw("cross_server")) hw.cross_server = parse_link(*l, "hardware.cross_server", hw.cross_server);
  s.get("fixed_step_overhead", hw.fixed_step_overhead);
  s.get("devices_per_server", hw.devices_per_server);
  s.get("compute_efficiency", hw.compute_efficiency);
  s.get("bandwidth_efficiency", hw.bandwidth_efficiency);
  s.get("activation_reserve_bytes", hw.activation_reserve_bytes);
  s.finish();
  return hw;
}

ParallelismConfig parse_par(const json& j, const std::string& path) {
  Section s(j, path);
  ParallelismConfig p;
  s.get("tp", p.tp);
  s.get("spp", p.spp);
  s.get("kvp", p.kvp);
  s.finish();
  return p;
}

QuantileLogNormal parse_law(const json& j, const std::string& path, QuantileLogNormal law) {
  Section s(j, path);
  s.get("p50", law.p50);
  s.get("p90", law.p90);
  s.get("min", law.min);
  s.get("max", law.max);
  s.finish();
  return law;
}

SizeDistribution parse_dist(const json& j, const std::string& path, SizeDistribution d) {
  Section s(j, path);
  if (const json* p = s.raw("prefill")) d.prefill = parse_law(*p, path + ".prefill", d.prefill);
  if (const json* p = s.raw("decode")) d.decode = parse_law(*p, path + ".decode", d.decode);
  s.finish();
  return d;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

template <typename T>
std::vector<T> parse_axis(Section& s, const char* key) {
  std::vector<T> out;
  const json* v = s.raw(key);
  if (!v) return out;
  if (!v->is_array()) throw ConfigError(s.path(key) + ": expected an array");
  for (const auto& x : *v) {
    if constexpr (std::is_integral_v<T>) {
      if (!x.is_number_integer()) throw ConfigError(s.path(key) + ": expected integers");
    } else {
      if (!x.is_number()) throw ConfigError(s.path(key) + ": expected numbers");
    }
    out.push_back(x.get<T>());
  }
  return out;
}

}  // namespace

std::size_t SweepAxes::cells() const {
  auto n = [](std::size_t k) { return std::max<std::size_t>(1, k); };
  return n(qps.size()) * n(policy.size()) * n(chunk.size()) * n(p_spp.size()) * n(p_kvp.size()) *
         n(context.size());
}

ExperimentConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  Section top(doc, "config");
  ExperimentConfig cfg;
  cfg.sim.model = model_preset("llama3-8b");
  cfg.sim.hw = hardware_preset("h100-80gb");
  if (const json* j = top.raw("model")) cfg.sim.model = parse_model(*j);
  if (const json* j = top.raw("hardware")) cfg.sim.hw = parse_hardware(*j);
  if (const json* j = top.raw("parallelism")) cfg.sim.par = parse_par(*j, "parallelism");

  if (const json* j = top.raw("slo")) {
    Section s(*j, "slo");
    s.get("ttft_slo_scale", cfg.sim.slo.ttft_slo_scale);
    s.get("ttft_slo_floor", cfg.sim.slo.ttft_slo_floor);
    s.get("tpot_slo", cfg.sim.slo.tpot_slo);
    s.get("max_sharing_fraction", cfg.sim.slo.max_sharing_fraction);
    s.finish();
  }
  if (const json* j = top.raw("scheduler")) {
    Section s(*j, "scheduler");
    auto& sc = cfg.sim.scheduler;
    std::string policy = std::string(to_string(sc.policy));
    s.get("policy", policy);
    sc.policy = parse_policy(policy);
    if (const json* v = s.raw("prefill_prefill_batching")) {
      if (!v->is_boolean()) throw ConfigError("scheduler.prefill_prefill_batching: expected a boolean");
      sc.prefill_prefill_batching = v->get<bool>();
    }
    std::string chunk_policy = sc.chunk_policy == ChunkPolicy::Static ? "static" : "adaptive";
    s.get("chunk_policy", chunk_policy);
    if (chunk_policy == "static") {
      sc.chunk_policy = ChunkPolicy::Static;
    } else if (chunk_policy == "adaptive") {
      sc.chunk_policy = ChunkPolicy::Adaptive;
    } else {
      throw ConfigError("scheduler.chunk_policy must be 'adaptive' or 'static'");
    }
    s.get("static_chunk", sc.static_chunk);
    s.get("max_chunk", sc.max_chunk);
    s.get("min_chunk", sc.min_chunk);
    s.get("packer_tolerance", sc.packer_tolerance);
    s.get("max_secondary_prefills", sc.max_secondary_prefills);
    s.finish();
  }
  if (const json* j = top.raw("balancer")) {
    Section s(*j, "balancer");
    s.get("token_limit", cfg.sim.balancer.token_limit);
    s.get("max_long_per_rank", cfg.sim.balancer.max_long_per_rank);
    s.finish();
  }
  if (const json* j = top.raw("trace")) {
    Section s(*j, "trace");
    if (const json* p = s.raw("path")) {
      if (!p->is_string()) throw ConfigError("trace.path: expected a string");
      cfg.trace_path = resolve(base_dir, p->get<std::string>());
    }
    auto& t = cfg.trace_spec;
    s.get("qps", t.qps);
    s.get("duration_s", t.duration);
    s.get("long_fraction", t.long_fraction);
    s.get("seed", t.seed);
    if (const json* d = s.raw("short")) t.short_dist = parse_dist(*d, "trace.short", t.short_dist);
    if (const json* d = s.raw("long")) t.long_dist = parse_dist(*d, "trace.long", t.long_dist);
    s.get("single_context", cfg.single_context);
    s.get("single_context_decode", cfg.single_context_decode);
    s.finish();
  }
  if (const json* h = top.raw("horizon_s")) {
    if (h->is_null()) {
      cfg.sim.horizon = std::numeric_limits<double>::infinity();
    } else if (h->is_number()) {
      cfg.sim.horizon = h->get<double>();
    } else {
      throw ConfigError("horizon_s: expected a number or null");
    }
  }
  if (top.has("seed")) {
    std::uint64_t seed = 0;
    top.get("seed", seed);
    cfg.trace_spec.seed = seed;
  }
  top.get("exact_pipeline", cfg.sim.exact_pipeline);
  top.get("record_batch_log", cfg.sim.record_batch_log);
  if (const json* j = top.raw("calibration")) {
    Section s(*j, "calibration");
    s.get("scale", cfg.sim.calibration_scale);
    if (const json* p = s.raw("profile")) {
      if (!p->is_string()) throw ConfigError("calibration.profile: expected a string");
      cfg.profile_path = resolve(base_dir, p->get<std::string>());
    }
    s.finish();
  }
  if (const json* j = top.raw("baseline_pools")) {
    Section s(*j, "baseline_pools");
    PoolSplit split;
    s.get("threshold", split.threshold);
    for (const char* key : {"short", "long"}) {
      auto& slot = std::string(key) == "short" ? split.short_pool : split.long_pool;
      if (const json* p = s.raw(key)) {
        if (!p->is_null()) slot = parse_par(*p, s.path(key));
      } else {
        throw ConfigError(s.path(key) + ": required (null disables the pool)");
      }
    }
    s.finish();
    cfg.pools = split;
  }
  if (const json* j = top.raw("output")) {
    Section s(*j, "output");
    std::string dir;
    s.get("dir", dir);
    if (!dir.empty()) cfg.out_dir = resolve(base_dir, dir);
    s.finish();
  }
  if (const json* j = top.raw("sweep")) {
    Section s(*j, "sweep");
    cfg.sweep.qps = parse_axis<double>(s, "qps");
    if (const json* v = s.raw("policy")) {
      if (!v->is_array()) throw ConfigError("sweep.policy: expected an array");
      for (const auto& x : *v) {
        if (!x.is_string()) throw ConfigError("sweep.policy: expected strings");
        cfg.sweep.policy.push_back(parse_policy(x.get<std::string>()));
      }
    }
    cfg.sweep.chunk = parse_axis<std::int64_t>(s, "chunk");
    cfg.sweep.p_spp = parse_axis<int>(s, "p_spp");
    cfg.sweep.p_kvp = parse_axis<int>(s, "p_kvp");
    cfg.sweep.context = parse_axis<std::int64_t>(s, "context");
    s.get("context_decode_tokens", cfg.sweep.context_decode_tokens);
    s.finish();
  }
  top.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

void validate_config(const ExperimentConfig& cfg) {
  cfg.sim.validate();
  if (!cfg.trace_path) cfg.trace_spec.validate();
  if (cfg.single_context < 0 || cfg.single_context_decode < 1) {
    throw ConfigError("trace.single_context must be >= 0 and single_context_decode >= 1");
  }
  if (cfg.pools) {
    for (const auto& p : {cfg.pools->short_pool, cfg.pools->long_pool}) {
      if (!p) continue;
      SimConfig c = cfg.sim;
      c.par = *p;
      c.validate();
    }
  }
  for (auto v : cfg.sweep.qps) {
    if (!(v > 0)) throw ConfigError("sweep.qps entries must be > 0");
  }
  if (!cfg.sweep.qps.empty() && cfg.trace_path) {
    throw ConfigError("sweep.qps needs a generated trace, not trace.path");
  }
  for (auto v : cfg.sweep.chunk) {
    if (v < 1) throw ConfigError("sweep.chunk entries must be >= 1");
  }
  for (auto v : cfg.sweep.context) {
    if (v < 1) throw ConfigError("sweep.context entries must be >= 1");
  }
}

Trace materialize_trace(const ExperimentConfig& cfg) {
  if (cfg.single_context > 0) {
    return {TraceEntry{0.0, cfg.single_context, cfg.single_context_decode, "ctx"}};
  }
  if (cfg.trace_path) return load_trace(*cfg.trace_path);
  return generate_trace(cfg.trace_spec);
}

SimMetrics run_experiment(const ExperimentConfig& cfg, const Trace& trace) {
  SimConfig sim = cfg.sim;
  if (cfg.profile_path) {
    const auto rows = load_profile_table(*cfg.profile_path);
    RuntimePredictor pred(sim.model, sim.hw, sim.par);
    pred.calibrate(rows);
    sim.calibration_scale = pred.calibration_scale();
  }
  if (cfg.pools) return run_baseline_pools(trace, sim, *cfg.pools);
  std::int64_t longest = 0;
  for (const auto& e : trace) longest = std::max(longest, e.prefill_tokens + e.decode_tokens);
  const MemoryCheck mem = memory_feasible(longest, sim.model, sim.hw, sim.par, sim.model.weight_bytes);
  if (!mem.feasible) {
    std::ostringstream msg;
    msg << "a " << longest << "-token request needs " << std::setprecision(4)
        << mem.per_device_bytes / 1e9 << " GB per device";
    throw InfeasibleConfig(msg.str());
  }
  return run(trace, sim);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (!(q > 0 && q <= 100)) throw ConfigError("percentile: q must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

std::vector<double> censored_ttfts(const SimMetrics& m) {
  std::vector<double> out;
  out.reserve(m.requests.size());
  for (const auto& r : m.requests) {
    out.push_back(r.ttft ? *r.ttft : std::max(0.0, m.horizon - r.arrival_s));
  }
  return out;
}

Summary summarize(const SimMetrics& m) {
  Summary s;
  s.requests = static_cast<std::int64_t>(m.requests.size());
  std::vector<double> tpot;
  for (const auto& r : m.requests) {
    if (r.finished) ++s.finished;
    if (r.prefill_tokens > 8192) {
      ++s.long_requests;
      if (r.finished) ++s.long_finished;
    }
    tpot.insert(tpot.end(), r.tpot.begin(), r.tpot.end());
  }
  const auto ttft = censored_ttfts(m);
  s.ttft_p50 = percentile(ttft, 50);
  s.ttft_p90 = percentile(ttft, 90);
  s.ttft_p99 = percentile(ttft, 99);
  s.tpot_p50 = percentile(tpot, 50);
  s.tpot_p90 = percentile(tpot, 90);
  s.tpot_p99 = percentile(tpot, 99);
  s.mfu = m.mfu;
  s.mbu = m.mbu;
  s.slo_violations = m.slo_violations;
  s.preemptions = m.preemptions;
  s.batch_overruns = m.batch_overruns;
  s.elapsed = m.elapsed;
  return s;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string summary_table(const Summary& s) {
  std::ostringstream out;
  auto ms = [](double x) {
    if (std::isnan(x)) return std::string("-");
    if (std::isinf(x)) return std::string("inf");
    std::ostringstream o;
    o << std::fixed << std::setprecision(x * 1e3 < 100 ? 2 : 0) << x * 1e3;
    return o.str();
  };
  out << "requests " << s.requests << "  finished " << s.finished << "  long " << s.long_finished
      << "/" << s.long_requests << "\n";
  out << std::left << std::setw(8) << "metric" << std::right << std::setw(14) << "p50 (ms)"
      << std::setw(14) << "p90 (ms)" << std::setw(14) << "p99 (ms)" << "\n";
  out << std::left << std::setw(8) << "ttft" << std::right << std::setw(14) << ms(s.ttft_p50)
      << std::setw(14) << ms(s.ttft_p90) << std::setw(14) << ms(s.ttft_p99) << "\n";
  out << std::left << std::setw(8) << "tpot" << std::right << std::setw(14) << ms(s.tpot_p50)
      << std::setw(14) << ms(s.tpot_p90) << std::setw(14) << ms(s.tpot_p99) << "\n";
  out << std::fixed << std::setprecision(3) << "mfu " << s.mfu << "  mbu " << s.mbu
      << "  elapsed " << s.elapsed << " s\n";
  out << "slo violations " << s.slo_violations << "  prefill requeues " << s.preemptions
      << "  batch overruns " << s.batch_overruns << "\n";
  return out.str();
}

nlohmann::ordered_json metrics_json(const SimMetrics& m) {
  const Summary s = summarize(m);
  nlohmann::ordered_json j;
  j["summary"] = {
      {"requests", s.requests},       {"finished", s.finished},
      {"long_requests", s.long_requests}, {"long_finished", s.long_finished},
      {"ttft_p50_s", s.ttft_p50},     {"ttft_p90_s", s.ttft_p90},
      {"ttft_p99_s", s.ttft_p99},     {"tpot_p50_s", s.tpot_p50},
      {"tpot_p90_s", s.tpot_p90},     {"tpot_p99_s", s.tpot_p99},
      {"mfu", s.mfu},                 {"mbu", s.mbu},
      {"elapsed_s", s.elapsed},
  };
  j["counters"] = {
      {"slo_violations", m.slo_violations},
      {"preemptions", m.preemptions},
      {"batch_overruns", m.batch_overruns},
      {"kvp_growth_violations", m.kvp_growth_violations},
      {"admission_waits", m.admission_waits},
      {"steps", m.steps},
      {"executed_flops", m.executed_flops},
      {"moved_bytes", m.moved_bytes},
      {"device_count", m.device_count},
  };
  j["horizon_s"] = std::isinf(m.horizon) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(m.horizon);
  auto& reqs = j["requests"] = nlohmann::ordered_json::array();
  for (const auto& r : m.requests) {
    nlohmann::ordered_json o;
    o["index"] = r.index;
    o["id"] = r.id;
    o["arrival_s"] = r.arrival_s;
    o["prefill_tokens"] = r.prefill_tokens;
    o["decode_tokens"] = r.decode_tokens;
    o["deadline_s"] = r.deadline_s;
    o["ttft_s"] = r.ttft ? nlohmann::ordered_json(*r.ttft) : nlohmann::ordered_json(nullptr);
    o["tokens"] = r.token_ts.size();
    o["tpot_p50_s"] = percentile(r.tpot, 50);
    o["tpot_p95_s"] = percentile(r.tpot, 95);
    o["finished"] = r.finished;
    o["kvp_ranks"] = r.kvp_ranks;
    reqs.push_back(std::move(o));
  }
  return j;
}

namespace {
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}
}  // namespace

void write_request_csv(const SimMetrics& m, std::ostream& out) {
  out << kRequestCsvHeader << '\n';
  for (const auto& r : m.requests) {
    out << csv_field(r.id.empty() ? std::to_string(r.index) : r.id) << ','
        << format_double(r.arrival_s) << ',' << r.prefill_tokens << ',' << r.decode_tokens << ','
        << (r.ttft ? format_double(*r.ttft) : "") << ',' << format_double(percentile(r.tpot, 50))
        << ',' << format_double(percentile(r.tpot, 95)) << ',' << (r.finished ? 1 : 0) << '\n';
  }
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, std::vector<SweepRow>* rows) {
  const auto& ax = base.sweep;
  auto or_one = [](auto v, auto fallback) {
    if (v.empty()) v.push_back(fallback);
    return v;
  };
  const auto qps = or_one(ax.qps, base.trace_spec.qps);
  const auto policy = or_one(ax.policy, base.sim.scheduler.policy);
  const auto chunk = or_one(ax.chunk, std::int64_t{0});
  const auto spp = or_one(ax.p_spp, base.sim.par.spp);
  const auto kvp = or_one(ax.p_kvp, base.sim.par.kvp);
  const auto ctx = or_one(ax.context, std::int64_t{0});
  std::vector<ExperimentConfig> out;
  for (double q : qps)
    for (Policy pol : policy)
      for (std::int64_t c : chunk)
        for (int s : spp)
          for (int k : kvp)
            for (std::int64_t n : ctx) {
              ExperimentConfig cell = base;
              cell.sweep = {};
              cell.trace_spec.qps = q;
              cell.sim.scheduler.policy = pol;
              if (c > 0) {
                cell.sim.scheduler.chunk_policy = ChunkPolicy::Static;
                cell.sim.scheduler.static_chunk = c;
              }
              cell.sim.par.spp = s;
              cell.sim.par.kvp = k;
              if (n > 0) {
                cell.single_context = n;
                cell.single_context_decode = ax.context_decode_tokens;
              }
              out.push_back(std::move(cell));
              if (rows) {
                SweepRow row;
                row.qps = q;
                row.policy = pol;
                row.chunk = c;
                row.p_spp = s;
                row.p_kvp = k;
                row.context = n;
                rows->push_back(row);
              }
            }
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, int jobs) {
  std::vector<SweepRow> rows;
  const auto cells = expand_sweep(base, &rows);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        validate_config(cells[i]);
        const Trace trace = materialize_trace(cells[i]);
        rows[i].summary = summarize(run_experiment(cells[i], trace));
      } catch (const InfeasibleConfig& e) {
        rows[i].feasible = false;
        rows[i].error = e.what();
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    out << format_double(r.qps) << ',' << to_string(r.policy) << ',' << r.chunk << ',' << r.p_spp
        << ',' << r.p_kvp << ',' << r.context << ',' << (r.feasible ? "ok" : "infeasible");
    if (!r.feasible) {
      out << ",,,,,,,,,,,,\n";
      continue;
    }
    const auto& s = r.summary;
    out << ',' << s.requests << ',' << s.finished << ',' << s.long_finished << ','
        << format_double(s.ttft_p50) << ',' << format_double(s.ttft_p90) << ','
        << format_double(s.ttft_p99) << ',' << format_double(s.tpot_p50) << ','
        << format_double(s.tpot_p90) << ',' << format_double(s.tpot_p99) << ','
        << format_double(s.mfu) << ',' << format_double(s.mbu) << ',' << s.slo_violations << '\n';
  }
}

void write_cdf_csv(std::vector<double> values, std::ostream& out) {
  std::sort(values.begin(), values.end());
  out << "value,fraction\n";
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]) << ',' << format_double(static_cast<double>(i + 1) / n) << '\n';
  }
}

std::string cdf_svg(std::vector<double> values, const std::string& title, const std::string& x_label) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  std::sort(values.begin(), values.end());
  const double w = 640, h = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double xmax = values.empty() ? 1.0 : std::max(values.back(), 1e-12);
  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\""
      << h - bottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
      << x_label << " (max " << format_double(xmax) << ")</text>\n";
  svg << "<text x=\"14\" y=\"" << top + 10 << "\" font-family=\"sans-serif\" font-size=\"12\">1.0</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  const double pw = w - left - right, ph = h - top - bottom;
  double prev_y = h - bottom;
  svg << left << ',' << prev_y;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = left + pw * values[i] / xmax;
    const double y = h - bottom - ph * static_cast<double>(i + 1) / static_cast<double>(values.size());
    svg << ' ' << x << ',' << prev_y << ' ' << x << ',' << y;
    prev_y = y;
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

}  // namespace lcsim
