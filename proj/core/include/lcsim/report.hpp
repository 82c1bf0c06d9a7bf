#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcsim/simulator.hpp"
#include "lcsim/workload.hpp"

namespace lcsim {

struct SweepAxes {
  std::vector<double> qps;
  std::vector<Policy> policy;
  std::vector<std::int64_t> chunk;  // static chunk sizes
  std::vector<int> p_spp;
  std::vector<int> p_kvp;
  std::vector<std::int64_t> context;  // single-request traces of this prompt length
  std::int64_t context_decode_tokens = 16;

  std::size_t cells() const;
};

struct ExperimentConfig {
  SimConfig sim;
  std::optional<PoolSplit> pools;
  std::optional<std::filesystem::path> trace_path;
  TraceSpec trace_spec;
  std::optional<std::filesystem::path> profile_path;
  std::filesystem::path out_dir = "lcsim-out";
  SweepAxes sweep;
  /// > 0: replace the trace with one request of this prompt length.
  std::int64_t single_context = 0;
  std::int64_t single_context_decode = 16;
};

/// Relative paths inside the document resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Field-by-field validation, including the zero-context memory check.
void validate_config(const ExperimentConfig& cfg);

Trace materialize_trace(const ExperimentConfig& cfg);

/// Loads the profile table if any, checks memory at the trace's longest
/// request, and runs the simulator (or the pool baseline).
SimMetrics run_experiment(const ExperimentConfig& cfg, const Trace& trace);

/// Nearest-rank percentile, q in (0, 100]. Empty input gives NaN.
double percentile(std::vector<double> values, double q);

struct Summary {
  std::int64_t requests = 0;
  std::int64_t finished = 0;
  std::int64_t long_requests = 0;  // prompt > 8192 tokens
  std::int64_t long_finished = 0;
  double ttft_p50 = 0, ttft_p90 = 0, ttft_p99 = 0;  // unfinished prefills censored at the horizon
  double tpot_p50 = 0, tpot_p90 = 0, tpot_p99 = 0;
  double mfu = 0, mbu = 0;
  std::int64_t slo_violations = 0;
  std::int64_t preemptions = 0;
  std::int64_t batch_overruns = 0;
  double elapsed = 0;
};

Summary summarize(const SimMetrics& m);
/// TTFT per request with missing first tokens censored at horizon - arrival.
std::vector<double> censored_ttfts(const SimMetrics& m);

std::string summary_table(const Summary& s);
nlohmann::ordered_json metrics_json(const SimMetrics& m);

inline constexpr const char* kRequestCsvHeader =
    "id,arrival_s,prefill_tokens,decode_tokens,ttft_s,tpot_p50_s,tpot_p95_s,finished";
void write_request_csv(const SimMetrics& m, std::ostream& out);

/// Shortest round-trip decimal; empty for NaN, "inf" for infinity.
std::string format_double(double x);

struct SweepRow {
  double qps = 0.0;
  Policy policy = Policy::ILRS;
  std::int64_t chunk = 0;  // 0: config default
  int p_spp = 1;
  int p_kvp = 1;
  std::int64_t context = 0;  // 0: config trace
  bool feasible = true;
  std::string error;
  Summary summary;
};

/// Cartesian product in axis order qps, policy, chunk, p_spp, p_kvp, context;
/// empty axes keep the base config value.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, std::vector<SweepRow>* rows);

/// Runs every cell, at most `jobs` at a time. Infeasible cells are marked,
/// other errors propagate.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, int jobs);

inline constexpr const char* kSweepCsvHeader =
    "qps,policy,chunk,p_spp,p_kvp,context,status,requests,finished,long_finished,ttft_p50_s,"
    "ttft_p90_s,ttft_p99_s,tpot_p50_s,tpot_p90_s,tpot_p99_s,mfu,mbu,slo_violations";
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

/// Empirical CDF as `value,fraction` rows.
void write_cdf_csv(std::vector<double> values, std::ostream& out);
/// Minimal step-plot of an empirical CDF.
std::string cdf_svg(std::vector<double> values, const std::string& title, const std::string& x_label);

}  // namespace lcsim
