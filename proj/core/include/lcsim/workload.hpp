#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lcsim {

struct TraceEntry {
  double arrival_s = 0.0;
  std::int64_t prefill_tokens = 0;
  std::int64_t decode_tokens = 0;
  std::string id;  // optional

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

using Trace = std::vector<TraceEntry>;

/// Lognormal pinned by its median and 90th percentile, then clamped.
struct QuantileLogNormal {
  double p50 = 1.0;
  double p90 = 2.0;
  std::int64_t min = 1;
  std::int64_t max = INT64_MAX;

  double mu() const;
  double sigma() const;
  void validate(const char* what) const;
};

struct SizeDistribution {
  QuantileLogNormal prefill;
  QuantileLogNormal decode;
};

SizeDistribution default_short_distribution();
SizeDistribution default_long_distribution();

struct TraceSpec {
  double qps = 1.0;
  double duration = 60.0;  // s
  SizeDistribution short_dist = default_short_distribution();
  SizeDistribution long_dist = default_long_distribution();
  double long_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Poisson arrivals over [0, duration); each request long with probability
/// long_fraction. Pure function of the spec.
Trace generate_trace(const TraceSpec& spec);

struct TraceLoadStats {
  std::size_t reordered = 0;  // entries that arrived out of order in the file
};

/// JSONL: arrival_s, prefill_tokens, decode_tokens, optional id. Blank lines
/// are skipped; arrivals are stably sorted.
Trace load_trace(const std::filesystem::path& path, TraceLoadStats* stats = nullptr);
Trace parse_trace(std::istream& in, TraceLoadStats* stats = nullptr);

void write_trace(const Trace& trace, std::ostream& out);
void write_trace(const Trace& trace, const std::filesystem::path& path);

}  // namespace lcsim
