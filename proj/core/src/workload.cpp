#include "lcsim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "lcsim/errors.hpp"
#include "parse_util.hpp"

namespace lcsim {

namespace {
// z-score of the 90th percentile of a standard normal.
constexpr double kZ90 = 1.2815515655446004;
}  // namespace

double QuantileLogNormal::mu() const { return std::log(p50); }
double QuantileLogNormal::sigma() const { return std::log(p90 / p50) / kZ90; }

void QuantileLogNormal::validate(const char* what) const {
  if (!(p50 > 0) || !(p90 > p50)) {
    throw ConfigError(std::string(what) + ": need 0 < p50 < p90");
  }
  if (min < 1 || max < min) throw ConfigError(std::string(what) + ": need 1 <= min <= max");
}

SizeDistribution default_short_distribution() {
  return {{1000.0, 6000.0, 1, 8192}, {256.0, 512.0, 1, 8192}};
}

SizeDistribution default_long_distribution() {
  return {{393'000.0, 839'000.0, 128'000, 1'000'000}, {518.0, 808.0, 1, 8192}};
}

void TraceSpec::validate() const {
  if (!(qps > 0)) throw ConfigError("trace.qps must be > 0");
  if (!(duration >= 0)) throw ConfigError("trace.duration must be >= 0");
  if (!(long_fraction >= 0 && long_fraction <= 1)) {
    throw ConfigError("trace.long_fraction must lie in [0, 1]");
  }
  short_dist.prefill.validate("short prefill");
  short_dist.decode.validate("short decode");
  long_dist.prefill.validate("long prefill");
  long_dist.decode.validate("long decode");
}

Trace generate_trace(const TraceSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::exponential_distribution<double> gap(spec.qps);
  std::bernoulli_distribution is_long(spec.long_fraction);
  auto sample = [&rng](const QuantileLogNormal& d) {
    std::lognormal_distribution<double> law(d.mu(), d.sigma());
    const double x = std::round(law(rng));
    return std::clamp(static_cast<std::int64_t>(std::min(x, 9e18)), d.min, d.max);
  };
  Trace trace;
  double t = gap(rng);
  while (t < spec.duration) {
    const SizeDistribution& dist = is_long(rng) ? spec.long_dist : spec.short_dist;
    TraceEntry e;
    e.arrival_s = t;
    e.prefill_tokens = sample(dist.prefill);
    e.decode_tokens = sample(dist.decode);
    trace.push_back(std::move(e));
    t += gap(rng);
  }
  return trace;
}

Trace parse_trace(std::istream& in, TraceLoadStats* stats) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  std::size_t reordered = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!j.is_object()) throw ParseError("trace line must be a JSON object", lineno);
    auto field = [&](const char* key) -> const nlohmann::json& {
      const auto it = j.find(key);
      if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'", lineno);
      return *it;
    };
    TraceEntry e;
    const auto& arrival = field("arrival_s");
    const auto& prefill = field("prefill_tokens");
    const auto& decode = field("decode_tokens");
    if (!arrival.is_number()) throw ParseError("arrival_s must be a number", lineno);
    if (!prefill.is_number_integer() || !decode.is_number_integer()) {
      throw ParseError("token counts must be integers", lineno);
    }
    e.arrival_s = arrival.get<double>();
    e.prefill_tokens = prefill.get<std::int64_t>();
    e.decode_tokens = decode.get<std::int64_t>();
    if (!std::isfinite(e.arrival_s) || e.arrival_s < 0) {
      throw ParseError("arrival_s must be finite and >= 0", lineno);
    }
    if (e.prefill_tokens < 1 || e.decode_tokens < 1) {
      throw ParseError("prefill_tokens and decode_tokens must be >= 1", lineno);
    }
    if (const auto it = j.find("id"); it != j.end()) {
      if (!it->is_string()) throw ParseError("id must be a string", lineno);
      e.id = it->get<std::string>();
    }
    if (!trace.empty() && e.arrival_s < trace.back().arrival_s) ++reordered;
    trace.push_back(std::move(e));
  }
  if (reordered > 0) {
    std::stable_sort(trace.begin(), trace.end(), [](const TraceEntry& a, const TraceEntry& b) {
      return a.arrival_s < b.arrival_s;
    });
  }
  if (stats) stats->reordered = reordered;
  return trace;
}

Trace load_trace(const std::filesystem::path& path, TraceLoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace " + path.string(), 0);
  return parse_trace(in, stats);
}

void write_trace(const Trace& trace, std::ostream& out) {
  for (const auto& e : trace) {
    nlohmann::ordered_json j;
    j["arrival_s"] = e.arrival_s;
    j["prefill_tokens"] = e.prefill_tokens;
    j["decode_tokens"] = e.decode_tokens;
    if (!e.id.empty()) j["id"] = e.id;
    out << j.dump() << '\n';
  }
}

void write_trace(const Trace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace " + path.string());
  write_trace(trace, out);
}

}  // namespace lcsim
