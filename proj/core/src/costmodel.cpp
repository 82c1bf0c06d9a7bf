#include "lcsim/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>

#include "lcsim/errors.hpp"
#include "parse_util.hpp"

namespace lcsim {

void ModelConfig::validate() const {
  if (num_kv_heads < 1 || num_query_heads < num_kv_heads) {
    throw ConfigError("model '" + name + "': need num_query_heads >= num_kv_heads >= 1");
  }
  if (num_query_heads % num_kv_heads != 0) {
    throw ConfigError("model '" + name + "': num_query_heads must be a multiple of num_kv_heads");
  }
  if (head_dim <= 0 || num_layers <= 0 || !(bytes_per_element > 0) ||
      !(mlp_flops_per_token > 0)) {
    throw ConfigError("model '" + name +
                      "': head_dim, num_layers, bytes_per_element, mlp_flops_per_token must be > 0");
  }
  if (weight_bytes < 0) {
    throw ConfigError("model '" + name + "': weight_bytes must be >= 0");
  }
}

void HardwareProfile::validate() const {
  if (!(peak_flops > 0) || !(mem_bandwidth > 0) || !(mem_capacity > 0)) {
    throw ConfigError("hardware '" + name + "': peak_flops, mem_bandwidth, mem_capacity must be > 0");
  }
  if (!(intra_server.bandwidth > 0) || !(cross_server.bandwidth > 0) ||
      intra_server.latency_s < 0 || cross_server.latency_s < 0) {
    throw ConfigError("hardware '" + name + "': link bandwidths must be > 0, latencies >= 0");
  }
  if (fixed_step_overhead < 0 || activation_reserve_bytes < 0) {
    throw ConfigError("hardware '" + name + "': overheads and reserves must be >= 0");
  }
  if (devices_per_server < 1) {
    throw ConfigError("hardware '" + name + "': devices_per_server must be >= 1");
  }
  auto in_unit = [](double x) { return x > 0 && x <= 1; };
  if (!in_unit(compute_efficiency) || !in_unit(bandwidth_efficiency)) {
    throw ConfigError("hardware '" + name + "': efficiencies must lie in (0, 1]");
  }
}

void ParallelismConfig::validate(const ModelConfig& model) const {
  if (tp < 1 || spp < 1 || kvp < 1) {
    throw InfeasibleConfig("parallelism degrees must be >= 1");
  }
  const auto h_kv = model.num_kv_heads;
  if (h_kv % tp != 0 && tp % h_kv != 0) {
    throw InfeasibleConfig("tp=" + std::to_string(tp) + " cannot shard " + std::to_string(h_kv) +
                           " kv heads");
  }
  if (spp > model.num_layers) {
    throw InfeasibleConfig("spp=" + std::to_string(spp) + " exceeds layer count");
  }
}

double attention_flops(std::int64_t n, const ModelConfig& model) {
  const double nd = static_cast<double>(n);
  return 2.0 * nd * nd * static_cast<double>(model.head_dim) *
         static_cast<double>(model.num_query_heads) * static_cast<double>(model.num_layers);
}

double kv_cache_bytes(std::int64_t n, const ModelConfig& model) {
  // K and V at bytes_per_element each: 2 tensors * 2 bytes = 4 on the 16-bit basis.
  return 4.0 * static_cast<double>(n) * static_cast<double>(model.head_dim) *
         static_cast<double>(model.num_kv_heads) * static_cast<double>(model.num_layers) *
         (model.bytes_per_element / 2.0);
}

ChunkAttentionCost chunk_attention_cost(std::int64_t chunk_index, std::int64_t chunk,
                                        const ModelConfig& model) {
  if (chunk_index < 1 || chunk < 1) {
    throw ConfigError("chunk_attention_cost: chunk index and chunk size must be >= 1");
  }
  const double i = static_cast<double>(chunk_index);
  const double c = static_cast<double>(chunk);
  const double d = static_cast<double>(model.head_dim);
  ChunkAttentionCost out;
  out.flops_per_layer = 4.0 * i * c * c * d * static_cast<double>(model.num_query_heads);
  out.read_bytes_per_layer = 4.0 * i * c * d * static_cast<double>(model.num_kv_heads) *
                             (model.bytes_per_element / 2.0);
  const double layers = static_cast<double>(model.num_layers);
  out.flops = out.flops_per_layer * layers;
  out.read_bytes = out.read_bytes_per_layer * layers;
  out.arithmetic_intensity = out.flops_per_layer / out.read_bytes_per_layer;
  return out;
}

std::int64_t quantize_chunk(std::int64_t tokens) {
  if (tokens <= kChunkQuantum) return kChunkQuantum;
  return (tokens + kChunkQuantum - 1) / kChunkQuantum * kChunkQuantum;
}

std::int64_t min_efficient_chunk(const ModelConfig& model, const HardwareProfile& hw) {
  const double ratio = hw.peak_flops / hw.mem_bandwidth;
  const double needed = std::ceil(ratio / model.gqa_ratio() - 1e-9);
  return quantize_chunk(static_cast<std::int64_t>(std::max(1.0, needed)));
}

Utilization utilization(double executed_flops, double moved_bytes, double elapsed,
                        int device_count, const HardwareProfile& hw) {
  if (!(elapsed > 0)) throw ConfigError("utilization: elapsed time must be > 0");
  if (device_count < 1) throw ConfigError("utilization: device_count must be >= 1");
  const double devices = static_cast<double>(device_count);
  return {executed_flops / (elapsed * devices * hw.peak_flops),
          moved_bytes / (elapsed * devices * hw.mem_bandwidth)};
}

std::vector<ProfileRow> load_profile_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open profile table " + path.string(), 0);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError("profile table is empty", 1);
  ++lineno;
  if (detail::trim(line) != "kv_len,chunk_tokens,decode_tokens,seconds") {
    throw ParseError("profile table header must be kv_len,chunk_tokens,decode_tokens,seconds", 1);
  }
  std::vector<ProfileRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != 4) throw ParseError("expected 4 fields", lineno);
    ProfileRow row;
    if (!detail::parse_number(fields[0], row.kv_len) ||
        !detail::parse_number(fields[1], row.chunk_tokens) ||
        !detail::parse_number(fields[2], row.decode_tokens) ||
        !detail::parse_number(fields[3], row.seconds)) {
      throw ParseError("malformed number", lineno);
    }
    if (row.kv_len < 0 || row.chunk_tokens < 0 || row.decode_tokens < 0 || !(row.seconds > 0) ||
        row.chunk_tokens + row.decode_tokens < 1) {
      throw ParseError("profile row out of range", lineno);
    }
    rows.push_back(row);
  }
  return rows;
}

RuntimePredictor::RuntimePredictor(ModelConfig model, HardwareProfile hw, ParallelismConfig par)
    : model_(std::move(model)), hw_(std::move(hw)), par_(par) {
  model_.validate();
  hw_.validate();
  par_.validate(model_);
}

double RuntimePredictor::layers_per_stage() const {
  return static_cast<double>(model_.num_layers) / static_cast<double>(par_.spp);
}

void RuntimePredictor::add(StageWork& work, const Segment& seg) const {
  if (seg.new_tokens <= 0) return;
  const double t = static_cast<double>(seg.new_tokens);
  const double kv_after = static_cast<double>(seg.kv_before) + t;
  const double d = static_cast<double>(model_.head_dim);
  const double shards = static_cast<double>(std::max(1, seg.kvp_shards));
  const double tp = static_cast<double>(par_.tp);
  const double kv_split = std::min(tp, static_cast<double>(model_.num_kv_heads));

  const double flops_layer = 4.0 * t * kv_after * d * static_cast<double>(model_.num_query_heads);
  const double bytes_layer = 4.0 * kv_after * d * static_cast<double>(model_.num_kv_heads) *
                             (model_.bytes_per_element / 2.0);
  const double layers = layers_per_stage();
  const double flops_dev = flops_layer * layers / tp / shards;
  const double bytes_dev = bytes_layer * layers / kv_split / shards;
  work.attention_time += std::max(flops_dev / (hw_.peak_flops * hw_.compute_efficiency),
                                  bytes_dev / (hw_.mem_bandwidth * hw_.bandwidth_efficiency));
  if (seg.kvp_shards > 1) work.kvp_query_tokens += t;
  if (seg.attention_only) return;

  work.any_linear = true;
  work.linear_tokens += t;
  const double all_layers = static_cast<double>(model_.num_layers);
  work.model_flops += flops_layer * all_layers + t * model_.mlp_flops_per_token * all_layers;
  work.model_attention_bytes += bytes_layer * all_layers;
}

void RuntimePredictor::add_decodes(StageWork& work, std::int64_t count,
                                   std::int64_t context_tokens, int kvp_shards) const {
  if (count <= 0) return;
  // One single-token segment over the pooled context has the same flops and
  // bytes as the group; the remaining tokens only add linear work.
  add(work, Segment{context_tokens + count - 1, 1, kvp_shards, false});
  const double extra = static_cast<double>(count - 1);
  work.linear_tokens += extra;
  work.model_flops += extra * model_.mlp_flops_per_token * static_cast<double>(model_.num_layers);
  if (kvp_shards > 1) work.kvp_query_tokens += extra;
}

StageCost RuntimePredictor::cost(const StageWork& work) const {
  StageCost c;
  const double layers = layers_per_stage();
  const double tp = static_cast<double>(par_.tp);
  if (work.any_linear) {
    const double flops_dev = work.linear_tokens * model_.mlp_flops_per_token * layers / tp;
    const double bytes_dev = model_.weight_bytes / (tp * static_cast<double>(par_.spp));
    c.linear_time = std::max(flops_dev / (hw_.peak_flops * hw_.compute_efficiency),
                             bytes_dev / (hw_.mem_bandwidth * hw_.bandwidth_efficiency));
    if (par_.tp > 1) {
      const LinkModel& link = par_.tp <= hw_.devices_per_server ? hw_.intra_server : hw_.cross_server;
      // Two ring all-reduces per layer over the micro-batch activations.
      const double bytes = 2.0 * (tp - 1.0) / tp * work.linear_tokens *
                           model_.activation_bytes_per_token();
      c.tp_comm_time = layers * 2.0 * link.time(bytes);
    }
  }
  c.attention_time = work.attention_time;
  if (work.kvp_query_tokens > 0) {
    c.kvp_comm_time = kvp_comm(static_cast<std::int64_t>(work.kvp_query_tokens));
  }
  const bool any_work = work.any_linear || work.attention_time > 0;
  c.overhead = any_work ? hw_.fixed_step_overhead : 0.0;
  c.linear_time *= scale_;
  c.attention_time *= scale_;
  c.tp_comm_time *= scale_;
  c.kvp_comm_time *= scale_;
  c.overhead *= scale_;
  c.total = c.linear_time + c.attention_time + c.tp_comm_time + c.kvp_comm_time + c.overhead;
  return c;
}

double RuntimePredictor::stage_time(std::span<const Segment> segments) const {
  StageWork work;
  for (const auto& s : segments) add(work, s);
  return cost(work).total;
}

double RuntimePredictor::predict_chunk_time(std::int64_t kv_len_before, std::int64_t chunk,
                                            std::int64_t decode_tokens,
                                            std::int64_t decode_context_tokens) const {
  if (kv_len_before < 0 || chunk < 0 || decode_tokens < 0 || decode_context_tokens < 0) {
    throw ConfigError("predict_chunk_time: token counts must be >= 0");
  }
  if (chunk + decode_tokens < 1) {
    throw ConfigError("predict_chunk_time: empty micro-batch");
  }
  StageWork work;
  add(work, Segment{kv_len_before, chunk, par_.kvp, false});
  add_decodes(work, decode_tokens, decode_context_tokens, par_.kvp);
  return cost(work).total;
}

double RuntimePredictor::pipeline_comm(std::int64_t tokens) const {
  if (par_.spp <= 1) return 0.0;
  const int stages_per_server = std::max(1, hw_.devices_per_server / par_.tp);
  const LinkModel& link = par_.spp <= stages_per_server ? hw_.intra_server : hw_.cross_server;
  const double bytes = static_cast<double>(tokens) * model_.activation_bytes_per_token() /
                       static_cast<double>(par_.tp);
  return scale_ * link.time(bytes);
}

double RuntimePredictor::kvp_comm(std::int64_t query_tokens) const {
  // Each rank ships its partial outputs (plus negligible max/denominator)
  // once per layer; the size depends on query tokens only.
  const double bytes = static_cast<double>(query_tokens) * model_.activation_bytes_per_token() /
                       static_cast<double>(par_.tp);
  return layers_per_stage() * hw_.cross_server.time(bytes);
}

double RuntimePredictor::traversal_time(double stage_time, std::int64_t tokens) const {
  return static_cast<double>(par_.spp) * stage_time +
         static_cast<double>(par_.spp - 1) * pipeline_comm(tokens);
}

double RuntimePredictor::isolated_prefill_time(std::int64_t done, std::int64_t total) const {
  if (total <= done) return 0.0;
  const double rem = static_cast<double>(total - done);
  const double c = static_cast<double>(std::min<std::int64_t>(reference_chunk_, total - done));
  const double steps = std::ceil(rem / c);
  const double hi = static_cast<double>(total);
  const double lo = static_cast<double>(done);
  const double d = static_cast<double>(model_.head_dim);
  const double layers = static_cast<double>(model_.num_layers);
  const double tp = static_cast<double>(par_.tp);
  const double spp = static_cast<double>(par_.spp);
  const double kv_split = std::min(tp, static_cast<double>(model_.num_kv_heads));
  const double peak = hw_.peak_flops * hw_.compute_efficiency;
  const double bw = hw_.mem_bandwidth * hw_.bandwidth_efficiency;

  // Closed-form sums over uniform chunks of the per-chunk attention terms.
  const double attn_flops =
      (2.0 * (hi * hi - lo * lo) + 2.0 * rem * c) * d * static_cast<double>(model_.num_query_heads) * layers;
  const double attn_bytes = (2.0 * (hi * hi - lo * lo) / c + 2.0 * rem) * d *
                            static_cast<double>(model_.num_kv_heads) * layers *
                            (model_.bytes_per_element / 2.0);
  const double attn = std::max(attn_flops / (tp * spp * peak), attn_bytes / (kv_split * spp * bw));
  const double linear = std::max(rem * model_.mlp_flops_per_token * layers / (tp * spp * peak),
                                 steps * model_.weight_bytes / (tp * spp) / bw);
  double per_step = hw_.fixed_step_overhead + pipeline_comm(static_cast<std::int64_t>(c)) / scale_;
  if (par_.tp > 1) {
    const LinkModel& link = par_.tp <= hw_.devices_per_server ? hw_.intra_server : hw_.cross_server;
    per_step += layers_per_stage() * 2.0 *
                link.time(2.0 * (tp - 1.0) / tp * c * model_.activation_bytes_per_token());
  }
  const double busy = attn + linear;
  const double drain = (spp - 1.0) * busy / steps / spp;
  return scale_ * (busy + steps * per_step + drain);
}

std::int64_t RuntimePredictor::linear_saturation_tokens() const {
  const double peak = hw_.peak_flops * hw_.compute_efficiency;
  const double bw = hw_.mem_bandwidth * hw_.bandwidth_efficiency;
  const double tokens = model_.weight_bytes * peak /
                        (bw * model_.mlp_flops_per_token * static_cast<double>(model_.num_layers));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(tokens)));
}

void RuntimePredictor::set_reference_chunk(std::int64_t chunk) {
  if (chunk < 1) throw ConfigError("reference chunk must be >= 1");
  reference_chunk_ = chunk;
}

void RuntimePredictor::set_calibration_scale(double scale) {
  if (!(scale > 0) || !std::isfinite(scale)) throw ConfigError("calibration scale must be > 0");
  scale_ = scale;
}

void RuntimePredictor::calibrate(std::span<const ProfileRow> rows) {
  if (rows.empty()) return;
  const double saved = scale_;
  scale_ = 1.0;
  std::vector<double> ratios;
  ratios.reserve(rows.size());
  for (const auto& r : rows) {
    ratios.push_back(r.seconds / predict_chunk_time(r.kv_len, r.chunk_tokens, r.decode_tokens));
  }
  scale_ = saved;
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios.size() % 2 == 1
                            ? ratios[ratios.size() / 2]
                            : 0.5 * (ratios[ratios.size() / 2 - 1] + ratios[ratios.size() / 2]);
  set_calibration_scale(median);
}

}  // namespace lcsim
