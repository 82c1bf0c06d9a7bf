#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lcsim {

/// Transformer shape. `mlp_flops_per_token` is the non-attention linear work of
/// one token through one layer; `weight_bytes` is the whole model.
struct ModelConfig {
  std::string name;
  std::int64_t num_query_heads = 0;
  std::int64_t num_kv_heads = 0;
  std::int64_t head_dim = 0;
  std::int64_t num_layers = 0;
  double bytes_per_element = 2.0;
  double mlp_flops_per_token = 0.0;
  double weight_bytes = 0.0;

  void validate() const;
  double gqa_ratio() const {
    return static_cast<double>(num_query_heads) / static_cast<double>(num_kv_heads);
  }
  /// Size of one token's hidden activation, the unit moved between stages.
  double activation_bytes_per_token() const {
    return static_cast<double>(num_query_heads * head_dim) * bytes_per_element;
  }
};

/// Point-to-point transfer cost: fixed latency plus bytes over per-device bandwidth.
struct LinkModel {
  double latency_s = 0.0;
  double bandwidth = 1.0;  // bytes/s per device

  double time(double bytes) const { return latency_s + bytes / bandwidth; }
};

struct HardwareProfile {
  std::string name;
  double peak_flops = 0.0;     // per device
  double mem_bandwidth = 0.0;  // bytes/s per device
  double mem_capacity = 0.0;   // bytes per device
  LinkModel intra_server;
  LinkModel cross_server;
  double fixed_step_overhead = 0.0;  // per micro-batch per stage
  int devices_per_server = 8;
  // Calibration: achieved fraction of peak compute / bandwidth, in (0, 1].
  double compute_efficiency = 1.0;
  double bandwidth_efficiency = 1.0;
  double activation_reserve_bytes = 0.0;

  void validate() const;
};

struct ParallelismConfig {
  int tp = 1;
  int spp = 1;
  int kvp = 1;

  int devices() const { return tp * spp * kvp; }
  /// Throws InfeasibleConfig when heads cannot be sharded or a degree is < 1.
  void validate(const ModelConfig& model) const;
  friend bool operator==(const ParallelismConfig&, const ParallelismConfig&) = default;
};

inline constexpr std::int64_t kChunkQuantum = 32;

/// Whole-model causal attention FLOPs for a prompt of n tokens: L * 2 n^2 d h_q.
double attention_flops(std::int64_t n, const ModelConfig& model);

/// Whole-model KV-cache footprint of n tokens; also the bytes a decode step reads.
double kv_cache_bytes(std::int64_t n, const ModelConfig& model);

struct ChunkAttentionCost {
  double flops_per_layer = 0.0;
  double read_bytes_per_layer = 0.0;
  double flops = 0.0;       // whole model
  double read_bytes = 0.0;  // whole model
  double arithmetic_intensity = 0.0;
};

/// Attention cost of the chunk_index-th chunk (1-based) of size `chunk`, which
/// attends to the chunk_index * chunk tokens processed so far.
ChunkAttentionCost chunk_attention_cost(std::int64_t chunk_index, std::int64_t chunk,
                                        const ModelConfig& model);

/// Rounds up to a multiple of kChunkQuantum, never below one quantum.
std::int64_t quantize_chunk(std::int64_t tokens);

/// Smallest quantized chunk whose attention intensity reaches the device's
/// compute/bandwidth ratio.
std::int64_t min_efficient_chunk(const ModelConfig& model, const HardwareProfile& hw);

struct Utilization {
  double mfu = 0.0;
  double mbu = 0.0;
};

/// Not clamped: values above 1 point at a cost-model bug.
Utilization utilization(double executed_flops, double moved_bytes, double elapsed,
                        int device_count, const HardwareProfile& hw);

/// One request's contribution to a micro-batch. `kv_before` tokens are already
/// cached, `new_tokens` are computed now. `kvp_shards` ranks share its KV cache.
/// Attention-only segments carry a foreign request's KV shard (no linear work).
struct Segment {
  std::int64_t kv_before = 0;
  std::int64_t new_tokens = 0;
  int kvp_shards = 1;
  bool attention_only = false;
};

/// Accumulated per-device work of one micro-batch on one pipeline stage.
struct StageWork {
  double attention_time = 0.0;
  double linear_tokens = 0.0;
  double kvp_query_tokens = 0.0;
  // Whole-model accounting (summed over every device) for MFU/MBU.
  double model_flops = 0.0;
  double model_attention_bytes = 0.0;
  bool any_linear = false;
};

struct StageCost {
  double linear_time = 0.0;
  double attention_time = 0.0;
  double tp_comm_time = 0.0;
  double kvp_comm_time = 0.0;
  double overhead = 0.0;
  double total = 0.0;
};

/// CSV rows `kv_len,chunk_tokens,decode_tokens,seconds` of measured step times.
struct ProfileRow {
  std::int64_t kv_len = 0;
  std::int64_t chunk_tokens = 0;
  std::int64_t decode_tokens = 0;
  double seconds = 0.0;
};

std::vector<ProfileRow> load_profile_table(const std::filesystem::path& path);

/// Roofline runtime predictor for one pipeline stage of one KVP rank.
///
/// Linear layers and each segment's attention are rooflined separately and
/// summed; TP all-reduces, KVP partial merges and a fixed launch overhead are
/// added on top. The whole result may be rescaled by a factor fitted to a
/// measured profile table.
class RuntimePredictor {
 public:
  RuntimePredictor(ModelConfig model, HardwareProfile hw, ParallelismConfig par);

  const ModelConfig& model() const { return model_; }
  const HardwareProfile& hardware() const { return hw_; }
  const ParallelismConfig& parallelism() const { return par_; }

  double layers_per_stage() const;

  void add(StageWork& work, const Segment& seg) const;
  /// Adds `count` single-token decodes whose cached contexts sum to
  /// `context_tokens`. Decode attention is bandwidth bound, so the group
  /// costs the same as the individual segments.
  void add_decodes(StageWork& work, std::int64_t count, std::int64_t context_tokens,
                   int kvp_shards = 1) const;
  StageCost cost(const StageWork& work) const;
  double stage_time(std::span<const Segment> segments) const;

  /// Per-stage time of a micro-batch holding one prefill chunk of `chunk` tokens
  /// after `kv_len_before` cached tokens plus `decode_tokens` decodes whose
  /// contexts sum to `decode_context_tokens`. The chunk's KV is spread over
  /// all p_kvp ranks.
  double predict_chunk_time(std::int64_t kv_len_before, std::int64_t chunk,
                            std::int64_t decode_tokens,
                            std::int64_t decode_context_tokens = 0) const;

  /// Inter-stage activation transfer for a micro-batch of `tokens`.
  double pipeline_comm(std::int64_t tokens) const;
  /// Partial-attention merge across KVP ranks for `query_tokens`, per stage.
  double kvp_comm(std::int64_t query_tokens) const;

  /// Latency for one micro-batch to cross every stage, given its stage time.
  double traversal_time(double stage_time, std::int64_t tokens) const;

  /// Estimated time to prefill tokens [done, total) running alone.
  double isolated_prefill_time(std::int64_t done, std::int64_t total) const;

  /// Micro-batch token count at which linear layers stop being weight-read bound.
  std::int64_t linear_saturation_tokens() const;

  std::int64_t reference_chunk() const { return reference_chunk_; }
  void set_reference_chunk(std::int64_t chunk);

  double calibration_scale() const { return scale_; }
  void set_calibration_scale(double scale);
  /// Fits the calibration scale to the median measured/predicted ratio.
  void calibrate(std::span<const ProfileRow> rows);

 private:
  ModelConfig model_;
  HardwareProfile hw_;
  ParallelismConfig par_;
  std::int64_t reference_chunk_ = 4096;
  double scale_ = 1.0;
};

}  // namespace lcsim
