#include "lcsim/presets.hpp"

#include "lcsim/errors.hpp"

namespace lcsim {

namespace {

// Linear FLOPs per token per layer = 2 * (projection + MLP params), with the
// LM head amortized over the layers.
ModelConfig llama3_8b() {
  ModelConfig m;
  m.name = "llama3-8b";
  m.num_query_heads = 32;
  m.num_kv_heads = 8;
  m.head_dim = 128;
  m.num_layers = 32;
  m.bytes_per_element = 2.0;
  m.mlp_flops_per_token = 4.69e8;
  m.weight_bytes = 16.06e9;
  return m;
}

ModelConfig llama3_70b() {
  ModelConfig m;
  m.name = "llama3-70b";
  m.num_query_heads = 64;
  m.num_kv_heads = 8;
  m.head_dim = 128;
  m.num_layers = 80;
  m.bytes_per_element = 2.0;
  m.mlp_flops_per_token = 1.737e9;
  m.weight_bytes = 141.1e9;
  return m;
}

HardwareProfile h100() {
  HardwareProfile hw;
  hw.name = "h100-80gb";
  hw.peak_flops = 989e12;
  hw.mem_bandwidth = 3.35e12;
  hw.mem_capacity = 80e9;
  hw.intra_server = {3e-6, 450e9};
  hw.cross_server = {25e-6, 50e9};
  hw.fixed_step_overhead = 1.5e-4;
  hw.devices_per_server = 8;
  hw.compute_efficiency = 0.6;
  hw.bandwidth_efficiency = 0.9;
  hw.activation_reserve_bytes = 4e9;
  return hw;
}

HardwareProfile a100() {
  HardwareProfile hw;
  hw.name = "a100-80gb";
  hw.peak_flops = 312e12;
  hw.mem_bandwidth = 2.039e12;
  hw.mem_capacity = 80e9;
  hw.intra_server = {3e-6, 300e9};
  hw.cross_server = {25e-6, 25e9};
  hw.fixed_step_overhead = 1.5e-4;
  hw.devices_per_server = 8;
  hw.compute_efficiency = 0.6;
  hw.bandwidth_efficiency = 0.9;
  hw.activation_reserve_bytes = 4e9;
  return hw;
}

}  // namespace

ModelConfig model_preset(std::string_view name) {
  if (name == "llama3-8b") return llama3_8b();
  if (name == "llama3-70b") return llama3_70b();
  throw ConfigError("unknown model preset '" + std::string(name) + "'");
}

HardwareProfile hardware_preset(std::string_view name) {
  if (name == "h100-80gb") return h100();
  if (name == "a100-80gb") return a100();
  throw ConfigError("unknown hardware preset '" + std::string(name) + "'");
}

std::vector<std::string> model_preset_names() { return {"llama3-8b", "llama3-70b"}; }
std::vector<std::string> hardware_preset_names() { return {"h100-80gb", "a100-80gb"}; }

}  // namespace lcsim
