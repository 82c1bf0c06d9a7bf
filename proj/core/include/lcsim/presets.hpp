#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lcsim/costmodel.hpp"

namespace lcsim {

/// Built-in model shapes: "llama3-8b", "llama3-70b".
ModelConfig model_preset(std::string_view name);
/// Built-in accelerators: "h100-80gb", "a100-80gb" (8 per server).
HardwareProfile hardware_preset(std::string_view name);

std::vector<std::string> model_preset_names();
std::vector<std::string> hardware_preset_names();

}  // namespace lcsim
