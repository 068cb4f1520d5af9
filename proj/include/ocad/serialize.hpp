#pragma once

#include <json.hpp>

#include "ocad/nn.hpp"

namespace ocad::serialize {

// Network <-> JSON helpers shared by the detector and baseline model files.
// Weights round-trip at full 64-bit precision (shortest-round-trip decimals).
nlohmann::json network_arch(const nn::Network& net);
nlohmann::json network_weights(const nn::Network& net);
nn::Network network_from_json(const nlohmann::json& arch, const nlohmann::json& weights);

nlohmann::json layer_spec(const nn::LayerSpec& spec);
nn::LayerSpec layer_spec_from_json(const nlohmann::json& j);

}  // namespace ocad::serialize
