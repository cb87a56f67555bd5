#pragma once

#include <json.hpp>

#include "depotcast/nn.hpp"

namespace depotcast::nn {

nlohmann::json network_to_json(const NetworkParams& params);
NetworkParams network_from_json(const nlohmann::json& j);

}  // namespace depotcast::nn
