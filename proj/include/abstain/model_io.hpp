#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "abstain/nn.hpp"

namespace abstain {

/// Model document:
///   {"config": {"format": 1, "input_dim", "body_layers", "pred_layers"},
///    "layers": [body..., pred_head...],
///    "rej_mode": {"kind": "scalar", "raw_rho"} | {"kind": "instance", "layers": [...]},
///    "aux_head": null | [...]}
/// Each layer is {"rows", "cols", "weights" (row-major), "bias", "activation"}.
/// Doubles are written in shortest round-trip form, so load(save(net)) is
/// bit-identical.
nlohmann::json model_to_json(const AbstainNetwork& net);
AbstainNetwork model_from_json(const nlohmann::json& doc);

void save_model(const std::filesystem::path& path, const AbstainNetwork& net);
AbstainNetwork load_model(const std::filesystem::path& path);

}  // namespace abstain
