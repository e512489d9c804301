#pragma once

#include <filesystem>
#include <utility>

#include <json.hpp>

#include "mofa/nn/conv_net.hpp"

namespace mofa::nn {

/// Writes `arch.json` (layer specs, parameter files and `extra` fields) and
/// one float32 array per parameter tensor into `dir`.
void save_net(const ConvNet& net, const nlohmann::json& extra, const std::filesystem::path& dir);

/// Inverse of save_net; returns the network and the full architecture manifest.
std::pair<ConvNet, nlohmann::json> load_net(const std::filesystem::path& dir);

}  // namespace mofa::nn
