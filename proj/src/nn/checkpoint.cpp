#include "mofa/nn/checkpoint.hpp"

#include <fstream>

#include "mofa/core/array_io.hpp"
#include "mofa/core/errors.hpp"

namespace mofa::nn {

void save_net(const ConvNet& net, const nlohmann::json& extra, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json arch = extra;
  arch["in_channels"] = net.in_channels();
  arch["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    arch["layers"].push_back(
        {{"out_channels", l.out_channels}, {"kernel", l.kernel}, {"stride", l.stride}, {"elu", l.elu}});
  }
  arch["parameters"] = nlohmann::json::array();
  const auto names = net.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& p = net.parameters()[i];
    NdArray a;
    a.shape = {p.size()};
    a.values.assign(p.begin(), p.end());
    const std::string file = names[i] + ".f32";
    save_array(a, dir / file);
    arch["parameters"].push_back({{"name", names[i]}, {"file", file}, {"size", p.size()}});
  }
  std::ofstream out(dir / "arch.json");
  if (!out) throw IoError("cannot write " + (dir / "arch.json").string());
  out << arch.dump(2) << "\n";
}

std::pair<ConvNet, nlohmann::json> load_net(const std::filesystem::path& dir) {
  std::ifstream in(dir / "arch.json");
  if (!in) throw IoError("no checkpoint at " + dir.string());
  nlohmann::json arch;
  try {
    arch = nlohmann::json::parse(in);
    std::vector<ConvSpec> layers;
    for (const auto& l : arch.at("layers")) {
      layers.push_back({l.at("out_channels").get<int>(), l.at("kernel").get<int>(),
                        l.at("stride").get<int>(), l.at("elu").get<bool>()});
    }
    ConvNet net(arch.at("in_channels").get<int>(), std::move(layers));
    const auto& params = arch.at("parameters");
    if (params.size() != net.parameters().size()) {
      throw CorruptionError("checkpoint parameter count does not match its layers");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto a = load_array(dir / params[i].at("file").get<std::string>());
      auto& p = net.parameters()[i];
      if (a.values.size() != p.size()) {
        throw CorruptionError("parameter " + params[i].at("name").get<std::string>() +
                              " has the wrong size");
      }
      p.assign(a.values.begin(), a.values.end());
    }
    return {std::move(net), std::move(arch)};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
  }
}

}  // namespace mofa::nn
