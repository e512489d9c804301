#include <fstream>

#include <json.hpp>

#include "mofa/core/array_io.hpp"
#include "mofa/core/errors.hpp"
#include "mofa/matcher.hpp"

namespace mofa::matcher {

void save_gallery(const Gallery& gallery, const std::filesystem::path& json_path) {
  const auto dir = json_path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["theta"] = gallery.theta;
  doc["p"] = gallery.p;
  doc["identities"] = nlohmann::json::array();
  for (const auto& [id, e] : gallery.entries) {
    NdArray a;
    a.shape = {e.dim()};
    a.values.assign(e.values().begin(), e.values().end());
    const std::string file = "embedding_" + id + ".f32";
    save_array(a, dir / file);
    doc["identities"].push_back({{"id", id}, {"embedding", file}, {"dim", e.dim()}});
  }
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot write " + json_path.string());
  out << doc.dump(2) << "\n";
}

Gallery load_gallery(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("no gallery at " + json_path.string());
  Gallery g;
  try {
    auto doc = nlohmann::json::parse(in);
    g.theta = doc.at("theta").get<double>();
    g.p = doc.value("p", 2.0);
    for (const auto& item : doc.at("identities")) {
      auto a = load_array(json_path.parent_path() / item.at("embedding").get<std::string>());
      if (a.shape.size() != 1) throw CorruptionError("gallery embedding is not a vector");
      g.entries.emplace(item.at("id").get<std::string>(),
                        Embedding::from_unit(std::vector<double>(a.values.begin(), a.values.end())));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed gallery " + json_path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw CorruptionError("gallery " + json_path.string() + ": " + e.what());
  }
  return g;
}

}  // namespace mofa::matcher
