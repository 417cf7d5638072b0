#include "weakseg/dataset.hpp"

#include <fstream>

#include "weakseg/error.hpp"

namespace weakseg {

namespace fs = std::filesystem;

fs::path DatasetManifest::supervision_path(const DatasetEntry& e, const std::string& name) const {
  if (name == "full") {
    if (e.labels.empty()) throw Error(ErrorCode::NotFound, e.id + " has no reference labels");
    return root / e.labels;
  }
  const auto it = e.supervision.find(name);
  if (it == e.supervision.end()) throw Error(ErrorCode::NotFound, e.id + " has no '" + name + "' labels");
  return root / it->second;
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "dataset.json" : path;
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + file.string());
  DatasetManifest m;
  m.root = file.parent_path();
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& v : j.at("volumes")) {
      DatasetEntry e{v.at("id").get<std::string>(), v.at("image").get<std::string>(),
                     v.value("labels", std::string{}), {}};
      if (v.contains("supervision")) e.supervision = v.at("supervision").get<std::map<std::string, std::string>>();
      m.entries.push_back(std::move(e));
    }
    for (const auto& [key, value] : j.items()) {
      if (key != "volumes") m.extra[key] = value;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, file.string() + ": " + e.what());
  }
  return m;
}

void save_dataset_manifest(const DatasetManifest& manifest) {
  nlohmann::json j = manifest.extra.is_object() ? manifest.extra : nlohmann::json::object();
  j["volumes"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json v = {{"id", e.id}, {"image", e.image}, {"labels", e.labels}};
    if (!e.supervision.empty()) v["supervision"] = e.supervision;
    j["volumes"].push_back(std::move(v));
  }
  std::error_code ec;
  fs::create_directories(manifest.root, ec);
  const fs::path file = manifest.root / "dataset.json";
  std::ofstream out(file, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + file.string());
}

}  // namespace weakseg
