#pragma once
// On-disk dataset: `dataset.json` listing volume ids with image and label
// stems relative to the dataset directory.
//   {"volumes":[{"id":"case000","image":"case000","labels":"case000_labels",
//                "supervision":{"expert_weak":"case000_expert_weak"}}]}
// "labels" is the full (reference) segmentation; "supervision" maps further
// label sources by name.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakseg/volume.hpp"

namespace weakseg {

struct DatasetEntry {
  std::string id;
  std::string image;   // stem relative to the dataset root
  std::string labels;  // stem relative to the dataset root, may be empty
  std::map<std::string, std::string> supervision;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
  nlohmann::json extra = nlohmann::json::object();  // generator metadata

  std::filesystem::path image_path(const DatasetEntry& e) const { return root / e.image; }
  std::filesystem::path labels_path(const DatasetEntry& e) const { return root / e.labels; }
  // "full" names the reference labels. Throws NotFound for unknown sources.
  std::filesystem::path supervision_path(const DatasetEntry& e, const std::string& name) const;
};

// Accepts the dataset directory or the manifest file itself.
DatasetManifest load_dataset_manifest(const std::filesystem::path& path);
void save_dataset_manifest(const DatasetManifest& manifest);

}  // namespace weakseg
