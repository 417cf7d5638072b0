#include "weakseg/fcn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "weakseg/error.hpp"

namespace weakseg::fcn {

namespace fs = std::filesystem;

namespace {

void write_f32(const fs::path& path, const std::vector<float>& values) {
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t w = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) {
      w = (w >> 24) | ((w >> 8) & 0xFF00u) | ((w << 8) & 0xFF0000u) | (w << 24);
    }
    words[i] = w;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

void read_f32(const fs::path& path, std::vector<float>& values) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint32_t> words(values.size());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(words.size() * 4) || in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::SizeMismatch, path.string() + " has the wrong size");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t w = words[i];
    if constexpr (std::endian::native == std::endian::big) {
      w = (w >> 24) | ((w >> 8) & 0xFF00u) | ((w << 8) & 0xFF0000u) | (w << 24);
    }
    values[i] = std::bit_cast<float>(w);
  }
}

}  // namespace

void save_checkpoint(const FcnModel<float>& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* p : model.parameters()) {
    write_f32(dir / (p->name + ".raw"), p->value);
    write_f32(dir / (p->name + ".momentum.raw"), p->momentum);
    tensors.push_back({{"name", p->name}, {"shape", p->shape}, {"dtype", "f32le"}});
  }
  const nlohmann::json manifest = {{"format", "weakseg-fcn"},
                                   {"config", to_json(model.config())},
                                   {"seed", model.seed()},
                                   {"epoch", model.epoch},
                                   {"tensors", tensors}};
  std::ofstream out(dir / "model.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write manifest in " + dir.string());
}

FcnModel<float> load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw Error(ErrorCode::IoFailure, "no model.json in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, dir.string() + "/model.json: " + e.what());
  }
  if (manifest.value("format", "") != "weakseg-fcn" || !manifest.contains("config") || !manifest.contains("tensors")) {
    throw Error(ErrorCode::MalformedHeader, dir.string() + "/model.json is not a model manifest");
  }
  FcnModel<float> model(fcn_config_from_json(manifest.at("config")), manifest.value("seed", std::uint64_t{0}));
  model.epoch = manifest.value("epoch", 0);
  auto params = model.parameters();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size()) throw Error(ErrorCode::MalformedHeader, "tensor list does not match config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i].value("name", "") != params[i]->name ||
        tensors[i].value("shape", std::vector<int>{}) != params[i]->shape) {
      throw Error(ErrorCode::MalformedHeader, "unexpected tensor entry " + tensors[i].dump());
    }
    read_f32(dir / (params[i]->name + ".raw"), params[i]->value);
    read_f32(dir / (params[i]->name + ".momentum.raw"), params[i]->momentum);
  }
  return model;
}

}  // namespace weakseg::fcn
