#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "weakseg/error.hpp"
#include "weakseg/random.hpp"
#include "weakseg/volume.hpp"

using namespace weakseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "weakseg_test_volume";
  fs::create_directories(dir);
  return dir / name;
}

Volume random_volume(Dims3 d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(d.voxel_count());
  for (auto& x : v) x = static_cast<float>(rng.normal(3.0, 2.0));
  return Volume(d, {1.0, 1.0, 2.0}, std::move(v));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("2x2x1 payload loads in x-fastest order") {
  const fs::path p = scratch("tiny");
  {
    std::ofstream(p.string() + ".json") << R"({"dims":[2,2,1],"spacing":[1,1,1],"dtype":"f32le"})";
    const float data[4] = {0, 1, 2, 3};
    std::ofstream(p.string() + ".raw", std::ios::binary).write(reinterpret_cast<const char*>(data), sizeof data);
  }
  const Volume v = load_volume(p);
  CHECK(v.dims() == Dims3{2, 2, 1});
  CHECK(v.at(1, 0, 0) == 1.0f);
  CHECK(v.at(0, 1, 0) == 2.0f);
  CHECK(std::vector<float>(v.voxels().begin(), v.voxels().end()) == std::vector<float>{0, 1, 2, 3});
}

TEST_CASE("payload length must match the header") {
  const fs::path p = scratch("short");
  std::ofstream(p.string() + ".json") << R"({"dims":[2,2,2],"spacing":[1,1,1],"dtype":"f32le"})";
  std::ofstream(p.string() + ".raw", std::ios::binary) << std::string(16, '\0');
  CHECK(code_of([&] { load_volume(p); }) == ErrorCode::SizeMismatch);
}

TEST_CASE("malformed headers are rejected") {
  const fs::path p = scratch("bad");
  std::ofstream(p.string() + ".raw", std::ios::binary) << std::string(4, '\0');
  for (const char* header : {"{", R"({"dims":[1,1],"spacing":[1,1,1],"dtype":"f32le"})",
                             R"({"dims":[1,1,1],"spacing":[1,1,1],"dtype":"f64"})",
                             R"({"dims":[0,1,1],"spacing":[1,1,1],"dtype":"f32le"})"}) {
    std::ofstream(p.string() + ".json", std::ios::trunc) << header;
    CAPTURE(header);
    CHECK(code_of([&] { load_volume(p); }) == ErrorCode::MalformedHeader);
  }
}

TEST_CASE("non-finite voxels are rejected") {
  CHECK(code_of([] { Volume({1, 1, 1}, {}, {std::nanf("")}); }) == ErrorCode::NonFiniteVoxel);
  CHECK(code_of([] { Volume({1, 1, 1}, {}, {INFINITY}); }) == ErrorCode::NonFiniteVoxel);
}

TEST_CASE("volume and label round trips are bit exact") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Volume v = random_volume({7, 5, 3}, seed);
    const fs::path p = scratch("rt" + std::to_string(seed));
    save_volume(v, p);
    CHECK(load_volume(p) == v);
    CHECK(load_volume(p.string() + ".raw") == v);
    CHECK(decode_volume(volume_header_json(v), volume_payload(v)) == v);

    Rng rng(seed);
    std::vector<std::uint8_t> lab(v.dims().voxel_count());
    for (auto& x : lab) x = static_cast<std::uint8_t>(rng.below(2));
    const LabelVolume l(v.dims(), lab);
    save_labels(l, p.string() + "_labels");
    CHECK(load_labels(p.string() + "_labels") == l);
    CHECK(fs::file_size(p.string() + "_labels.raw") == v.dims().voxel_count());
  }
}

TEST_CASE("unwritable path fails with IoFailure") {
  const Volume v = random_volume({2, 2, 2}, 1);
  CHECK(code_of([&] { save_volume(v, "/proc/weakseg/nope"); }) == ErrorCode::IoFailure);
  CHECK(code_of([&] { load_volume(scratch("missing")); }) == ErrorCode::IoFailure);
}

TEST_CASE("labels outside {0,1} are rejected") {
  CHECK(code_of([] { LabelVolume({2, 1, 1}, {0, 2}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("normalize") {
  SUBCASE("two-valued volume") {
    const Volume n = normalize(Volume({4, 1, 1}, {}, {0, 2, 0, 2}));
    CHECK(std::vector<float>(n.voxels().begin(), n.voxels().end()) == std::vector<float>{-1, 1, -1, 1});
  }
  SUBCASE("constant volume maps to zeros") {
    const Volume n = normalize(Volume({3, 3, 1}, {}, std::vector<float>(9, 5.0f)));
    for (float x : n.voxels()) CHECK(x == 0.0f);
  }
  SUBCASE("moments recomputed independently") {
    const Volume n = normalize(random_volume({16, 16, 16}, 42));
    long double s = 0, s2 = 0;
    for (float x : n.voxels()) s += x;
    const long double mean = s / n.voxels().size();
    for (float x : n.voxels()) s2 += (x - mean) * (x - mean);
    const double sd = std::sqrt(static_cast<double>(s2 / n.voxels().size()));
    CHECK(std::abs(static_cast<double>(mean)) < 1e-5);
    CHECK(sd > 1 - 1e-4);
    CHECK(sd < 1 + 1e-4);
  }
  SUBCASE("idempotent") {
    const Volume a = normalize(random_volume({9, 8, 7}, 3));
    const Volume b = normalize(a);
    for (std::size_t i = 0; i < a.voxels().size(); ++i) CHECK(std::abs(a.voxels()[i] - b.voxels()[i]) < 1e-4);
  }
}

TEST_CASE("slice_stack clamps at the volume boundary") {
  const Volume v = random_volume({4, 3, 5}, 8);
  auto expect_slice = [&](const std::vector<float>& ch, int z) {
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x) CHECK(ch[y * 4 + x] == v.at(x, y, z));
  };
  const SliceStack3 s0 = slice_stack(v, 0);
  expect_slice(s0.channels[0], 0);
  expect_slice(s0.channels[1], 0);
  expect_slice(s0.channels[2], 1);
  for (int k = 1; k < 4; ++k) {
    const SliceStack3 s = slice_stack(v, k);
    expect_slice(s.channels[0], k - 1);
    expect_slice(s.channels[1], k);
    expect_slice(s.channels[2], k + 1);
    CHECK(s.channels[1] == extract_slice(v, k).data);
  }
  const SliceStack3 s4 = slice_stack(v, 4);
  expect_slice(s4.channels[2], 4);

  const Volume flat = random_volume({3, 3, 1}, 9);
  const SliceStack3 f = slice_stack(flat, 0);
  CHECK(f.channels[0] == f.channels[1]);
  CHECK(f.channels[2] == f.channels[1]);
  CHECK(code_of([&] { slice_stack(v, 5); }) == ErrorCode::IndexOutOfRange);
}
