#include <doctest.h>

#include "oracles.hpp"
#include "testkit.hpp"
#include "weakseg/error.hpp"
#include "weakseg/random.hpp"
#include "weakseg/slic.hpp"

using namespace weakseg;

TEST_CASE("constant 48x48 slice gives 16 exact 12x12 rectangles") {
  const SuperpixelMap m = compute_slic(FloatPlane(48, 48, 7.0f));
  REQUIRE(m.region_count() == 16);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      CHECK(m.label_at(x, y) == m.label_at(x / 12 * 12, y / 12 * 12));
      if (x % 12 == 0 && y % 12 == 0 && (x || y)) CHECK(m.label_at(x, y) != m.label_at(x - (x ? 1 : 0), y - (x ? 0 : 1)));
    }
  for (const Region& r : m.regions) {
    CHECK(r.pixel_count == 144);
    CHECK(r.mean_intensity == doctest::Approx(7.0));
  }
}

TEST_CASE("region size covering the slice gives one region") {
  Rng rng(4);
  FloatPlane p(30, 20);
  for (auto& v : p.data) v = static_cast<float>(rng.uniform());
  SlicParams params;
  params.region_size = 30;
  const SuperpixelMap m = compute_slic(p, params);
  CHECK(m.region_count() == 1);
  CHECK(m.regions[0].pixel_count == 600u);
}

TEST_CASE("no region crosses a strong vertical step edge") {
  FloatPlane p(48, 48);
  Rng rng(12);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) p.at(x, y) = (x < 24 ? 0.0f : 1000.0f) + static_cast<float>(rng.normal(0, 1));
  const SuperpixelMap m = compute_slic(p);
  std::vector<int> side(static_cast<std::size_t>(m.region_count()), -1);
  bool crosses = false;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      int& s = side[static_cast<std::size_t>(m.label_at(x, y))];
      const int here = x < 24 ? 0 : 1;
      if (s == -1) s = here;
      crosses = crosses || s != here;
    }
  CHECK_FALSE(crosses);
}

TEST_CASE("result does not depend on intensity scale or offset") {
  Rng rng(31);
  FloatPlane p(40, 36);
  for (int y = 0; y < 36; ++y)
    for (int x = 0; x < 40; ++x) p.at(x, y) = static_cast<float>((x > 17) * 1.0 + rng.normal(0, 0.1));
  FloatPlane q = p;
  for (auto& v : q.data) v = v * 250.0f - 40.0f;
  CHECK(compute_slic(p).labels == compute_slic(q).labels);
}

TEST_CASE("enforce_connectivity") {
  SlicParams params;
  SUBCASE("connected map keeps its partition") {
    const SuperpixelMap m = compute_slic(FloatPlane(48, 48, 1.0f));
    const SuperpixelMap e = enforce_connectivity(m, params);
    CHECK(e.labels == m.labels);
  }
  SUBCASE("small orphan is absorbed by its largest neighbour") {
    SuperpixelMap m;
    m.width = 24;
    m.height = 12;
    m.labels.assign(24 * 12, 0);
    for (int y = 0; y < 12; ++y)
      for (int x = 12; x < 24; ++x) m.labels[y * 24 + x] = 1;
    m.labels[5 * 24 + 20] = 0;  // two-pixel fragment of region 0 inside region 1
    m.labels[5 * 24 + 21] = 0;
    m.regions = region_stats(24, 12, m.labels, 2, nullptr);
    const SuperpixelMap e = enforce_connectivity(m, params);
    CHECK(e.region_count() == 2);
    CHECK(e.label_at(20, 5) == e.label_at(23, 0));
    CHECK(e.regions[e.label_at(23, 0)].pixel_count == 144u);
  }
  SUBCASE("random label maps pass the flood-fill audit") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
      SuperpixelMap m;
      m.width = 20 + static_cast<int>(rng.below(20));
      m.height = 20 + static_cast<int>(rng.below(20));
      const int r = 2 + static_cast<int>(rng.below(8));
      m.labels.resize(static_cast<std::size_t>(m.width) * m.height);
      for (auto& l : m.labels) l = static_cast<std::int32_t>(rng.below(r));
      m.regions = region_stats(m.width, m.height, m.labels, r, nullptr);
      SlicParams p;
      p.region_size = 6;
      const SuperpixelMap e = enforce_connectivity(m, p);
      CHECK(oracle::labels_connected(e.width, e.height, e.labels));
      std::size_t total = 0;
      for (const auto& reg : e.regions) total += reg.pixel_count;
      CHECK(total == e.labels.size());
    }
  }
}

TEST_CASE("selection_mask") {
  Rng rng(3);
  FloatPlane p(50, 40);
  for (auto& v : p.data) v = static_cast<float>(rng.uniform());
  const SuperpixelMap m = compute_slic(p);
  const Mask none = selection_mask(m, {});
  CHECK(std::all_of(none.data.begin(), none.data.end(), [](auto b) { return b == 0; }));
  RegionSet all;
  for (int i = 0; i < m.region_count(); ++i) all.insert(i);
  const Mask full = selection_mask(m, all);
  CHECK(std::all_of(full.data.begin(), full.data.end(), [](auto b) { return b == 1; }));

  RegionSet some;
  std::size_t expected = 0;
  for (int i = 0; i < m.region_count(); i += 3) {
    some.insert(i);
    std::size_t count = 0;
    for (std::int32_t l : m.labels) count += l == i;
    expected += count;
  }
  const Mask part = selection_mask(m, some);
  CHECK(static_cast<std::size_t>(std::count(part.data.begin(), part.data.end(), 1)) == expected);
  CHECK_THROWS_AS(selection_mask(m, {m.region_count()}), Error);
}

TEST_CASE("adjacency is symmetric and matches 4-neighbour contacts") {
  const SuperpixelMap m = compute_slic(FloatPlane(36, 24, 0.0f));
  const auto adj = region_adjacency(m);
  REQUIRE(adj.size() == 6u);
  for (int a = 0; a < 6; ++a)
    for (int b : adj[a]) CHECK(std::find(adj[b].begin(), adj[b].end(), a) != adj[b].end());
  CHECK(adj[m.label_at(0, 0)] == std::vector<int>{m.label_at(12, 0), m.label_at(0, 12)});
}

TEST_CASE("wire format round trip") {
  Rng rng(9);
  FloatPlane p(37, 29);
  for (auto& v : p.data) v = static_cast<float>(rng.uniform());
  const SuperpixelMap m = compute_slic(p);
  const auto j = to_json(m);
  const SuperpixelMap back = superpixel_map_from_json(j);
  CHECK(back.labels == m.labels);
  CHECK(back.region_count() == m.region_count());
  auto broken = j;
  broken["rle_labels"].erase(broken["rle_labels"].size() - 1);
  CHECK_THROWS_AS(superpixel_map_from_json(broken), Error);
}

TEST_CASE("invalid parameters and slices are rejected") {
  SlicParams bad;
  bad.region_size = 0;
  CHECK_THROWS_AS(compute_slic(FloatPlane(8, 8), bad), Error);
  CHECK_THROWS_AS(compute_slic(FloatPlane()), Error);
}

TEST_CASE("invariant suite on a sample of slices") {
  const auto v = testkit::slic_suite(20, 5);
  INFO(v.detail);
  CHECK(v.ok);
}
