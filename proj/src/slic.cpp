#include "weakseg/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "weakseg/error.hpp"

namespace weakseg {

using nlohmann::json;

void SlicParams::validate() const {
  if (region_size < 2) throw Error(ErrorCode::InvalidConfig, "region_size must be >= 2");
  if (!(compactness > 0)) throw Error(ErrorCode::InvalidConfig, "compactness must be > 0");
  if (iterations < 1) throw Error(ErrorCode::InvalidConfig, "iterations must be >= 1");
  if (!(min_region_fraction > 0 && min_region_fraction < 1)) {
    throw Error(ErrorCode::InvalidConfig, "min_region_fraction must be in (0, 1)");
  }
}

namespace {

constexpr double kIntensityRange = 100.0;

struct Center {
  double x;
  double y;
  double intensity;
};

double gradient_at(const FloatPlane& img, int x, int y) {
  const int w = img.width;
  const int h = img.height;
  const double dx = img.at(std::min(x + 1, w - 1), y) - img.at(std::max(x - 1, 0), y);
  const double dy = img.at(x, std::min(y + 1, h - 1)) - img.at(x, std::max(y - 1, 0));
  return dx * dx + dy * dy;
}

int clamp_round(double v, int hi) { return std::clamp(static_cast<int>(std::lround(v)), 0, hi); }

std::vector<Center> seed_centers(const FloatPlane& img, int region_size) {
  const int nx = std::max(1, (img.width + region_size - 1) / region_size);
  const int ny = std::max(1, (img.height + region_size - 1) / region_size);
  const double step_x = static_cast<double>(img.width) / nx;
  const double step_y = static_cast<double>(img.height) / ny;
  std::vector<Center> centers;
  centers.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      double cx = (i + 0.5) * step_x - 0.5;
      double cy = (j + 0.5) * step_y - 0.5;
      const int px = clamp_round(cx, img.width - 1);
      const int py = clamp_round(cy, img.height - 1);
      double best = gradient_at(img, px, py);
      int bx = px;
      int by = py;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = px + dx;
          const int y = py + dy;
          if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
          const double g = gradient_at(img, x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      // Only a strictly flatter neighbour moves the seed off the cell center.
      if (bx != px || by != py) {
        cx = bx;
        cy = by;
      }
      centers.push_back({cx, cy, img.at(clamp_round(cx, img.width - 1), clamp_round(cy, img.height - 1))});
    }
  }
  return centers;
}

// Per-slice min-max window onto [0, kIntensityRange]; constant slices map to 0.
FloatPlane rescale_intensity(const FloatPlane& slice) {
  FloatPlane out(slice.width, slice.height, 0.0f);
  const auto [lo, hi] = std::minmax_element(slice.data.begin(), slice.data.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < slice.data.size(); ++i) {
    out.data[i] = static_cast<float>((slice.data[i] - *lo) / range * kIntensityRange);
  }
  return out;
}

}  // namespace

SuperpixelMap compute_slic(const FloatPlane& slice, const SlicParams& params) {
  params.validate();
  if (slice.width <= 0 || slice.height <= 0 || slice.data.empty()) {
    throw Error(ErrorCode::EmptySlice, "slice has zero area");
  }
  if (slice.data.size() != static_cast<std::size_t>(slice.width) * slice.height) {
    throw Error(ErrorCode::DimMismatch, "slice data length does not match dims");
  }
  const int w = slice.width;
  const int h = slice.height;
  const double s = params.region_size;
  const double spatial_weight = (params.compactness / s) * (params.compactness / s);

  const FloatPlane img = rescale_intensity(slice);
  std::vector<Center> centers = seed_centers(img, params.region_size);
  const std::size_t n = slice.size();
  std::vector<std::int32_t> labels(n, -1);
  std::vector<double> dist(n);

  auto assign = [&] {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.begin(), labels.end(), -1);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const Center& ctr = centers[c];
      const int x0 = std::max(0, static_cast<int>(std::ceil(ctr.x - s)));
      const int x1 = std::min(w - 1, static_cast<int>(std::floor(ctr.x + s)));
      const int y0 = std::max(0, static_cast<int>(std::ceil(ctr.y - s)));
      const int y1 = std::min(h - 1, static_cast<int>(std::floor(ctr.y + s)));
      for (int y = y0; y <= y1; ++y) {
        const double dy = y - ctr.y;
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          const double dx = x - ctr.x;
          const double di = img.data[p] - ctr.intensity;
          const double d = di * di + spatial_weight * (dx * dx + dy * dy);
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<std::int32_t>(c);
          }
        }
      }
    }
    // Pixels outside every window (centers drifted away) take the nearest center.
    for (std::size_t p = 0; p < n; ++p) {
      if (labels[p] >= 0) continue;
      const double x = static_cast<double>(p % w);
      const double y = static_cast<double>(p / w);
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dx = x - centers[c].x;
        const double dy = y - centers[c].y;
        const double di = img.data[p] - centers[c].intensity;
        const double d = di * di + spatial_weight * (dx * dx + dy * dy);
        if (d < dist[p]) {
          dist[p] = d;
          labels[p] = static_cast<std::int32_t>(c);
        }
      }
    }
  };

  for (int iter = 0; iter < params.iterations; ++iter) {
    assign();
    std::vector<double> sx(centers.size(), 0.0), sy(centers.size(), 0.0), si(centers.size(), 0.0);
    std::vector<std::size_t> count(centers.size(), 0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto c = static_cast<std::size_t>(labels[p]);
      sx[c] += static_cast<double>(p % w);
      sy[c] += static_cast<double>(p / w);
      si[c] += img.data[p];
      ++count[c];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (count[c] == 0) continue;
      const double k = static_cast<double>(count[c]);
      centers[c] = {sx[c] / k, sy[c] / k, si[c] / k};
    }
  }
  assign();

  SuperpixelMap raw;
  raw.width = w;
  raw.height = h;
  raw.labels = std::move(labels);
  const int max_label = *std::max_element(raw.labels.begin(), raw.labels.end());
  raw.regions = region_stats(w, h, raw.labels, max_label + 1, &slice);
  return enforce_connectivity(raw, params, &slice);
}

std::vector<Region> region_stats(int width, int height, const std::vector<std::int32_t>& labels,
                                 int region_count, const FloatPlane* intensity) {
  std::vector<Region> regions(static_cast<std::size_t>(region_count));
  std::vector<double> sx(regions.size(), 0.0), sy(regions.size(), 0.0), si(regions.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      const auto r = static_cast<std::size_t>(labels[p]);
      ++regions[r].pixel_count;
      sx[r] += x;
      sy[r] += y;
      if (intensity) si[r] += intensity->data[p];
    }
  }
  for (std::size_t r = 0; r < regions.size(); ++r) {
    regions[r].id = static_cast<int>(r);
    const double k = static_cast<double>(std::max<std::size_t>(regions[r].pixel_count, 1));
    regions[r].centroid_x = sx[r] / k;
    regions[r].centroid_y = sy[r] / k;
    regions[r].mean_intensity = si[r] / k;
  }
  return regions;
}

SuperpixelMap enforce_connectivity(const SuperpixelMap& map, const SlicParams& params,
                                   const FloatPlane* intensity) {
  const int w = map.width;
  const int h = map.height;
  const std::size_t n = map.labels.size();
  if (n != static_cast<std::size_t>(w) * h || n == 0) {
    throw Error(ErrorCode::DimMismatch, "label map length does not match dims");
  }

  // 1. 4-connected components of equal label, numbered in row-major order.
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> comp_size;
  std::vector<std::int32_t> comp_label;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(comp_size.size());
    const std::int32_t label = map.labels[start];
    std::size_t size = 0;
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const std::size_t nbr[4] = {p - 1, p + 1, p - w, p + w};
      const bool ok[4] = {x > 0, x < w - 1, y > 0, y < h - 1};
      for (int i = 0; i < 4; ++i) {
        if (ok[i] && comp[nbr[i]] < 0 && map.labels[nbr[i]] == label) {
          comp[nbr[i]] = id;
          stack.push_back(nbr[i]);
        }
      }
    }
    comp_size.push_back(size);
    comp_label.push_back(label);
  }
  const std::size_t n_comp = comp_size.size();

  // 2. Component adjacency.
  std::vector<std::set<int>> adj(n_comp);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      if (x + 1 < w && comp[p] != comp[p + 1]) {
        adj[comp[p]].insert(comp[p + 1]);
        adj[comp[p + 1]].insert(comp[p]);
      }
      if (y + 1 < h && comp[p] != comp[p + w]) {
        adj[comp[p]].insert(comp[p + w]);
        adj[comp[p + w]].insert(comp[p]);
      }
    }
  }

  // 3. The largest component of each input label is its principal region.
  std::vector<bool> principal(n_comp, false);
  {
    std::vector<int> best_for_label;
    for (std::size_t c = 0; c < n_comp; ++c) {
      const auto label = static_cast<std::size_t>(std::max(comp_label[c], 0));
      if (label >= best_for_label.size()) best_for_label.resize(label + 1, -1);
      int& best = best_for_label[label];
      if (best < 0 || comp_size[c] > comp_size[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    }
    for (int c : best_for_label) {
      if (c >= 0) principal[static_cast<std::size_t>(c)] = true;
    }
  }

  // 4. Merge fragments and undersized regions, in row-major order.
  const double min_size = params.min_region_fraction * params.region_size * params.region_size;
  std::vector<int> parent(n_comp);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<std::size_t> size = comp_size;
  auto find = [&](int c) {
    while (parent[c] != c) {
      parent[c] = parent[parent[c]];
      c = parent[c];
    }
    return c;
  };
  for (std::size_t c = 0; c < n_comp; ++c) {
    const int root = static_cast<int>(c);
    if (find(root) != root) continue;  // already absorbed into a neighbour
    if (principal[c] && static_cast<double>(size[root]) >= min_size) continue;
    int target = -1;
    for (int nb : adj[root]) {
      const int r = find(nb);
      if (r == root) continue;
      if (target < 0 || size[r] > size[target] || (size[r] == size[target] && r < target)) target = r;
    }
    if (target < 0) continue;
    parent[root] = target;
    size[target] += size[root];
    for (int nb : adj[root]) adj[target].insert(nb);
    adj[root].clear();
  }

  // 5. Dense relabel by first appearance.
  std::vector<int> dense(n_comp, -1);
  int next = 0;
  SuperpixelMap out;
  out.width = w;
  out.height = h;
  out.labels.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    const int r = find(comp[p]);
    if (dense[r] < 0) dense[r] = next++;
    out.labels[p] = dense[r];
  }

  if (intensity) {
    out.regions = region_stats(w, h, out.labels, next, intensity);
  } else {
    out.regions = region_stats(w, h, out.labels, next, nullptr);
    std::vector<double> si(static_cast<std::size_t>(next), 0.0);
    for (std::size_t p = 0; p < n; ++p) {
      const auto old = static_cast<std::size_t>(map.labels[p]);
      if (old < map.regions.size()) si[out.labels[p]] += map.regions[old].mean_intensity;
    }
    for (auto& r : out.regions) r.mean_intensity = si[r.id] / static_cast<double>(r.pixel_count);
  }
  return out;
}

Mask selection_mask(const SuperpixelMap& map, const RegionSet& selected) {
  std::vector<std::uint8_t> lookup(map.regions.size(), 0);
  for (int id : selected) {
    if (id < 0 || id >= map.region_count()) {
      throw Error(ErrorCode::UnknownRegionId, "region id " + std::to_string(id) + " not in map");
    }
    lookup[static_cast<std::size_t>(id)] = 1;
  }
  Mask mask(map.width, map.height, 0);
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    mask.data[p] = lookup[static_cast<std::size_t>(map.labels[p])];
  }
  return mask;
}

std::vector<std::vector<int>> region_adjacency(const SuperpixelMap& map) {
  std::vector<std::set<int>> adj(map.regions.size());
  const int w = map.width;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < w; ++x) {
      const int a = map.label_at(x, y);
      if (x + 1 < w) {
        const int b = map.label_at(x + 1, y);
        if (a != b) {
          adj[a].insert(b);
          adj[b].insert(a);
        }
      }
      if (y + 1 < map.height) {
        const int b = map.label_at(x, y + 1);
        if (a != b) {
          adj[a].insert(b);
          adj[b].insert(a);
        }
      }
    }
  }
  std::vector<std::vector<int>> out(adj.size());
  for (std::size_t i = 0; i < adj.size(); ++i) out[i].assign(adj[i].begin(), adj[i].end());
  return out;
}

json to_json(const SuperpixelMap& map) {
  json runs = json::array();
  std::size_t i = 0;
  while (i < map.labels.size()) {
    std::size_t j = i;
    while (j < map.labels.size() && map.labels[j] == map.labels[i]) ++j;
    runs.push_back({map.labels[i], j - i});
    i = j;
  }
  json regions = json::array();
  for (const Region& r : map.regions) {
    regions.push_back({{"id", r.id},
                       {"pixel_count", r.pixel_count},
                       {"centroid", {r.centroid_x, r.centroid_y}},
                       {"mean_intensity", r.mean_intensity}});
  }
  return {{"width", map.width}, {"height", map.height}, {"rle_labels", std::move(runs)},
          {"regions", std::move(regions)}};
}

SuperpixelMap superpixel_map_from_json(const json& j) {
  try {
    SuperpixelMap map;
    map.width = j.at("width").get<int>();
    map.height = j.at("height").get<int>();
    if (map.width < 1 || map.height < 1) throw Error(ErrorCode::ValidationFailed, "map dims must be >= 1");
    const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
    map.labels.reserve(n);
    for (const auto& run : j.at("rle_labels")) {
      if (!run.is_array() || run.size() != 2) throw Error(ErrorCode::ValidationFailed, "run must be [label, length]");
      const auto label = run[0].get<std::int64_t>();
      const auto length = run[1].get<std::int64_t>();
      if (label < 0 || length < 1) throw Error(ErrorCode::ValidationFailed, "bad run");
      if (map.labels.size() + static_cast<std::size_t>(length) > n) {
        throw Error(ErrorCode::ValidationFailed, "runs exceed width*height");
      }
      map.labels.insert(map.labels.end(), static_cast<std::size_t>(length), static_cast<std::int32_t>(label));
    }
    if (map.labels.size() != n) throw Error(ErrorCode::ValidationFailed, "runs do not cover width*height");

    for (const auto& r : j.at("regions")) {
      Region region;
      region.id = r.at("id").get<int>();
      region.pixel_count = r.at("pixel_count").get<std::size_t>();
      region.centroid_x = r.at("centroid").at(0).get<double>();
      region.centroid_y = r.at("centroid").at(1).get<double>();
      region.mean_intensity = r.at("mean_intensity").get<double>();
      map.regions.push_back(region);
    }
    std::vector<std::size_t> counts(map.regions.size(), 0);
    for (std::size_t r = 0; r < map.regions.size(); ++r) {
      if (map.regions[r].id != static_cast<int>(r)) {
        throw Error(ErrorCode::ValidationFailed, "region ids must be dense and ordered");
      }
    }
    for (std::int32_t label : map.labels) {
      if (static_cast<std::size_t>(label) >= counts.size()) {
        throw Error(ErrorCode::ValidationFailed, "label without region record");
      }
      ++counts[static_cast<std::size_t>(label)];
    }
    for (std::size_t r = 0; r < counts.size(); ++r) {
      if (counts[r] != map.regions[r].pixel_count) {
        throw Error(ErrorCode::ValidationFailed, "region pixel_count disagrees with labels");
      }
    }
    return map;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationFailed, std::string("superpixel map: ") + e.what());
  }
}

}  // namespace weakseg
