#pragma once
// Independent reference computations for the tests. Deliberately naive: no
// code shared with the library beyond its data types.

#include <cstdint>
#include <set>
#include <vector>

#include "weakseg/slic.hpp"
#include "weakseg/volume.hpp"

namespace oracle {

// Dice via explicit voxel index sets.
inline double dice_sets(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& m) {
  std::set<std::size_t> ps, ms, both;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i]) ps.insert(i);
    if (m[i]) ms.insert(i);
  }
  for (std::size_t i : ps)
    if (ms.count(i)) both.insert(i);
  if (ps.empty() && ms.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(ps.size() + ms.size());
}

// True when every label's pixels form one 4-connected component.
inline bool labels_connected(int w, int h, const std::vector<std::int32_t>& labels) {
  std::vector<char> seen(labels.size(), 0);
  std::set<std::int32_t> started;
  for (int start = 0; start < w * h; ++start) {
    if (seen[start]) continue;
    const std::int32_t lab = labels[start];
    if (!started.insert(lab).second) return false;  // second component of a label
    std::vector<int> stack{start};
    seen[start] = 1;
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      const int x = i % w, y = i / w;
      const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= w || q[1] >= h) continue;
        const int j = q[1] * w + q[0];
        if (!seen[j] && labels[j] == lab) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
  }
  return true;
}

// Regions whose reference pixel count is at least threshold * size, counted
// by scanning every pixel once per region.
inline std::set<int> coverage_selection(const weakseg::SuperpixelMap& map, const weakseg::Mask& ref,
                                        double threshold) {
  std::set<int> out;
  for (int r = 0; r < map.region_count(); ++r) {
    long inside = 0, total = 0;
    for (std::size_t i = 0; i < map.labels.size(); ++i) {
      if (map.labels[i] != r) continue;
      ++total;
      inside += ref.data[i] != 0;
    }
    if (total > 0 && static_cast<double>(inside) >= threshold * static_cast<double>(total)) out.insert(r);
  }
  return out;
}

inline double mask_dice(const weakseg::Mask& a, const weakseg::Mask& b) { return dice_sets(a.data, b.data); }

// Padded encoder size and decoder output size as the layer formulas give them.
struct ShapeTrace {
  int padded_h, padded_w, out_h, out_w;
};

inline ShapeTrace fcn_shapes(int h, int w, int n_skips) {
  auto pad16 = [](int v) { return (v + 15) / 16 * 16; };
  int ph = pad16(h), pw = pad16(w);
  int sh = ph, sw = pw;
  for (int i = 0; i < 4; ++i) sh /= 2, sw /= 2;
  auto tconv = [](int in, int k, int s, int p) { return (in - 1) * s - 2 * p + k; };
  for (int i = 0; i < n_skips; ++i) sh = tconv(sh, 4, 2, 1), sw = tconv(sw, 4, 2, 1);
  const int f = 16 >> n_skips;
  sh = tconv(sh, 2 * f, f, f / 2);
  sw = tconv(sw, 2 * f, f, f / 2);
  return {ph, pw, sh, sw};
}

}  // namespace oracle
