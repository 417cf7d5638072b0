#include "weakseg/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "weakseg/error.hpp"
#include "weakseg/random.hpp"

namespace weakseg {

void PhantomSpec::validate() const {
  if (n_volumes < 0) throw Error(ErrorCode::InvalidConfig, "n_volumes must be >= 0");
  if (dims.width < 16 || dims.height < 16 || dims.depth < 4) {
    throw Error(ErrorCode::InvalidConfig, "phantom dims must be at least 16x16x4");
  }
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0)) throw Error(ErrorCode::InvalidConfig, "spacing must be > 0");
  if (!(object_fraction > 0.0 && object_fraction < 0.5)) {
    throw Error(ErrorCode::InvalidConfig, "object_fraction must lie in (0, 0.5)");
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise_sigma must be >= 0");
  if (n_distractors < 0) throw Error(ErrorCode::InvalidConfig, "n_distractors must be >= 0");
}

nlohmann::json to_json(const PhantomSpec& spec) {
  return {{"n_volumes", spec.n_volumes},
          {"dims", {spec.dims.width, spec.dims.height, spec.dims.depth}},
          {"spacing", {spec.spacing.x, spec.spacing.y, spec.spacing.z}},
          {"object_fraction", spec.object_fraction},
          {"noise_sigma", spec.noise_sigma},
          {"n_distractors", spec.n_distractors},
          {"seed", spec.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec spec;
  try {
    spec.n_volumes = j.value("n_volumes", spec.n_volumes);
    if (j.contains("dims")) {
      const auto d = j.at("dims").get<std::vector<int>>();
      if (d.size() != 3) throw Error(ErrorCode::InvalidConfig, "dims needs 3 entries");
      spec.dims = {d[0], d[1], d[2]};
    }
    if (j.contains("spacing")) {
      const auto s = j.at("spacing").get<std::vector<double>>();
      if (s.size() != 3) throw Error(ErrorCode::InvalidConfig, "spacing needs 3 entries");
      spec.spacing = {s[0], s[1], s[2]};
    }
    spec.object_fraction = j.value("object_fraction", spec.object_fraction);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.n_distractors = j.value("n_distractors", spec.n_distractors);
    spec.seed = j.value("seed", spec.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  spec.validate();
  return spec;
}

namespace {

// Ellipsoid rotated about the z axis, radii in voxels.
struct Ellipsoid {
  double cx = 0, cy = 0, cz = 0;
  double rx = 1, ry = 1, rz = 1;
  double angle = 0;

  // Normalized radius: < 1 inside, 1 on the surface.
  double rho(double x, double y, double z) const {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    const double w = (z - cz) / rz;
    return std::sqrt(u * u + v * v + w * w);
  }
};

// Band-limited texture in roughly [-1, 1]: a few random plane waves.
struct Texture {
  std::array<std::array<double, 4>, 3> waves{};

  Texture(Rng& rng, double f_lo, double f_hi) {
    for (auto& wv : waves) {
      const double theta = rng.uniform() * std::numbers::pi;
      const double phi = rng.uniform() * 2.0 * std::numbers::pi;
      const double f = f_lo + (f_hi - f_lo) * rng.uniform();
      wv = {f * std::sin(theta) * std::cos(phi), f * std::sin(theta) * std::sin(phi), f * std::cos(theta),
            rng.uniform() * 2.0 * std::numbers::pi};
    }
  }

  double operator()(double x, double y, double z) const {
    double v = 0.0;
    for (const auto& wv : waves) v += std::sin(wv[0] * x + wv[1] * y + wv[2] * z + wv[3]);
    return v / 3.0;
  }
};

std::size_t count_inside(const Ellipsoid& e, const Dims3& d) {
  std::size_t n = 0;
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x) n += e.rho(x, y, z) <= 1.0 ? 1 : 0;
    }
  }
  return n;
}

}  // namespace

PhantomCase make_phantom(const PhantomSpec& spec, int index) {
  spec.validate();
  const Dims3 d = spec.dims;
  Rng rng(mix_seed({spec.seed, hash_string("phantom"), static_cast<std::uint64_t>(index)}));

  // Object radii: roughly round in physical space, scaled to the target
  // voxel count and corrected for discretization.
  const double target = spec.object_fraction * static_cast<double>(d.voxel_count());
  std::array<double, 3> aspect{};
  for (auto& a : aspect) a = 0.85 + 0.3 * rng.uniform();
  const double unit = 4.0 / 3.0 * std::numbers::pi * aspect[0] * aspect[1] * aspect[2] /
                      (spec.spacing.x * spec.spacing.y * spec.spacing.z);
  double radius_mm = std::cbrt(target / unit);

  Ellipsoid object;
  object.angle = rng.uniform() * std::numbers::pi;
  auto set_radii = [&](double r) {
    object.rx = r * aspect[0] / spec.spacing.x;
    object.ry = r * aspect[1] / spec.spacing.y;
    object.rz = r * aspect[2] / spec.spacing.z;
  };
  set_radii(radius_mm);
  const double shell = 2.0;
  auto place = [&](double r, double extent) {
    const double margin = r + shell + 3.0;
    const double lo = margin;
    const double hi = extent - 1.0 - margin;
    return hi > lo ? lo + (hi - lo) * rng.uniform() : (extent - 1.0) / 2.0;
  };
  const double r_plane = std::max(object.rx, object.ry);
  object.cx = place(r_plane, d.width);
  object.cy = place(r_plane, d.height);
  object.cz = place(object.rz, d.depth);
  for (int pass = 0; pass < 4; ++pass) {
    const auto n = static_cast<double>(count_inside(object, d));
    if (n > 0 && std::abs(n - target) / target < 0.01) break;
    radius_mm *= n > 0 ? std::cbrt(target / n) : 1.25;
    set_radii(radius_mm);
  }

  Ellipsoid body;
  body.cx = (d.width - 1) / 2.0 + (rng.uniform() - 0.5) * 0.04 * d.width;
  body.cy = (d.height - 1) / 2.0 + (rng.uniform() - 0.5) * 0.04 * d.height;
  body.cz = (d.depth - 1) / 2.0;
  body.rx = 0.47 * d.width;
  body.ry = 0.44 * d.height;
  body.rz = 0.49 * d.depth;
  body.angle = (rng.uniform() - 0.5) * 0.3;

  std::vector<Ellipsoid> distractors;
  for (int i = 0; i < spec.n_distractors; ++i) {
    Ellipsoid e;
    e.rx = object.rx * (0.35 + 0.2 * rng.uniform());
    e.ry = object.ry * (0.35 + 0.2 * rng.uniform());
    e.rz = object.rz * (0.4 + 0.3 * rng.uniform());
    e.angle = rng.uniform() * std::numbers::pi;
    for (int attempt = 0; attempt < 50; ++attempt) {
      e.cx = body.cx + (rng.uniform() - 0.5) * 1.2 * body.rx;
      e.cy = body.cy + (rng.uniform() - 0.5) * 1.2 * body.ry;
      e.cz = body.cz + (rng.uniform() - 0.5) * 1.2 * body.rz;
      const double gap = std::hypot(e.cx - object.cx, e.cy - object.cy, (e.cz - object.cz) * 2.0);
      if (gap > r_plane + std::max(e.rx, e.ry) + 2.0 * shell + 2.0) break;
    }
    distractors.push_back(e);
  }

  const Texture body_tex(rng, 0.05, 0.15);
  const Texture object_tex(rng, 0.25, 0.5);
  const Texture blob_tex(rng, 0.1, 0.3);
  const double bias_gx = (rng.uniform() - 0.5) * 0.3 / d.width;
  const double bias_gy = (rng.uniform() - 0.5) * 0.3 / d.height;
  const double body_level = 0.33 + 0.06 * rng.uniform();
  const double object_level = 0.72 + 0.06 * rng.uniform();
  const double blob_level = 0.55 + 0.06 * rng.uniform();

  std::vector<float> voxels(d.voxel_count());
  std::vector<std::uint8_t> labels(d.voxel_count(), 0);
  std::size_t i = 0;
  for (int z = 0; z < d.depth; ++z) {
    for (int y = 0; y < d.height; ++y) {
      for (int x = 0; x < d.width; ++x, ++i) {
        double v = 0.03;
        if (body.rho(x, y, z) <= 1.0) v = body_level + 0.06 * body_tex(x, y, z);
        for (const auto& e : distractors) {
          if (e.rho(x, y, z) <= 1.0) v = blob_level + 0.05 * blob_tex(x, y, z);
        }
        const double rho = object.rho(x, y, z);
        const double shell_rho = 1.0 + shell / std::min(object.rx, object.ry);
        if (rho <= 1.0) {
          v = object_level + 0.08 * object_tex(x, y, z);
          labels[i] = 1;
        } else if (rho <= shell_rho) {
          v = 0.12;
        }
        const double bias = 1.0 + bias_gx * (x - d.width / 2.0) + bias_gy * (y - d.height / 2.0);
        voxels[i] = static_cast<float>(v * bias + rng.normal(0.0, spec.noise_sigma));
      }
    }
  }
  return {Volume(d, spec.spacing, std::move(voxels)), LabelVolume(d, std::move(labels))};
}

double object_fraction(const LabelVolume& labels) {
  const auto n = labels.dims().voxel_count();
  return n == 0 ? 0.0 : static_cast<double>(labels.count()) / static_cast<double>(n);
}

}  // namespace weakseg
