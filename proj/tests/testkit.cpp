#include "testkit.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "weakseg/error.hpp"
#include "weakseg/fcn/model.hpp"
#include "weakseg/http_api.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/random.hpp"
#include "weakseg/slic.hpp"
#include "weakseg/task_service.hpp"
#include "weakseg/weak_labels.hpp"

namespace testkit {

using namespace weakseg;
using namespace weakseg::fcn;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- gradient checking ------------------------------------------------------

struct GradTally {
  double worst = 0.0;
  std::string worst_at;
  int checked = 0;
  int kinks = 0;
  int failures = 0;
  double tolerance = 1e-5;
};

using Pattern = std::function<std::vector<std::uint8_t>()>;

// Perturbs `x` by +-h around its current value. When the ReLU/pooling pattern
// (read right after each loss() call) changes inside [x-h, x+h] the loss has a
// kink there and the caller draws another coordinate. Layers without switches
// pass an empty pattern.
bool check_coordinate(const std::function<double()>& loss, const Pattern& pattern, double& x, double analytic,
                      const std::vector<std::uint8_t>& base_pattern, double base, const std::string& where,
                      GradTally& t) {
  const double h = 1e-5;
  const double old = x;
  x = old + h;
  const double lp = loss();
  const bool kink_p = pattern && pattern() != base_pattern;
  x = old - h;
  const double lm = loss();
  const bool kink_m = pattern && pattern() != base_pattern;
  x = old;
  if (kink_p || kink_m) {
    ++t.kinks;
    return false;
  }
  const double numeric = (lp - lm) / (2 * h);
  // Cancellation in lp - lm leaves a few ulps of the loss divided by h; below
  // that the difference quotient carries no information.
  const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::max({std::abs(lp), std::abs(lm), std::abs(base)}) / h;
  const double denom = std::max({std::abs(numeric), std::abs(analytic), noise / t.tolerance});
  const double rel = std::abs(numeric - analytic) / denom;
  ++t.checked;
  if (rel > t.worst) {
    t.worst = rel;
    t.worst_at = where;
  }
  if (rel >= t.tolerance) ++t.failures;
  return true;
}

// Checks `count` random coordinates of `values` (all of them when count <= 0).
void check_buffer(const std::function<double()>& loss, const Pattern& pattern, std::vector<double>& values,
                  const std::vector<double>& grad, int count, const std::string& name, Rng& rng, GradTally& t) {
  const double base = loss();
  const std::vector<std::uint8_t> base_pattern = pattern ? pattern() : std::vector<std::uint8_t>{};
  auto check = [&](std::size_t i, const std::string& where) {
    return check_coordinate(loss, pattern, values[i], grad[i], base_pattern, base, where, t);
  };
  if (count <= 0 || static_cast<std::size_t>(count) >= values.size()) {
    for (std::size_t i = 0; i < values.size(); ++i) check(i, name);
    return;
  }
  int done = 0;
  for (int attempt = 0; done < count && attempt < count * 20; ++attempt) {
    const std::size_t i = rng.below(values.size());
    if (check(i, name + "[" + std::to_string(i) + "]")) ++done;
  }
}

Tensor4<double> random_tensor(Rng& rng, int n, int c, int h, int w, double sd = 1.0) {
  Tensor4<double> x(n, c, h, w);
  for (auto& v : x.data) v = rng.normal(0.0, sd);
  return x;
}

double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

void randomize(Parameter<double>& p, Rng& rng, double sd) {
  for (auto& v : p.value) v = rng.normal(0.0, sd);
}

void layer_checks(std::uint64_t seed, GradTally& t) {
  Rng rng(mix_seed({seed, hash_string("layers")}));

  for (int k : {1, 3, 5}) {
    const int cin = 2 + static_cast<int>(rng.below(2)), cout = 2 + static_cast<int>(rng.below(3));
    Conv2d<double> conv("conv", cin, cout, k);
    randomize(conv.weight, rng, 0.5);
    randomize(conv.bias, rng, 0.5);
    auto x = random_tensor(rng, 2, cin, 7, 6);
    const auto r = random_tensor(rng, 2, cout, 7, 6);
    conv.weight.grad.assign(conv.weight.size(), 0.0);
    conv.bias.grad.assign(conv.bias.size(), 0.0);
    conv.forward(x);
    const auto gx = conv.backward(r);
    auto loss = [&] { return dot(conv.forward(x), r); };
    const std::string name = "conv" + std::to_string(k);
    check_buffer(loss, {}, x.data, gx.data, 12, name + ".input", rng, t);
    check_buffer(loss, {}, conv.weight.value, conv.weight.grad, 12, name + ".weight", rng, t);
    check_buffer(loss, {}, conv.bias.value, conv.bias.grad, 0, name + ".bias", rng, t);
  }

  {
    Relu<double> relu;
    auto x = random_tensor(rng, 1, 3, 5, 5);
    const auto r = random_tensor(rng, 1, 3, 5, 5);
    relu.forward(x);
    const auto gx = relu.backward(r);
    auto on = [&] {
      std::vector<std::uint8_t> p;
      for (double v : relu.output().data) p.push_back(v > 0.0);
      return p;
    };
    check_buffer([&] { return dot(relu.forward(x), r); }, on, x.data, gx.data, 0, "relu", rng, t);
  }

  {
    MaxPool2<double> pool;
    auto x = random_tensor(rng, 2, 2, 6, 8);
    const auto r = random_tensor(rng, 2, 2, 3, 4);
    pool.forward(x);
    const auto gx = pool.backward(r);
    check_buffer([&] { return dot(pool.forward(x), r); }, [&] { return pool.argmax(); }, x.data, gx.data, 0, "maxpool", rng, t);
  }

  {
    Dropout<double> drop(0.5);
    auto x = random_tensor(rng, 1, 4, 3, 3);
    const auto r = random_tensor(rng, 1, 4, 3, 3);
    const std::uint64_t mask_seed = rng.next_u64();
    drop.forward(x, true, mask_seed);
    const auto gx = drop.backward(r);
    check_buffer([&] { return dot(drop.forward(x, true, mask_seed), r); }, {}, x.data, gx.data, 0, "dropout", rng, t);
  }

  for (int f : {2, 4, 8}) {
    ConvTranspose2d<double> up("up", 2, 3, 2 * f, f, f / 2);
    randomize(up.weight, rng, 0.5);
    up.weight.grad.assign(up.weight.size(), 0.0);
    auto x = random_tensor(rng, 1, 2, 3, 4);
    const auto y = up.forward(x);
    const auto r = random_tensor(rng, y.n, y.c, y.h, y.w);
    const auto gx = up.backward(r);
    auto loss = [&] { return dot(up.forward(x), r); };
    const std::string name = "tconv" + std::to_string(f);
    check_buffer(loss, {}, x.data, gx.data, 0, name + ".input", rng, t);
    check_buffer(loss, {}, up.weight.value, up.weight.grad, 16, name + ".weight", rng, t);
  }

  {
    auto s = random_tensor(rng, 2, 2, 4, 4, 2.0);
    std::vector<std::uint8_t> targets(2 * 4 * 4);
    for (auto& v : targets) v = static_cast<std::uint8_t>(rng.below(2));
    const auto res = loss_softmax_ce(s, targets);
    check_buffer([&] { return loss_softmax_ce(s, targets).loss; }, {}, s.data, res.grad.data, 0, "softmax_ce", rng, t);
  }
}

void model_checks(std::uint64_t seed, GradTally& t) {
  Rng rng(mix_seed({seed, hash_string("model")}));
  FcnConfig cfg;
  cfg.conv_filters = 4;
  cfg.classifier_filters = 6;
  cfg.n_skips = static_cast<int>(seed % 3);
  FcnModel<double> model(cfg, seed);
  for (auto* p : model.parameters()) randomize(*p, rng, 0.3);
  auto x = random_tensor(rng, 1, 3, 32, 32);
  std::vector<std::uint8_t> targets(32 * 32);
  for (auto& v : targets) v = static_cast<std::uint8_t>(rng.below(2));
  const std::uint64_t drop_seed = rng.next_u64();

  auto loss = [&] { return loss_softmax_ce(model.forward(x, Mode::train, drop_seed), targets).loss; };
  auto pattern = [&] { return model.switch_pattern(); };
  model.zero_grad();
  const auto res = loss_softmax_ce(model.forward(x, Mode::train, drop_seed), targets);
  const auto gx = model.backward(res.grad, true);
  // Snapshot the gradients: loss() reruns forward, which invalidates nothing
  // in the accumulated buffers but keeps this explicit.
  std::vector<std::vector<double>> grads;
  for (auto* p : model.parameters()) grads.push_back(p->grad);
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    check_buffer(loss, pattern, params[i]->value, grads[i], 3, "model." + params[i]->name, rng, t);
  }
  check_buffer(loss, pattern, x.data, gx.data, 6, "model.input", rng, t);
}

}  // namespace

Verdict gradient_suite(int n_seeds, double tolerance) {
  const auto t0 = Clock::now();
  GradTally t;
  t.tolerance = tolerance;
  for (int s = 0; s < n_seeds; ++s) {
    layer_checks(static_cast<std::uint64_t>(s), t);
    model_checks(static_cast<std::uint64_t>(s), t);
  }
  Verdict v;
  // A switch hit on most draws would mean the check is not testing anything.
  const bool kinks_rare = t.kinks * 10 < t.checked;
  v.ok = t.failures == 0 && kinks_rare && t.checked > 0;
  v.seconds = since(t0);
  v.detail = fmt("%d seeds, %d coordinates, worst rel err %.2e at %s, %d failures, %d kink redraws", n_seeds,
                 t.checked, t.worst, t.worst_at.c_str(), t.failures, t.kinks);
  return v;
}

// --- SLIC -------------------------------------------------------------------

namespace {

std::string slic_violation(const FloatPlane& img, const SlicParams& params) {
  const SuperpixelMap a = compute_slic(img, params);
  const SuperpixelMap b = compute_slic(img, params);
  if (a.labels != b.labels) return "non-deterministic";
  const int w = img.width, h = img.height;
  if (a.width != w || a.height != h || a.labels.size() != static_cast<std::size_t>(w) * h) return "dims";
  const int r = a.region_count();
  std::vector<std::size_t> hist(static_cast<std::size_t>(r), 0);
  for (std::int32_t l : a.labels) {
    if (l < 0 || l >= r) return "label out of range";
    ++hist[static_cast<std::size_t>(l)];
  }
  std::size_t total = 0;
  for (int i = 0; i < r; ++i) {
    if (a.regions[i].id != i || a.regions[i].pixel_count != hist[i] || hist[i] == 0) return "region table";
    total += hist[i];
  }
  if (total != static_cast<std::size_t>(w) * h) return "partition";
  if (!oracle::labels_connected(w, h, a.labels)) return "connectivity";
  const int s = params.region_size;
  const long bound = static_cast<long>((w + s - 1) / s) * ((h + s - 1) / s);
  if (r > bound) return "region count " + std::to_string(r) + " > " + std::to_string(bound);
  return {};
}

FloatPlane structured_slice(int kind, Rng& rng) {
  const int w = 40 + static_cast<int>(rng.below(60)), h = 40 + static_cast<int>(rng.below(60));
  FloatPlane p(w, h);
  const double cx = w * rng.uniform(), cy = h * rng.uniform(), rad = 5 + 20 * rng.uniform();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float v = 0.0f;
      switch (kind % 5) {
        case 0: v = x < w / 2 ? 0.0f : 100.0f; break;                                      // step edge
        case 1: v = std::hypot(x - cx, y - cy) < rad ? 80.0f : 10.0f; break;               // disk
        case 2: v = static_cast<float>(x + 2 * y); break;                                  // ramp
        case 3: v = ((x / 7) + (y / 5)) % 2 ? 50.0f : -50.0f; break;                       // checkerboard
        case 4: v = static_cast<float>(std::sin(x * 0.3) * std::cos(y * 0.2) * 30.0); break;  // waves
      }
      p.at(x, y) = v + static_cast<float>(rng.normal(0.0, 1.0));
    }
  }
  return p;
}

}  // namespace

Verdict slic_suite(int n_random, int n_structured) {
  const auto t0 = Clock::now();
  Verdict v;
  Rng rng(20240917);
  int failures = 0;
  std::string first;
  auto record = [&](const std::string& what, const std::string& err) {
    if (err.empty()) return;
    if (failures++ == 0) first = what + ": " + err;
  };

  for (int i = 0; i < n_random; ++i) {
    const int w = 16 + static_cast<int>(rng.below(100)), h = 16 + static_cast<int>(rng.below(100));
    FloatPlane p(w, h);
    for (auto& x : p.data) x = static_cast<float>(rng.uniform() * 200.0 - 50.0);
    SlicParams params;
    params.region_size = 6 + static_cast<int>(rng.below(14));
    params.compactness = 1.0 + rng.uniform() * 30.0;
    record(fmt("random %d (%dx%d S=%d)", i, w, h, params.region_size), slic_violation(p, params));
  }
  for (int i = 0; i < n_structured; ++i) {
    record(fmt("structured %d", i), slic_violation(structured_slice(i, rng), SlicParams{}));
  }

  // Constant image: assignment is the Voronoi diagram of the grid seeds.
  {
    const SuperpixelMap m = compute_slic(FloatPlane(48, 48, 3.5f), SlicParams{});
    bool exact = m.region_count() == 16;
    for (int y = 0; y < 48 && exact; ++y)
      for (int x = 0; x < 48 && exact; ++x) {
        const int cell = (y / 12) * 4 + x / 12;
        exact = m.label_at(x, y) == m.label_at((cell % 4) * 12, (cell / 4) * 12);
      }
    for (const auto& r : m.regions) exact = exact && r.pixel_count == 144;
    record("constant 48x48", exact ? "" : "not 16 exact 12x12 rectangles");
  }

  v.ok = failures == 0;
  v.seconds = since(t0);
  v.detail = fmt("%d random + %d structured slices, %d violations", n_random, n_structured, failures);
  if (!first.empty()) v.detail += " (first: " + first + ")";
  return v;
}

// --- DSC --------------------------------------------------------------------

Verdict dsc_oracle_suite(int n_cases) {
  const auto t0 = Clock::now();
  Rng rng(8);
  const Dims3 d{8, 8, 8};
  int mismatches = 0, property_failures = 0;
  for (int i = 0; i < n_cases; ++i) {
    const double pa = rng.uniform(), pb = rng.uniform();
    std::vector<std::uint8_t> a(d.voxel_count()), b(d.voxel_count());
    // Every 50th case uses empty masks to cover the degenerate branch.
    for (auto& x : a) x = i % 50 == 0 ? 0 : rng.uniform() < pa;
    for (auto& x : b) x = i % 100 == 0 ? 0 : rng.uniform() < pb;
    const LabelVolume la(d, a), lb(d, b);
    const double got = dsc(la, lb);
    const double want = oracle::dice_sets(a, b);
    if (std::memcmp(&got, &want, sizeof got) != 0) ++mismatches;
    if (dsc(lb, la) != got || dsc(la, la) != 1.0 || got < 0.0 || got > 1.0) ++property_failures;
  }
  Verdict v;
  v.ok = mismatches == 0 && property_failures == 0;
  v.seconds = since(t0);
  v.detail = fmt("%d random 8^3 pairs, %d bitwise mismatches, %d property failures", n_cases, mismatches,
                 property_failures);
  return v;
}

// --- quantization -----------------------------------------------------------

QuantizationStats quantization_suite(const PhantomSpec& spec, double bound) {
  const auto t0 = Clock::now();
  QuantizationStats q;
  double sum = 0.0;
  int above = 0, disagreements = 0;
  const SlicParams params;
  for (int i = 0; i < spec.n_volumes; ++i) {
    const PhantomCase pc = make_phantom(spec, i);
    for (int k = 0; k < pc.image.dims().depth; ++k) {
      const Mask ref = extract_mask(pc.labels, k);
      if (std::none_of(ref.data.begin(), ref.data.end(), [](std::uint8_t b) { return b != 0; })) continue;
      const SuperpixelMap map = compute_slic(extract_slice(pc.image, k), params);
      const std::set<int> sel = oracle::coverage_selection(map, ref, 0.5);
      if (sel != expert_weak_selection(map, ref, 0.5)) ++disagreements;
      Mask mask(ref.width, ref.height);
      for (std::size_t p = 0; p < mask.data.size(); ++p) mask.data[p] = sel.count(map.labels[p]) ? 1 : 0;
      const double d = oracle::mask_dice(mask, ref);
      sum += d;
      q.min_dsc = std::min(q.min_dsc, d);
      above += d >= bound;
      ++q.slices;
    }
  }
  q.mean_dsc = q.slices ? sum / q.slices : 0.0;
  q.frac_above = q.slices ? static_cast<double>(above) / q.slices : 0.0;
  q.verdict.ok = q.slices > 0 && q.mean_dsc >= bound && disagreements == 0;
  q.verdict.seconds = since(t0);
  q.verdict.detail = fmt("%d object slices, mean DSC %.4f (min %.4f, %.1f%% >= %.2f), %d oracle disagreements",
                         q.slices, q.mean_dsc, q.min_dsc, 100.0 * q.frac_above, bound, disagreements);
  return q;
}

// --- shape law --------------------------------------------------------------

Verdict shape_law_suite(int n_sizes, int lo, int hi, std::uint64_t seed) {
  const auto t0 = Clock::now();
  Rng rng(seed);
  FcnModel<float> model(FcnConfig{}, seed);
  int failures = 0, non_multiple = 0;
  std::string first;
  for (int i = 0; i < n_sizes; ++i) {
    // The first two sizes pin the corners of the range.
    const int h = i == 0 ? lo : i == 1 ? hi : lo + static_cast<int>(rng.below(hi - lo + 1));
    const int w = i == 0 ? hi : i == 1 ? lo : lo + static_cast<int>(rng.below(hi - lo + 1));
    non_multiple += (h % 16 != 0) || (w % 16 != 0);
    Tensor4<float> x(1, 3, h, w);
    for (auto& v : x.data) v = static_cast<float>(rng.normal());
    const auto y = model.forward(x, Mode::infer);
    const auto trace = oracle::fcn_shapes(h, w, model.config().n_skips);
    const bool ok = y.n == 1 && y.c == 2 && y.h == h && y.w == w && trace.out_h == trace.padded_h &&
                    trace.out_w == trace.padded_w;
    if (!ok && failures++ == 0) first = fmt("%dx%d -> %dx%d", h, w, y.h, y.w);
  }
  Verdict v;
  v.ok = failures == 0;
  v.seconds = since(t0);
  v.detail = fmt("%d sizes in [%d, %d]^2 (%d not multiples of 16), %d mismatches", n_sizes, lo, hi, non_multiple,
                 failures);
  if (!first.empty()) v.detail += " (first: " + first + ")";
  return v;
}

// --- task service -----------------------------------------------------------

namespace {

// Volumes of the given depths with a bright square so selections vary.
std::vector<Volume> task_volumes(int n_tasks, int max_depth, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Volume> out;
  for (int left = n_tasks; left > 0;) {
    const int depth = std::min(left, max_depth);
    left -= depth;
    const Dims3 d{24, 24, depth};
    std::vector<float> vox(d.voxel_count());
    for (int z = 0; z < depth; ++z)
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
          const bool in = x >= 6 && x < 18 && y >= 6 && y < 18 && z % 3 != 0;
          vox[static_cast<std::size_t>(z) * 576 + y * 24 + x] = (in ? 1.0f : 0.0f) + static_cast<float>(rng.normal(0, 0.05));
        }
    out.emplace_back(d, Spacing{}, std::move(vox));
  }
  return out;
}

Annotation annotate(const std::string& rater, const std::string& volume_id, int slice, const FloatPlane& plane,
                    double elapsed_ms) {
  Annotation a;
  a.volume_id = volume_id;
  a.slice_index = slice;
  a.rater_id = rater;
  a.superpixel_map = compute_slic(plane, SlicParams{});
  for (const auto& r : a.superpixel_map.regions)
    if (r.mean_intensity > 0.5) a.selected_ids.insert(r.id);
  a.elapsed_ms = elapsed_ms;
  return a;
}

std::string audit_summary(const LogAudit& audit) {
  std::string s = fmt("%zu events, %zu submissions", audit.events, audit.submissions);
  if (!audit.violations.empty()) s += ", violation: " + audit.violations.front();
  return s;
}

struct Ack {
  std::int64_t task_id;
  std::string rater;
  std::string volume_id;
  int slice;
};

}  // namespace

Verdict drain_suite(const std::filesystem::path& dir, int n_raters, int n_tasks) {
  const auto t0 = Clock::now();
  std::filesystem::remove_all(dir);
  TaskService service(TaskServiceConfig{dir, 300.0, 1});
  httplib::Server server;
  install_routes(server, service);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  // Upload through the API the way a client would.
  {
    httplib::Client admin("127.0.0.1", port);
    for (const Volume& v : task_volumes(n_tasks, 100, 99)) {
      httplib::MultipartFormDataItems items{{"header", volume_header_json(v), "v.json", "application/json"},
                                            {"raw", volume_payload(v), "v.raw", "application/octet-stream"}};
      auto res = admin.Post("/volumes", items);
      if (!res || res->status != 201) {
        server.stop();
        server_thread.join();
        return {false, "volume upload failed", since(t0)};
      }
    }
  }

  std::mutex mu;
  std::vector<Ack> acks;
  std::atomic<int> errors{0};
  std::vector<std::thread> raters;
  for (int r = 0; r < n_raters; ++r) {
    raters.emplace_back([&, r] {
      httplib::Client cli("127.0.0.1", port);
      const std::string rater = fmt("R%02d", r);
      Rng rng(static_cast<std::uint64_t>(r));
      for (;;) {
        auto next = cli.Get("/tasks/next?rater_id=" + rater);
        if (!next) {
          ++errors;
          return;
        }
        if (next->status == 204) return;
        const json task = json::parse(next->body);
        const std::string vid = task.at("volume_id");
        const int k = task.at("slice_index");
        auto sl = cli.Get(fmt("/volumes/%s/slices/%d?fmt=f32", vid.c_str(), k));
        if (!sl || sl->status != 200) {
          ++errors;
          return;
        }
        FloatPlane plane(std::stoi(sl->get_header_value("X-Width")), std::stoi(sl->get_header_value("X-Height")));
        std::memcpy(plane.data.data(), sl->body.data(), plane.data.size() * sizeof(float));
        const Annotation a = annotate(rater, vid, k, plane, 2000.0 + rng.uniform() * 8000.0);
        const std::int64_t id = task.at("task_id");
        auto sub = cli.Post(fmt("/tasks/%lld/annotation", static_cast<long long>(id)), to_json(a).dump(),
                            "application/json");
        if (!sub || sub->status != 200) {
          ++errors;
          continue;
        }
        std::lock_guard lock(mu);
        acks.push_back({id, rater, vid, k});
      }
    });
  }
  for (auto& t : raters) t.join();
  server.stop();
  server_thread.join();

  const auto events = read_event_log(service.event_log_path());
  const LogAudit audit = audit_event_log(events);
  int missing = 0;
  std::set<std::int64_t> acked;
  for (const Ack& a : acks) {
    acked.insert(a.task_id);
    const auto t = service.task(a.task_id);
    if (!t || t->state != TaskState::submitted || t->submitted_by != a.rater) ++missing;
  }
  int exported = 0;
  for (const auto& vid : service.volume_ids()) exported += static_cast<int>(service.annotations(vid).size());
  int open = 0;
  for (const auto& t : service.tasks()) open += t.state != TaskState::submitted;

  Verdict v;
  v.ok = audit.ok && errors == 0 && static_cast<int>(acks.size()) == n_tasks &&
         static_cast<int>(acked.size()) == n_tasks && missing == 0 && exported == n_tasks && open == 0 &&
         static_cast<int>(audit.submissions) == n_tasks;
  v.seconds = since(t0);
  v.detail = fmt("%d raters, %zu acks for %d tasks, %d transport errors, %d lost, %d unsubmitted; log: ", n_raters,
                 acks.size(), n_tasks, errors.load(), missing, open) +
             audit_summary(audit);
  return v;
}

Verdict crash_restart_suite(const std::filesystem::path& dir, int n_raters, int n_tasks) {
  const auto t0 = Clock::now();
  std::filesystem::remove_all(dir);
  const TaskServiceConfig cfg{dir, 300.0, 1};
  // Leases held when the crash hit only come back once they expire, so the
  // restarted service runs on a clock the test can move past them.
  auto now = std::make_shared<std::atomic<double>>(0.0);
  const TaskService::Clock clock = [now] { return now->load(); };
  std::vector<Ack> acks;
  std::mutex mu;

  // Arms the crash once `arm_at` submissions are acknowledged; the budget is
  // smaller than one submit record, so the next record is torn.
  auto run_raters = [&](TaskService& service, std::atomic<bool>& crashed, std::size_t arm_at) {
    std::vector<std::thread> threads;
    for (int r = 0; r < n_raters; ++r) {
      threads.emplace_back([&, r] {
        const std::string rater = fmt("C%02d", r);
        try {
          while (auto task = service.next_task(rater)) {
            const Annotation a = annotate(rater, task->volume_id, task->slice_index,
                                          service.slice(task->volume_id, task->slice_index), 5000.0);
            service.submit_annotation(task->task_id, a);
            std::lock_guard lock(mu);
            acks.push_back({task->task_id, rater, task->volume_id, task->slice_index});
            if (acks.size() == arm_at) service.crash_after_bytes(300);
          }
        } catch (const CrashInjected&) {
          crashed = true;
        }
      });
    }
    for (auto& t : threads) t.join();
  };

  std::atomic<bool> crashed{false};
  std::uint64_t log_bytes_at_crash = 0;
  {
    TaskService service(cfg, clock);
    for (const Volume& v : task_volumes(n_tasks, 40, 7)) service.register_volume(v);
    const auto setup_bytes = std::filesystem::file_size(service.event_log_path());
    run_raters(service, crashed, static_cast<std::size_t>(n_tasks / 3));
    log_bytes_at_crash = std::filesystem::file_size(service.event_log_path()) - setup_bytes;
  }
  const std::size_t acked_before = acks.size();

  int lost = 0;
  Verdict v;
  {
    TaskService service(cfg, clock);
    for (const Ack& a : acks) {
      const auto t = service.task(a.task_id);
      if (!t || t->state != TaskState::submitted || t->submitted_by != a.rater) ++lost;
    }
    LogAudit mid = audit_event_log(read_event_log(service.event_log_path()));
    *now = cfg.lease_seconds + 1.0;
    std::atomic<bool> again{false};
    run_raters(service, again, 0);
    const LogAudit end = audit_event_log(read_event_log(service.event_log_path()));
    int unsubmitted = 0;
    for (const auto& t : service.tasks()) unsubmitted += t.state != TaskState::submitted;
    v.ok = crashed && lost == 0 && mid.ok && end.ok && unsubmitted == 0 && acked_before > 0 &&
           static_cast<int>(end.submissions) == n_tasks;
    v.detail = fmt("crash after %zu acked submissions (%llu log bytes), %d lost on restart, %d unsubmitted after "
                   "finishing; log: ",
                   acked_before, static_cast<unsigned long long>(log_bytes_at_crash), lost, unsubmitted) +
               audit_summary(end);
    if (!crashed) v.detail += " (crash never triggered)";
  }
  v.seconds = since(t0);
  return v;
}

}  // namespace testkit
