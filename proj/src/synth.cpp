#include "scalpel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "scalpel/augment.hpp"

namespace scalpel {

namespace {

uint64_t splitmix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t mix(uint64_t a, uint64_t b) { return splitmix(a ^ splitmix(b)); }

// Stream ids.
constexpr uint64_t kGeometry = 1, kAppearance = 2, kOccluders = 3;

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double uni(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
int uni_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Berry {
  double x, y, r;
};

// A bunch lives in canonical coordinates; `m` maps canonical offsets to
// image offsets from (cx, cy).
struct Bunch {
  double cx = 0, cy = 0;
  std::array<double, 4> m{1, 0, 0, 1};
  std::array<double, 4> inv{1, 0, 0, 1};
  std::vector<Berry> berries;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // image-space bounds

  void finish() {
    const double det = m[0] * m[3] - m[1] * m[2];
    inv = {m[3] / det, -m[1] / det, -m[2] / det, m[0] / det};
    x0 = y0 = 1e9;
    x1 = y1 = -1e9;
    for (const Berry& b : berries)
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0}) {
          const double u = b.x + sx * b.r, v = b.y + sy * b.r;
          const double px = cx + m[0] * u + m[1] * v, py = cy + m[2] * u + m[3] * v;
          x0 = std::min(x0, px);
          x1 = std::max(x1, px);
          y0 = std::min(y0, py);
          y1 = std::max(y1, py);
        }
  }
  // Index of the covering berry (last one wins), or -1; also the normalized
  // offset inside it for shading.
  int hit(double px, double py, double& du, double& dv) const {
    const double ox = px - cx, oy = py - cy;
    const double u = inv[0] * ox + inv[1] * oy, v = inv[2] * ox + inv[3] * oy;
    for (int i = static_cast<int>(berries.size()) - 1; i >= 0; --i) {
      const Berry& b = berries[i];
      const double a = (u - b.x) / b.r, c = (v - b.y) / b.r;
      if (a * a + c * c <= 1.0) {
        du = a;
        dv = c;
        return i;
      }
    }
    return -1;
  }
};

struct Leaf {
  double cx, cy, a, b, angle;
  bool contains(double px, double py) const {
    const double ox = px - cx, oy = py - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * ox + s * oy) / a, v = (-s * ox + c * oy) / b;
    return u * u + v * v <= 1.0;
  }
};

Leaf draw_leaf(std::mt19937_64& rng, double cx, double cy, double scale) {
  return {cx, cy, uni(rng, 3.5, 7.5) * scale, uni(rng, 1.8, 3.5) * scale, uni(rng, 0.0, std::numbers::pi)};
}

double box_iou(double ax0, double ay0, double ax1, double ay1, double bx0, double by0, double bx1,
               double by1) {
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

void ShiftSpec::validate() const {
  if (!(magnitude >= 0)) throw std::invalid_argument("shift magnitude must be >= 0");
  if (kind == Kind::kNone && magnitude != 0) throw std::invalid_argument("shift 'none' must have magnitude 0");
}

std::string ShiftSpec::name() const {
  switch (kind) {
    case Kind::kNone: return "none";
    case Kind::kInputLevel: return "input_level";
    case Kind::kFeatureLevel: return "feature_level";
    case Kind::kNatural: return "natural";
    case Kind::kViewpoint: return "viewpoint";
    case Kind::kOcclusion: return "occlusion";
  }
  return "?";
}

std::string ShiftSpec::tag() const {
  switch (kind) {
    case Kind::kNone: return "";
    case Kind::kFeatureLevel: return "feature-level";
    case Kind::kNatural: return "natural";
    default: return "input-level";
  }
}

void SceneStyle::validate() const {
  if (image_size <= 0 || image_size % 32 != 0)
    throw std::invalid_argument("synth: image_size must be a positive multiple of 32");
  if (objects[0] < 1 || objects[1] < objects[0]) throw std::invalid_argument("synth: objects range must be >= 1");
  if (berries[0] < 1 || berries[1] < berries[0]) throw std::invalid_argument("synth: berries range must be >= 1");
  if (varieties.empty()) throw std::invalid_argument("synth: at least one variety is required");
  if (max_vertices < 3) throw std::invalid_argument("synth: max_vertices must be >= 3");
}

SceneStyle apply_shift(SceneStyle s, const ShiftSpec& shift) {
  shift.validate();
  const double m = shift.magnitude;
  switch (shift.kind) {
    case ShiftSpec::Kind::kNone:
      break;
    case ShiftSpec::Kind::kInputLevel:
      s.gain *= 1.0 - 0.2 * std::min(m, 2.0);
      s.cast = {s.cast[0] + 0.03 * m, s.cast[1] + 0.01 * m, s.cast[2] - 0.03 * m};
      s.blur_sigma += 0.4 * m;
      s.noise_std += 0.015 * m;
      break;
    case ShiftSpec::Kind::kFeatureLevel:
      for (Variety& v : s.varieties) {
        v.hue = std::fmod(v.hue + 90.0 * m * shift.direction + 720.0, 360.0);
        if (shift.direction > 0) {
          v.saturation *= std::max(0.0, 1.0 - 0.35 * m * shift.direction);
          v.value = std::min(0.9, v.value + 0.2 * m * shift.direction);
        } else {
          v.value *= std::max(0.1, 1.0 - 0.25 * m * -shift.direction);
        }
      }
      break;
    case ShiftSpec::Kind::kNatural: {
      const double t = std::min(m, 1.0);
      const double before = s.background_regime;
      s.background_regime = before + t * (1.0 - 2.0 * before);
      // Images spread between the old and the new conditions.
      s.regime_spread = s.background_regime - before;
      break;
    }
    case ShiftSpec::Kind::kViewpoint:
      s.view_sx *= 1.0 + 0.3 * m;
      s.view_sy *= std::max(0.2, 1.0 - 0.25 * m);
      s.view_shear += 0.35 * m;
      break;
    case ShiftSpec::Kind::kOcclusion:
      s.occluder_density += m;
      break;
  }
  return s;
}

Scene render_scene(const SceneStyle& style, uint64_t seed, int64_t image_id, int max_objects) {
  style.validate();
  const int n = style.image_size;
  std::mt19937_64 geo(mix(seed, kGeometry)), app(mix(seed, kAppearance)), occ(mix(seed, kOccluders));
  const double size_scale = n / 64.0;

  // ---- geometry ---------------------------------------------------------
  const int drawn = uni_int(geo, style.objects[0], style.objects[1]);
  const int wanted = max_objects < 0 ? drawn : std::min(drawn, max_objects);
  std::vector<Bunch> bunches;
  for (int k = 0; k < drawn; ++k) {
    Bunch b;
    const double sc = uni(geo, style.object_scale[0], style.object_scale[1]) * size_scale;
    const int nb = uni_int(geo, style.berries[0], style.berries[1]);
    const double length = 14.0 * sc, top = 5.0 * sc;
    b.berries.push_back({0.0, 0.0, uni(geo, style.berry_radius[0], style.berry_radius[1]) * sc});
    for (int i = 1; i < nb; ++i) {
      const double y = uni(geo, 0.0, length);
      const double half = top * (1.0 - 0.65 * y / length);
      b.berries.push_back({uni(geo, -half, half), y, uni(geo, style.berry_radius[0], style.berry_radius[1]) * sc});
    }
    double my = 0;
    for (const Berry& br : b.berries) my += br.y;
    my /= static_cast<double>(b.berries.size());
    for (Berry& br : b.berries) br.y -= my;
    const double theta = uni(geo, -0.3, 0.3);
    const double c = std::cos(theta), s = std::sin(theta);
    // view * rotation
    const double v0 = style.view_sx, v1 = style.view_shear, v3 = style.view_sy;
    b.m = {v0 * c + v1 * s, -v0 * s + v1 * c, v3 * s, v3 * c};
    bool placed = false;
    for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
      b.cx = uni(geo, 0.15 * n, 0.85 * n);
      b.cy = uni(geo, 0.15 * n, 0.85 * n);
      b.finish();
      placed = true;
      for (const Bunch& o : bunches)
        if (box_iou(b.x0, b.y0, b.x1, b.y1, o.x0, o.y0, o.x1, o.y1) > 0.2) placed = false;
    }
    if (placed && static_cast<int>(bunches.size()) < wanted) bunches.push_back(std::move(b));
  }
  std::vector<Leaf> distractors;
  const int nd = uni_int(geo, 0, style.max_distractors);
  for (int k = 0; k < nd; ++k) distractors.push_back(draw_leaf(geo, uni(geo, 0, n), uni(geo, 0, n), size_scale));

  std::vector<Leaf> occluders;
  {
    std::poisson_distribution<int> count(std::max(1e-9, 1.5 * style.occluder_density * static_cast<double>(bunches.size())));
    const int no = style.occluder_density > 0 ? count(occ) : 0;
    for (int k = 0; k < no; ++k) {
      double cx = uni(occ, 0, n), cy = uni(occ, 0, n);
      if (!bunches.empty() && uni(occ, 0, 1) < 0.75) {
        const Bunch& t = bunches[static_cast<size_t>(uni_int(occ, 0, static_cast<int>(bunches.size()) - 1))];
        cx = t.cx + uni(occ, -6, 6) * size_scale;
        cy = t.cy + uni(occ, -6, 6) * size_scale;
      }
      occluders.push_back(draw_leaf(occ, cx, cy, size_scale));
    }
  }

  // ---- appearance -------------------------------------------------------
  const Variety& variety =
      style.varieties[static_cast<size_t>(uni_int(app, 0, static_cast<int>(style.varieties.size()) - 1))];
  const double p0 = uni(app, 10, 18) * size_scale, p1 = uni(app, 20, 40) * size_scale;
  const double p2 = uni(app, 8, 14) * size_scale, p3 = uni(app, 24, 48) * size_scale;
  const double ph0 = uni(app, 0, 1), ph1 = uni(app, 0, 1), ph2 = uni(app, 0, 1);
  const Rgb soil{0.45, 0.36, 0.25}, canopy{0.26, 0.42, 0.18};
  const Rgb sky{0.58, 0.64, 0.72}, shade{0.12, 0.26, 0.15};
  double regime = style.background_regime;
  if (style.regime_spread != 0.0) regime -= style.regime_spread * uni(app, 0.0, 1.0);
  regime = std::clamp(regime, 0.0, 1.0);
  const double leaf_hue = uni(app, 95, 130);
  std::vector<double> berry_hue;
  std::vector<std::vector<double>> berry_val(bunches.size());
  for (size_t k = 0; k < bunches.size(); ++k) {
    berry_hue.push_back(variety.hue + std::normal_distribution<double>(0, style.hue_jitter)(app));
    for (size_t i = 0; i < bunches[k].berries.size(); ++i) berry_val[k].push_back(uni(app, 0.85, 1.1));
  }
  std::normal_distribution<double> unit(0.0, 1.0);

  Image img(n, n);
  std::vector<int> label(static_cast<size_t>(n) * n, -1);
  auto put = [&](int y, int x, const Rgb& c) {
    for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = static_cast<float>(c[ch]);
  };
  const double two_pi = 2.0 * std::numbers::pi;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double t0 = 0.5 + 0.5 * std::sin(two_pi * (x / p0 + ph0)) * (0.8 + 0.2 * std::sin(two_pi * y / p1));
      const double t1 = 0.5 + 0.5 * std::sin(two_pi * (y / p2 + ph1) + 0.8 * std::sin(two_pi * (x / p3 + ph2)));
      Rgb c = lerp(lerp(soil, canopy, t0), lerp(sky, shade, t1), regime);
      const double tex = 0.03 * unit(app);
      put(y, x, {c[0] + tex, c[1] + tex, c[2] + tex});
    }
  const Rgb leaf_rgb = hsv_to_rgb(leaf_hue, 0.55, 0.42);
  for (const Leaf& lf : distractors)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (lf.contains(x + 0.5, y + 0.5)) put(y, x, leaf_rgb);
  for (size_t k = 0; k < bunches.size(); ++k) {
    const Bunch& b = bunches[k];
    const int ylo = std::max(0, static_cast<int>(std::floor(b.y0))), yhi = std::min(n - 1, static_cast<int>(std::ceil(b.y1)));
    const int xlo = std::max(0, static_cast<int>(std::floor(b.x0))), xhi = std::min(n - 1, static_cast<int>(std::ceil(b.x1)));
    for (int y = ylo; y <= yhi; ++y)
      for (int x = xlo; x <= xhi; ++x) {
        double du, dv;
        const int i = b.hit(x + 0.5, y + 0.5, du, dv);
        if (i < 0) continue;
        label[static_cast<size_t>(y) * n + x] = static_cast<int>(k);
        const double shading = 0.75 + 0.25 * (1.0 - (du * du + dv * dv));
        Rgb c = hsv_to_rgb(berry_hue[k], variety.saturation,
                           std::min(1.0, variety.value * berry_val[k][static_cast<size_t>(i)] * shading));
        const double hx = du + 0.35, hy = dv + 0.35;
        if (hx * hx + hy * hy < 0.12) c = lerp(c, {1, 1, 1}, style.specular);
        put(y, x, c);
      }
  }
  for (const Leaf& lf : occluders)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (lf.contains(x + 0.5, y + 0.5)) {
          put(y, x, lerp(leaf_rgb, {0.3, 0.5, 0.2}, 0.3));
          label[static_cast<size_t>(y) * n + x] = -2;
        }

  // ---- photometric ------------------------------------------------------
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) img.at(ch, y, x) = static_cast<float>(img.at(ch, y, x) * style.gain + style.cast[ch]);
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  img = gaussian_blur(img, style.blur_sigma);
  for (float& v : img.data) v = static_cast<float>(std::clamp(v + style.noise_std * unit(app), 0.0, 1.0));
  quantize_8bit(img);

  // ---- annotations ------------------------------------------------------
  Scene scene;
  scene.sample.id = image_id;
  scene.sample.attributes["variety"] = variety.name;
  scene.sample.image = std::move(img);
  int64_t next_id = image_id * 1000;
  for (size_t k = 0; k < bunches.size(); ++k) {
    Mask m(n, n);
    for (size_t p = 0; p < label.size(); ++p) m.bits[p] = label[p] == static_cast<int>(k);
    if (m.count() < style.min_visible_pixels) continue;
    Polygon poly = trace_mask(m, style.max_vertices);
    scene.sample.instances.push_back(make_annotation(++next_id, image_id, {std::move(poly)}));
    scene.silhouettes.push_back(std::move(m));
  }
  return scene;
}

namespace {

std::string file_name_for(const std::string& set, int64_t id) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05lld.ppm", set.c_str(), static_cast<long long>(id));
  return buf;
}

}  // namespace

Dataset generate(int scene_count, std::array<int, 2> objects_per_scene, int image_size,
                 const ShiftSpec& shift) {
  if (scene_count < 1) throw std::invalid_argument("generate: scene_count must be >= 1");
  SceneStyle style = source_style(image_size);
  style.objects = objects_per_scene;
  style = apply_shift(style, shift);
  Dataset ds;
  ds.name = shift.name();
  if (!shift.tag().empty()) ds.shift_tags = {shift.tag()};
  for (int i = 0; i < scene_count; ++i) {
    Scene s = render_scene(style, mix(shift.seed, static_cast<uint64_t>(i)), i + 1);
    s.sample.file_name = file_name_for(ds.name, s.sample.id);
    ds.samples.push_back(std::move(s.sample));
  }
  return ds;
}

Dataset generate_instances(const std::string& name, const SceneStyle& style, int64_t instances,
                           uint64_t seed, std::vector<std::string> tags) {
  Dataset ds;
  ds.name = name;
  ds.shift_tags = std::move(tags);
  int64_t total = 0;
  int barren = 0;
  for (int64_t i = 0; total < instances; ++i) {
    Scene s = render_scene(style, mix(seed, static_cast<uint64_t>(i)), i + 1,
                           static_cast<int>(std::min<int64_t>(instances - total, 1 << 20)));
    if (s.sample.instances.empty()) {
      if (++barren > 1000) throw std::runtime_error("generate: scenes keep coming out empty");
      continue;
    }
    barren = 0;
    total += static_cast<int64_t>(s.sample.instances.size());
    s.sample.file_name = file_name_for(name, s.sample.id);
    ds.samples.push_back(std::move(s.sample));
  }
  return ds;
}

SceneStyle source_style(int image_size) {
  SceneStyle s;
  s.image_size = image_size;
  s.varieties = {{"indigo", 250, 0.6, 0.5},
                 {"violet", 272, 0.65, 0.55},
                 {"garnet", 345, 0.65, 0.5},
                 {"pale", 88, 0.4, 0.75},
                 {"lime", 108, 0.45, 0.7}};
  return s;
}

SceneStyle tune_style(int image_size) {
  SceneStyle s = source_style(image_size);
  // New variety (feature-level): a red table grape with larger berries and bunches.
  s.varieties = {{"red", 5, 0.7, 0.55}};
  s.berry_radius = {s.berry_radius[0] * 1.35, s.berry_radius[1] * 1.35};
  s.object_scale = {s.object_scale[0] * 1.25, s.object_scale[1] * 1.25};
  // Natural: part of the images move toward the second background regime.
  s = apply_shift(s, {ShiftSpec::Kind::kNatural, 0.3, 1.0, 0});
  // Different camera: input-level.
  s.gain = 0.95;
  s.cast = {0.02, 0.0, -0.02};
  s.blur_sigma = 0.3;
  s.noise_std = 0.015;
  return s;
}

std::vector<SuiteSet> suite_plan(uint64_t base_seed, double scale, int image_size) {
  if (!(scale > 0)) throw std::invalid_argument("suite scale must be positive");
  auto count = [scale](int64_t n) { return std::max<int64_t>(1, std::llround(static_cast<double>(n) * scale)); };
  using K = ShiftSpec::Kind;
  const SceneStyle tune = tune_style(image_size);
  const ShiftSpec drift{K::kInputLevel, 1.0, 1.0, 0};
  std::vector<SuiteSet> plan;
  plan.push_back({"source", source_style(image_size), {}, {}, count(2020), 0});
  plan.push_back({"tune", tune, {}, {"natural", "feature-level", "input-level"}, count(668), 0});
  struct Target {
    const char* name;
    std::vector<ShiftSpec> extra;
    int64_t instances;
    bool wine_grape;  // other variety: source-sized berries and bunches
  };
  const std::vector<Target> targets = {
      {"R", {}, 100, false},
      {"RV", {{K::kViewpoint, 1.0, 1.0, 0}}, 112, false},
      {"RF", {{K::kOcclusion, 1.0, 1.0, 0}}, 105, false},
      {"C", {{K::kFeatureLevel, 1.0, -1.0, 0}}, 138, true},
      {"O", {{K::kFeatureLevel, 1.0, 0.8, 0}}, 135, true},
  };
  const SceneStyle source = source_style(image_size);
  for (const Target& t : targets) {
    SuiteSet set{t.name, tune, {drift}, {}, count(t.instances), 0};
    if (t.wine_grape) {
      set.style.berry_radius = source.berry_radius;
      set.style.object_scale = source.object_scale;
    }
    set.shifts.insert(set.shifts.end(), t.extra.begin(), t.extra.end());
    for (const ShiftSpec& s : set.shifts) {
      set.style = apply_shift(set.style, s);
      if (std::find(set.tags.begin(), set.tags.end(), s.tag()) == set.tags.end()) set.tags.push_back(s.tag());
    }
    std::sort(set.tags.begin(), set.tags.end());
    plan.push_back(std::move(set));
  }
  for (size_t i = 0; i < plan.size(); ++i) {
    plan[i].seed = mix(base_seed, 1000 + i);
    for (ShiftSpec& s : plan[i].shifts) s.seed = plan[i].seed;
  }
  return plan;
}

ShiftSuite shift_suite(uint64_t base_seed, double scale, int image_size) {
  ShiftSuite suite;
  std::ostringstream lock;
  lock << "# shift suite lock: regenerate with `synth --suite --seed " << base_seed << " --scale "
       << fmt(scale) << " --size " << image_size << "`\n";
  lock << "base_seed=" << base_seed << "\nscale=" << fmt(scale) << "\nimage_size=" << image_size << '\n';
  for (const SuiteSet& set : suite_plan(base_seed, scale, image_size)) {
    Dataset ds = generate_instances(set.name, set.style, set.instances, set.seed, set.tags);
    lock << "\n[" << set.name << "]\nseed=" << set.seed << "\ninstances=" << set.instances
         << "\nimages=" << ds.samples.size() << "\ntags=";
    for (size_t i = 0; i < set.tags.size(); ++i) lock << (i ? "|" : "") << set.tags[i];
    lock << "\nshifts=";
    for (size_t i = 0; i < set.shifts.size(); ++i)
      lock << (i ? "," : "") << set.shifts[i].name() << ':' << fmt(set.shifts[i].magnitude) << ':'
           << fmt(set.shifts[i].direction);
    lock << "\nvarieties=";
    for (size_t i = 0; i < set.style.varieties.size(); ++i) {
      const Variety& v = set.style.varieties[i];
      lock << (i ? "," : "") << v.name << ':' << fmt(v.hue) << ':' << fmt(v.saturation) << ':' << fmt(v.value);
    }
    lock << "\nberry_radius=" << fmt(set.style.berry_radius[0]) << ',' << fmt(set.style.berry_radius[1])
         << "\nobject_scale=" << fmt(set.style.object_scale[0]) << ',' << fmt(set.style.object_scale[1]);
    lock << "\nbackground_regime=" << fmt(set.style.background_regime) << "\nregime_spread="
         << fmt(set.style.regime_spread) << "\ngain=" << fmt(set.style.gain)
         << "\nblur_sigma=" << fmt(set.style.blur_sigma) << "\nnoise_std=" << fmt(set.style.noise_std)
         << "\nview=" << fmt(set.style.view_sx) << ',' << fmt(set.style.view_sy) << ','
         << fmt(set.style.view_shear) << "\noccluder_density=" << fmt(set.style.occluder_density) << '\n';
    if (set.name == "source") suite.source = std::move(ds);
    else if (set.name == "tune") suite.tune = std::move(ds);
    else suite.targets.push_back(std::move(ds));
  }
  suite.lock = lock.str();
  return suite;
}

void save_suite(const ShiftSuite& suite, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<DatasetManifest> manifests{suite.source.manifest(), suite.tune.manifest()};
  save_dataset(suite.source, dir / suite.source.name);
  save_dataset(suite.tune, dir / suite.tune.name);
  for (const Dataset& t : suite.targets) {
    save_dataset(t, dir / t.name);
    manifests.push_back(t.manifest());
  }
  std::ofstream lock(dir / "suite.lock");
  lock << suite.lock;
  std::ofstream csv(dir / "manifest.csv");
  write_manifest_csv(csv, manifests);
  if (!lock || !csv) throw std::runtime_error("cannot write suite files under " + dir.string());
}

}  // namespace scalpel
