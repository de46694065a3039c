#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "scalpel/synth.hpp"

using namespace scalpel;

namespace {

// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  const double n = static_cast<double>(a.size() * b.size()) / static_cast<double>(a.size() + b.size());
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  double p = 0;
  for (int k = 1; k <= 100; ++k) p += 2 * ((k % 2) ? 1 : -1) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> object_areas(const Dataset& d) {
  std::vector<double> out;
  for (const Sample& s : d.samples)
    for (const auto& a : s.instances) out.push_back(static_cast<double>(a.mask(s.image.height, s.image.width).count()));
  return out;
}

double pixel_hue(const Image& img, int y, int x, double* sat) {
  const double r = img.at(0, y, x), g = img.at(1, y, x), b = img.at(2, y, x);
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), c = mx - mn;
  *sat = mx > 0 ? c / mx : 0.0;
  if (c <= 0) return 0.0;
  double h;
  if (mx == r) h = std::fmod((g - b) / c + 6.0, 6.0);
  else if (mx == g) h = (b - r) / c + 2.0;
  else h = (r - g) / c + 4.0;
  return h * 60.0;
}

// Hue histogram (10-degree bins) of annotated pixels with some saturation.
std::vector<double> hue_histogram(const Dataset& d) {
  std::vector<double> h(36, 0.0);
  double total = 0;
  for (const Sample& s : d.samples) {
    const Image& img = s.image;
    for (const auto& a : s.instances) {
      const Mask m = a.mask(img.height, img.width);
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          double sat;
          const double hue = pixel_hue(img, y, x, &sat);
          if (!m.at(y, x) || sat < 0.15) continue;
          h[static_cast<size_t>(std::min(35.0, hue / 10.0))] += 1;
          total += 1;
        }
    }
  }
  for (double& v : h) v /= std::max(total, 1.0);
  return h;
}

// Histogram of per-object hue: the circular mean over each object's
// saturated pixels. Blur mixes background into edge pixels; the per-object
// statistic describes the object itself.
std::vector<double> object_hue_histogram(const Dataset& d) {
  std::vector<double> h(36, 0.0);
  double total = 0;
  for (const Sample& s : d.samples) {
    const Image& img = s.image;
    for (const auto& a : s.instances) {
      const Mask m = a.mask(img.height, img.width);
      double cx = 0, cy = 0;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          double sat;
          const double hue = pixel_hue(img, y, x, &sat) * std::numbers::pi / 180.0;
          if (!m.at(y, x) || sat < 0.15) continue;
          cx += std::cos(hue);
          cy += std::sin(hue);
        }
      if (cx == 0 && cy == 0) continue;
      const double deg = std::fmod(std::atan2(cy, cx) * 180.0 / std::numbers::pi + 360.0, 360.0);
      h[static_cast<size_t>(std::min(35.0, deg / 10.0))] += 1;
      total += 1;
    }
  }
  for (double& v : h) v /= std::max(total, 1.0);
  return h;
}

double overlap(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0;
  for (size_t i = 0; i < p.size(); ++i) s += std::min(p[i], q[i]);
  return s;
}

const Dataset* find(const ShiftSuite& s, const std::string& name) {
  for (const Dataset& d : s.targets)
    if (d.name == name) return &d;
  return nullptr;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is deterministic") {
  const ShiftSpec none{ShiftSpec::Kind::kNone, 0.0, 1.0, 4};
  const Dataset a = generate(5, {1, 4}, 64, none), b = generate(5, {1, 4}, 64, none);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].image == b.samples[i].image);
    CHECK(a.samples[i].instances == b.samples[i].instances);
  }
  const Dataset c = generate(5, {1, 4}, 64, ShiftSpec{ShiftSpec::Kind::kNone, 0.0, 1.0, 5});
  CHECK_FALSE(c.samples[0].image == a.samples[0].image);
}

TEST_CASE("annotations match the rendered silhouettes") {
  const auto st = oracle::annotation_fidelity(source_style(64), 100, 77);
  CHECK(st.objects > 100);
  CHECK(st.min_iou >= 0.99);
}

TEST_CASE("feature-level shift recolours but keeps geometry") {
  const ShiftSpec base{ShiftSpec::Kind::kNone, 0.0, 1.0, 8};
  const ShiftSpec hue{ShiftSpec::Kind::kFeatureLevel, 1.0, 1.0, 8};
  const Dataset a = generate(20, {1, 3}, 64, base), b = generate(20, {1, 3}, 64, hue);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].instances == b.samples[i].instances);
  CHECK(overlap(hue_histogram(a), hue_histogram(b)) < 0.5);
  CHECK(b.shift_tags == std::vector<std::string>{"feature-level"});
}

TEST_CASE("occlusion shrinks the visible object area") {
  SceneStyle clear = source_style(64);
  const SceneStyle occluded = apply_shift(clear, {ShiftSpec::Kind::kOcclusion, 0.5, 1.0, 0});
  auto mean_area = [](const SceneStyle& s) {
    double total = 0;
    int n = 0;
    for (int i = 0; i < 120; ++i) {
      const Scene sc = render_scene(s, 500 + i, i);
      for (const Mask& m : sc.silhouettes) {
        total += static_cast<double>(m.count());
        ++n;
      }
    }
    return total / n;
  };
  CHECK(mean_area(occluded) < mean_area(clear));
}

TEST_CASE("shift validation") {
  CHECK_THROWS(ShiftSpec{ShiftSpec::Kind::kNone, 0.5, 1.0, 0}.validate());
  CHECK_THROWS(ShiftSpec{ShiftSpec::Kind::kInputLevel, -1.0, 1.0, 0}.validate());
  CHECK_NOTHROW(ShiftSpec{ShiftSpec::Kind::kViewpoint, 2.0, 1.0, 0}.validate());
}

TEST_CASE("suite sets mirror the shift taxonomy and instance totals") {
  const ShiftSuite suite = shift_suite(3, 0.25, 64);
  using Tags = std::set<std::string>;
  auto tags = [](const Dataset& d) { return Tags(d.shift_tags.begin(), d.shift_tags.end()); };
  CHECK(tags(suite.tune) == Tags{"natural", "feature-level", "input-level"});
  CHECK(tags(*find(suite, "R")) == Tags{"input-level"});
  CHECK(tags(*find(suite, "RV")) == Tags{"input-level"});
  CHECK(tags(*find(suite, "RF")) == Tags{"input-level"});
  CHECK(tags(*find(suite, "C")) == Tags{"input-level", "feature-level"});
  CHECK(tags(*find(suite, "O")) == Tags{"input-level", "feature-level"});
  CHECK(suite.source.instance_count() == std::llround(2020 * 0.25));
  CHECK(find(suite, "C")->instance_count() == std::llround(138 * 0.25));
  CHECK(suite.lock.find("[RF]") != std::string::npos);
}

TEST_CASE("R target at full scale holds 100 instances") {
  const auto plan = suite_plan(1, 1.0, 64);
  const auto it = std::find_if(plan.begin(), plan.end(), [](const SuiteSet& s) { return s.name == "R"; });
  REQUIRE(it != plan.end());
  CHECK(it->instances == 100);
  const Dataset r = generate_instances("R", it->style, it->instances, it->seed, it->tags);
  CHECK(r.manifest().instance_count == 100);
}

TEST_CASE("temporal target changes photometry, not object geometry") {
  const auto plan = suite_plan(11, 1.0, 64);
  const SuiteSet& tune = plan[1];
  const SuiteSet& r = plan[2];
  REQUIRE(r.name == "R");
  const Dataset a = generate_instances("tune", tune.style, 400, 21, {});
  const Dataset b = generate_instances("R", r.style, 400, 22, {});
  CHECK(ks_pvalue(object_areas(a), object_areas(b)) > 0.01);
  // Same geometry seed, different photometry: identical annotations, different pixels.
  const Scene x = render_scene(tune.style, 5, 0), y = render_scene(r.style, 5, 0);
  CHECK(x.sample.instances == y.sample.instances);
  CHECK_FALSE(x.sample.image == y.sample.image);
}

TEST_CASE("the red-variety target's hues are disjoint from the tune set's") {
  const auto plan = suite_plan(12, 1.0, 64);
  const auto c = std::find_if(plan.begin(), plan.end(), [](const SuiteSet& s) { return s.name == "C"; });
  const Dataset tune = generate_instances("tune", plan[1].style, 300, 31, {});
  const Dataset target = generate_instances("C", c->style, 300, 32, {});
  CHECK(overlap(object_hue_histogram(tune), object_hue_histogram(target)) < 0.05);
}

TEST_CASE("suite round trip writes the lock file and manifest") {
  const ShiftSuite suite = shift_suite(2, 0.05, 32);
  const auto dir = std::filesystem::temp_directory_path() / "scalpel_unit" / "suite";
  std::filesystem::remove_all(dir);
  save_suite(suite, dir);
  CHECK(std::filesystem::exists(dir / "suite.lock"));
  CHECK(std::filesystem::exists(dir / "manifest.csv"));
  const Dataset back = load_dataset(dir / "C");
  CHECK(back.instance_count() == find(suite, "C")->instance_count());
}

}  // TEST_SUITE
