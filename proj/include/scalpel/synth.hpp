#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scalpel/coco.hpp"
#include "scalpel/geometry.hpp"

namespace scalpel {

/// One distribution shift applied on top of a scene style.
///
///  input_level   darker exposure, colour cast, blur and sensor noise
///  feature_level berry hue rotates by 90 deg * magnitude * direction; a
///                positive direction also desaturates (pale berries), a
///                negative one darkens
///  natural       background palette and stripe layout move to a second regime
///  viewpoint     anisotropic scale and shear of every bunch
///  occlusion     foreground leaves over the bunches (mean 1.5 * magnitude per bunch)
struct ShiftSpec {
  enum class Kind { kNone, kInputLevel, kFeatureLevel, kNatural, kViewpoint, kOcclusion };
  Kind kind = Kind::kNone;
  double magnitude = 0.0;
  double direction = 1.0;  // feature_level only
  uint64_t seed = 0;

  /// Throws std::invalid_argument on negative magnitude or a magnitude on kNone.
  void validate() const;
  std::string name() const;
  /// "input-level", "feature-level", "natural", or "" for kNone.
  std::string tag() const;
};

struct Variety {
  std::string name;
  double hue = 0;         // degrees
  double saturation = 0.7;
  double value = 0.6;
};

/// Everything the renderer needs. Geometry and appearance draw from separate
/// random streams, so appearance-only changes keep the silhouettes.
struct SceneStyle {
  int image_size = 64;
  std::array<int, 2> objects{1, 4};
  std::array<int, 2> berries{7, 14};
  std::array<double, 2> berry_radius{1.8, 2.8};
  std::array<double, 2> object_scale{0.85, 1.25};
  std::vector<Variety> varieties{{"purple", 275, 0.65, 0.55}};
  double hue_jitter = 6.0;
  double specular = 0.35;

  double background_regime = 0.0;  // 0 or 1, blends in between
  // Per-image variation: each image uses background_regime - regime_spread * u,
  // u ~ U(0, 1), so a set can span a range of conditions.
  double regime_spread = 0.0;
  int max_distractors = 3;
  double occluder_density = 0.0;

  double view_sx = 1.0, view_sy = 1.0, view_shear = 0.0;

  double gain = 1.0;
  std::array<double, 3> cast{0, 0, 0};
  double blur_sigma = 0.0;
  double noise_std = 0.01;

  int min_visible_pixels = 8;
  int max_vertices = 128;  // occluded bunches fragment; 64 was lossy on RF

  void validate() const;
};

SceneStyle apply_shift(SceneStyle style, const ShiftSpec& shift);

/// A rendered scene plus each annotated instance's visible silhouette, in
/// annotation order.
struct Scene {
  Sample sample;
  std::vector<Mask> silhouettes;
};

/// `max_objects` caps the bunch count (negative: no cap).
Scene render_scene(const SceneStyle& style, uint64_t seed, int64_t image_id, int max_objects = -1);

/// scene_count scenes of the base style with the shift applied.
Dataset generate(int scene_count, std::array<int, 2> objects_per_scene, int image_size,
                 const ShiftSpec& shift);

/// Renders scenes until exactly `instances` annotations exist.
Dataset generate_instances(const std::string& name, const SceneStyle& style, int64_t instances,
                           uint64_t seed, std::vector<std::string> tags);

/// Style of the multi-variety source set.
SceneStyle source_style(int image_size = 64);
/// Style of the fine-tuning set: one red table-grape variety (large berries
/// and bunches), a partial move to the second background regime, another camera.
SceneStyle tune_style(int image_size = 64);

struct SuiteSet {
  std::string name;
  SceneStyle style;
  std::vector<ShiftSpec> shifts;  // relative to the tune style (targets only)
  std::vector<std::string> tags;
  int64_t instances = 0;
  uint64_t seed = 0;
};

/// The source set, the fine-tuning set and five targets: R (exposure drift),
/// RV (drift + viewpoint), RF (drift + occlusion), C and O (drift + berry
/// colour). Instance totals follow 2020 / 668 / 100 / 112 / 105 / 138 / 135
/// times `scale`.
std::vector<SuiteSet> suite_plan(uint64_t base_seed, double scale = 1.0, int image_size = 64);

struct ShiftSuite {
  Dataset source;
  Dataset tune;
  std::vector<Dataset> targets;  // R, RV, RF, C, O
  std::string lock;              // suite.lock contents
};

ShiftSuite shift_suite(uint64_t base_seed, double scale = 1.0, int image_size = 64);

/// Writes DIR/<set>/ datasets, DIR/suite.lock and DIR/manifest.csv.
void save_suite(const ShiftSuite& suite, const std::filesystem::path& dir);

}  // namespace scalpel
