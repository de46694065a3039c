#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scalpel/boxes.hpp"
#include "scalpel/geometry.hpp"
#include "scalpel/image.hpp"

namespace scalpel {

inline constexpr int kGrapeCategoryId = 1;

struct InstanceAnnotation {
  int64_t id = 0;
  int64_t image_id = 0;
  int category_id = kGrapeCategoryId;
  std::vector<Polygon> segmentation;
  std::array<double, 4> bbox{};  // x, y, w, h
  double area = 0;

  Box box() const {
    return {static_cast<float>(bbox[0]), static_cast<float>(bbox[1]),
            static_cast<float>(bbox[0] + bbox[2]), static_cast<float>(bbox[1] + bbox[3])};
  }
  Mask mask(int height, int width) const { return rasterize_all(segmentation, height, width); }
  bool operator==(const InstanceAnnotation&) const = default;
};

/// Builds an annotation with bbox and area derived from the polygons.
InstanceAnnotation make_annotation(int64_t id, int64_t image_id, std::vector<Polygon> polygons);

struct Sample {
  int64_t id = 0;
  std::string file_name;
  std::map<std::string, std::string> attributes;  // e.g. "stratum"
  Image image;
  std::vector<InstanceAnnotation> instances;
};

struct DatasetManifest {
  std::string name;
  int64_t image_count = 0;
  int64_t instance_count = 0;
  std::vector<std::string> shift_tags;  // subset of input-level, feature-level, natural
};

struct Dataset {
  std::string name;
  std::vector<std::string> shift_tags;
  std::vector<Sample> samples;

  DatasetManifest manifest() const;
  int64_t instance_count() const;
};

/// Directory layout: DIR/annotations.json (COCO structure) and DIR/images/.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

/// Parses an annotation document; images are loaded relative to image_root.
Dataset parse_coco(const std::string& json_text, const std::filesystem::path& image_root);
std::string dump_coco(const Dataset& dataset);

/// Checks polygon, bbox and area invariants; throws naming the annotation.
void validate_annotation(const InstanceAnnotation& ann, size_t index);

/// Stratified split. Each stratum (value of attributes[stratify_key]) sends
/// round(n * val_fraction) images to validation; strata with fewer than two
/// images stay wholly in train with a warning.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double val_fraction,
                                  const std::string& stratify_key, uint64_t seed);

/// CSV: name,image_count,instance_count,shift_tags (tags joined with '|').
void write_manifest_csv(std::ostream& os, std::span<const DatasetManifest> manifests);

}  // namespace scalpel
