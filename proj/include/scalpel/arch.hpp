#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scalpel/tensor.hpp"

namespace scalpel {

enum class BlockType { kBasic, kBottleneck };

/// Shape and head hyper-parameters of the segmentation network.
struct ArchConfig {
  int stem_channels = 16;
  int stem_kernel = 7;
  std::array<int, 4> stage_channels{16, 32, 64, 128};  // res2..res5 outputs
  std::array<int, 4> blocks_per_stage{1, 1, 1, 1};
  BlockType block_type = BlockType::kBasic;
  int bottleneck_ratio = 4;
  int gn_groups = 8;
  int pyramid_channels = 32;

  int anchors_per_location = 3;
  std::array<float, 4> anchor_sizes{12.0f, 24.0f, 48.0f, 96.0f};  // P2..P5

  int roi_resolution = 7;
  int mask_resolution = 14;
  int box_head_convs = 0;
  int box_head_fcs = 2;
  int box_head_dim = 128;
  int mask_head_convs = 2;
  int mask_head_dim = 16;
  int num_classes = 1;  // foreground classes

  // Proposal and sampling controls.
  int rpn_batch_per_image = 64;
  int rpn_pre_nms_topk = 400;
  int rpn_post_nms_topk = 200;
  float rpn_nms_threshold = 0.7f;
  int roi_batch_per_image = 32;
  float roi_positive_fraction = 0.25f;
  float detection_nms_threshold = 0.5f;
  int detections_per_image = 20;
  float roi_canonical_size = 32.0f;
  int roi_canonical_level = 3;

  /// Desk-scale trainable configuration.
  static ArchConfig mini();
  /// ResNet50-FPN shapes with group normalization; shape-only use.
  static ArchConfig full_scale();

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

/// Initializer for a declared parameter.
struct ParamInit {
  enum class Kind { kZeros, kOnes, kNormal, kKaimingFanOut } kind = Kind::kZeros;
  float stddev = 0.0f;

  static ParamInit zeros() { return {Kind::kZeros, 0.0f}; }
  static ParamInit ones() { return {Kind::kOnes, 0.0f}; }
  static ParamInit normal(float s) { return {Kind::kNormal, s}; }
  static ParamInit kaiming() { return {Kind::kKaimingFanOut, 0.0f}; }
};

struct ParamSpec {
  std::string path;
  std::string group;
  Shape shape;
  ParamInit init;

  int64_t numel() const { return shape_numel(shape); }
};

/// Receives parameter declarations from the network builder. The trainable
/// model allocates tensors; the ledger only records shapes.
using ParamSink = std::function<Tensor(const ParamSpec&)>;

/// Group labels in canonical order.
const std::vector<std::string>& group_labels();

/// Every parameter of the network described by `config`, in declaration
/// order, without allocating storage.
std::vector<ParamSpec> describe_architecture(const ArchConfig& config);

struct PyramidLevel {
  int level;
  int64_t height;
  int64_t width;
};

/// Spatial extents of P2..P5 for an input image; dims must divide by 32.
std::vector<PyramidLevel> pyramid_shapes(const ArchConfig& config, int64_t image_h,
                                         int64_t image_w);

}  // namespace scalpel
