#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scalpel/arch.hpp"
#include "scalpel/boxes.hpp"
#include "scalpel/coco.hpp"
#include "scalpel/geometry.hpp"
#include "scalpel/network.hpp"
#include "scalpel/optim.hpp"

namespace scalpel {

/// The region-based segmentation network: parameters tagged by group plus
/// the layer wiring that consumes them.
class ModelGraph {
 public:
  ModelGraph(const ArchConfig& config, uint64_t seed);

  ModelGraph(ModelGraph&&) = default;
  ModelGraph& operator=(ModelGraph&&) = default;
  ModelGraph(const ModelGraph&) = delete;
  ModelGraph& operator=(const ModelGraph&) = delete;

  /// Independent deep copy (same config, same values, same trainable flags).
  ModelGraph clone() const;

  const ArchConfig& config() const { return config_; }
  const Network& network() const { return net_; }
  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  const std::vector<ParamSpec>& layout() const { return layout_; }
  int64_t parameter_count() const;

 private:
  ArchConfig config_;
  std::vector<ParamSpec> layout_;
  std::vector<Parameter> params_;
  Network net_;
};

/// Deterministic initialization from `seed`.
ModelGraph build_model(const ArchConfig& config, uint64_t seed);

struct LossBundle {
  Tensor rpn_objectness;
  Tensor rpn_box;
  Tensor roi_class;
  Tensor roi_box;
  Tensor roi_mask;
  Tensor total;

  float value() const { return total.item(); }
};

/// Composite training loss averaged over the batch (unit term weights).
/// Anchor and ROI sampling draw from `rng`.
LossBundle forward_train(const ModelGraph& model, std::span<const Sample> batch,
                         std::mt19937_64& rng);

struct Detection {
  Box box;
  float score = 0;
  int class_id = kGrapeCategoryId;
  int mask_size = 0;
  std::vector<float> mask;  // mask_size^2 foreground probabilities over the box

  /// Binary mask_size x mask_size grid (probability >= 0.5).
  Mask grid() const;
  /// Mask resampled into image space and thresholded at 0.5.
  Mask paste(int height, int width) const;
};

/// Proposals, box head, per-class NMS and score filtering (score >= floor),
/// then mask prediction for the surviving boxes.
std::vector<Detection> forward_infer(const ModelGraph& model, const Image& image,
                                     float score_floor);

}  // namespace scalpel
