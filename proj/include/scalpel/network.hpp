#pragma once

#include <array>
#include <vector>

#include "scalpel/arch.hpp"
#include "scalpel/tensor.hpp"

namespace scalpel {

/// Convolution optionally followed by group normalization. Convs feeding a
/// norm carry no bias.
struct ConvUnit {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  int stride = 1;
  int pad = 0;

  bool normalized() const { return gamma.defined(); }
};

struct LinearUnit {
  Tensor weight;
  Tensor bias;
};

struct ResidualBlock {
  ConvUnit conv1;
  ConvUnit conv2;
  ConvUnit conv3;     // bottleneck expand; undefined for basic blocks
  ConvUnit shortcut;  // projection; undefined for identity shortcuts

  bool bottleneck() const { return conv3.weight.defined(); }
  bool projects() const { return shortcut.weight.defined(); }
};

/// Tensor handles for every layer of the segmentation network. Built once by
/// build_network(); the parameters themselves live in the ModelGraph.
struct Network {
  ConvUnit stem;
  std::array<std::vector<ResidualBlock>, 4> stages;  // res2..res5
  std::array<ConvUnit, 4> fpn_lateral;               // level 2..5
  std::array<ConvUnit, 4> fpn_output;
  ConvUnit rpn_conv;
  ConvUnit rpn_objectness;
  ConvUnit rpn_deltas;
  std::vector<ConvUnit> box_convs;
  std::vector<LinearUnit> box_fcs;
  LinearUnit cls_score;
  LinearUnit bbox_pred;
  std::vector<ConvUnit> mask_convs;
  Tensor mask_deconv_weight;
  Tensor mask_deconv_bias;
  ConvUnit mask_predictor;
};

/// Declares every parameter through `sink` in a fixed order and wires the
/// returned handles into a Network.
Network build_network(const ArchConfig& config, const ParamSink& sink);

}  // namespace scalpel
