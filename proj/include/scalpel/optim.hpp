#pragma once

#include <span>
#include <string>

#include "scalpel/tensor.hpp"

namespace scalpel {

/// A learnable tensor tagged with its owning parameter group.
///
/// `trainable` is the surgical switch: a frozen parameter does not request
/// gradients and sgd_step never writes to it.
struct Parameter {
  std::string path;   // e.g. "backbone.res3.block0.conv2.weight"
  std::string group;  // stem, res2..res5, fpn@2..fpn@5, rpn, roi_heads
  Tensor tensor;
  bool trainable = true;

  void set_trainable(bool flag) {
    trainable = flag;
    tensor.set_requires_grad(flag);
    if (!flag) tensor.clear_grad();
  }
};

/// Plain SGD: data -= lr * grad on trainable parameters, then zero all grads.
void sgd_step(std::span<Parameter> params, float learning_rate);

void zero_grads(std::span<Parameter> params);

}  // namespace scalpel
