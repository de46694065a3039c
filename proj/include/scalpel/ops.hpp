#pragma once

#include <span>

#include "scalpel/tensor.hpp"

namespace scalpel {

// Differentiable operations. Image-like tensors are NCHW. Every op throws
// std::invalid_argument naming the op and the offending shapes when its
// inputs are incompatible.

/// 2-D convolution. `weight` is [Co, Ci, kh, kw]; `bias` may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride = 1, int pad = 0);

/// Transposed convolution with kernel == stride (non-overlapping windows),
/// the usual 2x mask-head upsampler. `weight` is [Ci, Co, k, k].
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        int stride);

/// Group normalization over (C/groups, H, W) per sample with per-channel affine.
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps = 1e-5f);

/// max(x, 0); the subgradient at 0 is 0.
Tensor relu(const Tensor& x);

/// y = x W^T + b for x [R, In], W [Out, In], b [Out] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor max_pool(const Tensor& x, int kernel, int stride, int pad);
Tensor nearest_upsample(const Tensor& x, int factor);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& x);

/// Row-wise softmax of a [R, K] tensor.
Tensor softmax(const Tensor& x);

/// Mean softmax cross-entropy of [R, K] logits against integer labels.
/// Zero rows yield a constant 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// sum_i w_i * smoothL1(pred_i - target_i) / normalizer. beta == 0 is plain L1.
Tensor smooth_l1(const Tensor& pred, std::span<const float> target,
                 std::span<const float> weight, float beta, float normalizer);

/// Logit-space binary cross-entropy: sum_i w_i * bce(sigmoid(x_i), t_i) / normalizer.
Tensor binary_cross_entropy(const Tensor& logits, std::span<const float> target,
                            std::span<const float> weight, float normalizer);

struct RoiBox {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;  // image coordinates
  int level = 0;                         // index into the feature list
};

/// Bilinear crop-and-resize of each box from its assigned feature map onto an
/// out_size x out_size grid (one sample per bin centre, pixel-aligned).
/// Feature maps are [1, C, H, W] with a shared C; `scales` maps image
/// coordinates to each map. Gradient reaches the features, not the boxes.
Tensor roi_crop_resize(std::span<const Tensor> features, std::span<const float> scales,
                       std::span<const RoiBox> rois, int out_size);

Tensor reshape(const Tensor& x, Shape shape);
Tensor scale(const Tensor& x, float factor);
Tensor sum(const Tensor& x);

}  // namespace scalpel
