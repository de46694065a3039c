#pragma once

#include <array>
#include <span>
#include <vector>

namespace scalpel {

struct Box {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  float width() const { return x2 - x1; }
  float height() const { return y2 - y1; }
  float area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0f; }
  bool operator==(const Box&) const = default;
};

float box_iou(const Box& a, const Box& b);

/// Greedy NMS; returns kept indices in descending score order. Ties in score
/// keep the lower index first.
std::vector<int> nms(std::span<const Box> boxes, std::span<const float> scores, float iou_threshold);

/// (dx, dy, dw, dh) regression targets of `target` relative to `reference`,
/// scaled by per-component weights; log-space for width and height.
std::array<float, 4> encode_deltas(const Box& reference, const Box& target,
                                   const std::array<float, 4>& weights);
Box decode_deltas(const Box& reference, std::span<const float> deltas,
                  const std::array<float, 4>& weights);

Box clip_box(const Box& b, float width, float height);

/// Anchors for a feature map of h x w cells at the given stride, three aspect
/// ratios (0.5, 1, 2) of one size per location. Layout: ((y * w + x) * 3 + a).
std::vector<Box> grid_anchors(int h, int w, int stride, float size);

}  // namespace scalpel
