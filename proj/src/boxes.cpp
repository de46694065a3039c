#include "scalpel/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace scalpel {

namespace {
// Caps exp() in decoding, as in the usual detectron bbox transform.
const float kScaleClamp = std::log(1000.0f / 16.0f);
}  // namespace

float box_iou(const Box& a, const Box& b) {
  const float iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const float ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0f;
  const float inter = iw * ih;
  const float uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0f;
}

std::vector<int> nms(std::span<const Box> boxes, std::span<const float> scores,
                     float iou_threshold) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> keep;
  std::vector<char> removed(boxes.size(), 0);
  for (size_t i = 0; i < order.size(); ++i) {
    const int idx = order[i];
    if (removed[idx]) continue;
    keep.push_back(idx);
    for (size_t j = i + 1; j < order.size(); ++j) {
      const int other = order[j];
      if (!removed[other] && box_iou(boxes[idx], boxes[other]) > iou_threshold) removed[other] = 1;
    }
  }
  return keep;
}

std::array<float, 4> encode_deltas(const Box& ref, const Box& tgt,
                                   const std::array<float, 4>& w) {
  const float rw = ref.width(), rh = ref.height();
  const float rx = ref.x1 + 0.5f * rw, ry = ref.y1 + 0.5f * rh;
  const float tw = tgt.width(), th = tgt.height();
  const float tx = tgt.x1 + 0.5f * tw, ty = tgt.y1 + 0.5f * th;
  return {w[0] * (tx - rx) / rw, w[1] * (ty - ry) / rh, w[2] * std::log(tw / rw),
          w[3] * std::log(th / rh)};
}

Box decode_deltas(const Box& ref, std::span<const float> d, const std::array<float, 4>& w) {
  const float rw = ref.width(), rh = ref.height();
  const float rx = ref.x1 + 0.5f * rw, ry = ref.y1 + 0.5f * rh;
  const float dx = d[0] / w[0], dy = d[1] / w[1];
  const float dw = std::min(d[2] / w[2], kScaleClamp);
  const float dh = std::min(d[3] / w[3], kScaleClamp);
  const float cx = dx * rw + rx, cy = dy * rh + ry;
  const float pw = std::exp(dw) * rw, ph = std::exp(dh) * rh;
  return {cx - 0.5f * pw, cy - 0.5f * ph, cx + 0.5f * pw, cy + 0.5f * ph};
}

Box clip_box(const Box& b, float width, float height) {
  return {std::clamp(b.x1, 0.0f, width), std::clamp(b.y1, 0.0f, height),
          std::clamp(b.x2, 0.0f, width), std::clamp(b.y2, 0.0f, height)};
}

std::vector<Box> grid_anchors(int h, int w, int stride, float size) {
  static constexpr std::array<float, 3> kRatios{0.5f, 1.0f, 2.0f};
  std::vector<Box> anchors;
  anchors.reserve(static_cast<size_t>(h) * w * kRatios.size());
  const float area = size * size;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float cx = (static_cast<float>(x) + 0.5f) * static_cast<float>(stride);
      const float cy = (static_cast<float>(y) + 0.5f) * static_cast<float>(stride);
      for (float ratio : kRatios) {  // ratio = height / width
        const float aw = std::sqrt(area / ratio);
        const float ah = aw * ratio;
        anchors.push_back({cx - 0.5f * aw, cy - 0.5f * ah, cx + 0.5f * aw, cy + 0.5f * ah});
      }
    }
  return anchors;
}

}  // namespace scalpel
