#include "scalpel/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "scalpel/ops.hpp"

namespace scalpel {

namespace {

constexpr std::array<float, 4> kRpnDeltaWeights{1.0f, 1.0f, 1.0f, 1.0f};
constexpr std::array<float, 4> kRoiDeltaWeights{10.0f, 10.0f, 5.0f, 5.0f};
constexpr float kRpnBeta = 1.0f / 9.0f;
constexpr float kRoiBeta = 1.0f;
constexpr float kRpnPositiveIou = 0.7f;
constexpr float kRpnNegativeIou = 0.3f;
constexpr float kRoiForegroundIou = 0.5f;
constexpr float kPixelMean = 0.5f;
constexpr float kPixelStd = 0.25f;

Tensor init_tensor(const ParamSpec& spec, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(spec.shape, true);
  auto data = t.data();
  switch (spec.init.kind) {
    case ParamInit::Kind::kZeros:
      break;
    case ParamInit::Kind::kOnes:
      std::fill(data.begin(), data.end(), 1.0f);
      break;
    case ParamInit::Kind::kNormal: {
      std::normal_distribution<float> dist(0.0f, spec.init.stddev);
      for (float& v : data) v = dist(rng);
      break;
    }
    case ParamInit::Kind::kKaimingFanOut: {
      // conv weight [Co, Ci, kh, kw] or deconv [Ci, Co, k, k]; fan_out = Co*k*k.
      const int64_t fan_out = spec.shape.size() == 4
                                  ? spec.shape[0] * spec.shape[2] * spec.shape[3]
                                  : spec.shape[0];
      std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_out)));
      for (float& v : data) v = dist(rng);
      break;
    }
  }
  return t;
}

Tensor image_tensor(const Image& img) {
  Tensor t = Tensor::zeros({1, 3, img.height, img.width});
  auto d = t.data();
  for (size_t i = 0; i < img.data.size(); ++i) d[i] = (img.data[i] - kPixelMean) / kPixelStd;
  return t;
}

Tensor apply(const ConvUnit& u, const Tensor& x, int groups, bool activate) {
  Tensor y = conv2d(x, u.weight, u.bias, u.stride, u.pad);
  if (u.normalized()) y = group_norm(y, u.gamma, u.beta, groups);
  return activate ? relu(y) : y;
}

Tensor block_forward(const ResidualBlock& b, const Tensor& x, int groups) {
  Tensor y = apply(b.conv1, x, groups, true);
  if (b.bottleneck()) {
    y = apply(b.conv2, y, groups, true);
    y = apply(b.conv3, y, groups, false);
  } else {
    y = apply(b.conv2, y, groups, false);
  }
  return relu(add(y, b.projects() ? apply(b.shortcut, x, groups, false) : x));
}

using Pyramid = std::array<Tensor, 4>;

Pyramid backbone_fpn(const ModelGraph& model, const Image& img) {
  const ArchConfig& c = model.config();
  const Network& net = model.network();
  pyramid_shapes(c, img.height, img.width);  // divisibility contract
  Tensor x = apply(net.stem, image_tensor(img), c.gn_groups, true);
  x = max_pool(x, 3, 2, 1);
  std::array<Tensor, 4> stage_out;
  for (int s = 0; s < 4; ++s) {
    for (const ResidualBlock& b : net.stages[s]) x = block_forward(b, x, c.gn_groups);
    stage_out[s] = x;
  }
  Pyramid p;
  Tensor top = apply(net.fpn_lateral[3], stage_out[3], c.gn_groups, false);
  p[3] = apply(net.fpn_output[3], top, c.gn_groups, false);
  for (int s = 2; s >= 0; --s) {
    top = add(apply(net.fpn_lateral[s], stage_out[s], c.gn_groups, false), nearest_upsample(top, 2));
    p[s] = apply(net.fpn_output[s], top, c.gn_groups, false);
  }
  return p;
}

struct RpnLevel {
  Tensor objectness;  // [1, A, H, W]
  Tensor deltas;      // [1, 4A, H, W]
  std::vector<Box> anchors;
  int h = 0, w = 0;

  // anchor index (y*w + x)*A + a  ->  objectness offset a*h*w + y*w + x
  size_t logit_index(size_t anchor) const {
    const size_t a = anchor % 3, cell = anchor / 3;
    return a * static_cast<size_t>(h) * w + cell;
  }
  size_t delta_index(size_t anchor, int k) const {
    const size_t a = anchor % 3, cell = anchor / 3;
    return (a * 4 + static_cast<size_t>(k)) * static_cast<size_t>(h) * w + cell;
  }
};

std::array<RpnLevel, 4> rpn_forward(const ModelGraph& model, const Pyramid& p) {
  const Network& net = model.network();
  const ArchConfig& c = model.config();
  std::array<RpnLevel, 4> out;
  for (int l = 0; l < 4; ++l) {
    Tensor t = relu(conv2d(p[l], net.rpn_conv.weight, net.rpn_conv.bias, 1, 1));
    out[l].objectness = conv2d(t, net.rpn_objectness.weight, net.rpn_objectness.bias);
    out[l].deltas = conv2d(t, net.rpn_deltas.weight, net.rpn_deltas.bias);
    out[l].h = static_cast<int>(p[l].dim(2));
    out[l].w = static_cast<int>(p[l].dim(3));
    out[l].anchors = grid_anchors(out[l].h, out[l].w, 1 << (l + 2), c.anchor_sizes[l]);
  }
  return out;
}

std::vector<Box> generate_proposals(const ArchConfig& c, const std::array<RpnLevel, 4>& rpn,
                                    int img_h, int img_w) {
  std::vector<Box> boxes;
  std::vector<float> scores;
  for (const RpnLevel& lv : rpn) {
    const size_t n = lv.anchors.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const size_t k = std::min<size_t>(n, static_cast<size_t>(c.rpn_pre_nms_topk));
    const float* obj = lv.objectness.ptr();
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](size_t a, size_t b) {
                        const float sa = obj[lv.logit_index(a)], sb = obj[lv.logit_index(b)];
                        return sa > sb || (sa == sb && a < b);
                      });
    for (size_t i = 0; i < k; ++i) {
      const size_t a = order[i];
      float d[4];
      for (int q = 0; q < 4; ++q) d[q] = lv.deltas.ptr()[lv.delta_index(a, q)];
      Box b = clip_box(decode_deltas(lv.anchors[a], d, kRpnDeltaWeights), static_cast<float>(img_w),
                       static_cast<float>(img_h));
      if (b.width() < 1.0f || b.height() < 1.0f) continue;
      boxes.push_back(b);
      scores.push_back(obj[lv.logit_index(a)]);
    }
  }
  std::vector<int> keep = nms(boxes, scores, c.rpn_nms_threshold);
  if (keep.size() > static_cast<size_t>(c.rpn_post_nms_topk)) keep.resize(c.rpn_post_nms_topk);
  std::vector<Box> out;
  out.reserve(keep.size());
  for (int i : keep) out.push_back(boxes[i]);
  return out;
}

int assign_level(const ArchConfig& c, const Box& b) {
  const float size = std::sqrt(std::max(b.area(), 1e-6f));
  const int lvl = static_cast<int>(
      std::floor(static_cast<float>(c.roi_canonical_level) + std::log2(size / c.roi_canonical_size + 1e-8f)));
  return std::clamp(lvl, 2, 5) - 2;
}

Tensor crop_rois(const ArchConfig& c, const Pyramid& p, std::span<const Box> rois, int size) {
  static constexpr std::array<float, 4> kScales{1.0f / 4, 1.0f / 8, 1.0f / 16, 1.0f / 32};
  std::vector<RoiBox> rb;
  rb.reserve(rois.size());
  for (const Box& b : rois) rb.push_back({b.x1, b.y1, b.x2, b.y2, assign_level(c, b)});
  return roi_crop_resize(p, kScales, rb, size);
}

struct BoxHeadOut {
  Tensor logits;  // [R, K+1]
  Tensor deltas;  // [R, 4K]
};

BoxHeadOut box_head(const ModelGraph& model, const Pyramid& p, std::span<const Box> rois) {
  const ArchConfig& c = model.config();
  const Network& net = model.network();
  Tensor x = crop_rois(c, p, rois, c.roi_resolution);
  for (const ConvUnit& u : net.box_convs) x = apply(u, x, c.gn_groups, true);
  const int64_t r = x.dim(0);
  x = reshape(x, {r, x.numel() / std::max<int64_t>(r, 1)});
  for (const LinearUnit& fc : net.box_fcs) x = relu(linear(x, fc.weight, fc.bias));
  return {linear(x, net.cls_score.weight, net.cls_score.bias),
          linear(x, net.bbox_pred.weight, net.bbox_pred.bias)};
}

Tensor mask_head(const ModelGraph& model, const Pyramid& p, std::span<const Box> rois) {
  const ArchConfig& c = model.config();
  const Network& net = model.network();
  Tensor x = crop_rois(c, p, rois, c.mask_resolution / 2);
  for (const ConvUnit& u : net.mask_convs) x = apply(u, x, c.gn_groups, true);
  x = relu(conv_transpose2d(x, net.mask_deconv_weight, net.mask_deconv_bias, 2));
  return conv2d(x, net.mask_predictor.weight, net.mask_predictor.bias);
}

template <typename T>
void shuffle_prefix(std::vector<T>& v, size_t k, std::mt19937_64& rng) {
  for (size_t i = 0; i < std::min(k, v.size()); ++i) {
    const size_t j = i + rng() % (v.size() - i);
    std::swap(v[i], v[j]);
  }
}

struct ImageLosses {
  Tensor rpn_objectness, rpn_box, roi_class, roi_box, roi_mask;
};

Tensor zero_loss() { return Tensor::scalar(0.0f); }

ImageLosses image_losses(const ModelGraph& model, const Sample& sample, std::mt19937_64& rng) {
  const ArchConfig& c = model.config();
  const Image& img = sample.image;
  std::vector<Box> gt;
  for (const auto& ann : sample.instances) gt.push_back(ann.box());

  Pyramid p = backbone_fpn(model, img);
  auto rpn = rpn_forward(model, p);
  ImageLosses out;

  // ---- RPN anchor labels ------------------------------------------------
  struct AnchorRef {
    int level;
    size_t index;
  };
  std::vector<AnchorRef> refs;
  std::vector<Box> anchors;
  for (int l = 0; l < 4; ++l)
    for (size_t i = 0; i < rpn[l].anchors.size(); ++i) {
      refs.push_back({l, i});
      anchors.push_back(rpn[l].anchors[i]);
    }
  const size_t na = anchors.size();
  std::vector<int> label(na, 0);
  std::vector<int> matched(na, -1);
  if (!gt.empty()) {
    std::vector<float> best_for_gt(gt.size(), 0.0f);
    std::vector<float> iou(na * gt.size());
    for (size_t i = 0; i < na; ++i)
      for (size_t g = 0; g < gt.size(); ++g) {
        const float v = box_iou(anchors[i], gt[g]);
        iou[i * gt.size() + g] = v;
        best_for_gt[g] = std::max(best_for_gt[g], v);
      }
    for (size_t i = 0; i < na; ++i) {
      float best = 0.0f;
      for (size_t g = 0; g < gt.size(); ++g) {
        if (iou[i * gt.size() + g] > best) {
          best = iou[i * gt.size() + g];
          matched[i] = static_cast<int>(g);
        }
      }
      label[i] = best >= kRpnPositiveIou ? 1 : (best < kRpnNegativeIou ? 0 : -1);
      for (size_t g = 0; g < gt.size(); ++g) {
        if (best_for_gt[g] > 0.0f && iou[i * gt.size() + g] == best_for_gt[g]) {
          label[i] = 1;
          matched[i] = static_cast<int>(g);
        }
      }
    }
  }
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < na; ++i) {
    if (label[i] == 1) pos.push_back(i);
    else if (label[i] == 0) neg.push_back(i);
  }
  const size_t num_pos = std::min(pos.size(), static_cast<size_t>(c.rpn_batch_per_image / 2));
  shuffle_prefix(pos, num_pos, rng);
  const size_t num_neg = std::min(neg.size(), static_cast<size_t>(c.rpn_batch_per_image) - num_pos);
  shuffle_prefix(neg, num_neg, rng);
  const auto rpn_norm = static_cast<float>(std::max<size_t>(num_pos + num_neg, 1));

  std::array<std::vector<float>, 4> obj_t, obj_w, del_t, del_w;
  for (int l = 0; l < 4; ++l) {
    obj_t[l].assign(static_cast<size_t>(rpn[l].objectness.numel()), 0.0f);
    obj_w[l].assign(obj_t[l].size(), 0.0f);
    del_t[l].assign(static_cast<size_t>(rpn[l].deltas.numel()), 0.0f);
    del_w[l].assign(del_t[l].size(), 0.0f);
  }
  for (size_t k = 0; k < num_pos; ++k) {
    const AnchorRef& r = refs[pos[k]];
    const RpnLevel& lv = rpn[r.level];
    obj_t[r.level][lv.logit_index(r.index)] = 1.0f;
    obj_w[r.level][lv.logit_index(r.index)] = 1.0f;
    const auto d = encode_deltas(lv.anchors[r.index], gt[matched[pos[k]]], kRpnDeltaWeights);
    for (int q = 0; q < 4; ++q) {
      del_t[r.level][lv.delta_index(r.index, q)] = d[q];
      del_w[r.level][lv.delta_index(r.index, q)] = 1.0f;
    }
  }
  for (size_t k = 0; k < num_neg; ++k) {
    const AnchorRef& r = refs[neg[k]];
    obj_w[r.level][rpn[r.level].logit_index(r.index)] = 1.0f;
  }
  for (int l = 0; l < 4; ++l) {
    Tensor lo = binary_cross_entropy(rpn[l].objectness, obj_t[l], obj_w[l], rpn_norm);
    Tensor lb = smooth_l1(rpn[l].deltas, del_t[l], del_w[l], kRpnBeta, rpn_norm);
    out.rpn_objectness = l == 0 ? lo : add(out.rpn_objectness, lo);
    out.rpn_box = l == 0 ? lb : add(out.rpn_box, lb);
  }

  // ---- ROI sampling -------------------------------------------------------
  std::vector<Box> proposals = generate_proposals(c, rpn, img.height, img.width);
  proposals.insert(proposals.end(), gt.begin(), gt.end());
  std::vector<size_t> fg, bg;
  std::vector<int> roi_match(proposals.size(), -1);
  for (size_t i = 0; i < proposals.size(); ++i) {
    float best = 0.0f;
    for (size_t g = 0; g < gt.size(); ++g) {
      const float v = box_iou(proposals[i], gt[g]);
      if (v > best) {
        best = v;
        roi_match[i] = static_cast<int>(g);
      }
    }
    (best >= kRoiForegroundIou ? fg : bg).push_back(i);
  }
  const size_t num_fg = std::min(
      fg.size(), static_cast<size_t>(std::lround(c.roi_batch_per_image * c.roi_positive_fraction)));
  shuffle_prefix(fg, num_fg, rng);
  const size_t num_bg = std::min(bg.size(), static_cast<size_t>(c.roi_batch_per_image) - num_fg);
  shuffle_prefix(bg, num_bg, rng);

  std::vector<Box> rois;
  std::vector<int> labels;
  std::vector<int> gt_of_roi;
  for (size_t k = 0; k < num_fg; ++k) {
    rois.push_back(proposals[fg[k]]);
    gt_of_roi.push_back(roi_match[fg[k]]);
    labels.push_back(sample.instances[roi_match[fg[k]]].category_id);
  }
  for (size_t k = 0; k < num_bg; ++k) {
    rois.push_back(proposals[bg[k]]);
    gt_of_roi.push_back(-1);
    labels.push_back(0);
  }
  if (rois.empty()) {
    out.roi_class = out.roi_box = out.roi_mask = zero_loss();
    return out;
  }

  BoxHeadOut head = box_head(model, p, rois);
  out.roi_class = cross_entropy(head.logits, labels);
  const int k_cls = c.num_classes;
  std::vector<float> bt(rois.size() * 4 * k_cls, 0.0f), bw(bt.size(), 0.0f);
  for (size_t i = 0; i < num_fg; ++i) {
    const auto d = encode_deltas(rois[i], gt[gt_of_roi[i]], kRoiDeltaWeights);
    const size_t base = i * 4 * k_cls + static_cast<size_t>(labels[i] - 1) * 4;
    for (int q = 0; q < 4; ++q) {
      bt[base + q] = d[q];
      bw[base + q] = 1.0f;
    }
  }
  out.roi_box = smooth_l1(head.deltas, bt, bw, kRoiBeta, static_cast<float>(rois.size()));

  if (num_fg == 0) {
    out.roi_mask = zero_loss();
    return out;
  }
  std::span<const Box> fg_rois(rois.data(), num_fg);
  Tensor mask_logits = mask_head(model, p, fg_rois);
  const int m = c.mask_resolution;
  std::vector<float> mt(static_cast<size_t>(mask_logits.numel()), 0.0f), mw(mt.size(), 0.0f);
  for (size_t i = 0; i < num_fg; ++i) {
    const Box& b = rois[i];
    const auto& ann = sample.instances[gt_of_roi[i]];
    const double sx = m / std::max(1e-6, static_cast<double>(b.width()));
    const double sy = m / std::max(1e-6, static_cast<double>(b.height()));
    std::vector<Polygon> local;
    for (const Polygon& poly : ann.segmentation) {
      Polygon q;
      for (const Point& pt : poly) q.push_back({(pt.x - b.x1) * sx, (pt.y - b.y1) * sy});
      local.push_back(std::move(q));
    }
    const Mask target = rasterize_all(local, m, m);
    const size_t base = (i * k_cls + static_cast<size_t>(labels[i] - 1)) * m * m;
    for (size_t q = 0; q < static_cast<size_t>(m) * m; ++q) {
      mt[base + q] = target.bits[q] ? 1.0f : 0.0f;
      mw[base + q] = 1.0f;
    }
  }
  out.roi_mask = binary_cross_entropy(mask_logits, mt, mw, static_cast<float>(num_fg * m * m));
  return out;
}

}  // namespace

ModelGraph::ModelGraph(const ArchConfig& config, uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  net_ = build_network(config_, [&](const ParamSpec& spec) {
    layout_.push_back(spec);
    Tensor t = init_tensor(spec, rng);
    params_.push_back(Parameter{spec.path, spec.group, t, true});
    return t;
  });
}

ModelGraph ModelGraph::clone() const {
  ModelGraph copy(config_, 0);
  for (size_t i = 0; i < params_.size(); ++i) {
    std::copy(params_[i].tensor.data().begin(), params_[i].tensor.data().end(),
              copy.params_[i].tensor.data().begin());
    copy.params_[i].set_trainable(params_[i].trainable);
  }
  return copy;
}

int64_t ModelGraph::parameter_count() const {
  int64_t n = 0;
  for (const Parameter& p : params_) n += p.tensor.numel();
  return n;
}

ModelGraph build_model(const ArchConfig& config, uint64_t seed) { return ModelGraph(config, seed); }

LossBundle forward_train(const ModelGraph& model, std::span<const Sample> batch,
                         std::mt19937_64& rng) {
  if (batch.empty()) throw std::invalid_argument("forward_train: empty batch");
  LossBundle total;
  for (size_t i = 0; i < batch.size(); ++i) {
    ImageLosses l = image_losses(model, batch[i], rng);
    if (i == 0) {
      total.rpn_objectness = l.rpn_objectness;
      total.rpn_box = l.rpn_box;
      total.roi_class = l.roi_class;
      total.roi_box = l.roi_box;
      total.roi_mask = l.roi_mask;
    } else {
      total.rpn_objectness = add(total.rpn_objectness, l.rpn_objectness);
      total.rpn_box = add(total.rpn_box, l.rpn_box);
      total.roi_class = add(total.roi_class, l.roi_class);
      total.roi_box = add(total.roi_box, l.roi_box);
      total.roi_mask = add(total.roi_mask, l.roi_mask);
    }
  }
  const float inv = 1.0f / static_cast<float>(batch.size());
  total.rpn_objectness = scale(total.rpn_objectness, inv);
  total.rpn_box = scale(total.rpn_box, inv);
  total.roi_class = scale(total.roi_class, inv);
  total.roi_box = scale(total.roi_box, inv);
  total.roi_mask = scale(total.roi_mask, inv);
  total.total = add(add(add(add(total.rpn_objectness, total.rpn_box), total.roi_class), total.roi_box),
                    total.roi_mask);
  return total;
}

Mask Detection::grid() const {
  Mask g(mask_size, mask_size);
  for (size_t i = 0; i < mask.size(); ++i) g.bits[i] = mask[i] >= 0.5f;
  return g;
}

Mask Detection::paste(int height, int width) const {
  Mask out(height, width);
  const float bw = box.width(), bh = box.height();
  if (bw <= 0 || bh <= 0 || mask_size == 0) return out;
  const int m = mask_size;
  auto at = [&](int y, int x) {
    y = std::clamp(y, 0, m - 1);
    x = std::clamp(x, 0, m - 1);
    return mask[static_cast<size_t>(y) * m + x];
  };
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y1))),
            y1 = std::min(height - 1, static_cast<int>(std::ceil(box.y2)));
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x1))),
            x1 = std::min(width - 1, static_cast<int>(std::ceil(box.x2)));
  for (int y = y0; y <= y1; ++y) {
    const float cy = static_cast<float>(y) + 0.5f;
    if (cy < box.y1 || cy > box.y2) continue;
    const float v = (cy - box.y1) / bh * static_cast<float>(m) - 0.5f;
    for (int x = x0; x <= x1; ++x) {
      const float cx = static_cast<float>(x) + 0.5f;
      if (cx < box.x1 || cx > box.x2) continue;
      const float u = (cx - box.x1) / bw * static_cast<float>(m) - 0.5f;
      const int iu = static_cast<int>(std::floor(u)), iv = static_cast<int>(std::floor(v));
      const float fu = u - static_cast<float>(iu), fv = v - static_cast<float>(iv);
      const float val = (1 - fv) * ((1 - fu) * at(iv, iu) + fu * at(iv, iu + 1)) +
                        fv * ((1 - fu) * at(iv + 1, iu) + fu * at(iv + 1, iu + 1));
      out.at(y, x) = val >= 0.5f;
    }
  }
  return out;
}

std::vector<Detection> forward_infer(const ModelGraph& model, const Image& image,
                                     float score_floor) {
  NoGradGuard no_grad;
  const ArchConfig& c = model.config();
  Pyramid p = backbone_fpn(model, image);
  auto rpn = rpn_forward(model, p);
  std::vector<Box> proposals = generate_proposals(c, rpn, image.height, image.width);
  if (proposals.empty()) return {};

  BoxHeadOut head = box_head(model, p, proposals);
  Tensor probs = softmax(head.logits);
  const int k_cls = c.num_classes;
  std::vector<Detection> dets;
  for (int cls = 1; cls <= k_cls; ++cls) {
    std::vector<Box> boxes;
    std::vector<float> scores;
    for (size_t i = 0; i < proposals.size(); ++i) {
      const float s = probs.ptr()[i * (k_cls + 1) + cls];
      if (s < score_floor) continue;
      const float* d = head.deltas.ptr() + i * 4 * k_cls + (cls - 1) * 4;
      Box b = clip_box(decode_deltas(proposals[i], std::span<const float>(d, 4), kRoiDeltaWeights),
                       static_cast<float>(image.width), static_cast<float>(image.height));
      if (b.width() <= 0 || b.height() <= 0) continue;
      boxes.push_back(b);
      scores.push_back(s);
    }
    for (int i : nms(boxes, scores, c.detection_nms_threshold)) {
      Detection d;
      d.box = boxes[i];
      d.score = scores[i];
      d.class_id = cls;
      dets.push_back(std::move(d));
    }
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (dets.size() > static_cast<size_t>(c.detections_per_image)) dets.resize(c.detections_per_image);
  if (dets.empty()) return dets;

  std::vector<Box> boxes;
  for (const Detection& d : dets) boxes.push_back(d.box);
  Tensor logits = mask_head(model, p, boxes);
  const int m = c.mask_resolution;
  for (size_t i = 0; i < dets.size(); ++i) {
    dets[i].mask_size = m;
    dets[i].mask.resize(static_cast<size_t>(m) * m);
    const float* src = logits.ptr() + (i * k_cls + static_cast<size_t>(dets[i].class_id - 1)) * m * m;
    for (size_t q = 0; q < dets[i].mask.size(); ++q) dets[i].mask[q] = 1.0f / (1.0f + std::exp(-src[q]));
  }
  return dets;
}

}  // namespace scalpel
