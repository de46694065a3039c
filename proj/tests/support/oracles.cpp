#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "scalpel/checkpoint.hpp"
#include "scalpel/ops.hpp"
#include "scalpel/optim.hpp"

namespace scalpel::oracle {
namespace {

std::vector<float> normals(std::mt19937_64& rng, size_t n, float sd = 1.0f) {
  std::normal_distribution<float> d(0.0f, sd);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

Tensor var(Shape s, std::mt19937_64& rng, float sd = 1.0f) {
  const auto n = static_cast<size_t>(shape_numel(s));
  return Tensor::from(std::move(s), normals(rng, n, sd), true);
}

Tensor constant(Shape s, std::vector<float> v) { return Tensor::from(std::move(s), std::move(v), false); }

// Values bounded away from zero: kinks of relu and |x| stay out of reach of
// the finite-difference step.
std::vector<float> away_from_zero(std::mt19937_64& rng, size_t n, float lo, float hi) {
  std::uniform_real_distribution<float> mag(lo, hi);
  std::bernoulli_distribution sign(0.5);
  std::vector<float> v(n);
  for (float& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return v;
}

std::vector<GradCase> build_cases() {
  std::vector<GradCase> c;
  c.push_back({"conv2d",
               [](auto& r) { return std::vector{var({2, 3, 5, 5}, r), var({4, 3, 3, 3}, r, 0.3f), var({4}, r)}; },
               [](const auto& in) { return conv2d(in[0], in[1], in[2], 1, 1); }});
  c.push_back({"conv2d_strided",
               [](auto& r) { return std::vector{var({1, 2, 6, 6}, r), var({3, 2, 3, 3}, r, 0.3f)}; },
               [](const auto& in) { return conv2d(in[0], in[1], Tensor(), 2, 1); }});
  c.push_back({"conv_transpose2d",
               [](auto& r) { return std::vector{var({2, 3, 3, 3}, r), var({3, 2, 2, 2}, r, 0.5f), var({2}, r)}; },
               [](const auto& in) { return conv_transpose2d(in[0], in[1], in[2], 2); }});
  c.push_back({"group_norm",
               [](auto& r) { return std::vector{var({2, 4, 3, 3}, r), var({4}, r), var({4}, r)}; },
               [](const auto& in) { return group_norm(in[0], in[1], in[2], 2); }});
  c.push_back({"relu",
               [](auto& r) { return std::vector{Tensor::from({3, 4}, away_from_zero(r, 12, 0.05f, 2.0f), true)}; },
               [](const auto& in) { return relu(in[0]); }});
  c.push_back({"linear",
               [](auto& r) { return std::vector{var({3, 5}, r), var({4, 5}, r), var({4}, r)}; },
               [](const auto& in) { return linear(in[0], in[1], in[2]); }});
  c.push_back({"max_pool",
               [](auto& r) {
                 // Distinct values 0.1 apart keep every window's argmax stable.
                 std::vector<float> v(50);
                 for (size_t i = 0; i < v.size(); ++i) v[i] = 0.1f * static_cast<float>(i) - 2.5f;
                 std::shuffle(v.begin(), v.end(), r);
                 return std::vector{Tensor::from({1, 2, 5, 5}, v, true)};
               },
               [](const auto& in) { return max_pool(in[0], 3, 2, 1); }});
  c.push_back({"nearest_upsample", [](auto& r) { return std::vector{var({1, 2, 3, 3}, r)}; },
               [](const auto& in) { return nearest_upsample(in[0], 2); }});
  c.push_back({"add", [](auto& r) { return std::vector{var({2, 3}, r), var({2, 3}, r)}; },
               [](const auto& in) { return add(in[0], in[1]); }});
  c.push_back({"sigmoid", [](auto& r) { return std::vector{var({3, 4}, r, 2.0f)}; },
               [](const auto& in) { return sigmoid(in[0]); }});
  c.push_back({"softmax", [](auto& r) { return std::vector{var({3, 4}, r, 2.0f)}; },
               [](const auto& in) { return softmax(in[0]); }});
  c.push_back({"cross_entropy",
               [](auto& r) {
                 std::uniform_int_distribution<int> lab(0, 2);
                 std::vector<float> labels(4);
                 for (float& l : labels) l = static_cast<float>(lab(r));
                 return std::vector{var({4, 3}, r, 2.0f), constant({4}, labels)};
               },
               [](const auto& in) {
                 std::vector<int> labels;
                 for (float l : in[1].data()) labels.push_back(static_cast<int>(l));
                 return cross_entropy(in[0], labels);
               }});
  auto smooth = [](float beta) {
    return GradCase{beta > 0 ? "smooth_l1" : "smooth_l1_beta0",
                    [beta](auto& r) {
                      // |pred - target| avoids both 0 and beta.
                      std::vector<float> target = normals(r, 6);
                      std::vector<float> d = beta > 0 ? away_from_zero(r, 6, 0.1f, 0.8f) : away_from_zero(r, 6, 0.1f, 2.0f);
                      std::bernoulli_distribution wide(0.5);
                      std::vector<float> pred(6);
                      for (size_t i = 0; i < 6; ++i) {
                        if (beta > 0 && wide(r)) d[i] += d[i] > 0 ? 1.2f * beta : -1.2f * beta;
                        pred[i] = target[i] + d[i];
                      }
                      std::uniform_real_distribution<float> w(0.0f, 2.0f);
                      std::vector<float> weight(6);
                      for (float& x : weight) x = w(r);
                      return std::vector{Tensor::from({6}, pred, true), constant({6}, target), constant({6}, weight)};
                    },
                    [beta](const auto& in) {
                      std::vector<float> t(in[1].data().begin(), in[1].data().end());
                      std::vector<float> w(in[2].data().begin(), in[2].data().end());
                      return smooth_l1(in[0], t, w, beta, 3.0f);
                    }};
  };
  c.push_back(smooth(1.0f));
  c.push_back(smooth(0.0f));
  c.push_back({"binary_cross_entropy",
               [](auto& r) {
                 std::uniform_real_distribution<float> u(0.0f, 1.0f);
                 std::vector<float> t(6), w(6);
                 for (float& x : t) x = u(r) < 0.5f ? 0.0f : 1.0f;
                 for (float& x : w) x = 2.0f * u(r);
                 return std::vector{var({6}, r, 2.0f), constant({6}, t), constant({6}, w)};
               },
               [](const auto& in) {
                 std::vector<float> t(in[1].data().begin(), in[1].data().end());
                 std::vector<float> w(in[2].data().begin(), in[2].data().end());
                 return binary_cross_entropy(in[0], t, w, 4.0f);
               }});
  c.push_back({"roi_crop_resize",
               [](auto& r) {
                 std::uniform_real_distribution<float> u(0.0f, 12.0f);
                 std::vector<float> boxes;
                 for (int k = 0; k < 3; ++k) {
                   float x1 = u(r), x2 = u(r), y1 = u(r), y2 = u(r);
                   if (x1 > x2) std::swap(x1, x2);
                   if (y1 > y2) std::swap(y1, y2);
                   boxes.insert(boxes.end(), {x1, y1, x2 + 0.5f, y2 + 0.5f, static_cast<float>(k % 2)});
                 }
                 return std::vector{var({1, 2, 6, 6}, r), var({1, 2, 3, 3}, r), constant({3, 5}, boxes)};
               },
               [](const auto& in) {
                 std::vector<RoiBox> rois;
                 const auto b = in[2].data();
                 for (size_t k = 0; k < 3; ++k)
                   rois.push_back({b[5 * k], b[5 * k + 1], b[5 * k + 2], b[5 * k + 3], static_cast<int>(b[5 * k + 4])});
                 const std::vector<Tensor> feats{in[0], in[1]};
                 const std::vector<float> scales{0.5f, 0.25f};
                 return roi_crop_resize(feats, scales, rois, 3);
               }});
  c.push_back({"reshape", [](auto& r) { return std::vector{var({2, 6}, r)}; },
               [](const auto& in) { return reshape(in[0], {3, 4}); }});
  c.push_back({"scale", [](auto& r) { return std::vector{var({5}, r)}; },
               [](const auto& in) { return scale(in[0], 1.7f); }});
  c.push_back({"sum", [](auto& r) { return std::vector{var({2, 3}, r)}; },
               [](const auto& in) { return sum(in[0]); }});
  return c;
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
  static const std::vector<GradCase> cases = build_cases();
  return cases;
}

double gradient_error(const GradCase& c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tensor> in = c.make(rng);
  Tensor y = c.apply(in);
  const int64_t n = y.numel();
  const std::vector<float> proj = normals(rng, static_cast<size_t>(n));
  Tensor loss = sum(linear(reshape(y, {1, n}), constant({1, n}, proj), Tensor()));
  backward(loss);

  auto projected = [&] {
    NoGradGuard ng;
    const Tensor out = c.apply(in);
    double s = 0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(proj[i]) * out.data()[i];
    return s;
  };
  const double h = 1e-2;
  double worst = 0;
  for (Tensor& t : in) {
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(analytic.size());
    for (size_t i = 0; i < numeric.size(); ++i) {
      const float keep = t.data()[i];
      t.data()[i] = keep + static_cast<float>(h);
      const double up = projected();
      t.data()[i] = keep - static_cast<float>(h);
      const double down = projected();
      t.data()[i] = keep;
      numeric[i] = (up - down) / (2 * h);
    }
    double diff = 0, na = 0, nn = 0;
    for (size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-6));
  }
  return worst;
}

double reference_iou(const Mask& a, const Mask& b) {
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] && b.bits[i];
    uni += a.bits[i] || b.bits[i];
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

ReferenceMatch reference_match(std::span<const float> scores, std::span<const Mask> preds,
                               std::span<const Mask> gts, double iou_t, double score_floor) {
  ReferenceMatch m;
  m.assignment.assign(preds.size(), -1);
  std::vector<bool> visited(preds.size(), false), taken(gts.size(), false);
  for (;;) {
    // Next prediction: highest score among unvisited ones above the floor.
    int next = -1;
    for (size_t p = 0; p < preds.size(); ++p) {
      if (visited[p] || !(scores[p] > score_floor)) continue;
      if (next < 0 || scores[p] > scores[next]) next = static_cast<int>(p);
    }
    if (next < 0) break;
    visited[next] = true;
    int best = -1;
    double best_iou = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = reference_iou(preds[next], gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_t) {
      taken[best] = true;
      m.assignment[next] = best;
      ++m.tp;
    } else {
      ++m.fp;
    }
  }
  m.fn = static_cast<int>(std::count(taken.begin(), taken.end(), false));
  return m;
}

double reference_ap(std::span<const ImageEval> images, double iou_t, double score_floor) {
  struct Hit {
    float score;
    bool tp;
  };
  std::vector<Hit> hits;
  int gt_total = 0;
  for (const ImageEval& im : images) {
    gt_total += static_cast<int>(im.ground_truth.size());
    const ReferenceMatch m = reference_match(im.scores, im.predictions, im.ground_truth, iou_t, score_floor);
    for (size_t p = 0; p < im.scores.size(); ++p)
      if (im.scores[p] > score_floor) hits.push_back({im.scores[p], m.assignment[p] >= 0});
  }
  if (gt_total == 0 || hits.empty()) return 0.0;
  // Within one score, image order then index order: the push order above.
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.score > b.score; });
  std::vector<double> precision, recall;
  int tp = 0;
  for (size_t k = 0; k < hits.size(); ++k) {
    tp += hits[k].tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / gt_total);
  }
  double ap = 0, prev_recall = 0;
  for (size_t k = 0; k < hits.size(); ++k) {
    const double envelope = *std::max_element(precision.begin() + static_cast<long>(k), precision.end());
    ap += (recall[k] - prev_recall) * envelope;
    prev_recall = recall[k];
  }
  return ap;
}

std::vector<ImageEval> random_eval_case(std::mt19937_64& rng, int max_items, int max_images) {
  static constexpr int kSide = 12;
  auto rect = [](int x0, int y0, int w, int h) {
    Mask m(kSide, kSide);
    for (int y = std::max(0, y0); y < std::min(kSide, y0 + h); ++y)
      for (int x = std::max(0, x0); x < std::min(kSide, x0 + w); ++x) m.at(y, x) = 1;
    return m;
  };
  std::uniform_int_distribution<int> images_d(1, max_images), items(0, max_items), pos(0, kSide - 3), size(2, 6),
      jitter(-2, 2), grow(-1, 1);
  static constexpr float kScores[] = {0.85f, 0.9f, 0.91f, 0.95f, 0.95f, 0.99f, 1.0f};
  std::uniform_int_distribution<int> score(0, static_cast<int>(std::size(kScores)) - 1);
  std::bernoulli_distribution near(0.7);
  std::vector<ImageEval> out(static_cast<size_t>(images_d(rng)));
  for (ImageEval& im : out) {
    std::vector<std::array<int, 4>> rects;
    const int g = items(rng), p = items(rng);
    for (int k = 0; k < g; ++k) {
      rects.push_back({pos(rng), pos(rng), size(rng), size(rng)});
      const auto& r = rects.back();
      im.ground_truth.push_back(rect(r[0], r[1], r[2], r[3]));
    }
    for (int k = 0; k < p; ++k) {
      Mask m;
      if (!rects.empty() && near(rng)) {
        const auto& r = rects[static_cast<size_t>(rng() % rects.size())];
        m = rect(r[0] + jitter(rng), r[1] + jitter(rng), std::max(1, r[2] + grow(rng)), std::max(1, r[3] + grow(rng)));
      } else {
        m = rect(pos(rng), pos(rng), size(rng), size(rng));
      }
      im.predictions.push_back(std::move(m));
      im.scores.push_back(kScores[score(rng)]);
    }
  }
  return out;
}

Mask reference_rasterize(const Polygon& poly, int height, int width) {
  Mask m(height, width);
  const size_t n = poly.size();
  if (n < 3) return m;
  // Every vertex on one line: nothing enclosed, nothing drawn.
  bool flat = true;
  for (size_t i = 0; i < n && flat; ++i)
    for (size_t j = 0; j < n && flat; ++j) {
      const Point& a = poly[0];
      const double cross = (poly[i].x - a.x) * (poly[j].y - a.y) - (poly[i].y - a.y) * (poly[j].x - a.x);
      flat = cross == 0;
    }
  if (flat) return m;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool on_edge = false, inside = false;
      for (size_t i = 0; i < n; ++i) {
        const Point& a = poly[i];
        const Point& b = poly[(i + 1) % n];
        const double cross = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
        if (cross == 0 && px >= std::min(a.x, b.x) && px <= std::max(a.x, b.x) && py >= std::min(a.y, b.y) &&
            py <= std::max(a.y, b.y)) {
          on_edge = true;
        }
        if ((a.y > py) != (b.y > py)) {
          // px < crossing x, without division: sign of the cross product
          // relative to the edge's vertical direction.
          const bool left = b.y > a.y ? cross > 0 : cross < 0;
          if (left) inside = !inside;
        }
      }
      m.at(y, x) = (on_edge || inside) ? 1 : 0;
    }
  }
  return m;
}

Polygon random_grid_polygon(std::mt19937_64& rng, int extent) {
  std::uniform_int_distribution<int> count(3, 8), coord(-4, 4 * extent + 4);
  std::bernoulli_distribution snap(0.4);
  Polygon p(static_cast<size_t>(count(rng)));
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = {coord(rng) / 4.0, coord(rng) / 4.0};
    // Repeat a coordinate of the previous vertex now and then, so horizontal
    // and vertical edges (often through pixel centres) are common.
    if (i > 0 && snap(rng)) (rng() % 2 ? p[i].x : p[i].y) = (rng() % 2 ? p[i - 1].x : p[i - 1].y);
  }
  return p;
}

const std::vector<StopCase>& early_stop_cases() {
  static const std::vector<StopCase> cases = {
      {{}, 1, false},
      {{1.0}, 1, false},
      {{1.0, 1.0}, 1, true},  // a tie is not an improvement
      {{1.0, 0.9, 0.8}, 1, false},
      {{1.0, 0.9, 0.8}, 3, false},
      {{5, 4, 3, 3, 3}, 3, false},
      {{5, 4, 3, 3, 3, 3}, 3, true},
      {{1.0, 0.9, 0.95, 0.95, 0.95}, 3, true},
      {{1.0, 0.9, 0.95, 0.95}, 3, false},
      {{2, 1, 2, 0.5, 1, 1}, 2, true},
      {{2, 1, 2, 0.5, 1, 1}, 3, false},
      {{3, 2, 1, 0.9, 0.8, 0.7, 0.6}, 1, false},
      {{1, 2, 3}, 2, true},
      {{1, 2}, 2, false},
      {{1, 0.5, 0.5, 0.4, 0.4, 0.4}, 2, true},
      {{1, 0.5, 0.5, 0.4, 0.4, 0.4}, 3, false},
      {{1, 0.5, 0.6, 0.7, 0.4, 0.45}, 3, false},
  };
  return cases;
}

FreezeOutcome freeze_run(const ModelGraph& base, const Dataset& data, const AblationSpec& spec, int steps,
                         uint64_t seed) {
  ModelGraph model = base.clone();
  apply_surgery(model, spec);
  const Checkpoint start = snapshot(model.parameters());
  std::mt19937_64 rng(seed);
  const size_t n = data.samples.size();
  for (int step = 0; step < steps; ++step) {
    const Sample batch[2] = {data.samples[(2 * step) % n], data.samples[(2 * step + 1) % n]};
    LossBundle loss = forward_train(model, batch, rng);
    backward(loss.total);
    sgd_step(model.parameters(), 0.01f);
  }
  const Checkpoint end = snapshot(model.parameters());
  FreezeOutcome out;
  out.ablation = spec.name();
  out.ledger = ledger(model, spec);
  out.changed = count_changed(start, end);
  const auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].trainable) continue;
    // Bitwise comparison: NaN-safe and stricter than operator== on floats.
    const auto& a = start[i].values;
    const auto& b = end[i].values;
    if (a.size() != b.size() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) != 0) {
      if (out.frozen_intact) out.first_violation = params[i].path;
      out.frozen_intact = false;
    }
  }
  return out;
}

FidelityStats annotation_fidelity(const SceneStyle& style, int scenes, uint64_t seed) {
  FidelityStats st;
  double total = 0;
  for (int s = 0; s < scenes; ++s) {
    const Scene scene = render_scene(style, seed + static_cast<uint64_t>(s), s);
    const Sample& smp = scene.sample;
    for (size_t k = 0; k < smp.instances.size(); ++k) {
      const double v = reference_iou(smp.instances[k].mask(smp.image.height, smp.image.width), scene.silhouettes[k]);
      st.min_iou = std::min(st.min_iou, v);
      total += v;
      ++st.objects;
    }
  }
  st.mean_iou = st.objects ? total / st.objects : 0.0;
  return st;
}

}  // namespace scalpel::oracle
