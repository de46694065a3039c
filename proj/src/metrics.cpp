#include "scalpel/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <tuple>

namespace scalpel {

double mask_iou(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("mask_iou: size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.bits.size(); ++i) {
    const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double f1_score(double p, double r) { return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0; }

namespace {

std::vector<int> gated_order(std::span<const float> scores, double floor) {
  std::vector<int> order;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > floor) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::vector<double>> iou_table(std::span<const Mask> preds, std::span<const Mask> gts) {
  std::vector<std::vector<double>> t(preds.size(), std::vector<double>(gts.size()));
  for (size_t i = 0; i < preds.size(); ++i)
    for (size_t j = 0; j < gts.size(); ++j) t[i][j] = mask_iou(preds[i], gts[j]);
  return t;
}

}  // namespace

MatchResult match_iou_table(std::span<const float> scores, const std::vector<std::vector<double>>& iou,
                            size_t gt_count, double iou_t, double score_floor) {
  MatchResult r;
  r.assignment.assign(scores.size(), -1);
  r.kept = gated_order(scores, score_floor);
  std::vector<char> taken(gt_count, 0);
  for (int p : r.kept) {
    int best = -1;
    for (size_t g = 0; g < gt_count; ++g) {
      if (taken[g] || iou[p][g] < iou_t) continue;
      if (best < 0 || iou[p][g] > iou[p][best]) best = static_cast<int>(g);
    }
    if (best >= 0) {
      taken[best] = 1;
      r.assignment[p] = best;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<int>(gt_count) - r.tp;
  return r;
}

MatchResult match_instances(std::span<const float> scores, std::span<const Mask> predictions,
                            std::span<const Mask> ground_truth, double iou_t, double score_floor) {
  if (scores.size() != predictions.size())
    throw std::invalid_argument("match_instances: scores and predictions differ in length");
  return match_iou_table(scores, iou_table(predictions, ground_truth), ground_truth.size(), iou_t,
                         score_floor);
}

namespace {

struct Prepared {
  std::vector<std::vector<std::vector<double>>> iou;  // per image
  size_t gt_total = 0;
};

Prepared prepare(std::span<const ImageEval> images) {
  Prepared p;
  for (const ImageEval& im : images) {
    if (im.scores.size() != im.predictions.size())
      throw std::invalid_argument("evaluate: scores and predictions differ in length");
    p.iou.push_back(iou_table(im.predictions, im.ground_truth));
    p.gt_total += im.ground_truth.size();
  }
  return p;
}

std::vector<PrPoint> curve(std::span<const ImageEval> images, const Prepared& prep, double iou_t,
                           double floor) {
  struct Hit {
    float score;
    size_t image;
    int index;
    bool tp;
  };
  std::vector<Hit> hits;
  for (size_t i = 0; i < images.size(); ++i) {
    const MatchResult m =
        match_iou_table(images[i].scores, prep.iou[i], images[i].ground_truth.size(), iou_t, floor);
    for (int p : m.kept) hits.push_back({images[i].scores[p], i, p, m.assignment[p] >= 0});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.image, a.index) < std::tie(b.image, b.index);
  });
  std::vector<PrPoint> pts;
  int tp = 0;
  for (size_t k = 0; k < hits.size(); ++k) {
    tp += hits[k].tp;
    pts.push_back({prep.gt_total ? static_cast<double>(tp) / static_cast<double>(prep.gt_total) : 0.0,
                   static_cast<double>(tp) / static_cast<double>(k + 1)});
  }
  return pts;
}

double area(const std::vector<PrPoint>& pts) {
  double ap = 0, prev_recall = 0;
  // Interpolated precision: the best precision at this recall or beyond.
  std::vector<double> best(pts.size());
  double run = 0;
  for (size_t k = pts.size(); k-- > 0;) best[k] = run = std::max(run, pts[k].precision);
  for (size_t k = 0; k < pts.size(); ++k) {
    ap += (pts[k].recall - prev_recall) * best[k];
    prev_recall = pts[k].recall;
  }
  return ap;
}

}  // namespace

std::vector<PrPoint> pr_curve(std::span<const ImageEval> images, double iou_t, double score_floor) {
  return curve(images, prepare(images), iou_t, score_floor);
}

double average_precision(std::span<const ImageEval> images, double iou_t, double score_floor) {
  const Prepared prep = prepare(images);
  if (prep.gt_total == 0) return 0.0;
  return area(curve(images, prep, iou_t, score_floor));
}

std::vector<double> threshold_grid(double step) {
  int n;
  if (std::abs(step - 0.05) < 1e-12) n = 13;
  else if (std::abs(step - 0.1) < 1e-12) n = 7;
  else throw std::invalid_argument("IoU step must be 0.05 or 0.1");
  const int stride = step < 0.075 ? 5 : 10;
  std::vector<double> grid;
  for (int k = 0; k < n; ++k) grid.push_back(static_cast<double>(30 + stride * k) / 100.0);
  return grid;
}

MetricsReport evaluate(std::span<const ImageEval> images, std::span<const double> thresholds,
                       double score_floor) {
  if (thresholds.empty()) throw std::invalid_argument("evaluate: empty threshold list");
  const Prepared prep = prepare(images);
  MetricsReport rep;
  bool any = false;
  for (const ImageEval& im : images)
    for (float s : im.scores) any = any || s > score_floor;
  rep.no_predictions = !any;
  for (double t : thresholds) {
    ThresholdMetrics m;
    m.iou_t = t;
    for (size_t i = 0; i < images.size(); ++i) {
      const MatchResult r =
          match_iou_table(images[i].scores, prep.iou[i], images[i].ground_truth.size(), t, score_floor);
      m.tp += r.tp;
      m.fp += r.fp;
      m.fn += r.fn;
    }
    m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    m.f1 = f1_score(m.precision, m.recall);
    m.ap = prep.gt_total ? area(curve(images, prep, t, score_floor)) : 0.0;
    rep.per_threshold.push_back(m);
  }
  const double n = static_cast<double>(thresholds.size());
  for (const ThresholdMetrics& m : rep.per_threshold) {
    rep.ap_sweep += m.ap / n;
    rep.precision_sweep += m.precision / n;
    rep.recall_sweep += m.recall / n;
  }
  rep.f1_sweep = f1_score(rep.precision_sweep, rep.recall_sweep);
  if (prep.gt_total) rep.curve = curve(images, prep, kCurveIou, score_floor);
  return rep;
}

MetricsReport evaluate(std::span<const ImageEval> images, double score_floor) {
  const auto grid = threshold_grid();
  return evaluate(images, grid, score_floor);
}

void write_report_header(std::ostream& os) { os << "testset,ablation,ap,p,r,f1,status\n"; }

void write_report_row(std::ostream& os, const std::string& testset, const std::string& ablation,
                      const MetricsReport& r) {
  os << testset << ',' << ablation << ',';
  if (r.no_predictions) {
    os << ",,,,no_predictions\n";
    return;
  }
  const auto prec = os.precision(6);
  os << r.ap_sweep << ',' << r.precision_sweep << ',' << r.recall_sweep << ',' << r.f1_sweep << ",ok\n";
  os.precision(prec);
}

void write_failed_row(std::ostream& os, const std::string& testset, const std::string& ablation) {
  os << testset << ',' << ablation << ",,,,,failed\n";
}

void write_curve_header(std::ostream& os) { os << "testset,ablation,rank,recall,precision\n"; }

void write_curve_rows(std::ostream& os, const std::string& testset, const std::string& ablation,
                      const MetricsReport& r) {
  const auto prec = os.precision(6);
  for (size_t i = 0; i < r.curve.size(); ++i) {
    os << testset << ',' << ablation << ',' << i + 1 << ',' << r.curve[i].recall << ',' << r.curve[i].precision << '\n';
  }
  os.precision(prec);
}

void write_threshold_header(std::ostream& os) { os << "testset,ablation,iou_t,ap,p,r,f1,tp,fp,fn\n"; }

void write_threshold_rows(std::ostream& os, const std::string& testset, const std::string& ablation,
                          const MetricsReport& r) {
  for (const ThresholdMetrics& m : r.per_threshold)
    os << testset << ',' << ablation << ',' << m.iou_t << ',' << m.ap << ',' << m.precision << ','
       << m.recall << ',' << m.f1 << ',' << m.tp << ',' << m.fp << ',' << m.fn << '\n';
}

}  // namespace scalpel
