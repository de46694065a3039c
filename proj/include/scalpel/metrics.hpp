#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "scalpel/geometry.hpp"

namespace scalpel {

inline constexpr double kDefaultScoreFloor = 0.9;

/// |a & b| / |a | b|; 0 when both are empty. Throws on size mismatch.
double mask_iou(const Mask& a, const Mask& b);

/// 2pr / (p + r), or 0 when p + r == 0.
double f1_score(double precision, double recall);

/// Predictions and ground truth of one image.
struct ImageEval {
  std::vector<float> scores;
  std::vector<Mask> predictions;
  std::vector<Mask> ground_truth;
};

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<int> kept;        // surviving prediction indices, in match order
  std::vector<int> assignment;  // per prediction: matched gt index or -1
};

/// Discards predictions with score <= score_floor, then visits the rest in
/// descending score (ties: lower index first) and matches each to the
/// unmatched ground truth of highest IoU (ties: lower index) if that IoU
/// reaches iou_t.
MatchResult match_instances(std::span<const float> scores, std::span<const Mask> predictions,
                            std::span<const Mask> ground_truth, double iou_t,
                            double score_floor = kDefaultScoreFloor);

/// Same rule over a precomputed IoU table iou[pred][gt].
MatchResult match_iou_table(std::span<const float> scores, const std::vector<std::vector<double>>& iou,
                            size_t gt_count, double iou_t, double score_floor = kDefaultScoreFloor);

struct PrPoint {
  double recall;
  double precision;
};

/// Precision/recall after each surviving prediction, pooled over images in
/// descending score order (ties: image order, then index).
std::vector<PrPoint> pr_curve(std::span<const ImageEval> images, double iou_t,
                              double score_floor = kDefaultScoreFloor);

/// All-points interpolated area under pr_curve; 0 with no survivors or no
/// ground truth.
double average_precision(std::span<const ImageEval> images, double iou_t,
                         double score_floor = kDefaultScoreFloor);

/// IoU thresholds 0.30, 0.30 + step, ..., 0.90 (step 0.05 or 0.1).
std::vector<double> threshold_grid(double step = 0.05);

struct ThresholdMetrics {
  double iou_t = 0;
  double ap = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

struct MetricsReport {
  double ap_sweep = 0;
  double precision_sweep = 0;
  double recall_sweep = 0;
  double f1_sweep = 0;  // f1_score(precision_sweep, recall_sweep)
  std::vector<ThresholdMetrics> per_threshold;
  bool no_predictions = false;  // nothing survived the score gate
  std::vector<PrPoint> curve;   // pooled PR curve at IoU kCurveIou, for plots
};

inline constexpr double kCurveIou = 0.5;

/// Per-threshold AP/P/R/F1 from pooled counts, and their means over the grid.
MetricsReport evaluate(std::span<const ImageEval> images, std::span<const double> thresholds,
                       double score_floor = kDefaultScoreFloor);
MetricsReport evaluate(std::span<const ImageEval> images, double score_floor = kDefaultScoreFloor);

/// Summary rows "testset,ablation,ap,p,r,f1,status". Status is ok,
/// no_predictions or failed; numeric fields are left empty unless ok.
void write_report_header(std::ostream& os);
void write_report_row(std::ostream& os, const std::string& testset, const std::string& ablation,
                      const MetricsReport& report);
void write_failed_row(std::ostream& os, const std::string& testset, const std::string& ablation);

/// PR curve rows: testset,ablation,rank,recall,precision.
void write_curve_header(std::ostream& os);
void write_curve_rows(std::ostream& os, const std::string& testset, const std::string& ablation,
                      const MetricsReport& report);

/// Long format: testset,ablation,iou_t,ap,p,r,f1,tp,fp,fn.
void write_threshold_header(std::ostream& os);
void write_threshold_rows(std::ostream& os, const std::string& testset, const std::string& ablation,
                          const MetricsReport& report);

}  // namespace scalpel
