#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "scalpel/metrics.hpp"

using namespace scalpel;

TEST_SUITE("metrics") {

TEST_CASE("F1 from published precision/recall pairs") {
  CHECK(std::abs(f1_score(0.796, 0.663) - 0.724) <= 0.001);
  CHECK(std::abs(f1_score(0.806, 0.607) - 0.693) <= 0.001);
  CHECK(std::abs(f1_score(0.602, 0.421) - 0.496) <= 0.001);
  CHECK(std::abs(f1_score(0.595, 0.515) - 0.552) <= 0.001);
  CHECK(f1_score(0, 0) == 0.0);
}

TEST_CASE("mask IoU") {
  Mask a(4, 4), b(4, 4);
  for (int x = 0; x < 2; ++x) a.at(0, x) = 1;
  for (int x = 1; x < 3; ++x) b.at(0, x) = 1;
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(a, a) == 1.0);
  CHECK(mask_iou(Mask(4, 4), Mask(4, 4)) == 0.0);
  CHECK_THROWS(mask_iou(Mask(4, 4), Mask(3, 4)));
}

TEST_CASE("matching agrees with the brute-force oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 500; ++trial) {
    const auto images = oracle::random_eval_case(rng);
    for (const ImageEval& im : images) {
      for (double t : threshold_grid()) {
        const MatchResult got = match_instances(im.scores, im.predictions, im.ground_truth, t);
        const auto want = oracle::reference_match(im.scores, im.predictions, im.ground_truth, t, 0.9);
        INFO("trial " << trial << " iou " << t);
        CHECK(got.tp == want.tp);
        CHECK(got.fp == want.fp);
        CHECK(got.fn == want.fn);
        CHECK(got.assignment == want.assignment);
      }
    }
  }
}

TEST_CASE("AP agrees with the brute-force oracle") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    const auto images = oracle::random_eval_case(rng);
    for (double t : {0.3, 0.5, 0.75, 0.9}) {
      INFO("trial " << trial << " iou " << t);
      CHECK(average_precision(images, t) == doctest::Approx(oracle::reference_ap(images, t, 0.9)).epsilon(1e-12));
    }
  }
}

TEST_CASE("score gate is strict") {
  Mask m(2, 2);
  m.at(0, 0) = 1;
  const std::vector<Mask> preds{m, m}, gts{m};
  const std::vector<float> scores{0.9f, 0.95f};
  const MatchResult r = match_instances(scores, preds, gts, 0.5);
  CHECK(r.tp == 1);
  CHECK(r.fp == 0);
  CHECK(r.assignment == std::vector<int>{-1, 0});
}

TEST_CASE("self-evaluation scores one everywhere") {
  std::mt19937_64 rng(43);
  auto images = oracle::random_eval_case(rng, 6, 3);
  for (ImageEval& im : images) {
    im.predictions = im.ground_truth;
    im.scores.assign(im.ground_truth.size(), 1.0f);
  }
  const MetricsReport r = evaluate(images);
  bool any_gt = false;
  for (const auto& im : images) any_gt = any_gt || !im.ground_truth.empty();
  if (any_gt) {
    CHECK(r.ap_sweep == doctest::Approx(1.0));
    CHECK(r.f1_sweep == doctest::Approx(1.0));
    for (const ThresholdMetrics& m : r.per_threshold) CHECK(m.precision == 1.0);
  }
}

TEST_CASE("sweep metrics are grid means and F1 comes from the mean P and R") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const auto images = oracle::random_eval_case(rng);
    const MetricsReport r = evaluate(images);
    REQUIRE(r.per_threshold.size() == 13);
    double p = 0, rc = 0, ap = 0;
    for (const auto& m : r.per_threshold) {
      p += m.precision / 13;
      rc += m.recall / 13;
      ap += m.ap / 13;
    }
    CHECK(r.precision_sweep == doctest::Approx(p));
    CHECK(r.recall_sweep == doctest::Approx(rc));
    CHECK(r.ap_sweep == doctest::Approx(ap));
    CHECK(r.f1_sweep == doctest::Approx(f1_score(p, rc)));
  }
}

TEST_CASE("threshold grids") {
  const auto fine = threshold_grid(0.05);
  REQUIRE(fine.size() == 13);
  CHECK(fine.front() == doctest::Approx(0.30));
  CHECK(fine[5] == doctest::Approx(0.55));
  CHECK(fine.back() == doctest::Approx(0.90));
  CHECK(threshold_grid(0.1).size() == 7);
  CHECK_THROWS(threshold_grid(0.07));
}

TEST_CASE("no surviving predictions is reported as such") {
  Mask m(3, 3);
  m.at(1, 1) = 1;
  const std::vector<ImageEval> images{{{0.5f}, {m}, {m}}};
  const MetricsReport r = evaluate(images);
  CHECK(r.no_predictions);
  std::ostringstream os;
  write_report_row(os, "C", "res3", r);
  CHECK(os.str() == "C,res3,,,,,no_predictions\n");
}

TEST_CASE("report CSV layout") {
  std::ostringstream os;
  write_report_header(os);
  MetricsReport r;
  r.ap_sweep = 0.5;
  r.precision_sweep = 0.75;
  r.recall_sweep = 0.25;
  r.f1_sweep = 0.375;
  write_report_row(os, "R", "res4", r);
  write_failed_row(os, "R", "res5");
  CHECK(os.str() == "testset,ablation,ap,p,r,f1,status\nR,res4,0.5,0.75,0.25,0.375,ok\nR,res5,,,,,failed\n");
}

}  // TEST_SUITE
