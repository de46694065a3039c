#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scalpel/augment.hpp"
#include "scalpel/checkpoint.hpp"
#include "scalpel/coco.hpp"
#include "scalpel/metrics.hpp"
#include "scalpel/model.hpp"
#include "scalpel/surgery.hpp"

namespace scalpel {

/// Loop controls. The defaults are desk-scale; paper_scale() holds the
/// full-scale check interval and patience.
struct TrainConfig {
  int batch_size = 2;
  float learning_rate = 0.01f;
  int eval_interval = 20;  // iterations between validation checks
  int patience = 5;        // checks without strict improvement before stopping
  int max_iters = 300;
  int warmup_iters = 0;    // linear learning-rate ramp; 0 keeps it constant
  int max_val_images = 24; // validation subset size (0: all)
  bool augment = true;
  uint64_t seed = 0;

  static TrainConfig paper_scale();
  /// Throws std::invalid_argument naming the field.
  void validate() const;
};

struct EvalConfig {
  double score_floor = kDefaultScoreFloor;
  double iou_step = 0.05;

  void validate() const;
};

struct HistoryEntry {
  int check_index = 0;
  int iter = 0;
  double train_loss = 0;
  double val_loss = 0;
  bool is_best = false;
};

struct TrainResult {
  Checkpoint best;
  double best_val_loss = 0;
  int best_check = -1;
  int iterations = 0;
  bool early_stopped = false;
  std::vector<HistoryEntry> history;
};

/// Raised when the loss turns non-finite; a diagnostic checkpoint has been
/// written when a path was available.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True iff at least `patience` checks have passed since the first check
/// holding the minimum; equal losses do not count as improvement.
bool early_stop(std::span<const double> val_losses, int patience);

/// Composite loss over `images` (all, or the first `limit`), without
/// augmentation and with a fixed sampling seed.
double validation_loss(const ModelGraph& model, const Dataset& data, int limit, uint64_t seed);

struct TrainOptions {
  std::optional<AblationSpec> surgery;
  std::filesystem::path diagnostic_checkpoint;  // written on NaN abort; empty: skip
  std::function<void(const HistoryEntry&)> on_check;
};

/// Runs SGD until max_iters or early stop, then restores the best-validation
/// parameters into `model`.
TrainResult train(ModelGraph& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const AugmentConfig& augment, const TrainOptions& options = {});

void write_history_csv(std::ostream& os, std::span<const HistoryEntry> history);

/// Runs inference on every image and scores it against the annotations.
std::vector<ImageEval> collect_predictions(const ModelGraph& model, const Dataset& data, double score_floor);
MetricsReport evaluate_model(const ModelGraph& model, const Dataset& data, const EvalConfig& config);

struct MatrixConfig {
  TrainConfig train;
  AugmentConfig augment;
  EvalConfig eval;
  std::vector<AblationSpec> ablations = AblationSpec::all();
  int jobs = 1;
};

struct MatrixRow {
  std::string testset;
  std::string ablation;
  MetricsReport report;
  bool failed = false;
  std::string error;
};

struct AblationRun {
  std::string ablation;
  uint64_t start_hash = 0;  // parameters the run started from
  uint64_t final_hash = 0;
  int64_t changed = 0;      // scalars that differ from the start
  int64_t ledger = 0;
  int iterations = 0;
  bool early_stopped = false;
  std::vector<HistoryEntry> history;
  bool failed = false;
  std::string error;
};

struct MatrixResult {
  MatrixRow baseline;              // pretrained model on the tune test split
  std::vector<MatrixRow> tune_rows;  // each ablation on the tune test split
  std::vector<MatrixRow> rows;       // ablation x target
  std::vector<AblationRun> runs;
  bool any_failed() const;
};

struct MatrixData {
  const Dataset* tune_train = nullptr;
  const Dataset* tune_val = nullptr;
  const Dataset* tune_test = nullptr;
  std::vector<const Dataset*> targets;
};

/// Fine-tunes a fresh copy of the pretrained parameters under every ablation
/// and evaluates it. Failures are recorded per ablation; the rest continue.
/// With a non-empty out_dir each run's checkpoint and history land there.
MatrixResult run_experiment_matrix(const ArchConfig& arch, const Checkpoint& pretrained, const MatrixData& data,
                                   const MatrixConfig& config, const std::filesystem::path& out_dir = {});

/// Writes the matrix tables into dir:
///   report.csv       target rows (testset x ablation)
///   tune_report.csv  the pretrained baseline and every ablation on the tune test split
///   thresholds.csv   per-threshold metrics of all rows above
///   curves.csv       PR curves at IoU 0.5
///   runs.csv         ablation,iterations,early_stopped,changed,ledger,start_hash,final_hash,status
void write_matrix_tables(const MatrixResult& result, const std::filesystem::path& dir);

/// Worker cap from SCALPEL_SEG_THREADS (unset or invalid: `requested`).
int worker_limit(int requested);

}  // namespace scalpel
