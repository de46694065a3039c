#include "scalpel/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "scalpel/log.hpp"

namespace scalpel {

TrainConfig TrainConfig::paper_scale() {
  TrainConfig c;
  c.eval_interval = 220;
  c.patience = 30;
  c.max_iters = 100000;
  c.max_val_images = 0;
  return c;
}

void TrainConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0)) throw std::invalid_argument(std::string("train.") + name + " must be positive");
  };
  positive("batch_size", batch_size);
  positive("learning_rate", learning_rate);
  positive("eval_interval", eval_interval);
  positive("patience", patience);
  positive("max_iters", max_iters);
  if (warmup_iters < 0) throw std::invalid_argument("train.warmup_iters must be >= 0");
  if (max_val_images < 0) throw std::invalid_argument("train.max_val_images must be >= 0");
}

void EvalConfig::validate() const {
  if (!(score_floor >= 0 && score_floor < 1)) throw std::invalid_argument("eval.score_floor must lie in [0, 1)");
  threshold_grid(iou_step);  // throws on unsupported steps
}

bool early_stop(std::span<const double> val_losses, int patience) {
  if (val_losses.empty()) return false;
  const auto best = std::min_element(val_losses.begin(), val_losses.end());  // first minimum
  const auto since = static_cast<int>(val_losses.end() - best) - 1;
  return since >= patience;
}

double validation_loss(const ModelGraph& model, const Dataset& data, int limit, uint64_t seed) {
  NoGradGuard no_grad;
  const size_t n = limit > 0 ? std::min(data.samples.size(), static_cast<size_t>(limit)) : data.samples.size();
  if (n == 0) throw std::invalid_argument("validation set is empty");
  std::mt19937_64 rng(seed);
  double total = 0;
  for (size_t i = 0; i < n; ++i) total += forward_train(model, std::span(&data.samples[i], 1), rng).value();
  return total / static_cast<double>(n);
}

TrainResult train(ModelGraph& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config, const AugmentConfig& augment, const TrainOptions& options) {
  config.validate();
  augment.validate();
  if (train_set.samples.empty()) throw std::invalid_argument("train: empty training set");
  if (options.surgery) apply_surgery(model, *options.surgery);

  std::mt19937_64 rng(config.seed);
  const uint64_t val_seed = rng();
  std::vector<size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();

  TrainResult result;
  std::vector<double> val_losses;
  double loss_sum = 0;
  int loss_count = 0;
  std::vector<Sample> batch;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) {
      if (cursor >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Sample& s = train_set.samples[order[cursor++]];
      batch.push_back(config.augment ? augment_sample(s, augment, rng) : s);
    }
    LossBundle loss = forward_train(model, batch, rng);
    const float value = loss.value();
    if (!std::isfinite(value)) {
      std::string where;
      if (!options.diagnostic_checkpoint.empty()) {
        save_checkpoint(options.diagnostic_checkpoint, model.parameters());
        where = "; parameters saved to " + options.diagnostic_checkpoint.string();
      }
      throw TrainingAborted("non-finite loss at iteration " + std::to_string(iter) + " (rpn_obj " +
                            std::to_string(loss.rpn_objectness.item()) + ", rpn_box " +
                            std::to_string(loss.rpn_box.item()) + ", cls " + std::to_string(loss.roi_class.item()) +
                            ", box " + std::to_string(loss.roi_box.item()) + ", mask " +
                            std::to_string(loss.roi_mask.item()) + ")" + where);
    }
    backward(loss.total);
    float lr = config.learning_rate;
    if (config.warmup_iters > 0 && iter <= config.warmup_iters)
      lr *= static_cast<float>(iter) / static_cast<float>(config.warmup_iters);
    sgd_step(model.parameters(), lr);
    loss_sum += value;
    ++loss_count;
    result.iterations = iter;

    if (iter % config.eval_interval == 0 || iter == config.max_iters) {
      HistoryEntry h;
      h.check_index = static_cast<int>(result.history.size());
      h.iter = iter;
      h.train_loss = loss_sum / std::max(loss_count, 1);
      h.val_loss = validation_loss(model, val_set, config.max_val_images, val_seed);
      loss_sum = 0;
      loss_count = 0;
      h.is_best = val_losses.empty() || h.val_loss < *std::min_element(val_losses.begin(), val_losses.end());
      val_losses.push_back(h.val_loss);
      if (h.is_best) {
        result.best = snapshot(model.parameters());
        result.best_val_loss = h.val_loss;
        result.best_check = h.check_index;
      }
      result.history.push_back(h);
      if (options.on_check) options.on_check(h);
      if (early_stop(val_losses, config.patience)) {
        result.early_stopped = true;
        break;
      }
    }
  }
  if (!result.best.empty()) restore(model.parameters(), result.best);
  return result;
}

void write_history_csv(std::ostream& os, std::span<const HistoryEntry> history) {
  os << "check_index,iter,train_loss,val_loss,is_best\n";
  const auto prec = os.precision(8);
  for (const HistoryEntry& h : history)
    os << h.check_index << ',' << h.iter << ',' << h.train_loss << ',' << h.val_loss << ',' << (h.is_best ? 1 : 0)
       << '\n';
  os.precision(prec);
}

std::vector<ImageEval> collect_predictions(const ModelGraph& model, const Dataset& data, double score_floor) {
  std::vector<ImageEval> out;
  out.reserve(data.samples.size());
  for (const Sample& s : data.samples) {
    ImageEval ev;
    for (const Detection& d : forward_infer(model, s.image, static_cast<float>(score_floor))) {
      ev.scores.push_back(d.score);
      ev.predictions.push_back(d.paste(s.image.height, s.image.width));
    }
    for (const InstanceAnnotation& a : s.instances) ev.ground_truth.push_back(a.mask(s.image.height, s.image.width));
    out.push_back(std::move(ev));
  }
  return out;
}

MetricsReport evaluate_model(const ModelGraph& model, const Dataset& data, const EvalConfig& config) {
  config.validate();
  const auto images = collect_predictions(model, data, config.score_floor);
  const auto grid = threshold_grid(config.iou_step);
  return evaluate(images, grid, config.score_floor);
}

bool MatrixResult::any_failed() const {
  return std::any_of(runs.begin(), runs.end(), [](const AblationRun& r) { return r.failed; });
}

void write_matrix_tables(const MatrixResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  };
  auto summary = [](std::ostream& os, const MatrixRow& row) {
    if (row.failed) {
      write_failed_row(os, row.testset, row.ablation);
    } else {
      write_report_row(os, row.testset, row.ablation, row.report);
    }
  };
  std::vector<const MatrixRow*> all{&result.baseline};
  for (const MatrixRow& r : result.tune_rows) all.push_back(&r);
  for (const MatrixRow& r : result.rows) all.push_back(&r);

  auto report = open("report.csv");
  write_report_header(report);
  for (const MatrixRow& r : result.rows) summary(report, r);
  auto tune = open("tune_report.csv");
  write_report_header(tune);
  summary(tune, result.baseline);
  for (const MatrixRow& r : result.tune_rows) summary(tune, r);

  auto thresholds = open("thresholds.csv");
  write_threshold_header(thresholds);
  auto curves = open("curves.csv");
  write_curve_header(curves);
  for (const MatrixRow* r : all) {
    if (r->failed) continue;
    write_threshold_rows(thresholds, r->testset, r->ablation, r->report);
    write_curve_rows(curves, r->testset, r->ablation, r->report);
  }

  auto runs = open("runs.csv");
  runs << "ablation,iterations,early_stopped,changed,ledger,start_hash,final_hash,status\n";
  for (const AblationRun& run : result.runs) {
    runs << run.ablation << ',' << run.iterations << ',' << (run.early_stopped ? 1 : 0) << ',' << run.changed << ','
         << run.ledger << ',' << hash_hex(run.start_hash) << ',' << hash_hex(run.final_hash) << ','
         << (run.failed ? "failed" : "ok") << '\n';
  }
}

int worker_limit(int requested) {
  int n = std::max(1, requested);
  if (const char* env = std::getenv("SCALPEL_SEG_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && cap >= 1) n = std::min<long>(n, cap);
    else log_warning("ignoring invalid SCALPEL_SEG_THREADS='" + std::string(env) + "'");
  }
  return n;
}

MatrixResult run_experiment_matrix(const ArchConfig& arch, const Checkpoint& pretrained, const MatrixData& data,
                                   const MatrixConfig& config, const std::filesystem::path& out_dir) {
  if (!data.tune_train || !data.tune_val || !data.tune_test)
    throw std::invalid_argument("matrix: tune train/val/test splits are required");
  config.train.validate();
  config.eval.validate();
  const uint64_t pretrained_hash = checkpoint_hash(pretrained);

  MatrixResult result;
  {
    ModelGraph base(arch, 0);
    restore(base.parameters(), pretrained);
    result.baseline = {data.tune_test->name, "pretrained", evaluate_model(base, *data.tune_test, config.eval), false, {}};
  }

  const size_t n = config.ablations.size();
  result.runs.resize(n);
  result.tune_rows.resize(n);
  std::vector<std::vector<MatrixRow>> target_rows(n);
  std::atomic<size_t> next{0};
  std::mutex log_mutex;

  auto work = [&]() {
    for (size_t i = next++; i < n; i = next++) {
      const AblationSpec& spec = config.ablations[i];
      AblationRun& run = result.runs[i];
      run.ablation = spec.name();
      try {
        ModelGraph model(arch, 0);
        restore(model.parameters(), pretrained);
        const Checkpoint start = snapshot(model.parameters());
        run.start_hash = checkpoint_hash(start);
        if (run.start_hash != pretrained_hash) throw std::runtime_error("start parameters differ from the checkpoint");
        run.ledger = ledger(model, spec);
        // Same seed for every ablation: identical data order and sampling.
        const TrainConfig& tc = config.train;
        TrainOptions opts;
        opts.surgery = spec;
        if (!out_dir.empty()) opts.diagnostic_checkpoint = out_dir / (run.ablation + ".nan.ckpt");
        TrainResult tr = train(model, *data.tune_train, *data.tune_val, tc, config.augment, opts);
        const Checkpoint fin = snapshot(model.parameters());
        run.final_hash = checkpoint_hash(fin);
        run.changed = count_changed(start, fin);
        run.iterations = tr.iterations;
        run.early_stopped = tr.early_stopped;
        run.history = tr.history;
        if (!out_dir.empty()) {
          write_checkpoint(out_dir / (run.ablation + ".ckpt"), fin);
          std::ofstream hist(out_dir / (run.ablation + ".history.csv"));
          write_history_csv(hist, tr.history);
        }
        result.tune_rows[i] = {data.tune_test->name, run.ablation, evaluate_model(model, *data.tune_test, config.eval), false, {}};
        for (const Dataset* t : data.targets)
          target_rows[i].push_back({t->name, run.ablation, evaluate_model(model, *t, config.eval), false, {}});
        std::lock_guard<std::mutex> lock(log_mutex);
        log_info("matrix: " + run.ablation + " done after " + std::to_string(run.iterations) + " iterations");
      } catch (const std::exception& e) {
        run.failed = true;
        run.error = e.what();
        result.tune_rows[i] = {data.tune_test->name, run.ablation, {}, true, e.what()};
        target_rows[i].clear();
        for (const Dataset* t : data.targets) target_rows[i].push_back({t->name, run.ablation, {}, true, e.what()});
        std::lock_guard<std::mutex> lock(log_mutex);
        log_warning("matrix: " + run.ablation + " failed: " + e.what());
      }
    }
  };
  const int jobs = std::min<int>(worker_limit(config.jobs), static_cast<int>(std::max<size_t>(n, 1)));
  if (jobs <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  // Rows grouped by target set, ablations in the requested order.
  for (size_t t = 0; t < data.targets.size(); ++t)
    for (size_t i = 0; i < n; ++i) result.rows.push_back(target_rows[i][t]);
  return result;
}

}  // namespace scalpel
