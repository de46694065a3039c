#include "scalpel/protocol.hpp"

#include <fstream>

#include "scalpel/log.hpp"

namespace scalpel {

TuneSplits split_tune(const Dataset& tune, uint64_t seed) {
  TuneSplits t;
  auto [rest, test] = split(tune, 0.2, "variety", seed + 1);
  std::tie(t.train, t.val) = split(rest, 0.25, "variety", seed + 2);
  t.test = std::move(test);
  t.train.name = tune.name + "-train";
  t.val.name = tune.name + "-val";
  t.test.name = tune.name + "-test";
  return t;
}

SuiteSplits split_suite(const ShiftSuite& suite, uint64_t seed) {
  SuiteSplits s;
  std::tie(s.source_train, s.source_val) = split(suite.source, 0.2, "variety", seed);
  TuneSplits t = split_tune(suite.tune, seed);
  s.tune_train = std::move(t.train);
  s.tune_val = std::move(t.val);
  s.tune_test = std::move(t.test);
  s.targets = suite.targets;
  return s;
}

TrainConfig ProtocolConfig::default_pretrain() {
  TrainConfig c;
  c.batch_size = 6;
  c.learning_rate = 0.02f;
  c.eval_interval = 100;
  c.patience = 10;
  c.max_iters = 2000;
  c.warmup_iters = 100;
  c.max_val_images = 48;
  return c;
}

MatrixConfig ProtocolConfig::default_finetune() {
  MatrixConfig c;
  c.train.batch_size = 2;
  c.train.learning_rate = 0.01f;
  c.train.eval_interval = 50;
  c.train.patience = 8;
  c.train.max_iters = 1500;
  c.train.max_val_images = 24;
  return c;
}

ProtocolResult run_protocol(uint64_t seed, const ProtocolConfig& config, const std::filesystem::path& out_dir) {
  const ShiftSuite suite = shift_suite(seed, config.suite_scale, config.image_size);
  const SuiteSplits splits = split_suite(suite, seed);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "suite.lock") << suite.lock;
  }

  ProtocolResult out;
  ModelGraph model(config.arch, seed);
  TrainConfig pre = config.pretrain;
  pre.seed = seed;
  log_info("protocol seed " + std::to_string(seed) + ": pretraining on " +
           std::to_string(splits.source_train.samples.size()) + " source images");
  out.pretrain = train(model, splits.source_train, splits.source_val, pre, config.finetune.augment);
  out.pretrained = snapshot(model.parameters());
  out.source_val = evaluate_model(model, splits.source_val, config.finetune.eval);
  if (!out_dir.empty()) {
    write_checkpoint(out_dir / "pretrained.ckpt", out.pretrained);
    std::ofstream hist(out_dir / "pretrain.history.csv");
    write_history_csv(hist, out.pretrain.history);
  }

  MatrixConfig ft = config.finetune;
  ft.train.seed = seed;
  MatrixData data{&splits.tune_train, &splits.tune_val, &splits.tune_test, {}};
  for (const Dataset& t : splits.targets) data.targets.push_back(&t);
  out.matrix = run_experiment_matrix(config.arch, out.pretrained, data, ft, out_dir);
  if (!out_dir.empty()) write_matrix_tables(out.matrix, out_dir);
  return out;
}

}  // namespace scalpel
