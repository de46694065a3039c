#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "scalpel/arch.hpp"
#include "scalpel/synth.hpp"
#include "scalpel/trainer.hpp"

namespace scalpel {

struct TuneSplits {
  Dataset train, val, test;
};

/// 20% test, then 25% of the remainder for validation (60/20/20 overall),
/// stratified by variety. Names: <name>-train, <name>-val, <name>-test.
TuneSplits split_tune(const Dataset& tune, uint64_t seed);

/// The suite's sets cut into the roles the two-stage protocol needs.
struct SuiteSplits {
  Dataset source_train, source_val;
  Dataset tune_train, tune_val, tune_test;
  std::vector<Dataset> targets;
};

/// Source: 20% validation, stratified by variety. Tune: split_tune.
SuiteSplits split_suite(const ShiftSuite& suite, uint64_t seed);

/// Desk-scale settings for self-pretraining followed by the ablation matrix.
struct ProtocolConfig {
  ArchConfig arch = ArchConfig::mini();
  double suite_scale = 1.0;
  int image_size = 64;
  TrainConfig pretrain = default_pretrain();
  MatrixConfig finetune = default_finetune();

  static TrainConfig default_pretrain();
  static MatrixConfig default_finetune();
};

struct ProtocolResult {
  TrainResult pretrain;
  Checkpoint pretrained;
  MetricsReport source_val;
  MatrixResult matrix;
};

/// Synthesizes the suite for `seed`, pretrains on the source set and runs the
/// fine-tuning matrix. With a non-empty out_dir, checkpoints and histories
/// are written there.
ProtocolResult run_protocol(uint64_t seed, const ProtocolConfig& config, const std::filesystem::path& out_dir = {});

}  // namespace scalpel
