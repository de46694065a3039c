#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include "scalpel/arch.hpp"
#include "scalpel/augment.hpp"
#include "scalpel/trainer.hpp"

namespace scalpel {

/// Experiment settings read from a sectioned key = value file:
///
///   [arch]     preset = mini | full, then any ArchConfig field
///   [train]    TrainConfig fields plus `recipe` (how the starting weights came about)
///   [augment]  AugmentConfig fields; ranges are written "lo, hi"
///   [eval]     score_floor, iou_step
///
/// '#' and ';' start comments.
struct ExperimentConfig {
  std::string preset = "mini";
  ArchConfig arch = ArchConfig::mini();
  TrainConfig train;
  std::string recipe = "self-pretrained on the synthetic source set";
  AugmentConfig augment;
  EvalConfig eval;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Settings absent from the text keep their value from `base`.
/// Errors read "<source>:<line>: <message>".
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>",
                              const ExperimentConfig& base = {});
ExperimentConfig load_config(const std::filesystem::path& file, const ExperimentConfig& base = {});

/// Writes every setting in the accepted syntax; parse_config reads it back.
void print_config(std::ostream& os, const ExperimentConfig& config);
uint64_t config_hash(const ExperimentConfig& config);

}  // namespace scalpel
