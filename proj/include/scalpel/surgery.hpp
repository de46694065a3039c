#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalpel/arch.hpp"
#include "scalpel/model.hpp"

namespace scalpel {

/// Which parameter groups a fine-tuning run may update. Only the twelve
/// named configurations are constructible.
class AblationSpec {
 public:
  enum class Kind { kTuneAll, kLinearProbing, kStem, kStage, kStageWithFpn, kRpn };

  /// Throws std::invalid_argument listing the valid names.
  static AblationSpec parse(std::string_view name);
  /// All twelve, in report order.
  static const std::vector<AblationSpec>& all();

  Kind kind() const { return kind_; }
  int stage() const { return stage_; }  // 2..5 for the stage kinds, else 0
  std::string name() const;
  /// True for the single-stage surgical configurations (stem, resN, resN_fpn, rpn).
  bool single_stage() const;

  bool operator==(const AblationSpec&) const = default;

 private:
  AblationSpec(Kind kind, int stage) : kind_(kind), stage_(stage) {}
  Kind kind_;
  int stage_;
};

const std::vector<std::string>& ablation_names();

/// Parses "all" or a comma-separated list of names.
std::vector<AblationSpec> parse_ablation_list(std::string_view text);

std::set<std::string> trainable_groups(const AblationSpec& spec);

/// Sets the trainable flag on exactly the parameters of the selected groups.
void apply_surgery(ModelGraph& model, const AblationSpec& spec);

/// Scalars per group label.
std::map<std::string, int64_t> group_counts(std::span<const ParamSpec> layout);

/// Number of scalars a run under `spec` may update.
int64_t ledger(std::span<const ParamSpec> layout, const AblationSpec& spec);
int64_t ledger(const ModelGraph& model, const AblationSpec& spec);

struct LedgerEntry {
  std::string label;  // ablation name
  int64_t parameter_count = 0;
};

std::vector<LedgerEntry> ledger_report(std::span<const ParamSpec> layout);

/// "9.5K", "1.22M", "45.3M" (three significant digits).
std::string human_count(int64_t n);

void write_ledger_csv(std::ostream& os, std::span<const LedgerEntry> rows);
void write_ledger_table(std::ostream& os, std::span<const LedgerEntry> rows);

}  // namespace scalpel
