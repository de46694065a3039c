#include "scalpel/surgery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace scalpel {

namespace {

std::string stage_label(int n) { return "res" + std::to_string(n); }
std::string fpn_label(int n) { return "fpn@" + std::to_string(n); }

}  // namespace

const std::vector<AblationSpec>& AblationSpec::all() {
  static const std::vector<AblationSpec> specs = [] {
    std::vector<AblationSpec> v{AblationSpec(Kind::kTuneAll, 0), AblationSpec(Kind::kLinearProbing, 0),
                                AblationSpec(Kind::kStem, 0)};
    for (int n = 2; n <= 5; ++n) {
      v.push_back(AblationSpec(Kind::kStage, n));
      v.push_back(AblationSpec(Kind::kStageWithFpn, n));
    }
    v.push_back(AblationSpec(Kind::kRpn, 0));
    return v;
  }();
  return specs;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const AblationSpec& s : AblationSpec::all()) v.push_back(s.name());
    return v;
  }();
  return names;
}

std::string AblationSpec::name() const {
  switch (kind_) {
    case Kind::kTuneAll: return "tune_all";
    case Kind::kLinearProbing: return "linear_probing";
    case Kind::kStem: return "stem";
    case Kind::kStage: return stage_label(stage_);
    case Kind::kStageWithFpn: return stage_label(stage_) + "_fpn";
    case Kind::kRpn: return "rpn";
  }
  return "?";
}

bool AblationSpec::single_stage() const {
  return kind_ != Kind::kTuneAll && kind_ != Kind::kLinearProbing;
}

AblationSpec AblationSpec::parse(std::string_view name) {
  for (const AblationSpec& s : all())
    if (s.name() == name) return s;
  std::string valid;
  for (const std::string& n : ablation_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown ablation '" + std::string(name) + "'; valid names: " + valid);
}

std::vector<AblationSpec> parse_ablation_list(std::string_view text) {
  if (text == "all") return AblationSpec::all();
  std::vector<AblationSpec> out;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t comma = std::min(text.find(',', pos), text.size());
    std::string_view item = text.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      AblationSpec s = AblationSpec::parse(item);
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("empty ablation list");
  return out;
}

std::set<std::string> trainable_groups(const AblationSpec& spec) {
  using Kind = AblationSpec::Kind;
  switch (spec.kind()) {
    case Kind::kTuneAll: {
      const auto& g = group_labels();
      return {g.begin(), g.end()};
    }
    case Kind::kLinearProbing: return {"roi_heads"};
    case Kind::kStem: return {"stem"};
    case Kind::kStage: return {stage_label(spec.stage())};
    case Kind::kStageWithFpn: return {stage_label(spec.stage()), fpn_label(spec.stage())};
    case Kind::kRpn: return {"rpn"};
  }
  return {};
}

void apply_surgery(ModelGraph& model, const AblationSpec& spec) {
  const auto groups = trainable_groups(spec);
  for (Parameter& p : model.parameters()) p.set_trainable(groups.count(p.group) > 0);
}

std::map<std::string, int64_t> group_counts(std::span<const ParamSpec> layout) {
  std::map<std::string, int64_t> counts;
  for (const std::string& g : group_labels()) counts[g] = 0;
  for (const ParamSpec& p : layout) counts[p.group] += p.numel();
  return counts;
}

int64_t ledger(std::span<const ParamSpec> layout, const AblationSpec& spec) {
  const auto groups = trainable_groups(spec);
  int64_t n = 0;
  for (const ParamSpec& p : layout)
    if (groups.count(p.group)) n += p.numel();
  return n;
}

int64_t ledger(const ModelGraph& model, const AblationSpec& spec) { return ledger(model.layout(), spec); }

std::vector<LedgerEntry> ledger_report(std::span<const ParamSpec> layout) {
  std::vector<LedgerEntry> rows;
  for (const AblationSpec& s : AblationSpec::all()) rows.push_back({s.name(), ledger(layout, s)});
  return rows;
}

std::string human_count(int64_t n) {
  const char* suffix = "";
  double v = static_cast<double>(n);
  if (n >= 1'000'000) {
    v /= 1e6;
    suffix = "M";
  } else if (n >= 1'000) {
    v /= 1e3;
    suffix = "K";
  }
  char buf[32];
  const int decimals = n < 1000 ? 0 : (v >= 100 ? 0 : (v >= 10 ? 1 : 2));
  std::snprintf(buf, sizeof buf, "%.*f%s", decimals, v, suffix);
  return buf;
}

void write_ledger_csv(std::ostream& os, std::span<const LedgerEntry> rows) {
  os << "ablation,parameters\n";
  for (const LedgerEntry& r : rows) os << r.label << ',' << r.parameter_count << '\n';
}

void write_ledger_table(std::ostream& os, std::span<const LedgerEntry> rows) {
  size_t w = 8;
  for (const LedgerEntry& r : rows) w = std::max(w, r.label.size());
  os << std::left << std::setw(static_cast<int>(w)) << "ablation" << "  " << std::right << std::setw(12)
     << "parameters" << "  " << std::setw(8) << "approx" << '\n';
  for (const LedgerEntry& r : rows) {
    os << std::left << std::setw(static_cast<int>(w)) << r.label << "  " << std::right << std::setw(12)
       << r.parameter_count << "  " << std::setw(8) << human_count(r.parameter_count) << '\n';
  }
}

}  // namespace scalpel
