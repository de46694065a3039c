// scalpel_seg: synthesize data, pretrain, run surgical fine-tuning and report.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "report.hpp"
#include "scalpel/checkpoint.hpp"
#include "scalpel/coco.hpp"
#include "scalpel/config.hpp"
#include "scalpel/protocol.hpp"
#include "scalpel/surgery.hpp"
#include "scalpel/synth.hpp"
#include "scalpel/trainer.hpp"

namespace fs = std::filesystem;
using namespace scalpel;

namespace {

enum class Stage { kPretrain, kFinetune };

ExperimentConfig stage_defaults(Stage stage) {
  ExperimentConfig c;
  c.train = stage == Stage::kPretrain ? ProtocolConfig::default_pretrain() : ProtocolConfig::default_finetune().train;
  if (stage == Stage::kFinetune) c.recipe = "checkpoint given on the command line";
  return c;
}

struct Globals {
  std::string config_file;
  bool print_config = false;
  std::optional<uint64_t> seed;
  std::vector<std::string> argv;
};

ExperimentConfig resolve(const Globals& g, Stage stage) {
  ExperimentConfig c = g.config_file.empty() ? stage_defaults(stage) : load_config(g.config_file, stage_defaults(stage));
  if (g.seed) {
    c.train.seed = *g.seed;
    c.augment.seed = *g.seed;
  }
  return c;
}

uint64_t seed_of(const Globals& g) { return g.seed.value_or(0); }

void write_run_manifest(const fs::path& file, const Globals& g, const std::string& command,
                        const std::optional<ExperimentConfig>& config, const std::vector<fs::path>& outputs,
                        nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json m;
  m["tool"] = "scalpel_seg";
  m["version"] = SCALPEL_VERSION;
  m["command"] = command;
  m["argv"] = g.argv;
  m["seed"] = seed_of(g);
  if (config) {
    m["config_hash"] = hash_hex(config_hash(*config));
    std::ostringstream os;
    print_config(os, *config);
    m["config"] = os.str();
  }
  m["versions"] = {{"compiler", __VERSION__},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"checkpoint_format", kCheckpointVersion}};
  std::vector<std::string> outs;
  for (const auto& p : outputs) outs.push_back(p.string());
  m["outputs"] = outs;
  for (auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << m.dump(2) << '\n';
}

fs::path sibling(const fs::path& file, const std::string& suffix) { return fs::path(file.string() + suffix); }

ModelGraph load_model(const ExperimentConfig& cfg, const fs::path& ckpt) {
  ModelGraph model(cfg.arch, 0);
  restore(model.parameters(), read_checkpoint(ckpt));
  return model;
}

// Ground truth as predictions with score 1: every metric should be 1.
std::vector<ImageEval> self_predictions(const Dataset& data) {
  std::vector<ImageEval> out;
  for (const Sample& s : data.samples) {
    ImageEval im;
    for (const InstanceAnnotation& a : s.instances) {
      im.ground_truth.push_back(a.mask(s.image.height, s.image.width));
      im.predictions.push_back(im.ground_truth.back());
      im.scores.push_back(1.0f);
    }
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surgical fine-tuning of a region-based instance segmentation network under distribution shift"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  Globals g;
  g.argv.assign(argv, argv + argc);
  app.add_option("--config", g.config_file, "Experiment config ([arch] [train] [augment] [eval])")->check(CLI::ExistingFile);
  app.add_flag("--print-config", g.print_config, "Print the effective config of the chosen subcommand and exit");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed for data, initialization and sampling");

  // synth
  auto* synth = app.add_subcommand("synth", "Render the synthetic shift suite (or one plain set) as COCO datasets");
  bool suite = false;
  double scale = 1.0;
  int size = 64, scenes = 50;
  fs::path synth_out;
  synth->add_flag("--suite", suite, "Render source, tune and the five targets plus suite.lock");
  synth->add_option("--scale", scale, "Instance-count multiplier for the suite")->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "Image side in pixels")->check(CLI::Range(16, 512));
  synth->add_option("--scenes", scenes, "Scene count without --suite")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Train from scratch on a source set");
  fs::path pre_data, pre_out;
  double val_fraction = 0.2;
  pretrain->add_option("--data", pre_data, "Source dataset directory")->required()->check(CLI::ExistingDirectory);
  pretrain->add_option("--out", pre_out, "Checkpoint to write")->required();
  pretrain->add_option("--val-fraction", val_fraction, "Validation share, stratified by variety");

  // finetune
  auto* finetune = app.add_subcommand("finetune", "One surgical fine-tuning run");
  fs::path ft_ckpt, ft_data, ft_out;
  std::string ft_ablation;
  finetune->add_option("--ckpt", ft_ckpt, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  finetune->add_option("--ablation", ft_ablation, "Ablation name (tune_all, linear_probing, stem, res2, ...)")
      ->required();
  finetune->add_option("--data", ft_data, "Fine-tuning dataset directory")->required()->check(CLI::ExistingDirectory);
  finetune->add_option("--out", ft_out, "Checkpoint to write")->required();

  // matrix
  auto* matrix = app.add_subcommand("matrix", "Fine-tune under every ablation and evaluate on every target");
  fs::path mx_ckpt, mx_tune, mx_out;
  std::vector<fs::path> mx_targets;
  std::string mx_ablations = "all";
  int jobs = 1;
  matrix->add_option("--ckpt", mx_ckpt, "Pretrained checkpoint")->required()->check(CLI::ExistingFile);
  matrix->add_option("--tune", mx_tune, "Fine-tuning dataset directory")->required()->check(CLI::ExistingDirectory);
  matrix->add_option("--targets", mx_targets, "Target dataset directories")->check(CLI::ExistingDirectory);
  matrix->add_option("--ablations", mx_ablations, "'all' or a comma-separated list");
  matrix->add_option("--out", mx_out, "Output directory")->required();
  matrix->add_option("--jobs", jobs, "Concurrent ablations (capped by SCALPEL_SEG_THREADS)")->check(CLI::PositiveNumber);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  fs::path ev_ckpt, ev_data, ev_out;
  std::optional<double> score_floor, iou_step;
  bool self = false;
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--data", ev_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--score-floor", score_floor, "Keep predictions scoring strictly above this");
  eval->add_option("--iou-step", iou_step, "IoU threshold step (0.05 or 0.1)");
  eval->add_flag("--self", self, "Score the annotations against themselves instead of a checkpoint");
  eval->add_option("--out", ev_out, "Summary CSV (per-threshold rows go to <out>.thresholds.csv); default stdout");

  // ledger
  auto* ledger_cmd = app.add_subcommand("ledger", "Trainable-parameter count of every ablation");
  std::string ledger_arch = "full", ledger_format = "table";
  fs::path ledger_out;
  ledger_cmd->add_option("--arch", ledger_arch, "Architecture preset")->check(CLI::IsMember({"full", "mini"}));
  ledger_cmd->add_option("--format", ledger_format, "table, csv or both")->check(CLI::IsMember({"table", "csv", "both"}));
  ledger_cmd->add_option("--out", ledger_out, "Write here instead of stdout");

  // report
  auto* report = app.add_subcommand("report", "Markdown tables and SVG plots from a matrix directory");
  fs::path rp_in;
  bool plots = false;
  report->add_option("--in", rp_in, "Matrix output directory")->required()->check(CLI::ExistingDirectory);
  report->add_flag("--plots", plots, "Also draw F1 bars and PR curves");

  // --print-config only needs the stage, not the subcommand's inputs.
  if (std::find(g.argv.begin(), g.argv.end(), "--print-config") != g.argv.end())
    for (CLI::App* sub : app.get_subcommands([](CLI::App*) { return true; }))
      for (CLI::Option* opt : sub->get_options()) opt->required(false);

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count()) g.seed = seed_value;

  try {
    const Stage stage = app.got_subcommand(pretrain) ? Stage::kPretrain : Stage::kFinetune;
    if (g.print_config) {
      print_config(std::cout, resolve(g, stage));
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 0;
    }

    if (app.got_subcommand(synth)) {
      std::vector<fs::path> outputs;
      if (suite) {
        const ShiftSuite s = shift_suite(seed_of(g), scale, size);
        save_suite(s, synth_out);
        outputs = {synth_out / "suite.lock", synth_out / "manifest.csv"};
        std::cout << s.lock;
      } else {
        const Dataset d = generate(scenes, {1, 4}, size, ShiftSpec{ShiftSpec::Kind::kNone, 0.0, 1.0, seed_of(g)});
        save_dataset(d, synth_out);
        outputs = {synth_out / "annotations.json"};
        std::cout << d.name << ": " << d.samples.size() << " images, " << d.instance_count() << " instances\n";
      }
      write_run_manifest(synth_out / "run_manifest.json", g, "synth", std::nullopt, outputs,
                         {{"suite", suite}, {"scale", scale}, {"size", size}});
      return 0;
    }

    if (app.got_subcommand(pretrain)) {
      const ExperimentConfig cfg = resolve(g, Stage::kPretrain);
      const Dataset data = load_dataset(pre_data);
      auto [tr, va] = split(data, val_fraction, "variety", cfg.train.seed);
      ModelGraph model(cfg.arch, cfg.train.seed);
      TrainOptions opts;
      opts.diagnostic_checkpoint = sibling(pre_out, ".nan.ckpt");
      opts.on_check = [](const HistoryEntry& h) {
        std::cerr << "check " << h.check_index << " iter " << h.iter << " train " << h.train_loss << " val "
                  << h.val_loss << (h.is_best ? " *" : "") << '\n';
      };
      if (pre_out.has_parent_path()) fs::create_directories(pre_out.parent_path());
      const TrainResult result = train(model, tr, va, cfg.train, cfg.augment, opts);
      save_checkpoint(pre_out, model.parameters());
      std::ofstream hist(sibling(pre_out, ".history.csv"));
      write_history_csv(hist, result.history);
      const MetricsReport rep = evaluate_model(model, va, cfg.eval);
      write_report_header(std::cout);
      write_report_row(std::cout, va.name, "pretrained", rep);
      write_run_manifest(sibling(pre_out, ".run_manifest.json"), g, "pretrain", cfg,
                         {pre_out, sibling(pre_out, ".history.csv")},
                         {{"iterations", result.iterations}, {"early_stopped", result.early_stopped},
                          {"best_val_loss", result.best_val_loss}});
      return 0;
    }

    if (app.got_subcommand(finetune)) {
      const AblationSpec spec = AblationSpec::parse(ft_ablation);
      const ExperimentConfig cfg = resolve(g, Stage::kFinetune);
      const TuneSplits splits = split_tune(load_dataset(ft_data), cfg.train.seed);
      ModelGraph model = load_model(cfg, ft_ckpt);
      const Checkpoint start = snapshot(model.parameters());
      TrainOptions opts;
      opts.surgery = spec;
      opts.diagnostic_checkpoint = sibling(ft_out, ".nan.ckpt");
      if (ft_out.has_parent_path()) fs::create_directories(ft_out.parent_path());
      const TrainResult result = train(model, splits.train, splits.val, cfg.train, cfg.augment, opts);
      save_checkpoint(ft_out, model.parameters());
      std::ofstream hist(sibling(ft_out, ".history.csv"));
      write_history_csv(hist, result.history);
      const int64_t changed = count_changed(start, snapshot(model.parameters()));
      const MetricsReport rep = evaluate_model(model, splits.test, cfg.eval);
      write_report_header(std::cout);
      write_report_row(std::cout, splits.test.name, spec.name(), rep);
      std::cerr << spec.name() << ": " << changed << " of " << ledger(model, spec) << " trainable scalars changed\n";
      write_run_manifest(sibling(ft_out, ".run_manifest.json"), g, "finetune", cfg,
                         {ft_out, sibling(ft_out, ".history.csv")},
                         {{"ablation", spec.name()}, {"iterations", result.iterations}, {"changed", changed}});
      return 0;
    }

    if (app.got_subcommand(matrix)) {
      ExperimentConfig cfg = resolve(g, Stage::kFinetune);
      MatrixConfig mc;
      mc.train = cfg.train;
      mc.augment = cfg.augment;
      mc.eval = cfg.eval;
      mc.ablations = parse_ablation_list(mx_ablations);
      mc.jobs = jobs;
      const TuneSplits splits = split_tune(load_dataset(mx_tune), cfg.train.seed);
      std::vector<Dataset> targets;
      for (const auto& dir : mx_targets) targets.push_back(load_dataset(dir));
      MatrixData data{&splits.train, &splits.val, &splits.test, {}};
      for (const Dataset& t : targets) data.targets.push_back(&t);
      fs::create_directories(mx_out);
      const MatrixResult result = run_experiment_matrix(cfg.arch, read_checkpoint(mx_ckpt), data, mc, mx_out);
      write_matrix_tables(result, mx_out);
      std::vector<std::string> names;
      for (const auto& a : mc.ablations) names.push_back(a.name());
      write_run_manifest(mx_out / "run_manifest.json", g, "matrix", cfg,
                         {mx_out / "report.csv", mx_out / "tune_report.csv", mx_out / "thresholds.csv",
                          mx_out / "curves.csv", mx_out / "runs.csv"},
                         {{"ablations", names}, {"jobs", worker_limit(jobs)}});
      std::cout << "wrote " << result.rows.size() << " target rows and " << result.tune_rows.size() + 1
                << " tune rows to " << mx_out.string() << '\n';
      if (result.any_failed()) {
        std::cerr << "failed ablations:\n";
        for (const AblationRun& run : result.runs)
          if (run.failed) std::cerr << "  " << run.ablation << ": " << run.error << '\n';
        return 1;
      }
      return 0;
    }

    if (app.got_subcommand(eval)) {
      ExperimentConfig cfg = resolve(g, Stage::kFinetune);
      if (score_floor) cfg.eval.score_floor = *score_floor;
      if (iou_step) cfg.eval.iou_step = *iou_step;
      cfg.eval.validate();
      if (!self && ev_ckpt.empty()) throw std::runtime_error("eval needs --ckpt or --self");
      const Dataset data = load_dataset(ev_data);
      const auto images = self ? self_predictions(data)
                               : collect_predictions(load_model(cfg, ev_ckpt), data, cfg.eval.score_floor);
      const auto grid = threshold_grid(cfg.eval.iou_step);
      const MetricsReport rep = evaluate(images, grid, cfg.eval.score_floor);
      const std::string ablation = self ? "ground_truth" : ev_ckpt.stem().string();
      auto emit = [&](std::ostream& summary, std::ostream& thresholds) {
        write_report_header(summary);
        write_report_row(summary, data.name, ablation, rep);
        write_threshold_header(thresholds);
        write_threshold_rows(thresholds, data.name, ablation, rep);
      };
      if (ev_out.empty()) {
        emit(std::cout, std::cout);
      } else {
        std::ofstream s(ev_out), t(sibling(ev_out, ".thresholds.csv"));
        if (!s || !t) throw std::runtime_error("cannot write " + ev_out.string());
        emit(s, t);
        write_run_manifest(sibling(ev_out, ".run_manifest.json"), g, "eval", cfg,
                           {ev_out, sibling(ev_out, ".thresholds.csv")});
      }
      return 0;
    }

    if (app.got_subcommand(ledger_cmd)) {
      const ArchConfig arch = ledger_arch == "full" ? ArchConfig::full_scale() : ArchConfig::mini();
      const auto rows = ledger_report(describe_architecture(arch));
      std::ofstream file;
      if (!ledger_out.empty()) {
        file.open(ledger_out);
        if (!file) throw std::runtime_error("cannot write " + ledger_out.string());
      }
      std::ostream& os = ledger_out.empty() ? std::cout : file;
      if (ledger_format != "csv") write_ledger_table(os, rows);
      if (ledger_format == "both") os << '\n';
      if (ledger_format != "table") write_ledger_csv(os, rows);
      return 0;
    }

    if (app.got_subcommand(report)) {
      for (const auto& p : cli::render_report(rp_in, plots)) std::cout << "wrote " << p.string() << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
