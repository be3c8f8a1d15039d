#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "irrclr/contrastive.hpp"
#include "irrclr/digest.hpp"
#include "irrclr/eval.hpp"
#include "irrclr/model.hpp"
#include "irrclr/raster.hpp"
#include "irrclr/runconfig.hpp"
#include "irrclr/train.hpp"

namespace irrclr::cli {

namespace fs = std::filesystem;

namespace {

// every file a subcommand writes lands here, with its digest
struct ArtifactLog {
  fs::path dir;
  std::vector<std::pair<std::string, std::string>> rows;

  void add(const fs::path& path) {
    rows.emplace_back(fs::relative(path, dir).string(), sha256_file_hex(path));
  }
  void write() const {
    std::ofstream out(dir / "artifacts.tsv", std::ios::trunc);
    for (const auto& [path, digest] : rows) out << path << '\t' << digest << '\n';
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ProgressFn progress_printer(const std::string& stage) {
  return [stage](int epoch, double loss, double /*lr*/) {
    std::fprintf(stderr, "stage=%s epoch=%d loss=%.9g\n", stage.c_str(), epoch, loss);
  };
}

EncoderConfig encoder_for_manifest(const std::string& preset, const DatasetManifest& manifest) {
  EncoderConfig enc = EncoderConfig::preset(preset);
  if (manifest.entries.empty()) throw ValidationError("manifest has no entries");
  auto chip = load_chip(manifest.resolve(manifest.entries.front()));
  enc.in_height = chip.height;
  enc.in_width = chip.width;
  enc.in_bands = static_cast<int>(chip.bands.size());
  return enc;
}

std::vector<std::optional<bool>> manifest_labels(const DatasetManifest& m) {
  std::vector<std::optional<bool>> out;
  for (const auto& e : m.entries) out.push_back(e.irrigated);
  return out;
}

struct PredictionFile {
  std::vector<Prediction> predictions;
  std::vector<std::optional<bool>> labels;
};

PredictionFile load_predictions(const fs::path& path) {
  PredictionFile f;
  parse_predictions_csv(read_text(path), f.predictions, f.labels);
  if (f.predictions.empty()) throw ValidationError("no predictions in " + path.string());
  return f;
}

std::string fraction_tag(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", fraction);
  return buf;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  // The config file is resolved before CLI11 builds the option set, so
  // file values become defaults and explicit flags override them.
  RunConfig cfg;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        cfg = RunConfig::load(argv[i + 1]);
      } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
      }
    }
  }

  std::string default_out = ".";
  if (const char* env = std::getenv("IRRCLR_OUT")) default_out = env;
  default_out = cfg.get_str("run", "out", default_out);
  const std::uint64_t default_seed = std::uint64_t(cfg.get_int("run", "seed", 0));

  CLI::App app{"Self-supervised contrastive pipeline for irrigation detection on "
               "multispectral chips"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Run configuration file (flags take precedence)");

  // ---- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic chip dataset");
  SyntheticConfig synth_cfg;
  synth_cfg.seed = default_seed;
  synth_cfg.n_unlabeled = int(cfg.get_int("synth", "unlabeled", 2000));
  synth_cfg.n_labeled = int(cfg.get_int("synth", "labeled", 400));
  synth_cfg.chip_size = int(cfg.get_int("dataset", "chip_size", 32));
  synth_cfg.class_signal = cfg.get_double("synth", "class_signal", 0.6);
  std::string synth_out = default_out;
  synth->add_option("--seed", synth_cfg.seed, "Dataset seed");
  synth->add_option("--unlabeled", synth_cfg.n_unlabeled, "Unlabeled pool size");
  synth->add_option("--labeled", synth_cfg.n_labeled, "Labeled pool size (even)");
  synth->add_option("--size", synth_cfg.chip_size, "Chip edge length in pixels");
  synth->add_option("--class-signal", synth_cfg.class_signal, "Irrigation signal strength (0,1]");
  synth->add_option("--out", synth_out, "Output directory");

  // ---- stats -------------------------------------------------------------
  auto* stats_cmd = app.add_subcommand("stats", "Compute per-band normalization statistics");
  std::string stats_manifest = cfg.get_str("dataset", "manifest", "");
  std::string stats_out;
  stats_cmd->add_option("--manifest", stats_manifest, "Dataset manifest")->required(stats_manifest.empty());
  stats_cmd->add_option("--out", stats_out, "Stats file (default <out>/stats.txt)");

  // ---- split -------------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "Carve balanced training splits plus holdout");
  std::string split_manifest = cfg.get_str("dataset", "manifest", "");
  double split_fraction = cfg.get_double("split", "fraction", 0.01);
  double split_holdout = cfg.get_double("split", "holdout_fraction", 0.03);
  std::uint64_t split_seed = default_seed;
  std::string split_out = default_out;
  split_cmd->add_option("--manifest", split_manifest, "Labeled manifest")->required(split_manifest.empty());
  split_cmd->add_option("--fraction", split_fraction, "Training fraction of the labeled pool");
  split_cmd->add_option("--holdout-fraction", split_holdout, "Holdout fraction (default 0.03)");
  split_cmd->add_option("--seed", split_seed, "Split seed");
  split_cmd->add_option("--out", split_out, "Output directory");

  // ---- pretrain ----------------------------------------------------------
  auto* pre_cmd = app.add_subcommand("pretrain", "Stage 1: contrastive pretraining on the pool");
  std::string pre_manifest = cfg.get_str("dataset", "manifest", "");
  std::string pre_stats = cfg.get_str("dataset", "stats", "");
  std::string pre_encoder = cfg.get_str("encoder", "preset", "tiny");
  ContrastiveConfig pre_cfg;
  pre_cfg.temperature = cfg.get_double("contrastive", "temperature", 0.1);
  pre_cfg.batch_size = int(cfg.get_int("contrastive", "batch_size", 64));
  pre_cfg.epochs = int(cfg.get_int("contrastive", "epochs", 50));
  pre_cfg.lr = cfg.get_double("contrastive", "lr", 5e-4);
  pre_cfg.proj_dim = int(cfg.get_int("encoder", "proj_dim", 32));
  pre_cfg.seed = default_seed;
  std::string pre_optimizer = cfg.get_str("contrastive", "optimizer", "adam");
  std::string pre_out = default_out;
  pre_cmd->add_option("--manifest", pre_manifest, "Unlabeled pool manifest")->required(pre_manifest.empty());
  pre_cmd->add_option("--stats", pre_stats, "Band stats file")->required(pre_stats.empty());
  pre_cmd->add_option("--encoder", pre_encoder, "Encoder preset (nano|tiny|small|base)");
  pre_cmd->add_option("--temperature", pre_cfg.temperature, "NT-Xent temperature");
  pre_cmd->add_option("--batch-size", pre_cfg.batch_size, "Images per batch (two views each)");
  pre_cmd->add_option("--epochs", pre_cfg.epochs, "Training epochs");
  pre_cmd->add_option("--lr", pre_cfg.lr, "Learning rate (Adam) or initial rate (SGD)");
  pre_cmd->add_option("--optimizer", pre_optimizer, "adam | sgd_cosine");
  pre_cmd->add_option("--proj-dim", pre_cfg.proj_dim, "Projection head width");
  pre_cmd->add_option("--seed", pre_cfg.seed, "Run seed");
  pre_cmd->add_option("--out", pre_out, "Output directory");

  // ---- finetune ----------------------------------------------------------
  auto* ft_cmd = app.add_subcommand("finetune", "Stage 2: classifier fine-tuning");
  std::string ft_ckpt, ft_manifest = cfg.get_str("dataset", "manifest", "");
  std::string ft_stats = cfg.get_str("dataset", "stats", "");
  FinetuneConfig ft_cfg;
  ft_cfg.freeze_encoder = cfg.get_bool("finetune", "freeze_encoder", true);
  ft_cfg.epochs = int(cfg.get_int("finetune", "epochs", 50));
  ft_cfg.lr = cfg.get_double("finetune", "lr", 5e-4);
  ft_cfg.batch_size = int(cfg.get_int("finetune", "batch_size", 64));
  ft_cfg.seed = default_seed;
  std::string ft_out = default_out;
  ft_cmd->add_option("--checkpoint", ft_ckpt, "Pretrain-stage checkpoint")->required();
  ft_cmd->add_option("--manifest", ft_manifest, "Labeled training split")->required(ft_manifest.empty());
  ft_cmd->add_option("--stats", ft_stats, "Band stats file")->required(ft_stats.empty());
  ft_cmd->add_flag("--freeze,!--no-freeze", ft_cfg.freeze_encoder,
                   "Freeze the encoder (default on)");
  ft_cmd->add_option("--epochs", ft_cfg.epochs, "Training epochs");
  ft_cmd->add_option("--lr", ft_cfg.lr, "Learning rate");
  ft_cmd->add_option("--batch-size", ft_cfg.batch_size, "Batch size");
  ft_cmd->add_option("--seed", ft_cfg.seed, "Run seed");
  ft_cmd->add_option("--out", ft_out, "Output directory");

  // ---- distill -----------------------------------------------------------
  auto* di_cmd = app.add_subcommand("distill", "Stage 3: teacher-student distillation");
  std::string di_teacher, di_manifest = cfg.get_str("dataset", "manifest", "");
  std::string di_stats = cfg.get_str("dataset", "stats", "");
  std::string di_student = cfg.get_str("distill", "student", "nano");
  double di_temperature = cfg.get_double("distill", "temperature", 2.0);
  int di_epochs = int(cfg.get_int("distill", "epochs", 50));
  double di_lr = cfg.get_double("distill", "lr", 5e-4);
  int di_batch = int(cfg.get_int("distill", "batch_size", 64));
  std::uint64_t di_seed = default_seed;
  std::string di_out = default_out;
  di_cmd->add_option("--teacher", di_teacher, "Finetune-stage teacher checkpoint")->required();
  di_cmd->add_option("--manifest", di_manifest, "Unlabeled pool manifest")->required(di_manifest.empty());
  di_cmd->add_option("--stats", di_stats, "Band stats file")->required(di_stats.empty());
  di_cmd->add_option("--student", di_student, "Student encoder preset");
  di_cmd->add_option("--temperature", di_temperature, "Distillation temperature");
  di_cmd->add_option("--epochs", di_epochs, "Training epochs");
  di_cmd->add_option("--lr", di_lr, "Learning rate");
  di_cmd->add_option("--batch-size", di_batch, "Batch size");
  di_cmd->add_option("--seed", di_seed, "Run seed");
  di_cmd->add_option("--out", di_out, "Output directory");

  // ---- train-supervised ----------------------------------------------------
  auto* sup_cmd = app.add_subcommand("train-supervised", "Supervised baseline training");
  std::string sup_manifest = cfg.get_str("dataset", "manifest", "");
  std::string sup_stats = cfg.get_str("dataset", "stats", "");
  std::string sup_encoder = cfg.get_str("encoder", "preset", "tiny");
  std::string sup_warm;
  SupervisedConfig sup_cfg;
  sup_cfg.epochs = int(cfg.get_int("supervised", "epochs", 50));
  sup_cfg.lr = cfg.get_double("supervised", "lr", 5e-4);
  sup_cfg.batch_size = int(cfg.get_int("supervised", "batch_size", 64));
  sup_cfg.seed = default_seed;
  std::string sup_out = default_out;
  sup_cmd->add_option("--manifest", sup_manifest, "Labeled training split")->required(sup_manifest.empty());
  sup_cmd->add_option("--stats", sup_stats, "Band stats file")->required(sup_stats.empty());
  sup_cmd->add_option("--encoder", sup_encoder, "Encoder preset");
  sup_cmd->add_option("--warm-start", sup_warm, "Checkpoint to warm-start from");
  sup_cmd->add_option("--epochs", sup_cfg.epochs, "Training epochs");
  sup_cmd->add_option("--lr", sup_cfg.lr, "Learning rate");
  sup_cmd->add_option("--batch-size", sup_cfg.batch_size, "Batch size");
  sup_cmd->add_option("--seed", sup_cfg.seed, "Run seed");
  sup_cmd->add_option("--out", sup_out, "Output directory");

  // ---- predict -------------------------------------------------------------
  auto* pd_cmd = app.add_subcommand("predict", "Classifier probabilities for a manifest");
  std::string pd_ckpt, pd_manifest = cfg.get_str("dataset", "manifest", "");
  std::string pd_stats = cfg.get_str("dataset", "stats", "");
  std::string pd_out;
  pd_cmd->add_option("--checkpoint", pd_ckpt, "Classifier checkpoint")->required();
  pd_cmd->add_option("--manifest", pd_manifest, "Manifest to predict")->required(pd_manifest.empty());
  pd_cmd->add_option("--stats", pd_stats, "Band stats file")->required(pd_stats.empty());
  pd_cmd->add_option("--out", pd_out, "Predictions CSV (default <out>/predictions.csv)");

  // ---- evaluate ------------------------------------------------------------
  auto* ev_cmd = app.add_subcommand("evaluate", "Precision/recall/F1 against labels");
  std::string ev_preds, ev_model = "model", ev_out;
  std::int64_t ev_split = 0;
  ev_cmd->add_option("--predictions", ev_preds, "Predictions CSV with labels")->required();
  ev_cmd->add_option("--model-id", ev_model, "Model id recorded in the report");
  ev_cmd->add_option("--split-size", ev_split, "Training split size recorded in the report");
  ev_cmd->add_option("--out", ev_out, "Metrics JSON (default <out>/metrics.json)");

  // ---- study-precision -------------------------------------------------------
  auto* sp_cmd = app.add_subcommand("study-precision",
                                    "Top-k most confident positives at a minimum confidence");
  std::string sp_preds, sp_model = "model", sp_out;
  std::int64_t sp_k = cfg.get_int("study", "k", 100);
  double sp_min = cfg.get_double("study", "min_confidence", 0.99);
  std::int64_t sp_split = 0;
  sp_cmd->add_option("--predictions", sp_preds, "Predictions CSV")->required();
  sp_cmd->add_option("--k", sp_k, "Selection size");
  sp_cmd->add_option("--min-confidence", sp_min, "Requested confidence threshold");
  sp_cmd->add_option("--model-id", sp_model, "Model id recorded in the report");
  sp_cmd->add_option("--split-size", sp_split, "Training split size recorded in the report");
  sp_cmd->add_option("--out", sp_out, "Study JSON (default <out>/precision_study.json)");

  // ---- study-recall ----------------------------------------------------------
  auto* sr_cmd = app.add_subcommand("study-recall",
                                    "Per-region recall on positives-only ground truth");
  std::string sr_preds, sr_model = "model", sr_out;
  std::int64_t sr_split = 0;
  sr_cmd->add_option("--predictions", sr_preds, "Region-tagged predictions CSV")->required();
  sr_cmd->add_option("--model-id", sr_model, "Model id recorded in the report");
  sr_cmd->add_option("--split-size", sr_split, "Training split size recorded in the report");
  sr_cmd->add_option("--out", sr_out, "Study JSON (default <out>/recall_study.json)");

  // ---- report ----------------------------------------------------------------
  auto* rp_cmd = app.add_subcommand("report", "Render collected metrics as CSV or markdown");
  std::vector<std::string> rp_inputs;
  std::string rp_kind = "metrics", rp_format = "csv", rp_out;
  rp_cmd->add_option("--metrics", rp_inputs, "Metrics JSON files")->required();
  rp_cmd->add_option("--kind", rp_kind, "metrics | precision | recall");
  rp_cmd->add_option("--format", rp_format, "csv | markdown");
  rp_cmd->add_option("--out", rp_out, "Output file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; anything else is a validation error
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      fs::create_directories(synth_out);
      auto manifest = generate_synthetic_dataset(synth_cfg, synth_out);
      ArtifactLog log{synth_out};
      for (const auto& e : manifest.entries) log.add(manifest.resolve(e));
      log.add(fs::path(synth_out) / "manifest.tsv");
      log.write();
      std::printf("dataset=%s entries=%zu\n", (fs::path(synth_out) / "manifest.tsv").c_str(),
                  manifest.entries.size());
    } else if (*stats_cmd) {
      auto manifest = read_manifest(stats_manifest);
      auto stats = compute_band_stats(manifest);
      fs::path out = stats_out.empty() ? fs::path(default_out) / "stats.txt" : fs::path(stats_out);
      write_band_stats(out, stats);
      ArtifactLog log{out.parent_path().empty() ? "." : out.parent_path()};
      log.add(out);
      log.write();
      std::printf("stats=%s bands=%zu\n", out.c_str(), stats.bands.size());
    } else if (*split_cmd) {
      auto manifest = read_manifest(split_manifest);
      auto result = make_splits(manifest, split_fraction, split_seed, split_holdout);
      fs::create_directories(split_out);
      // keep chip paths valid relative to the new location
      const auto base = fs::absolute(manifest.base_dir);
      for (auto* m : {&result.train, &result.holdout}) {
        for (auto& e : m->entries) e.chip_path = (base / e.chip_path).lexically_normal().string();
        m->base_dir = "";
      }
      const fs::path train_path =
          fs::path(split_out) / ("train_" + fraction_tag(split_fraction) + ".tsv");
      const fs::path holdout_path = fs::path(split_out) / "holdout.tsv";
      write_manifest(train_path, result.train);
      write_manifest(holdout_path, result.holdout);
      ArtifactLog log{split_out};
      log.add(train_path);
      log.add(holdout_path);
      log.write();
      std::printf("train=%s records=%lld per_class=%lld holdout=%s records=%lld\n",
                  train_path.c_str(), (long long)result.plan.train_count,
                  (long long)result.plan.train_irrigated, holdout_path.c_str(),
                  (long long)result.plan.holdout_count);
    } else if (*pre_cmd) {
      auto manifest = read_manifest(pre_manifest);
      auto stats = read_band_stats(pre_stats);
      auto enc = encoder_for_manifest(pre_encoder, manifest);
      auto opt = optimizer_from_name(pre_optimizer);
      if (!opt) throw ValidationError("unknown optimizer '" + pre_optimizer + "'");
      pre_cfg.optimizer = *opt;
      auto result = pretrain(manifest, stats, enc, pre_cfg, progress_printer("pretrain"));
      fs::create_directories(pre_out);
      const fs::path ckpt_path = fs::path(pre_out) / "pretrain.ckpt";
      save_checkpoint(ckpt_path, result.checkpoint);
      const fs::path log_path = fs::path(pre_out) / "pretrain_loss.csv";
      write_text(log_path, epoch_log_csv(result.log, "mean_loss"));
      ArtifactLog log{pre_out};
      log.add(ckpt_path);
      log.add(log_path);
      log.write();
      std::printf("checkpoint=%s digest=%s final_loss=%.9g\n", ckpt_path.c_str(),
                  result.checkpoint.digest.c_str(), result.log.back().loss);
    } else if (*ft_cmd) {
      auto ckpt = load_checkpoint(ft_ckpt);
      auto manifest = read_manifest(ft_manifest);
      auto stats = read_band_stats(ft_stats);
      auto result = finetune(ckpt, manifest, stats, ft_cfg, progress_printer("finetune"));
      fs::create_directories(ft_out);
      const fs::path ckpt_path = fs::path(ft_out) / "finetune.ckpt";
      save_checkpoint(ckpt_path, result.checkpoint);
      const fs::path log_path = fs::path(ft_out) / "finetune_loss.csv";
      write_text(log_path, epoch_log_csv(result.log, "loss"));
      ArtifactLog log{ft_out};
      log.add(ckpt_path);
      log.add(log_path);
      log.write();
      std::printf("checkpoint=%s digest=%s final_loss=%.9g\n", ckpt_path.c_str(),
                  result.checkpoint.digest.c_str(), result.log.back().loss);
    } else if (*di_cmd) {
      auto teacher = load_checkpoint(di_teacher);
      auto manifest = read_manifest(di_manifest);
      auto stats = read_band_stats(di_stats);
      DistillConfig dcfg;
      dcfg.student = encoder_for_manifest(di_student, manifest);
      dcfg.temperature = di_temperature;
      dcfg.epochs = di_epochs;
      dcfg.lr = di_lr;
      dcfg.batch_size = di_batch;
      dcfg.seed = di_seed;
      auto result = distill(teacher, manifest, stats, dcfg, progress_printer("distill"));
      fs::create_directories(di_out);
      const fs::path ckpt_path = fs::path(di_out) / "distill.ckpt";
      save_checkpoint(ckpt_path, result.checkpoint);
      const fs::path log_path = fs::path(di_out) / "distill_loss.csv";
      write_text(log_path, epoch_log_csv(result.log, "loss"));
      ArtifactLog log{di_out};
      log.add(ckpt_path);
      log.add(log_path);
      log.write();
      std::printf("checkpoint=%s digest=%s final_loss=%.9g\n", ckpt_path.c_str(),
                  result.checkpoint.digest.c_str(), result.log.back().loss);
    } else if (*sup_cmd) {
      auto manifest = read_manifest(sup_manifest);
      auto stats = read_band_stats(sup_stats);
      auto enc = encoder_for_manifest(sup_encoder, manifest);
      std::optional<Checkpoint> warm;
      if (!sup_warm.empty()) warm = load_checkpoint(sup_warm);
      auto result =
          train_supervised(manifest, stats, enc, warm, sup_cfg, progress_printer("supervised"));
      fs::create_directories(sup_out);
      const fs::path ckpt_path = fs::path(sup_out) / "supervised.ckpt";
      save_checkpoint(ckpt_path, result.checkpoint);
      const fs::path log_path = fs::path(sup_out) / "supervised_loss.csv";
      write_text(log_path, epoch_log_csv(result.log, "loss"));
      ArtifactLog log{sup_out};
      log.add(ckpt_path);
      log.add(log_path);
      log.write();
      std::printf("checkpoint=%s digest=%s final_loss=%.9g\n", ckpt_path.c_str(),
                  result.checkpoint.digest.c_str(), result.log.back().loss);
    } else if (*pd_cmd) {
      auto net = network_from_checkpoint(load_checkpoint(pd_ckpt));
      auto manifest = read_manifest(pd_manifest);
      auto stats = read_band_stats(pd_stats);
      auto preds = predict_manifest(net, manifest, stats);
      fs::path out =
          pd_out.empty() ? fs::path(default_out) / "predictions.csv" : fs::path(pd_out);
      write_text(out, predictions_to_csv(preds, manifest_labels(manifest)));
      ArtifactLog log{out.parent_path().empty() ? "." : out.parent_path()};
      log.add(out);
      log.write();
      std::printf("predictions=%s records=%zu\n", out.c_str(), preds.size());
    } else if (*ev_cmd) {
      auto file = load_predictions(ev_preds);
      std::vector<Prediction> labeled;
      std::vector<bool> labels;
      for (std::size_t i = 0; i < file.predictions.size(); ++i) {
        if (file.labels[i]) {
          labeled.push_back(file.predictions[i]);
          labels.push_back(*file.labels[i]);
        }
      }
      auto report = confusion_metrics(labeled, labels);
      report.model_id = ev_model;
      report.split_size = ev_split;
      fs::path out = ev_out.empty() ? fs::path(default_out) / "metrics.json" : fs::path(ev_out);
      write_text(out, metrics_to_json(report));
      std::printf("precision=%.4f recall=%.4f f1=%.4f support=%lld\n", report.precision,
                  report.recall, report.f1, (long long)(report.tp + report.fp + report.tn + report.fn));
    } else if (*sp_cmd) {
      auto file = load_predictions(sp_preds);
      auto selection = top_k_confident(file.predictions, sp_k, sp_min);

      MetricsReport report;
      report.model_id = sp_model;
      report.split_size = sp_split;
      report.effective_threshold = selection.effective_threshold;
      bool all_labeled = true;
      std::int64_t truly = 0;
      for (std::size_t idx : selection.indices) {
        if (!file.labels[idx]) {
          all_labeled = false;
        } else if (*file.labels[idx]) {
          ++truly;
        }
      }
      if (all_labeled) {
        report.precision = double(truly) / double(selection.ids.size());
        report.tp = truly;
        report.fp = std::int64_t(selection.ids.size()) - truly;
        report.aggregation_note = std::string("top-") + std::to_string(sp_k) +
                                  " ground-truth lookup; below_requested=" +
                                  (selection.below_requested ? "true" : "false");
      } else {
        report.aggregation_note = std::string("top-") + std::to_string(sp_k) +
                                  " unlabeled study, confidence flags only; below_requested=" +
                                  (selection.below_requested ? "true" : "false");
      }
      fs::path out = sp_out.empty() ? fs::path(default_out) / "precision_study.json"
                                    : fs::path(sp_out);
      write_text(out, metrics_to_json(report));
      std::printf("selected=%zu effective_threshold=%.6f below_requested=%s\n",
                  selection.ids.size(), selection.effective_threshold,
                  selection.below_requested ? "true" : "false");
    } else if (*sr_cmd) {
      auto file = load_predictions(sr_preds);
      for (std::size_t i = 0; i < file.labels.size(); ++i) {
        if (file.labels[i] && !*file.labels[i]) {
          throw ValidationError("study-recall expects positives-only ground truth");
        }
      }
      auto rows = recall_by_region(file.predictions);
      MetricsReport report;
      report.model_id = sr_model;
      report.split_size = sr_split;
      report.region_rows = rows;
      report.recall = rows.back().recall;  // overall row
      report.aggregation_note = "positives-only recall study";
      fs::path out =
          sr_out.empty() ? fs::path(default_out) / "recall_study.json" : fs::path(sr_out);
      write_text(out, metrics_to_json(report));
      for (const auto& row : rows) {
        std::printf("region=%s n=%lld recall=%.4f\n", row.region.c_str(), (long long)row.n,
                    row.recall);
      }
    } else if (*rp_cmd) {
      std::vector<MetricsReport> metrics;
      for (const auto& path : rp_inputs) metrics.push_back(metrics_from_json(read_text(path)));

      StudyReport study;
      if (rp_kind == "metrics") {
        study.metrics = metrics;
      } else if (rp_kind == "precision") {
        std::map<std::int64_t, PrecisionStudyRow> rows;
        for (const auto& m : metrics) {
          auto& row = rows[m.split_size];
          row.training_size = m.split_size;
          if (m.model_id == "simclr-s2") row.simclr_s2 = m.precision;
          else if (m.model_id == "supervised") row.supervised = m.precision;
          else throw ValidationError("precision report expects model ids simclr-s2/supervised");
        }
        for (auto& [size, row] : rows) study.precision_rows.push_back(row);
      } else if (rp_kind == "recall") {
        const MetricsReport* simclr = nullptr;
        const MetricsReport* supervised = nullptr;
        for (const auto& m : metrics) {
          if (m.model_id == "simclr-s2") simclr = &m;
          else if (m.model_id == "supervised") supervised = &m;
          else throw ValidationError("recall report expects model ids simclr-s2/supervised");
        }
        if (!simclr || !supervised) {
          throw ValidationError("recall report needs one simclr-s2 and one supervised input");
        }
        for (const auto& row : simclr->region_rows) {
          if (row.region == "overall") continue;
          RecallStudyRow out_row;
          out_row.country = row.region;
          out_row.training_size = simclr->split_size;
          out_row.simclr_s2 = row.recall;
          for (const auto& srow : supervised->region_rows) {
            if (srow.region == row.region) out_row.supervised = srow.recall;
          }
          study.recall_rows.push_back(out_row);
        }
      } else {
        throw ValidationError("unknown report kind '" + rp_kind + "'");
      }

      ReportFormat format;
      if (rp_format == "csv") format = ReportFormat::Csv;
      else if (rp_format == "markdown") format = ReportFormat::Markdown;
      else throw ValidationError("unknown report format '" + rp_format + "'");

      const std::string rendered = emit_report(study, format);
      if (rp_out.empty()) {
        std::fwrite(rendered.data(), 1, rendered.size(), stdout);
      } else {
        write_text(rp_out, rendered);
        std::printf("report=%s\n", rp_out.c_str());
      }
    }
  } catch (const RuntimeFailure& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected failure: %s\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace irrclr::cli
