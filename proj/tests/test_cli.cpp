#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "cli.hpp"
#include "irrclr/model.hpp"
#include "irrclr/eval.hpp"
#include "irrclr/raster.hpp"

using namespace irrclr;
namespace fs = std::filesystem;

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"irrclr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::dispatch(static_cast<int>(argv.size()), argv.data());
}

fs::path temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("irrclr_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::map<std::string, std::string> read_artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  std::ifstream in(dir / "artifacts.tsv");
  REQUIRE(in.good());
  std::string line;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    out[line.substr(0, tab)] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace

TEST_CASE("help exits zero for the app and for every subcommand") {
  CHECK(run({"--help"}) == 0);
  for (const char* sub : {"synth", "stats", "split", "pretrain", "finetune", "distill",
                          "train-supervised", "predict", "evaluate", "study-precision",
                          "study-recall", "report"}) {
    CHECK(run({sub, "--help"}) == 0);
  }
}

TEST_CASE("unknown subcommands and bad inputs are validation errors") {
  CHECK(run({"frobnicate"}) == 1);
  CHECK(run({"stats", "--manifest", "/nonexistent/manifest.tsv"}) == 1);
  CHECK(run({"synth", "--labeled", "7", "--unlabeled", "4", "--out",
             temp_dir("oddlab").string()}) == 1);  // odd labeled count
}

TEST_CASE("synth runs are reproducible artifact for artifact") {
  auto a = temp_dir("synth_a");
  auto b = temp_dir("synth_b");
  const std::vector<std::string> base = {"synth", "--seed", "7", "--unlabeled", "12",
                                         "--labeled", "6", "--size", "16"};
  auto with_out = [&](const fs::path& dir) {
    auto args = base;
    args.push_back("--out");
    args.push_back(dir.string());
    return args;
  };
  REQUIRE(run(with_out(a)) == 0);
  REQUIRE(run(with_out(b)) == 0);
  CHECK(read_artifacts(a) == read_artifacts(b));

  auto c = temp_dir("synth_c");
  auto args = with_out(c);
  args[2] = "8";  // different seed
  REQUIRE(run(args) == 0);
  CHECK(read_artifacts(c) != read_artifacts(a));
}

TEST_CASE("split of a 19024-record manifest at 1% yields 190 records") {
  auto dir = temp_dir("ladder");
  {
    std::ofstream out(dir / "labeled.tsv");
    for (int i = 0; i < 19024; ++i) {
      out << "chip_" << i << ".msc1\t" << (i % 2) << "\t-\t-\n";
    }
  }
  REQUIRE(run({"split", "--manifest", (dir / "labeled.tsv").string(), "--fraction", "0.01",
               "--seed", "9", "--out", (dir / "splits").string()}) == 0);
  auto train = read_manifest(dir / "splits" / "train_0.01.tsv");
  CHECK(train.entries.size() == 190);
  int irr = 0;
  for (const auto& e : train.entries) irr += e.irrigated.value_or(false);
  CHECK(irr == 95);
  auto holdout = read_manifest(dir / "splits" / "holdout.tsv");
  CHECK(holdout.entries.size() == 570);
}

TEST_CASE("full pipeline produces a valid provenance chain") {
  auto dir = temp_dir("pipeline");
  const std::string ds = (dir / "ds").string();
  const std::string rn = (dir / "run").string();
  REQUIRE(run({"synth", "--seed", "3", "--unlabeled", "32", "--labeled", "68", "--size", "16",
               "--class-signal", "0.9", "--out", ds}) == 0);
  REQUIRE(run({"stats", "--manifest", ds + "/manifest.tsv", "--out", ds + "/stats.txt"}) == 0);
  REQUIRE(run({"split", "--manifest", ds + "/manifest.tsv", "--fraction", "0.5", "--seed", "3",
               "--out", rn}) == 0);
  REQUIRE(run({"pretrain", "--manifest", ds + "/manifest.tsv", "--stats", ds + "/stats.txt",
               "--encoder", "nano", "--epochs", "2", "--batch-size", "16", "--proj-dim", "8",
               "--seed", "3", "--out", rn}) == 0);
  REQUIRE(run({"finetune", "--checkpoint", rn + "/pretrain.ckpt", "--manifest",
               rn + "/train_0.5.tsv", "--stats", ds + "/stats.txt", "--epochs", "3", "--seed",
               "4", "--out", rn}) == 0);
  REQUIRE(run({"distill", "--teacher", rn + "/finetune.ckpt", "--manifest", ds + "/manifest.tsv",
               "--stats", ds + "/stats.txt", "--student", "nano", "--epochs", "2", "--seed", "5",
               "--out", rn}) == 0);

  auto pre = load_checkpoint(rn + "/pretrain.ckpt");
  auto ft = load_checkpoint(rn + "/finetune.ckpt");
  auto di = load_checkpoint(rn + "/distill.ckpt");
  CHECK(pre.provenance.stage == TrainStage::Pretrain);
  CHECK(ft.provenance.stage == TrainStage::Finetune);
  CHECK(di.provenance.stage == TrainStage::Distill);
  CHECK(ft.provenance.source_digest == pre.digest);
  CHECK(di.provenance.source_digest == ft.digest);

  // evaluation flows
  REQUIRE(run({"predict", "--checkpoint", rn + "/finetune.ckpt", "--manifest",
               rn + "/holdout.tsv", "--stats", ds + "/stats.txt", "--out",
               rn + "/preds.csv"}) == 0);
  REQUIRE(run({"evaluate", "--predictions", rn + "/preds.csv", "--model-id", "simclr-s2",
               "--split-size", "34", "--out", rn + "/m_simclr.json"}) == 0);
  REQUIRE(run({"evaluate", "--predictions", rn + "/preds.csv", "--model-id", "supervised",
               "--split-size", "34", "--out", rn + "/m_sup.json"}) == 0);
  {
    std::ofstream preds(rn + "/study_preds.csv");
    preds << "id,p,label,region\na,0.999,1,-\nb,0.98,1,-\nc,0.92,0,-\nd,0.4,1,-\n";
  }
  REQUIRE(run({"study-precision", "--predictions", rn + "/study_preds.csv", "--k", "3",
               "--min-confidence", "0.99", "--model-id", "simclr-s2", "--out",
               rn + "/prec_study.json"}) == 0);
  {
    std::ifstream in(rn + "/prec_study.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto report = metrics_from_json(text);
    CHECK(report.precision == doctest::Approx(2.0 / 3.0));
    CHECK(report.effective_threshold == doctest::Approx(0.92));
    CHECK(report.aggregation_note.find("below_requested=true") != std::string::npos);
  }
  REQUIRE(run({"report", "--kind", "precision", "--metrics", rn + "/m_simclr.json", "--metrics",
               rn + "/m_sup.json", "--format", "markdown", "--out", rn + "/table.md"}) == 0);
  std::ifstream table(rn + "/table.md");
  std::string first_line;
  std::getline(table, first_line);
  CHECK(first_line ==
        "| Training data size (num records) | Precision (SimCLR-S2) | Precision (supervised) |");

  // a positives-only region study
  {
    auto holdout = read_manifest(rn + "/holdout.tsv");
    DatasetManifest positives;
    positives.base_dir = holdout.base_dir;
    for (auto e : holdout.entries) {
      if (e.irrigated == true) positives.entries.push_back(e);
    }
    REQUIRE(!positives.entries.empty());
    write_manifest(rn + "/positives.tsv", positives);
  }
  REQUIRE(run({"predict", "--checkpoint", rn + "/finetune.ckpt", "--manifest",
               rn + "/positives.tsv", "--stats", ds + "/stats.txt", "--out",
               rn + "/pos_preds.csv"}) == 0);
  REQUIRE(run({"study-recall", "--predictions", rn + "/pos_preds.csv", "--model-id",
               "simclr-s2", "--out", rn + "/recall_study.json"}) == 0);

  // identical reruns reproduce identical digests
  const std::string rn2 = (dir / "run2").string();
  REQUIRE(run({"split", "--manifest", ds + "/manifest.tsv", "--fraction", "0.5", "--seed", "3",
               "--out", rn2}) == 0);
  REQUIRE(run({"pretrain", "--manifest", ds + "/manifest.tsv", "--stats", ds + "/stats.txt",
               "--encoder", "nano", "--epochs", "2", "--batch-size", "16", "--proj-dim", "8",
               "--seed", "3", "--out", rn2}) == 0);
  CHECK(load_checkpoint(rn2 + "/pretrain.ckpt").digest == pre.digest);
}

TEST_CASE("corrupt checkpoints are runtime failures (exit 2)") {
  auto dir = temp_dir("corrupt");
  const std::string ds = (dir / "ds").string();
  REQUIRE(run({"synth", "--seed", "1", "--unlabeled", "16", "--labeled", "4", "--size", "16",
               "--out", ds}) == 0);
  REQUIRE(run({"stats", "--manifest", ds + "/manifest.tsv", "--out", ds + "/stats.txt"}) == 0);
  REQUIRE(run({"pretrain", "--manifest", ds + "/manifest.tsv", "--stats", ds + "/stats.txt",
               "--encoder", "nano", "--epochs", "1", "--batch-size", "8", "--proj-dim", "8",
               "--seed", "1", "--out", ds}) == 0);

  // flip one byte in the middle of the checkpoint
  const std::string ckpt = ds + "/pretrain.ckpt";
  std::fstream f(ckpt, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  const auto size = f.tellg();
  f.seekp(static_cast<std::streamoff>(size) / 2);
  char byte = 0;
  f.seekg(static_cast<std::streamoff>(size) / 2);
  f.read(&byte, 1);
  byte ^= 0x01;
  f.seekp(static_cast<std::streamoff>(size) / 2);
  f.write(&byte, 1);
  f.close();

  CHECK(run({"finetune", "--checkpoint", ckpt, "--manifest", ds + "/manifest.tsv", "--stats",
             ds + "/stats.txt", "--epochs", "1", "--out", ds}) == 2);
}

TEST_CASE("IRRCLR_OUT provides the default output directory") {
  auto dir = temp_dir("envout");
  setenv("IRRCLR_OUT", dir.c_str(), 1);
  CHECK(run({"synth", "--seed", "4", "--unlabeled", "6", "--labeled", "2", "--size", "16"}) == 0);
  unsetenv("IRRCLR_OUT");
  CHECK(fs::exists(dir / "manifest.tsv"));
  CHECK(fs::exists(dir / "artifacts.tsv"));
}

TEST_CASE("config file values feed defaults and flags still win") {
  auto dir = temp_dir("config");
  const std::string ds = (dir / "ds").string();
  REQUIRE(run({"synth", "--seed", "2", "--unlabeled", "16", "--labeled", "4", "--size", "16",
               "--out", ds}) == 0);
  REQUIRE(run({"stats", "--manifest", ds + "/manifest.tsv", "--out", ds + "/stats.txt"}) == 0);

  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "[run]\nseed = 11\nout = " << (dir / "out").string() << "\n"
        << "[dataset]\nmanifest = " << ds << "/manifest.tsv\nstats = " << ds << "/stats.txt\n"
        << "[encoder]\npreset = nano\nproj_dim = 8\n"
        << "[contrastive]\nepochs = 2\nbatch_size = 8\n";
  }
  REQUIRE(run({"--config", (dir / "run.cfg").string(), "pretrain"}) == 0);
  {
    std::ifstream log(dir / "out" / "pretrain_loss.csv");
    REQUIRE(log.good());
    std::string text((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // header + 2 epochs
  }
  // flag overrides the config's epochs
  REQUIRE(run({"--config", (dir / "run.cfg").string(), "pretrain", "--epochs", "1"}) == 0);
  {
    std::ifstream log(dir / "out" / "pretrain_loss.csv");
    std::string text((std::istreambuf_iterator<char>(log)), std::istreambuf_iterator<char>());
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  }

  std::ofstream bad(dir / "bad.cfg");
  bad << "[contrastive]\nwarmup = 5\n";
  bad.close();
  CHECK(run({"--config", (dir / "bad.cfg").string(), "pretrain"}) == 1);
}
