#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "irrclr/contrastive.hpp"
#include "irrclr/rng.hpp"
#include "oracles.hpp"

using namespace irrclr;
namespace fs = std::filesystem;

namespace {

TensorD rows_tensor(const std::vector<std::vector<double>>& rows) {
  TensorD t = TensorD::zeros({std::int64_t(rows.size()), std::int64_t(rows[0].size())});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.v[i * rows[0].size() + j] = rows[i][j];
  }
  return t;
}

std::vector<std::vector<double>> random_unit_rows(std::int64_t two_n, std::int64_t d,
                                                  rng::Stream& s) {
  std::vector<std::vector<double>> rows(std::size_t(two_n),
                                        std::vector<double>(std::size_t(d), 0.0));
  for (auto& row : rows) {
    double norm = 0.0;
    for (auto& v : row) {
      v = s.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : row) v /= norm;
  }
  return rows;
}

}  // namespace

TEST_CASE("closed forms: identical embeddings give ln(2N-1), orthogonal pairs give -log(e/(e+2))") {
  for (double t : {0.05, 0.1, 0.5, 1.0}) {
    auto result = nt_xent_loss(rows_tensor({{0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}, {0.6, 0.8}}), t);
    CHECK(result.loss == doctest::Approx(std::log(3.0)).epsilon(1e-4));
    CHECK(result.loss == doctest::Approx(1.0986).epsilon(1e-4));
  }

  auto result = nt_xent_loss(rows_tensor({{1, 0}, {1, 0}, {0, 1}, {0, 1}}), 1.0);
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  CHECK(result.loss == doctest::Approx(expected).epsilon(1e-6));
  CHECK(result.loss == doctest::Approx(0.5514).epsilon(1e-4));
  for (double term : result.per_pair) CHECK(term == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("matches the brute-force oracle for random batches") {
  for (std::int64_t n : {2, 3, 5, 8}) {
    for (double t : {0.05, 0.1, 0.5, 1.0}) {
      for (int trial = 0; trial < 5; ++trial) {
        rng::Stream s(rng::derive(100, "ntxent", std::uint64_t(n), std::uint64_t(trial),
                                  std::uint64_t(t * 1000)));
        auto rows = random_unit_rows(2 * n, 6, s);
        auto got = nt_xent_loss(rows_tensor(rows), t);
        const double want = oracle::nt_xent(rows, t);
        CHECK(std::abs(got.loss - want) <= 1e-6);
        CHECK(got.loss > 0.0);
        // mean of per-pair terms equals the loss
        double mean = 0.0;
        for (double term : got.per_pair) mean += term;
        CHECK(mean / double(got.per_pair.size()) == doctest::Approx(got.loss).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("invariant under image permutation and common rotation") {
  rng::Stream s(rng::derive(3, "perm"));
  auto rows = random_unit_rows(8, 5, s);
  const double base = nt_xent_loss(rows_tensor(rows), 0.2).loss;

  // permute source images (swap row pairs jointly)
  auto permuted = rows;
  std::swap(permuted[0], permuted[4]);
  std::swap(permuted[1], permuted[5]);
  std::swap(permuted[2], permuted[6]);
  std::swap(permuted[3], permuted[7]);
  CHECK(nt_xent_loss(rows_tensor(permuted), 0.2).loss == doctest::Approx(base).epsilon(1e-9));

  // random orthogonal matrix via Gram-Schmidt
  const std::int64_t d = 5;
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (auto& col : q) {
    for (auto& v : col) v = s.normal();
  }
  for (std::int64_t i = 0; i < d; ++i) {
    for (std::int64_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::int64_t k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
      for (std::int64_t k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
    }
    double norm = 0.0;
    for (double v : q[i]) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& v : q[i]) v /= norm;
  }
  auto rotated = rows;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::int64_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < d; ++k) acc += q[i][k] * rows[r][k];
      rotated[r][i] = acc;
    }
  }
  CHECK(nt_xent_loss(rows_tensor(rotated), 0.2).loss == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("raising a positive pair's cosine strictly lowers its term") {
  // z0 lives in the (e1,e2) plane, its negatives are orthogonal to it, so
  // only the positive similarity varies along the sweep
  double prev = 1e18;
  for (double theta : {1.2, 0.8, 0.4, 0.1}) {
    auto rows = rows_tensor({{std::cos(theta), std::sin(theta), 0, 0},
                             {1, 0, 0, 0},
                             {0, 0, 1, 0},
                             {0, 0, 1, 0}});
    auto result = nt_xent_loss(rows, 0.5);
    CHECK(result.per_pair[0] < prev);
    prev = result.per_pair[0];
  }
}

TEST_CASE("nt_xent gradient passes central differences through the graph") {
  rng::Stream s(rng::derive(9, "ntgrad"));
  Graph g;
  NodeId z = g.input("z", {6, 4}, true);
  NodeId loss = append_nt_xent(g, g.l2_normalize(z), 6, 0.3);
  TensorMap<double> inputs = {{"z", oracle::random_tensor({6, 4}, s, -1.0, 1.0)}};
  auto fd = oracle::fd_check(g, loss, inputs);
  INFO("worst: ", fd.worst_input);
  CHECK(fd.max_score <= 1.0);
}

TEST_CASE("degenerate batches are rejected") {
  CHECK_THROWS_AS(nt_xent_loss(TensorD::zeros({3, 4}), 0.1), OddRowCount);
  CHECK_THROWS_AS(nt_xent_loss(TensorD::zeros({4, 4}), 0.0), NonPositiveTemperature);
  CHECK_THROWS_AS(nt_xent_loss(TensorD::zeros({4, 4}), -1.0), NonPositiveTemperature);
}

TEST_CASE("epoch log csv format") {
  std::vector<EpochLog> log = {{0, 4.75123456789, 5e-4}, {1, 4.0, 5e-4}};
  const std::string csv = epoch_log_csv(log, "mean_loss");
  CHECK(csv == "epoch,mean_loss,learning_rate\n0,4.75123457,0.0005\n1,4,0.0005\n");
}

TEST_CASE("pretrain smoke run: deterministic checkpoints, loss log") {
  auto dir = fs::temp_directory_path() / "irrclr_test_pretrain";
  fs::remove_all(dir);
  SyntheticConfig synth;
  synth.seed = 5;
  synth.n_unlabeled = 48;
  synth.n_labeled = 2;
  synth.chip_size = 16;
  synth.class_signal = 0.8;
  auto manifest = generate_synthetic_dataset(synth, dir);
  auto stats = compute_band_stats(manifest);

  EncoderConfig enc = EncoderConfig::preset("nano");
  enc.in_height = 16;
  enc.in_width = 16;

  ContrastiveConfig cfg;
  cfg.batch_size = 16;
  cfg.epochs = 2;
  cfg.seed = 21;
  cfg.proj_dim = 8;

  auto run1 = pretrain(manifest, stats, enc, cfg);
  auto run2 = pretrain(manifest, stats, enc, cfg);
  CHECK(run1.checkpoint.digest == run2.checkpoint.digest);
  CHECK(run1.checkpoint.provenance.stage == TrainStage::Pretrain);
  REQUIRE(run1.log.size() == 2);
  CHECK(std::isfinite(run1.log[0].loss));
  CHECK(run1.log[0].loss > 0.0);

  ContrastiveConfig other = cfg;
  other.seed = 22;
  CHECK(pretrain(manifest, stats, enc, other).checkpoint.digest != run1.checkpoint.digest);

  // a labeled-only manifest has no unlabeled pool bigger than one batch
  DatasetManifest tiny;
  tiny.base_dir = dir;
  tiny.entries.push_back(manifest.entries[0]);
  CHECK_THROWS_AS(pretrain(tiny, stats, enc, cfg), EmptyPool);
}

TEST_CASE("sgd with cosine decay does not beat adam on the same budget") {
  auto dir = fs::temp_directory_path() / "irrclr_test_optims";
  fs::remove_all(dir);
  SyntheticConfig synth;
  synth.seed = 31;
  synth.n_unlabeled = 96;
  synth.n_labeled = 2;
  synth.chip_size = 16;
  synth.class_signal = 0.8;
  auto manifest = generate_synthetic_dataset(synth, dir);
  auto stats = compute_band_stats(manifest);

  EncoderConfig enc = EncoderConfig::preset("nano");
  enc.in_height = 16;
  enc.in_width = 16;

  ContrastiveConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = 6;
  cfg.seed = 8;
  cfg.proj_dim = 8;

  cfg.optimizer = OptimizerKind::Adam;
  const double adam_final = pretrain(manifest, stats, enc, cfg).log.back().loss;
  cfg.optimizer = OptimizerKind::SgdCosine;
  const double sgd_final = pretrain(manifest, stats, enc, cfg).log.back().loss;
  CHECK(sgd_final >= adam_final);
}
