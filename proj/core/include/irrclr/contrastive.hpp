#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "irrclr/graph.hpp"
#include "irrclr/model.hpp"
#include "irrclr/raster.hpp"

namespace irrclr {

struct OddRowCount : ValidationError { using ValidationError::ValidationError; };
struct NonPositiveTemperature : ValidationError { using ValidationError::ValidationError; };
struct EmptyPool : ValidationError { using ValidationError::ValidationError; };
struct DivergedLoss : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };

enum class OptimizerKind { Adam, SgdCosine };

std::string optimizer_name(OptimizerKind kind);
std::optional<OptimizerKind> optimizer_from_name(const std::string& name);

struct ContrastiveConfig {
  double temperature = 0.1;
  int batch_size = 64;
  int epochs = 50;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 5e-4;  // Adam rate, or the initial rate for SGD + cosine decay
  int proj_dim = 32;
  std::uint64_t seed = 0;
};

// Rows 2i and 2i+1 are the two views of source image i. The loss over one
// ordered pair (i,j) is -log( exp(sim_ij/t) / sum_{k != i} exp(sim_ik/t) )
// with cosine similarity; the total is the mean over all 2N ordered
// positive pairs.
struct NtXentResult {
  double loss = 0.0;
  std::vector<double> per_pair;  // one term per row, ordered
};

// Standalone evaluation (double precision through the graph engine).
// Embeddings are re-normalized, so sims are true cosines.
NtXentResult nt_xent_loss(const TensorD& embeddings, double temperature);

// Appends the NT-Xent subgraph to a graph whose node z yields (2N, D)
// unit-norm rows; returns the scalar loss node.
NodeId append_nt_xent(Graph& g, NodeId z, std::int64_t two_n, double temperature);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

// CSV with a header row and 9-significant-digit values.
std::string epoch_log_csv(const std::vector<EpochLog>& log, const std::string& loss_column);

using ProgressFn = std::function<void(int epoch, double loss, double lr)>;

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;  // epoch, mean_loss, learning_rate
};

// Stage 1: per epoch, shuffle the pool by seed, draw two augmented views
// per chip, minimize NT-Xent. Incomplete trailing batches are dropped.
// Deterministic for a fixed (seed, config).
PretrainResult pretrain(const DatasetManifest& pool, const BandStats& stats,
                        const EncoderConfig& encoder, const ContrastiveConfig& cfg,
                        const ProgressFn& progress = nullptr);

}  // namespace irrclr
