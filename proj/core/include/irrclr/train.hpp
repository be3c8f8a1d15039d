#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irrclr/contrastive.hpp"
#include "irrclr/eval.hpp"
#include "irrclr/model.hpp"
#include "irrclr/raster.hpp"

namespace irrclr {

struct InsufficientClassRecords : ValidationError { using ValidationError::ValidationError; };
struct EmptySplit : ValidationError { using ValidationError::ValidationError; };

struct SplitPlan {
  double fraction = 1.0;
  double holdout_fraction = 0.03;
  std::uint64_t seed = 0;
  std::int64_t pool_size = 0;
  std::int64_t requested = 0;       // floor(fraction * pool), floored to even
  std::int64_t train_count = 0;     // capped by per-class availability
  std::int64_t train_irrigated = 0;
  std::int64_t train_not_irrigated = 0;
  std::int64_t holdout_count = 0;
};

struct SplitResult {
  SplitPlan plan;
  DatasetManifest train;
  DatasetManifest holdout;
};

// Balanced prefix sampling: the holdout (3% by default, balanced) is
// reserved first; every training split takes a per-class prefix of one
// seeded shuffle, so smaller fractions are subsets of larger ones under
// the same seed.
SplitResult make_splits(const DatasetManifest& labeled, double fraction, std::uint64_t seed,
                        double holdout_fraction = 0.03);

struct SupervisedConfig {
  int epochs = 50;
  double lr = 5e-4;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct FinetuneConfig {
  bool freeze_encoder = true;
  int epochs = 50;
  double lr = 5e-4;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct DistillConfig {
  EncoderConfig student;
  double temperature = 2.0;
  int epochs = 50;
  double lr = 5e-4;
  int batch_size = 64;
  std::uint64_t seed = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;  // epoch, loss, lr
};

// Cross entropy over 2-way logits against one-hot targets, computed as
// mean(logsumexp(row) - logit[target]).
NodeId append_cross_entropy(Graph& g, NodeId logits, NodeId onehot, std::int64_t batch,
                            std::int64_t classes);

// T^2 * mean KL(teacher softened || student softened). teacher_probs is an
// input of softened probabilities; returns the scalar loss node.
NodeId append_distill_kl(Graph& g, NodeId student_logits, NodeId teacher_probs,
                         double temperature, std::int64_t batch);

// Softened probabilities softmax(logits / T) through the graph kernels.
TensorF soften_logits(const TensorF& logits, double temperature);

// Standalone distillation loss on raw logits, evaluated in double.
double distill_loss(const TensorD& teacher_logits, const TensorD& student_logits,
                    double temperature);

// Full network trained end to end with cross entropy, from scratch or
// warm-started from a pretrain/supervised checkpoint.
TrainResult train_supervised(const DatasetManifest& labeled, const BandStats& stats,
                             const EncoderConfig& encoder,
                             const std::optional<Checkpoint>& warm_start,
                             const SupervisedConfig& cfg, const ProgressFn& progress = nullptr);

// Stage 2: drops the projection head, attaches a fresh classifier. With
// freeze_encoder the encoder tensors (and norm running stats) stay
// bit-identical and only the head trains, on precomputed embeddings.
TrainResult finetune(const Checkpoint& pretrained, const DatasetManifest& labeled,
                     const BandStats& stats, const FinetuneConfig& cfg,
                     const ProgressFn& progress = nullptr);

// Stage 3: the finetune-stage teacher labels the unlabeled pool with
// softened probabilities; the student (same size or smaller, all layers
// trainable) minimizes T^2 * KL against them.
TrainResult distill(const Checkpoint& teacher, const DatasetManifest& unlabeled,
                    const BandStats& stats, const DistillConfig& cfg,
                    const ProgressFn& progress = nullptr);

// Classifier probabilities for every manifest entry, in manifest order.
// Prediction ids are the chip paths; region tags carry over.
std::vector<Prediction> predict_manifest(const Network& net, const DatasetManifest& manifest,
                                         const BandStats& stats, int batch_size = 256);

}  // namespace irrclr
