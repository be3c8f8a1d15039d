#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irrclr/graph.hpp"
#include "irrclr/tensor.hpp"

namespace irrclr {

struct InvalidConfig : ValidationError { using ValidationError::ValidationError; };
struct DigestMismatch : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct ConfigMismatch : ValidationError { using ValidationError::ValidationError; };
struct StageViolation : ValidationError { using ValidationError::ValidationError; };

struct StageSpec {
  int blocks = 1;
  int channels = 8;
  bool downsample = false;

  bool operator==(const StageSpec&) const = default;
};

// Small residual CNN family: stem conv, residual stages, global average
// pool, linear embedding.
struct EncoderConfig {
  int in_height = 32;
  int in_width = 32;
  int in_bands = 10;
  int stem_channels = 8;
  std::vector<StageSpec> stages;
  int embedding_dim = 16;

  bool operator==(const EncoderConfig&) const = default;

  void validate() const;  // InvalidConfig
  std::string canonical_text() const;
  static EncoderConfig from_text(const std::string& text);

  // Named zoo entries, ordered by size: nano < tiny < small < base.
  static EncoderConfig preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

enum class HeadMode { Projection, ClassifierLogits, ClassifierProbs, Embedding };

enum class TrainStage { Pretrain, Finetune, Distill, Supervised };

std::string stage_name(TrainStage stage);
std::optional<TrainStage> stage_from_name(const std::string& name);

struct BuiltGraph {
  Graph graph;
  NodeId output = 0;
  // norm node id -> state tensor prefix (e.g. "stem.norm"), for running
  // statistics updates after training-mode steps
  std::vector<std::pair<NodeId, std::string>> norm_nodes;
};

// Encoder plus exactly one active head per forward mode. Parameters are
// plain named tensors; graphs are rebuilt per (batch, mode).
struct Network {
  EncoderConfig config;
  int proj_dim = 32;
  std::map<std::string, TensorF> params;  // learnable
  std::map<std::string, TensorF> state;   // norm running mean/var
  bool has_projection = false;
  bool has_classifier = false;

  BuiltGraph make_graph(std::int64_t batch, HeadMode mode, bool training) const;
  TensorMap<float> bindings(TensorF batch_input) const;
  TensorF forward(const TensorF& batch, HeadMode mode) const;  // inference mode

  void update_running_stats(const BuiltGraph& bg, const EvalResult<float>& fwd,
                            double momentum = 0.9);

  // Fresh classifier head (embedding_dim -> 2); drops the projection head.
  void to_classifier(std::uint64_t seed);

  std::vector<std::string> encoder_param_names() const;
  std::vector<std::string> head_param_names() const;
};

// He-uniform init for convs and linears, unit scale / zero shift for
// norms, seeded per tensor name. The projection head is attached.
Network build_network(const EncoderConfig& config, int proj_dim, std::uint64_t seed);

struct ParameterCount {
  std::int64_t total = 0;
  std::map<std::string, std::int64_t> per_tensor;
};

ParameterCount count_parameters(const Network& net);

struct Provenance {
  TrainStage stage = TrainStage::Pretrain;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::optional<TrainStage> source_stage;
  std::string source_digest = "-";
};

// Immutable snapshot: config, provenance, all tensors, content digest.
struct Checkpoint {
  EncoderConfig config;
  int proj_dim = 32;
  Provenance provenance;
  std::map<std::string, TensorF> params;
  std::map<std::string, TensorF> state;
  std::string digest;  // sha256 of the serialized body
};

// Allowed provenance chains: pretrain -> finetune -> distill, or
// supervised (from scratch or warm-started from pretrain/supervised).
void validate_stage_transition(std::optional<TrainStage> source, TrainStage next);

Checkpoint make_checkpoint(const Network& net, Provenance provenance);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Network network_from_checkpoint(const Checkpoint& ckpt);

}  // namespace irrclr
