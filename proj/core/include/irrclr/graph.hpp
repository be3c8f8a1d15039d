#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "irrclr/errors.hpp"
#include "irrclr/tensor.hpp"

namespace irrclr {

struct ShapeMismatch : ValidationError { using ValidationError::ValidationError; };
struct UnboundInput : ValidationError { using ValidationError::ValidationError; };
struct NonFiniteResult : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
struct NonScalarLoss : ValidationError { using ValidationError::ValidationError; };
struct NonFiniteGradient : RuntimeFailure { using RuntimeFailure::RuntimeFailure; };

enum class Op {
  Input,
  Constant,
  Add,
  Sub,
  Mul,
  MatMul,
  Conv2d,
  Relu,
  MaxPool2d,
  GlobalAvgPool,
  ChannelAffineNorm,
  Reshape,
  Concat,
  L2NormalizeRows,
  SoftmaxRows,
  Log,
  Exp,
  Sum,
  Mean,
  ScalarMul,
};

using NodeId = std::int32_t;

struct Node {
  Op op;
  Shape shape;
  std::vector<NodeId> inputs;
  std::string name;              // Input
  bool trainable = false;        // Input: gradient requested
  double scalar = 0.0;           // ScalarMul
  int stride = 1;                // Conv2d
  int axis = 0;                  // Concat
  bool transpose_b = false;      // MatMul
  bool training = true;          // ChannelAffineNorm batch-vs-running stats
  std::vector<double> constant;  // Constant payload
};

// Static computation graph over dense tensors. Shapes are validated as
// nodes are added, so the node list is topologically ordered by
// construction. The graph itself carries no scalar type; evaluate() and
// gradients() instantiate the kernels for float (training) or double
// (gradient checks, loss oracles).
class Graph {
public:
  NodeId input(std::string name, Shape shape, bool trainable = false);
  NodeId constant(Shape shape, std::vector<double> values);

  NodeId add(NodeId a, NodeId b);  // same shape, or (N,M)+(M) bias rows
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
  // x (N,Ci,H,W), w (Co,Ci,kh,kw), bias (Co); zero padding kh/2 x kw/2.
  // stride 1 keeps H,W ("same"); stride 2 yields floor(H/2), floor(W/2).
  NodeId conv2d(NodeId x, NodeId w, NodeId bias, int stride = 1);
  NodeId relu(NodeId x);
  NodeId max_pool2d(NodeId x);  // 2x2, stride 2
  NodeId global_avg_pool(NodeId x);
  // Per-channel standardization over the batch (training) or over the
  // supplied running stats (inference), then learned scale/shift.
  NodeId channel_affine_norm(NodeId x, NodeId scale, NodeId shift, NodeId running_mean,
                             NodeId running_var, bool training);
  NodeId reshape(NodeId x, Shape shape);
  NodeId concat(NodeId a, NodeId b, int axis);
  NodeId l2_normalize(NodeId x);  // rows of (N,D); zero rows pass through
  NodeId softmax(NodeId x);       // rows of (N,D)
  NodeId log(NodeId x);
  NodeId exp(NodeId x);
  NodeId sum(NodeId x);   // all elements -> (1)
  NodeId mean(NodeId x);  // all elements -> (1)
  NodeId scalar_mul(NodeId x, double c);

  void mark_output(const std::string& name, NodeId id);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& at(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const std::map<std::string, NodeId>& outputs() const { return outputs_; }
  const std::map<std::string, NodeId>& inputs() const { return inputs_; }

private:
  NodeId push(Node n);
  const Shape& shape_of(NodeId id) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> outputs_;
  std::map<std::string, NodeId> inputs_;
};

template <typename T>
using TensorMap = std::map<std::string, Tensor<T>>;

template <typename T>
struct EvalResult {
  std::vector<Tensor<T>> values;  // one per node
  // Batch statistics (mean, var) per training-mode norm node, for the
  // caller's running-average update.
  std::map<NodeId, std::pair<std::vector<T>, std::vector<T>>> batch_stats;

  const Tensor<T>& value(NodeId id) const { return values[static_cast<std::size_t>(id)]; }
};

// Forward pass. Marked outputs are checked for non-finite values
// (NonFiniteResult flags divergence). Deterministic: fixed loop orders,
// no threading, bit-identical across runs.
template <typename T>
EvalResult<T> evaluate(const Graph& g, const TensorMap<T>& inputs);

// Same pass reusing result's buffers; result must be empty or come from a
// previous evaluation of the same graph.
template <typename T>
void evaluate_into(const Graph& g, const TensorMap<T>& inputs, EvalResult<T>& result);

template <typename T>
const Tensor<T>& fetch(const Graph& g, const EvalResult<T>& result, const std::string& name);

// Scratch buffers for repeated backward passes over one graph.
template <typename T>
struct BackwardWorkspace {
  std::vector<Tensor<T>> grads;
};

// Reverse-mode gradients of the scalar loss node with respect to every
// trainable input. Runs its own forward pass; forward_out and workspace
// let training loops reuse buffers across steps.
template <typename T>
TensorMap<T> gradients(const Graph& g, NodeId loss, const TensorMap<T>& inputs,
                       EvalResult<T>* forward_out = nullptr,
                       BackwardWorkspace<T>* workspace = nullptr);

}  // namespace irrclr
