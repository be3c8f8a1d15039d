#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "irrclr/errors.hpp"
#include "irrclr/tensor.hpp"

namespace irrclr {

struct StepOutOfRange : ValidationError { using ValidationError::ValidationError; };

// Adam with the usual fixed hyperparameters. Moments are keyed like the
// parameter map and created on first use; t counts calls.
template <typename T>
struct AdamState {
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
};

// In-place update of every parameter named in grads; parameters without a
// gradient entry are left untouched (frozen).
template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params,
               const std::map<std::string, Tensor<T>>& grads, AdamState<T>& state, double lr);

template <typename T>
void sgd_step(std::map<std::string, Tensor<T>>& params,
              const std::map<std::string, Tensor<T>>& grads, double lr);

// lr0 * 0.5 * (1 + cos(pi * step / total_steps))
double cosine_decay(double lr0, std::int64_t step, std::int64_t total_steps);

}  // namespace irrclr
