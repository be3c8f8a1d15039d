#include "irrclr/optim.hpp"

#include <cmath>

#include "irrclr/graph.hpp"

namespace irrclr {

template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params,
               const std::map<std::string, Tensor<T>>& grads, AdamState<T>& state, double lr) {
  if (lr < 0.0) throw ValidationError("adam_step: negative learning rate");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.t));

  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw ShapeMismatch("adam_step: no parameter named " + name);
    Tensor<T>& p = pit->second;
    if (p.shape != g.shape) {
      throw ShapeMismatch("adam_step: gradient shape " + shape_str(g.shape) +
                          " does not match parameter " + name + " " + shape_str(p.shape));
    }
    auto mit = state.m.find(name);
    if (mit == state.m.end()) mit = state.m.emplace(name, Tensor<T>::zeros(p.shape)).first;
    auto vit = state.v.find(name);
    if (vit == state.v.end()) vit = state.v.emplace(name, Tensor<T>::zeros(p.shape)).first;
    Tensor<T>& m = mit->second;
    Tensor<T>& v = vit->second;
    if (m.shape != p.shape || v.shape != p.shape) {
      throw ShapeMismatch("adam_step: moment shape does not match parameter " + name);
    }

    for (std::int64_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g.v[i]);
      const double mi = state.beta1 * static_cast<double>(m.v[i]) + (1.0 - state.beta1) * gi;
      const double vi = state.beta2 * static_cast<double>(v.v[i]) + (1.0 - state.beta2) * gi * gi;
      m.v[i] = static_cast<T>(mi);
      v.v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) -
                              lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <typename T>
void sgd_step(std::map<std::string, Tensor<T>>& params,
              const std::map<std::string, Tensor<T>>& grads, double lr) {
  if (lr < 0.0) throw ValidationError("sgd_step: negative learning rate");
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) throw ShapeMismatch("sgd_step: no parameter named " + name);
    Tensor<T>& p = pit->second;
    if (p.shape != g.shape) throw ShapeMismatch("sgd_step: gradient shape mismatch for " + name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      p.v[i] = static_cast<T>(static_cast<double>(p.v[i]) - lr * static_cast<double>(g.v[i]));
    }
  }
}

double cosine_decay(double lr0, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) throw StepOutOfRange("cosine_decay: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw StepOutOfRange("cosine_decay: step " + std::to_string(step) + " outside [0, " +
                         std::to_string(total_steps) + "]");
  }
  return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * double(step) / double(total_steps)));
}

template void adam_step<float>(std::map<std::string, Tensor<float>>&,
                               const std::map<std::string, Tensor<float>>&, AdamState<float>&,
                               double);
template void adam_step<double>(std::map<std::string, Tensor<double>>&,
                                const std::map<std::string, Tensor<double>>&, AdamState<double>&,
                                double);
template void sgd_step<float>(std::map<std::string, Tensor<float>>&,
                              const std::map<std::string, Tensor<float>>&, double);
template void sgd_step<double>(std::map<std::string, Tensor<double>>&,
                               const std::map<std::string, Tensor<double>>&, double);

}  // namespace irrclr
