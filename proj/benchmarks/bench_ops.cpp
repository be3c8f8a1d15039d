#include <benchmark/benchmark.h>

#include "irrclr/graph.hpp"
#include "irrclr/rng.hpp"

using namespace irrclr;

namespace {

TensorF random_tensor(Shape shape, std::uint64_t key) {
  auto t = TensorF::zeros(std::move(shape));
  rng::Stream s(key);
  for (auto& v : t.v) v = static_cast<float>(s.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const std::int64_t n = state.range(0), ci = state.range(1), co = state.range(2);
  Graph g;
  NodeId x = g.input("x", {n, ci, 32, 32}, false);
  NodeId w = g.input("w", {co, ci, 3, 3}, false);
  NodeId b = g.input("b", {co}, false);
  g.mark_output("out", g.conv2d(x, w, b, 1));
  TensorMap<float> inputs = {
      {"x", random_tensor({n, ci, 32, 32}, 1)},
      {"w", random_tensor({co, ci, 3, 3}, 2)},
      {"b", random_tensor({co}, 3)},
  };
  EvalResult<float> result;
  for (auto _ : state) {
    evaluate_into(g, inputs, result);
    benchmark::DoNotOptimize(result.values.back().v.data());
  }
  state.SetItemsProcessed(state.iterations() * n * co * ci * 32 * 32 * 9 * 2);
}
BENCHMARK(BM_Conv2dForward)->Args({128, 10, 8})->Args({128, 8, 8})->Args({16, 32, 64});

void BM_Conv2dBackward(benchmark::State& state) {
  const std::int64_t n = state.range(0), ci = state.range(1), co = state.range(2);
  Graph g;
  NodeId x = g.input("x", {n, ci, 32, 32}, true);
  NodeId w = g.input("w", {co, ci, 3, 3}, true);
  NodeId b = g.input("b", {co}, true);
  NodeId loss = g.sum(g.conv2d(x, w, b, 1));
  g.mark_output("loss", loss);
  TensorMap<float> inputs = {
      {"x", random_tensor({n, ci, 32, 32}, 1)},
      {"w", random_tensor({co, ci, 3, 3}, 2)},
      {"b", random_tensor({co}, 3)},
  };
  EvalResult<float> fwd;
  BackwardWorkspace<float> ws;
  for (auto _ : state) {
    auto grads = gradients<float>(g, loss, inputs, &fwd, &ws);
    benchmark::DoNotOptimize(grads.begin()->second.v.data());
  }
  state.SetItemsProcessed(state.iterations() * n * co * ci * 32 * 32 * 9 * 2 * 3);
}
BENCHMARK(BM_Conv2dBackward)->Args({128, 10, 8})->Args({128, 8, 8});

void BM_ChannelAffineNorm(benchmark::State& state) {
  const std::int64_t n = state.range(0), c = state.range(1);
  Graph g;
  NodeId x = g.input("x", {n, c, 32, 32}, false);
  NodeId sc = g.input("sc", {c}, false);
  NodeId sh = g.input("sh", {c}, false);
  NodeId rm = g.input("rm", {c}, false);
  NodeId rv = g.input("rv", {c}, false);
  g.mark_output("out", g.channel_affine_norm(x, sc, sh, rm, rv, true));
  TensorMap<float> inputs = {
      {"x", random_tensor({n, c, 32, 32}, 1)}, {"sc", TensorF::full({c}, 1.0f)},
      {"sh", TensorF::zeros({c})},             {"rm", TensorF::zeros({c})},
      {"rv", TensorF::full({c}, 1.0f)},
  };
  EvalResult<float> result;
  for (auto _ : state) {
    evaluate_into(g, inputs, result);
    benchmark::DoNotOptimize(result.values.back().v.data());
  }
  state.SetItemsProcessed(state.iterations() * n * c * 32 * 32);
}
BENCHMARK(BM_ChannelAffineNorm)->Args({128, 8})->Args({128, 32});

void BM_MatMul(benchmark::State& state) {
  const std::int64_t n = state.range(0), k = state.range(1), m = state.range(2);
  Graph g;
  NodeId a = g.input("a", {n, k}, false);
  NodeId b = g.input("b", {k, m}, false);
  g.mark_output("out", g.matmul(a, b));
  TensorMap<float> inputs = {{"a", random_tensor({n, k}, 1)}, {"b", random_tensor({k, m}, 2)}};
  EvalResult<float> result;
  for (auto _ : state) {
    evaluate_into(g, inputs, result);
    benchmark::DoNotOptimize(result.values.back().v.data());
  }
  state.SetItemsProcessed(state.iterations() * n * k * m * 2);
}
BENCHMARK(BM_MatMul)->Args({128, 16, 32})->Args({128, 128, 128});

void BM_SoftmaxRows(benchmark::State& state) {
  const std::int64_t n = state.range(0), m = state.range(1);
  Graph g;
  NodeId x = g.input("x", {n, m}, false);
  g.mark_output("out", g.softmax(x));
  TensorMap<float> inputs = {{"x", random_tensor({n, m}, 1)}};
  EvalResult<float> result;
  for (auto _ : state) {
    evaluate_into(g, inputs, result);
    benchmark::DoNotOptimize(result.values.back().v.data());
  }
  state.SetItemsProcessed(state.iterations() * n * m);
}
BENCHMARK(BM_SoftmaxRows)->Args({128, 128});

}  // namespace

BENCHMARK_MAIN();
