#include <benchmark/benchmark.h>

#include <filesystem>

#include "irrclr/augment.hpp"
#include "irrclr/contrastive.hpp"
#include "irrclr/model.hpp"
#include "irrclr/optim.hpp"
#include "irrclr/raster.hpp"
#include "irrclr/rng.hpp"

using namespace irrclr;
namespace fs = std::filesystem;

namespace {

MultispectralChip random_chip(int size, std::uint64_t key) {
  auto chip = MultispectralChip::zeros(size, size, all_bands());
  rng::Stream s(key);
  for (auto& v : chip.data) v = static_cast<float>(s.uniform(0.0, 1.5));
  return chip;
}

void BM_ApplyAugmentation(benchmark::State& state) {
  auto chip = random_chip(32, 1);
  std::int64_t i = 0;
  for (auto _ : state) {
    AugmentationRng key{7, "bench", 0, i++, 0};
    auto out = apply_augmentation(chip, sample_augmentation(key));
    benchmark::DoNotOptimize(out.data.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ApplyAugmentation);

void BM_NtXentLoss(benchmark::State& state) {
  const std::int64_t two_n = state.range(0);
  rng::Stream s(3);
  TensorD z = TensorD::zeros({two_n, 32});
  for (auto& v : z.v) v = s.normal();
  for (auto _ : state) {
    auto result = nt_xent_loss(z, 0.1);
    benchmark::DoNotOptimize(result.loss);
  }
  state.SetItemsProcessed(state.iterations() * two_n);
}
BENCHMARK(BM_NtXentLoss)->Arg(32)->Arg(128);

// One full contrastive optimization step at the desk-scale training shape
// (two views of a 64-image batch through the tiny encoder).
void BM_ContrastiveStep(benchmark::State& state) {
  const std::int64_t two_n = 128;
  EncoderConfig enc = EncoderConfig::preset("tiny");
  Network net = build_network(enc, 32, 5);
  BuiltGraph bg = net.make_graph(two_n, HeadMode::Projection, true);
  NodeId loss = append_nt_xent(bg.graph, bg.output, two_n, 0.1);
  bg.graph.mark_output("loss", loss);

  rng::Stream s(9);
  TensorF x = TensorF::zeros({two_n, 10, 32, 32});
  for (auto& v : x.v) v = static_cast<float>(s.uniform(-1.0, 1.0));

  AdamState<float> adam;
  EvalResult<float> fwd;
  BackwardWorkspace<float> ws;
  for (auto _ : state) {
    auto grads = gradients<float>(bg.graph, loss, net.bindings(x), &fwd, &ws);
    net.update_running_stats(bg, fwd);
    adam_step(net.params, grads, adam, 5e-4);
  }
  state.SetItemsProcessed(state.iterations() * two_n);
}
BENCHMARK(BM_ContrastiveStep)->Unit(benchmark::kMillisecond);

void BM_ChipRoundTrip(benchmark::State& state) {
  auto chip = random_chip(32, 11);
  for (auto _ : state) {
    auto bytes = write_chip(chip);
    auto back = read_chip(bytes);
    benchmark::DoNotOptimize(back.data.data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ChipRoundTrip);

}  // namespace

BENCHMARK_MAIN();
