#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "irrclr/model.hpp"
#include "irrclr/rng.hpp"
#include "oracles.hpp"

using namespace irrclr;
namespace fs = std::filesystem;

namespace {

TensorF random_batch(std::int64_t n, const EncoderConfig& cfg, std::uint64_t key) {
  auto t = TensorF::zeros({n, cfg.in_bands, cfg.in_height, cfg.in_width});
  rng::Stream s(key);
  for (auto& v : t.v) v = static_cast<float>(s.uniform(-1.0, 1.0));
  return t;
}

// parameter enumeration from the config alone, independent of the builder
std::int64_t enumerate_params(const EncoderConfig& cfg, int proj_dim, bool classifier) {
  auto conv = [](std::int64_t co, std::int64_t ci, std::int64_t k) { return co * ci * k * k + co; };
  auto norm = [](std::int64_t c) { return 2 * c; };
  auto linear = [](std::int64_t in, std::int64_t out) { return in * out + out; };

  std::int64_t total = conv(cfg.stem_channels, cfg.in_bands, 3) + norm(cfg.stem_channels);
  std::int64_t in_ch = cfg.stem_channels;
  for (const auto& stage : cfg.stages) {
    for (int b = 0; b < stage.blocks; ++b) {
      const bool down = stage.downsample && b == 0;
      total += conv(stage.channels, in_ch, 3) + norm(stage.channels);
      total += conv(stage.channels, stage.channels, 3) + norm(stage.channels);
      if (down || in_ch != stage.channels) total += conv(stage.channels, in_ch, 1);
      in_ch = stage.channels;
    }
  }
  total += linear(in_ch, cfg.embedding_dim);
  if (classifier) {
    total += linear(cfg.embedding_dim, 2);
  } else {
    total += linear(cfg.embedding_dim, cfg.embedding_dim) + linear(cfg.embedding_dim, proj_dim);
  }
  return total;
}

}  // namespace

TEST_CASE("projection rows are unit norm and classifier rows sum to one") {
  auto cfg = EncoderConfig::preset("tiny");
  auto net = build_network(cfg, 32, 7);
  auto batch = random_batch(4, cfg, rng::derive(1, "batch"));

  auto z = net.forward(batch, HeadMode::Projection);
  REQUIRE(z.shape == Shape{4, 32});
  for (int i = 0; i < 4; ++i) {
    double norm = 0.0;
    for (int j = 0; j < 32; ++j) norm += double(z.v[i * 32 + j]) * z.v[i * 32 + j];
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
  }

  net.to_classifier(9);
  auto probs = net.forward(batch, HeadMode::ClassifierProbs);
  REQUIRE(probs.shape == Shape{4, 2});
  for (int i = 0; i < 4; ++i) {
    CHECK(probs.v[2 * i] + probs.v[2 * i + 1] == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("unit norm holds across the whole zoo") {
  for (const auto& name : EncoderConfig::preset_names()) {
    auto cfg = EncoderConfig::preset(name);
    auto net = build_network(cfg, 16, 3);
    auto z = net.forward(random_batch(2, cfg, rng::derive(2, name)), HeadMode::Projection);
    for (int i = 0; i < 2; ++i) {
      double norm = 0.0;
      for (int j = 0; j < 16; ++j) norm += double(z.v[i * 16 + j]) * z.v[i * 16 + j];
      CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("invalid configs are rejected") {
  EncoderConfig cfg = EncoderConfig::preset("tiny");
  cfg.stages.clear();
  CHECK_THROWS_AS(build_network(cfg, 32, 0), InvalidConfig);

  EncoderConfig shrink = EncoderConfig::preset("tiny");
  shrink.stages = {{1, 16, false}, {1, 8, false}};
  CHECK_THROWS_AS(shrink.validate(), InvalidConfig);

  EncoderConfig zero_embed = EncoderConfig::preset("tiny");
  zero_embed.embedding_dim = 0;
  CHECK_THROWS_AS(zero_embed.validate(), InvalidConfig);
}

TEST_CASE("parameter counts match independent enumeration") {
  // single 3x3 conv 10->16 with bias: 10*16*9 + 16
  EncoderConfig stem16 = EncoderConfig::preset("tiny");
  stem16.stem_channels = 16;
  stem16.stages = {{1, 16, false}};
  auto net = build_network(stem16, 32, 5);
  auto pc = count_parameters(net);
  CHECK(pc.per_tensor.at("stem.conv.w") + pc.per_tensor.at("stem.conv.b") == 1456);

  net.to_classifier(6);
  pc = count_parameters(net);
  CHECK(pc.per_tensor.at("head.w") + pc.per_tensor.at("head.b") == 34);
  CHECK(pc.total == enumerate_params(stem16, 32, true));

  for (const auto& name : EncoderConfig::preset_names()) {
    auto cfg = EncoderConfig::preset(name);
    auto zoo_net = build_network(cfg, 32, 1);
    CHECK(count_parameters(zoo_net).total == enumerate_params(cfg, 32, false));
  }

  // the zoo is ordered by size, so smaller-student distillation is expressible
  std::int64_t prev = 0;
  for (const auto& name : EncoderConfig::preset_names()) {
    auto n = build_network(EncoderConfig::preset(name), 32, 1);
    auto total = count_parameters(n).total;
    CHECK(total > prev);
    prev = total;
  }
}

TEST_CASE("doubling stage channels multiplies block conv counts by 4") {
  EncoderConfig base = EncoderConfig::preset("small");
  EncoderConfig doubled = base;
  doubled.stem_channels *= 2;
  for (auto& s : doubled.stages) s.channels *= 2;

  auto pc1 = count_parameters(build_network(base, 32, 1)).per_tensor;
  auto pc2 = count_parameters(build_network(doubled, 32, 1)).per_tensor;
  for (const auto& [name, count] : pc1) {
    if (name.find(".conv1.w") == std::string::npos &&
        name.find(".conv2.w") == std::string::npos && name.find(".skip.w") == std::string::npos) {
      continue;
    }
    CHECK(pc2.at(name) == 4 * count);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact, digests detect corruption") {
  auto dir = fs::temp_directory_path() / "irrclr_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto cfg = EncoderConfig::preset("tiny");
  auto net = build_network(cfg, 32, 11);
  auto ckpt = make_checkpoint(net, {TrainStage::Pretrain, 11, 3, std::nullopt, "-"});
  const auto path = dir / "a.ckpt";
  const auto digest = save_checkpoint(path, ckpt);
  CHECK(digest == ckpt.digest);

  auto loaded = load_checkpoint(path);
  CHECK(loaded.digest == digest);
  CHECK(loaded.config == cfg);
  CHECK(loaded.provenance.stage == TrainStage::Pretrain);
  CHECK(loaded.provenance.seed == 11);
  CHECK(loaded.provenance.epoch == 3);
  REQUIRE(loaded.params.size() == net.params.size());
  for (const auto& [name, t] : net.params) {
    CHECK(loaded.params.at(name).v == t.v);  // bit-exact
  }

  // forward outputs identical bitwise on a fixed batch
  auto batch = random_batch(3, cfg, rng::derive(3, "ckpt"));
  auto restored = network_from_checkpoint(loaded);
  CHECK(restored.forward(batch, HeadMode::Projection).v ==
        net.forward(batch, HeadMode::Projection).v);

  // flip one payload byte
  auto bytes = serialize_checkpoint(ckpt);
  bytes[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), DigestMismatch);
}

TEST_CASE("provenance stage transitions are enforced") {
  CHECK_NOTHROW(validate_stage_transition(std::nullopt, TrainStage::Pretrain));
  CHECK_NOTHROW(validate_stage_transition(TrainStage::Pretrain, TrainStage::Finetune));
  CHECK_NOTHROW(validate_stage_transition(TrainStage::Finetune, TrainStage::Distill));
  CHECK_NOTHROW(validate_stage_transition(std::nullopt, TrainStage::Supervised));
  CHECK_NOTHROW(validate_stage_transition(TrainStage::Pretrain, TrainStage::Supervised));

  CHECK_THROWS_AS(validate_stage_transition(std::nullopt, TrainStage::Finetune), StageViolation);
  CHECK_THROWS_AS(validate_stage_transition(std::nullopt, TrainStage::Distill), StageViolation);
  CHECK_THROWS_AS(validate_stage_transition(TrainStage::Pretrain, TrainStage::Distill),
                  StageViolation);
  CHECK_THROWS_AS(validate_stage_transition(TrainStage::Finetune, TrainStage::Finetune),
                  StageViolation);

  auto net = build_network(EncoderConfig::preset("nano"), 16, 1);
  CHECK_THROWS_AS(make_checkpoint(net, {TrainStage::Distill, 1, 1, TrainStage::Pretrain, "x"}),
                  StageViolation);
}

TEST_CASE("encoder config text round-trips and rejects junk") {
  for (const auto& name : EncoderConfig::preset_names()) {
    auto cfg = EncoderConfig::preset(name);
    cfg.in_height = 24;
    cfg.in_width = 24;
    auto back = EncoderConfig::from_text(cfg.canonical_text());
    CHECK(back == cfg);
  }
  CHECK_THROWS_AS(EncoderConfig::from_text("input=8x8x10\nwhat=3\n"), InvalidConfig);
  CHECK_THROWS_AS(EncoderConfig::from_text("stem=8\n"), InvalidConfig);
  CHECK_THROWS_AS(EncoderConfig::preset("resnet152"), InvalidConfig);
}

TEST_CASE("running stats move toward batch statistics in training mode") {
  auto cfg = EncoderConfig::preset("nano");
  auto net = build_network(cfg, 16, 2);
  auto bg = net.make_graph(4, HeadMode::Projection, /*training=*/true);

  auto before = net.state.at("stem.norm.rmean").v;
  auto batch = random_batch(4, cfg, rng::derive(4, "stats"));
  for (auto& v : batch.v) v += 3.0f;  // clearly nonzero mean
  auto fwd = evaluate<float>(bg.graph, net.bindings(batch));
  net.update_running_stats(bg, fwd);
  auto after = net.state.at("stem.norm.rmean").v;
  CHECK(after != before);

  const auto& stats = fwd.batch_stats.at(bg.norm_nodes[0].first);
  for (std::size_t c = 0; c < after.size(); ++c) {
    CHECK(after[c] == doctest::Approx(0.9f * before[c] + 0.1f * stats.first[c]));
  }
}
