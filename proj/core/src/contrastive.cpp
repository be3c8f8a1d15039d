#include "irrclr/contrastive.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "irrclr/augment.hpp"
#include "irrclr/optim.hpp"
#include "irrclr/rng.hpp"

namespace irrclr {

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::Adam ? "adam" : "sgd_cosine";
}

std::optional<OptimizerKind> optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd_cosine") return OptimizerKind::SgdCosine;
  return std::nullopt;
}

namespace {
constexpr double kDiagMask = -1e9;
}

NodeId append_nt_xent(Graph& g, NodeId z, std::int64_t two_n, double temperature) {
  if (two_n < 2 || two_n % 2 != 0) {
    throw OddRowCount("nt_xent: row count must be even and >= 2, got " + std::to_string(two_n));
  }
  if (!(temperature > 0.0)) {
    throw NonPositiveTemperature("nt_xent: temperature must be positive");
  }

  // sims/t with the self-similarity knocked out, then per row:
  //   l(i) = log(sum_k exp(m_ik)) - m_i,partner(i)
  std::vector<double> mask(std::size_t(two_n) * two_n, 0.0);
  std::vector<double> selector(std::size_t(two_n) * two_n, 0.0);
  for (std::int64_t i = 0; i < two_n; ++i) {
    mask[std::size_t(i) * two_n + i] = kDiagMask;
    const std::int64_t partner = (i % 2 == 0) ? i + 1 : i - 1;
    selector[std::size_t(i) * two_n + partner] = 1.0;
  }

  NodeId sims = g.matmul(z, z, /*transpose_b=*/true);
  NodeId scaled = g.scalar_mul(sims, 1.0 / temperature);
  NodeId masked = g.add(scaled, g.constant({two_n, two_n}, std::move(mask)));
  NodeId row_sums = g.matmul(g.exp(masked), g.constant({two_n, 1}, std::vector<double>(two_n, 1.0)));
  NodeId log_z = g.sum(g.log(row_sums));
  NodeId pos = g.sum(g.mul(masked, g.constant({two_n, two_n}, std::move(selector))));
  return g.scalar_mul(g.sub(log_z, pos), 1.0 / double(two_n));
}

NtXentResult nt_xent_loss(const TensorD& embeddings, double temperature) {
  if (embeddings.shape.size() != 2) throw ValidationError("nt_xent: embeddings must be (2N, D)");
  const std::int64_t two_n = embeddings.shape[0];
  if (two_n % 2 != 0) throw OddRowCount("nt_xent: odd row count");

  Graph g;
  NodeId z_in = g.input("z", embeddings.shape, false);
  NodeId z = g.l2_normalize(z_in);
  NodeId loss = append_nt_xent(g, z, two_n, temperature);
  g.mark_output("loss", loss);
  // the masked sims matrix is two nodes before the row-sum chain; recompute
  // per-pair terms from the normalized embeddings instead of digging ids
  g.mark_output("z_norm", z);

  auto result = evaluate<double>(g, {{"z", embeddings}});
  NtXentResult out;
  out.loss = fetch(g, result, "loss").v[0];

  const auto& zn = fetch(g, result, "z_norm");
  const std::int64_t d = zn.shape[1];
  out.per_pair.resize(std::size_t(two_n));
  for (std::int64_t i = 0; i < two_n; ++i) {
    const std::int64_t partner = (i % 2 == 0) ? i + 1 : i - 1;
    double denom = 0.0;
    double pos = 0.0;
    double row_max = kDiagMask;
    std::vector<double> terms(static_cast<std::size_t>(two_n), 0.0);
    for (std::int64_t k = 0; k < two_n; ++k) {
      double sim = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        sim += zn.v[std::size_t(i) * d + j] * zn.v[std::size_t(k) * d + j];
      }
      double m = (k == i) ? kDiagMask : sim / temperature;
      terms[std::size_t(k)] = m;
      row_max = std::max(row_max, m);
      if (k == partner) pos = m;
    }
    for (std::int64_t k = 0; k < two_n; ++k) denom += std::exp(terms[std::size_t(k)] - row_max);
    out.per_pair[std::size_t(i)] = std::log(denom) + row_max - pos;
  }
  return out;
}

std::string epoch_log_csv(const std::vector<EpochLog>& log, const std::string& loss_column) {
  std::string out = "epoch," + loss_column + ",learning_rate\n";
  char buf[128];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", row.epoch, row.loss, row.lr);
    out += buf;
  }
  return out;
}

namespace {

std::vector<std::size_t> pool_indices(const DatasetManifest& manifest) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split == SplitTag::UnlabeledPool) pool.push_back(i);
  }
  if (pool.empty()) {
    // untagged manifests are treated as a pool wholesale
    pool.resize(manifest.entries.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  return pool;
}

}  // namespace

PretrainResult pretrain(const DatasetManifest& pool_manifest, const BandStats& stats,
                        const EncoderConfig& encoder, const ContrastiveConfig& cfg,
                        const ProgressFn& progress) {
  if (cfg.batch_size < 2) throw ValidationError("pretrain: batch_size must be >= 2");
  if (cfg.epochs <= 0) throw ValidationError("pretrain: epochs must be positive");
  if (!(cfg.temperature > 0.0)) throw NonPositiveTemperature("pretrain: temperature");

  const auto pool = pool_indices(pool_manifest);
  if (pool.empty()) throw EmptyPool("pretrain: empty unlabeled pool");
  const std::int64_t batches_per_epoch = std::int64_t(pool.size()) / cfg.batch_size;
  if (batches_per_epoch == 0) {
    throw EmptyPool("pretrain: pool smaller than one batch (" + std::to_string(pool.size()) +
                    " < " + std::to_string(cfg.batch_size) + ")");
  }

  std::vector<MultispectralChip> chips;
  chips.reserve(pool.size());
  for (std::size_t idx : pool) {
    chips.push_back(load_chip(pool_manifest.resolve(pool_manifest.entries[idx])));
  }

  Network net = build_network(encoder, cfg.proj_dim, cfg.seed);

  const std::int64_t two_n = 2 * std::int64_t(cfg.batch_size);
  BuiltGraph bg = net.make_graph(two_n, HeadMode::Projection, /*training=*/true);
  NodeId loss_node = append_nt_xent(bg.graph, bg.output, two_n, cfg.temperature);
  bg.graph.mark_output("loss", loss_node);

  const std::int64_t plane = std::int64_t(encoder.in_height) * encoder.in_width;
  const std::int64_t chip_len = encoder.in_bands * plane;
  const std::int64_t total_steps = std::int64_t(cfg.epochs) * batches_per_epoch;

  AdamState<float> adam;
  BackwardWorkspace<float> workspace;
  EvalResult<float> fwd;
  std::int64_t step = 0;
  PretrainResult out;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng::Stream(rng::derive(cfg.seed, "pretrain.shuffle", std::uint64_t(epoch))).shuffle(order);

    double epoch_loss = 0.0;
    double lr = cfg.lr;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      TensorF x = TensorF::zeros({two_n, encoder.in_bands, encoder.in_height, encoder.in_width});
      for (int i = 0; i < cfg.batch_size; ++i) {
        const std::size_t sample = order[std::size_t(b) * cfg.batch_size + i];
        AugmentationRng key{cfg.seed, "pretrain", epoch, std::int64_t(sample), 0};
        auto [spec_a, spec_b] = sample_augmentation_pair(key);
        for (int view = 0; view < 2; ++view) {
          auto augmented = apply_augmentation(chips[sample], view == 0 ? spec_a : spec_b);
          auto normalized = normalize_chip(augmented, stats);
          std::copy(normalized.data.begin(), normalized.data.end(),
                    x.v.begin() + std::size_t((2 * i + view) * chip_len));
        }
      }

      TensorMap<float> grads;
      try {
        grads = gradients<float>(bg.graph, loss_node, net.bindings(std::move(x)), &fwd, &workspace);
      } catch (const NonFiniteResult& e) {
        throw DivergedLoss(std::string("pretrain: ") + e.what());
      } catch (const NonFiniteGradient& e) {
        throw DivergedLoss(std::string("pretrain: ") + e.what());
      }
      const double loss = fetch(bg.graph, fwd, "loss").v[0];
      epoch_loss += loss;
      net.update_running_stats(bg, fwd);

      if (cfg.optimizer == OptimizerKind::Adam) {
        adam_step(net.params, grads, adam, cfg.lr);
      } else {
        lr = cosine_decay(cfg.lr, step, total_steps);
        sgd_step(net.params, grads, lr);
      }
      ++step;
    }

    EpochLog row{epoch, epoch_loss / double(batches_per_epoch), lr};
    out.log.push_back(row);
    if (progress) progress(epoch, row.loss, row.lr);
  }

  Provenance prov;
  prov.stage = TrainStage::Pretrain;
  prov.seed = cfg.seed;
  prov.epoch = cfg.epochs;
  out.checkpoint = make_checkpoint(net, prov);
  return out;
}

}  // namespace irrclr
