#include "irrclr/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "irrclr/optim.hpp"
#include "irrclr/rng.hpp"

namespace irrclr {

namespace {

std::int64_t even_floor(std::int64_t x) { return x - (x % 2); }

}  // namespace

SplitResult make_splits(const DatasetManifest& labeled, double fraction, std::uint64_t seed,
                        double holdout_fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("make_splits: fraction must be in (0, 1]");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ValidationError("make_splits: holdout_fraction must be in [0, 1)");
  }

  std::vector<std::size_t> irr, not_irr;
  for (std::size_t i = 0; i < labeled.entries.size(); ++i) {
    const auto& e = labeled.entries[i];
    if (!e.irrigated) continue;
    (*e.irrigated ? irr : not_irr).push_back(i);
  }
  if (irr.size() < 2 || not_irr.size() < 2) {
    throw InsufficientClassRecords("make_splits: need at least 2 records per class, got " +
                                   std::to_string(irr.size()) + " irrigated / " +
                                   std::to_string(not_irr.size()) + " not");
  }

  rng::Stream(rng::derive(seed, "split", "irrigated")).shuffle(irr);
  rng::Stream(rng::derive(seed, "split", "not_irrigated")).shuffle(not_irr);

  const std::int64_t pool = std::int64_t(irr.size() + not_irr.size());
  std::int64_t holdout_per_class =
      even_floor(std::int64_t(std::floor(holdout_fraction * double(pool)))) / 2;
  holdout_per_class = std::min<std::int64_t>(
      holdout_per_class, std::min(std::int64_t(irr.size()), std::int64_t(not_irr.size())) - 1);
  holdout_per_class = std::max<std::int64_t>(holdout_per_class, 0);

  const std::int64_t requested = even_floor(std::int64_t(std::floor(fraction * double(pool))));
  std::int64_t per_class = requested / 2;
  per_class = std::min(per_class, std::int64_t(irr.size()) - holdout_per_class);
  per_class = std::min(per_class, std::int64_t(not_irr.size()) - holdout_per_class);
  if (per_class <= 0) {
    throw InsufficientClassRecords("make_splits: fraction " + std::to_string(fraction) +
                                   " yields no training records");
  }

  // holdout first, then a per-class prefix: same-seed splits nest
  std::vector<std::size_t> holdout_idx, train_idx;
  for (std::int64_t i = 0; i < holdout_per_class; ++i) {
    holdout_idx.push_back(irr[std::size_t(i)]);
    holdout_idx.push_back(not_irr[std::size_t(i)]);
  }
  for (std::int64_t i = 0; i < per_class; ++i) {
    train_idx.push_back(irr[std::size_t(holdout_per_class + i)]);
    train_idx.push_back(not_irr[std::size_t(holdout_per_class + i)]);
  }
  std::sort(holdout_idx.begin(), holdout_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  SplitResult out;
  out.train.base_dir = labeled.base_dir;
  out.holdout.base_dir = labeled.base_dir;
  for (std::size_t i : train_idx) {
    auto e = labeled.entries[i];
    e.split = SplitTag::Train;
    out.train.entries.push_back(std::move(e));
  }
  for (std::size_t i : holdout_idx) {
    auto e = labeled.entries[i];
    e.split = SplitTag::Holdout;
    out.holdout.entries.push_back(std::move(e));
  }

  out.plan.fraction = fraction;
  out.plan.holdout_fraction = holdout_fraction;
  out.plan.seed = seed;
  out.plan.pool_size = pool;
  out.plan.requested = requested;
  out.plan.train_count = 2 * per_class;
  out.plan.train_irrigated = per_class;
  out.plan.train_not_irrigated = per_class;
  out.plan.holdout_count = 2 * holdout_per_class;
  return out;
}

NodeId append_cross_entropy(Graph& g, NodeId logits, NodeId onehot, std::int64_t batch,
                            std::int64_t classes) {
  NodeId picked = g.sum(g.mul(logits, onehot));
  NodeId row_sums =
      g.matmul(g.exp(logits), g.constant({classes, 1}, std::vector<double>(classes, 1.0)));
  NodeId lse = g.sum(g.log(row_sums));
  return g.scalar_mul(g.sub(lse, picked), 1.0 / double(batch));
}

NodeId append_distill_kl(Graph& g, NodeId student_logits, NodeId teacher_probs,
                         double temperature, std::int64_t batch) {
  if (!(temperature > 0.0)) throw ValidationError("distill: temperature must be positive");
  NodeId q = g.softmax(g.scalar_mul(student_logits, 1.0 / temperature));
  NodeId cross = g.sum(g.mul(teacher_probs, g.log(q)));
  NodeId self_term = g.sum(g.mul(teacher_probs, g.log(teacher_probs)));
  return g.scalar_mul(g.sub(self_term, cross), temperature * temperature / double(batch));
}

TensorF soften_logits(const TensorF& logits, double temperature) {
  Graph g;
  NodeId in = g.input("logits", logits.shape, false);
  g.mark_output("p", g.softmax(g.scalar_mul(in, 1.0 / temperature)));
  auto result = evaluate<float>(g, {{"logits", logits}});
  return fetch(g, result, "p");
}

double distill_loss(const TensorD& teacher_logits, const TensorD& student_logits,
                    double temperature) {
  if (teacher_logits.shape != student_logits.shape) {
    throw ShapeMismatch("distill_loss: logit shapes differ");
  }
  Graph g;
  NodeId t = g.input("t", teacher_logits.shape, false);
  NodeId s = g.input("s", student_logits.shape, false);
  NodeId p = g.softmax(g.scalar_mul(t, 1.0 / temperature));
  NodeId loss = append_distill_kl(g, s, p, temperature, teacher_logits.shape[0]);
  g.mark_output("loss", loss);
  auto result = evaluate<double>(g, {{"t", teacher_logits}, {"s", student_logits}});
  return fetch(g, result, "loss").v[0];
}

namespace {

struct LabeledData {
  std::vector<MultispectralChip> chips;  // normalized
  std::vector<bool> labels;
  int bands = 0, height = 0, width = 0;
};

LabeledData load_labeled(const DatasetManifest& manifest, const BandStats& stats) {
  LabeledData data;
  for (const auto& e : manifest.entries) {
    if (!e.irrigated) continue;
    auto chip = normalize_chip(load_chip(manifest.resolve(e)), stats);
    if (data.chips.empty()) {
      data.bands = static_cast<int>(chip.bands.size());
      data.height = chip.height;
      data.width = chip.width;
    }
    data.chips.push_back(std::move(chip));
    data.labels.push_back(*e.irrigated);
  }
  if (data.chips.empty()) throw EmptySplit("no labeled records in manifest");
  return data;
}

TensorF chips_to_batch(const std::vector<MultispectralChip>& chips,
                       std::span<const std::size_t> idx) {
  const auto& first = chips[idx[0]];
  const std::int64_t chip_len = std::int64_t(first.bands.size()) * first.plane_size();
  TensorF x = TensorF::zeros(
      {std::int64_t(idx.size()), std::int64_t(first.bands.size()), first.height, first.width});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& c = chips[idx[i]];
    std::copy(c.data.begin(), c.data.end(), x.v.begin() + std::int64_t(i) * chip_len);
  }
  return x;
}

// class order in logits/targets: column 0 = not irrigated, column 1 = irrigated
TensorF onehot_targets(const std::vector<bool>& labels, std::span<const std::size_t> idx) {
  TensorF t = TensorF::zeros({std::int64_t(idx.size()), 2});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    t.v[2 * i + (labels[idx[i]] ? 1 : 0)] = 1.0f;
  }
  return t;
}

struct ClassifierGraph {
  BuiltGraph bg;
  NodeId loss = 0;
};

// Full-network cross-entropy training, shared by the supervised baseline
// and unfrozen fine-tuning.
std::vector<EpochLog> run_classifier_training(Network& net, const LabeledData& data, int epochs,
                                              double lr, int batch_size, std::uint64_t seed,
                                              const std::string& stage_label,
                                              const ProgressFn& progress) {
  if (epochs <= 0) throw ValidationError(stage_label + ": epochs must be positive");
  std::map<std::int64_t, ClassifierGraph> graphs;
  auto graph_for = [&](std::int64_t n) -> ClassifierGraph& {
    auto it = graphs.find(n);
    if (it == graphs.end()) {
      ClassifierGraph cg;
      cg.bg = net.make_graph(n, HeadMode::ClassifierLogits, /*training=*/true);
      NodeId targets = cg.bg.graph.input("targets", {n, 2}, false);
      cg.loss = append_cross_entropy(cg.bg.graph, cg.bg.output, targets, n, 2);
      cg.bg.graph.mark_output("loss", cg.loss);
      it = graphs.emplace(n, std::move(cg)).first;
    }
    return it->second;
  };

  AdamState<float> adam;
  BackwardWorkspace<float> workspace;
  EvalResult<float> fwd;
  std::vector<EpochLog> log;
  const std::size_t n = data.chips.size();

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Stream(rng::derive(seed, stage_label + ".shuffle", std::uint64_t(epoch))).shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += std::size_t(batch_size)) {
      const std::size_t count = std::min<std::size_t>(std::size_t(batch_size), n - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      auto& cg = graph_for(std::int64_t(count));

      auto bindings = net.bindings(chips_to_batch(data.chips, idx));
      bindings.emplace("targets", onehot_targets(data.labels, idx));

      TensorMap<float> grads;
      try {
        grads = gradients<float>(cg.bg.graph, cg.loss, bindings, &fwd, &workspace);
      } catch (const NonFiniteResult& e) {
        throw DivergedLoss(stage_label + ": " + e.what());
      } catch (const NonFiniteGradient& e) {
        throw DivergedLoss(stage_label + ": " + e.what());
      }
      epoch_loss += fetch(cg.bg.graph, fwd, "loss").v[0] * double(count);
      net.update_running_stats(cg.bg, fwd);
      adam_step(net.params, grads, adam, lr);
    }
    EpochLog row{epoch, epoch_loss / double(n), lr};
    log.push_back(row);
    if (progress) progress(epoch, row.loss, row.lr);
  }
  return log;
}

TensorF embed_all(const Network& net, const std::vector<MultispectralChip>& chips,
                  int batch_size) {
  const std::int64_t n = std::int64_t(chips.size());
  TensorF out = TensorF::zeros({n, net.config.embedding_dim});
  std::vector<std::size_t> idx;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t count = std::min<std::int64_t>(batch_size, n - start);
    idx.resize(std::size_t(count));
    std::iota(idx.begin(), idx.end(), std::size_t(start));
    auto emb = net.forward(chips_to_batch(chips, idx), HeadMode::Embedding);
    std::copy(emb.v.begin(), emb.v.end(), out.v.begin() + start * net.config.embedding_dim);
  }
  return out;
}

}  // namespace

TrainResult train_supervised(const DatasetManifest& labeled, const BandStats& stats,
                             const EncoderConfig& encoder,
                             const std::optional<Checkpoint>& warm_start,
                             const SupervisedConfig& cfg, const ProgressFn& progress) {
  auto data = load_labeled(labeled, stats);

  Network net;
  Provenance prov;
  prov.stage = TrainStage::Supervised;
  prov.seed = cfg.seed;
  prov.epoch = cfg.epochs;

  if (warm_start) {
    validate_stage_transition(warm_start->provenance.stage, TrainStage::Supervised);
    if (!(warm_start->config == encoder)) {
      throw ConfigMismatch("train_supervised: warm-start checkpoint encoder config differs");
    }
    net = network_from_checkpoint(*warm_start);
    if (!net.has_classifier) net.to_classifier(cfg.seed);
    prov.source_stage = warm_start->provenance.stage;
    prov.source_digest = warm_start->digest;
  } else {
    net = build_network(encoder, /*proj_dim=*/32, cfg.seed);
    net.to_classifier(cfg.seed);
  }

  TrainResult out;
  out.log = run_classifier_training(net, data, cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed,
                                    "supervised", progress);
  out.checkpoint = make_checkpoint(net, prov);
  return out;
}

TrainResult finetune(const Checkpoint& pretrained, const DatasetManifest& labeled,
                     const BandStats& stats, const FinetuneConfig& cfg,
                     const ProgressFn& progress) {
  if (pretrained.provenance.stage != TrainStage::Pretrain) {
    throw StageViolation("finetune: checkpoint stage is " +
                         stage_name(pretrained.provenance.stage) + ", expected pretrain");
  }
  auto data = load_labeled(labeled, stats);

  Network net = network_from_checkpoint(pretrained);
  net.to_classifier(cfg.seed);

  Provenance prov;
  prov.stage = TrainStage::Finetune;
  prov.seed = cfg.seed;
  prov.epoch = cfg.epochs;
  prov.source_stage = TrainStage::Pretrain;
  prov.source_digest = pretrained.digest;

  TrainResult out;
  if (!cfg.freeze_encoder) {
    out.log = run_classifier_training(net, data, cfg.epochs, cfg.lr, cfg.batch_size, cfg.seed,
                                      "finetune", progress);
    out.checkpoint = make_checkpoint(net, prov);
    return out;
  }

  // Frozen path: the encoder (weights and running stats) is immutable, so
  // embeddings are computed once in inference mode and only the head trains.
  const TensorF all_embeddings = embed_all(net, data.chips, 256);
  const std::int64_t e_dim = net.config.embedding_dim;
  const std::size_t n = data.chips.size();

  struct HeadGraph {
    Graph g;
    NodeId loss;
  };
  std::map<std::int64_t, HeadGraph> graphs;
  auto graph_for = [&](std::int64_t count) -> HeadGraph& {
    auto it = graphs.find(count);
    if (it == graphs.end()) {
      HeadGraph hg;
      NodeId e = hg.g.input("e", {count, e_dim}, false);
      NodeId w = hg.g.input("head.w", {e_dim, 2}, true);
      NodeId b = hg.g.input("head.b", {2}, true);
      NodeId logits = hg.g.add(hg.g.matmul(e, w), b);
      NodeId targets = hg.g.input("targets", {count, 2}, false);
      hg.loss = append_cross_entropy(hg.g, logits, targets, count, 2);
      hg.g.mark_output("loss", hg.loss);
      it = graphs.emplace(count, std::move(hg)).first;
    }
    return it->second;
  };

  AdamState<float> adam;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Stream(rng::derive(cfg.seed, "finetune.shuffle", std::uint64_t(epoch))).shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += std::size_t(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(std::size_t(cfg.batch_size), n - start);
      auto& hg = graph_for(std::int64_t(count));

      TensorF e = TensorF::zeros({std::int64_t(count), e_dim});
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(all_embeddings.v.begin() + std::int64_t(src) * e_dim, e_dim,
                    e.v.begin() + std::int64_t(i) * e_dim);
      }
      std::span<const std::size_t> idx(order.data() + start, count);

      TensorMap<float> bindings;
      bindings.emplace("e", std::move(e));
      bindings.emplace("head.w", net.params.at("head.w"));
      bindings.emplace("head.b", net.params.at("head.b"));
      bindings.emplace("targets", onehot_targets(data.labels, idx));

      EvalResult<float> fwd;
      TensorMap<float> grads;
      try {
        grads = gradients<float>(hg.g, hg.loss, bindings, &fwd);
      } catch (const NonFiniteResult& ex) {
        throw DivergedLoss(std::string("finetune: ") + ex.what());
      } catch (const NonFiniteGradient& ex) {
        throw DivergedLoss(std::string("finetune: ") + ex.what());
      }
      epoch_loss += fetch(hg.g, fwd, "loss").v[0] * double(count);
      adam_step(net.params, grads, adam, cfg.lr);
    }
    EpochLog row{epoch, epoch_loss / double(n), cfg.lr};
    out.log.push_back(row);
    if (progress) progress(epoch, row.loss, row.lr);
  }

  out.checkpoint = make_checkpoint(net, prov);
  return out;
}

TrainResult distill(const Checkpoint& teacher_ckpt, const DatasetManifest& unlabeled,
                    const BandStats& stats, const DistillConfig& cfg, const ProgressFn& progress) {
  if (teacher_ckpt.provenance.stage != TrainStage::Finetune) {
    throw StageViolation("distill: teacher stage is " +
                         stage_name(teacher_ckpt.provenance.stage) + ", expected finetune");
  }
  Network teacher = network_from_checkpoint(teacher_ckpt);
  if (!teacher.has_classifier) throw ValidationError("distill: teacher has no classifier head");

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < unlabeled.entries.size(); ++i) {
    if (unlabeled.entries[i].split == SplitTag::UnlabeledPool) pool.push_back(i);
  }
  if (pool.empty()) {
    pool.resize(unlabeled.entries.size());
    std::iota(pool.begin(), pool.end(), 0);
  }
  if (pool.empty()) throw EmptyPool("distill: empty unlabeled pool");

  std::vector<MultispectralChip> chips;
  chips.reserve(pool.size());
  for (std::size_t i : pool) {
    chips.push_back(normalize_chip(load_chip(unlabeled.resolve(unlabeled.entries[i])), stats));
  }

  Network student = build_network(cfg.student, /*proj_dim=*/32, cfg.seed);
  student.to_classifier(cfg.seed);
  const auto teacher_size = count_parameters(teacher).total;
  const auto student_size = count_parameters(student).total;
  if (student_size > teacher_size) {
    throw ValidationError("distill: student has " + std::to_string(student_size) +
                          " parameters, more than the teacher's " + std::to_string(teacher_size));
  }

  struct DistillGraph {
    BuiltGraph bg;
    NodeId loss;
  };
  std::map<std::int64_t, DistillGraph> student_graphs;
  auto graph_for = [&](std::int64_t n) -> DistillGraph& {
    auto it = student_graphs.find(n);
    if (it == student_graphs.end()) {
      DistillGraph dg;
      dg.bg = student.make_graph(n, HeadMode::ClassifierLogits, /*training=*/true);
      NodeId p = dg.bg.graph.input("teacher_p", {n, 2}, false);
      dg.loss = append_distill_kl(dg.bg.graph, dg.bg.output, p, cfg.temperature, n);
      dg.bg.graph.mark_output("loss", dg.loss);
      it = student_graphs.emplace(n, std::move(dg)).first;
    }
    return it->second;
  };

  AdamState<float> adam;
  BackwardWorkspace<float> workspace;
  EvalResult<float> fwd;
  TrainResult out;
  const std::size_t n = chips.size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng::Stream(rng::derive(cfg.seed, "distill.shuffle", std::uint64_t(epoch))).shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += std::size_t(cfg.batch_size)) {
      const std::size_t count = std::min<std::size_t>(std::size_t(cfg.batch_size), n - start);
      std::span<const std::size_t> idx(order.data() + start, count);
      TensorF x = chips_to_batch(chips, idx);

      TensorF teacher_logits = teacher.forward(x, HeadMode::ClassifierLogits);
      TensorF p = soften_logits(teacher_logits, cfg.temperature);
      for (auto& v : p.v) v = std::max(v, 1e-30f);  // log(p) stays finite

      auto& dg = graph_for(std::int64_t(count));
      auto bindings = student.bindings(x);
      bindings.emplace("teacher_p", std::move(p));

      TensorMap<float> grads;
      try {
        grads = gradients<float>(dg.bg.graph, dg.loss, bindings, &fwd, &workspace);
      } catch (const NonFiniteResult& ex) {
        throw DivergedLoss(std::string("distill: ") + ex.what());
      } catch (const NonFiniteGradient& ex) {
        throw DivergedLoss(std::string("distill: ") + ex.what());
      }
      epoch_loss += fetch(dg.bg.graph, fwd, "loss").v[0] * double(count);
      student.update_running_stats(dg.bg, fwd);
      adam_step(student.params, grads, adam, cfg.lr);
    }
    EpochLog row{epoch, epoch_loss / double(n), cfg.lr};
    out.log.push_back(row);
    if (progress) progress(epoch, row.loss, row.lr);
  }

  Provenance prov;
  prov.stage = TrainStage::Distill;
  prov.seed = cfg.seed;
  prov.epoch = cfg.epochs;
  prov.source_stage = TrainStage::Finetune;
  prov.source_digest = teacher_ckpt.digest;
  out.checkpoint = make_checkpoint(student, prov);
  return out;
}

std::vector<Prediction> predict_manifest(const Network& net, const DatasetManifest& manifest,
                                         const BandStats& stats, int batch_size) {
  if (!net.has_classifier) throw ValidationError("predict: network has no classifier head");
  if (manifest.entries.empty()) throw EmptyInput("predict: empty manifest");

  std::vector<MultispectralChip> chips;
  chips.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    chips.push_back(normalize_chip(load_chip(manifest.resolve(e)), stats));
  }

  std::vector<Prediction> out;
  out.reserve(chips.size());
  std::vector<std::size_t> idx;
  const std::int64_t n = std::int64_t(chips.size());
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t count = std::min<std::int64_t>(batch_size, n - start);
    idx.resize(std::size_t(count));
    std::iota(idx.begin(), idx.end(), std::size_t(start));
    TensorF probs = net.forward(chips_to_batch(chips, idx), HeadMode::ClassifierProbs);
    for (std::int64_t i = 0; i < count; ++i) {
      const auto& entry = manifest.entries[std::size_t(start + i)];
      Prediction p;
      p.id = entry.chip_path;
      p.p = probs.v[std::size_t(2 * i + 1)];  // column 1 = irrigated
      p.region = entry.region;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace irrclr
