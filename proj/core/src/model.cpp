#include "irrclr/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "irrclr/digest.hpp"
#include "irrclr/rng.hpp"

namespace irrclr {

void EncoderConfig::validate() const {
  if (in_height <= 0 || in_width <= 0 || in_bands <= 0) {
    throw InvalidConfig("encoder: input dims must be positive");
  }
  if (stem_channels <= 0) throw InvalidConfig("encoder: stem_channels must be positive");
  if (stages.empty()) throw InvalidConfig("encoder: at least one stage required");
  if (embedding_dim <= 0) throw InvalidConfig("encoder: embedding_dim must be positive");
  int h = in_height, w = in_width;
  int prev_channels = 0;
  for (const auto& s : stages) {
    if (s.blocks <= 0) throw InvalidConfig("encoder: stage blocks must be positive");
    if (s.channels <= 0) throw InvalidConfig("encoder: stage channels must be positive");
    if (s.channels < prev_channels) {
      throw InvalidConfig("encoder: stage channels must be non-decreasing");
    }
    prev_channels = s.channels;
    if (s.downsample) {
      if (h < 2 || w < 2) throw InvalidConfig("encoder: spatial extent too small to downsample");
      h /= 2;
      w /= 2;
    }
  }
}

std::string EncoderConfig::canonical_text() const {
  std::ostringstream out;
  out << "input=" << in_height << "x" << in_width << "x" << in_bands << "\n";
  out << "stem=" << stem_channels << "\n";
  for (const auto& s : stages) {
    out << "stage=" << s.blocks << "x" << s.channels << (s.downsample ? "d" : "") << "\n";
  }
  out << "embed=" << embedding_dim << "\n";
  return out.str();
}

EncoderConfig EncoderConfig::from_text(const std::string& text) {
  EncoderConfig cfg;
  cfg.stages.clear();
  std::istringstream in(text);
  std::string line;
  bool saw_input = false, saw_stem = false, saw_embed = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig("encoder text: bad line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "input") {
      if (std::sscanf(val.c_str(), "%dx%dx%d", &cfg.in_height, &cfg.in_width, &cfg.in_bands) != 3) {
        throw InvalidConfig("encoder text: bad input '" + val + "'");
      }
      saw_input = true;
    } else if (key == "stem") {
      cfg.stem_channels = std::atoi(val.c_str());
      saw_stem = true;
    } else if (key == "stage") {
      StageSpec s;
      s.downsample = !val.empty() && val.back() == 'd';
      std::string core = s.downsample ? val.substr(0, val.size() - 1) : val;
      if (std::sscanf(core.c_str(), "%dx%d", &s.blocks, &s.channels) != 2) {
        throw InvalidConfig("encoder text: bad stage '" + val + "'");
      }
      cfg.stages.push_back(s);
    } else if (key == "embed") {
      cfg.embedding_dim = std::atoi(val.c_str());
      saw_embed = true;
    } else {
      throw InvalidConfig("encoder text: unknown key '" + key + "'");
    }
  }
  if (!saw_input || !saw_stem || !saw_embed) {
    throw InvalidConfig("encoder text: missing input/stem/embed");
  }
  cfg.validate();
  return cfg;
}

EncoderConfig EncoderConfig::preset(const std::string& name) {
  EncoderConfig cfg;
  if (name == "nano") {
    cfg.stem_channels = 4;
    cfg.stages = {{1, 4, false}};
    cfg.embedding_dim = 16;
  } else if (name == "tiny") {
    cfg.stem_channels = 8;
    cfg.stages = {{1, 8, false}};
    cfg.embedding_dim = 16;
  } else if (name == "small") {
    cfg.stem_channels = 16;
    cfg.stages = {{1, 16, false}, {1, 32, true}};
    cfg.embedding_dim = 32;
  } else if (name == "base") {
    cfg.stem_channels = 32;
    cfg.stages = {{2, 32, false}, {2, 64, true}, {2, 128, true}};
    cfg.embedding_dim = 128;
  } else {
    throw InvalidConfig("unknown encoder preset '" + name + "'");
  }
  return cfg;
}

std::vector<std::string> EncoderConfig::preset_names() { return {"nano", "tiny", "small", "base"}; }

std::string stage_name(TrainStage stage) {
  switch (stage) {
    case TrainStage::Pretrain: return "pretrain";
    case TrainStage::Finetune: return "finetune";
    case TrainStage::Distill: return "distill";
    case TrainStage::Supervised: return "supervised";
  }
  return "?";
}

std::optional<TrainStage> stage_from_name(const std::string& name) {
  if (name == "pretrain") return TrainStage::Pretrain;
  if (name == "finetune") return TrainStage::Finetune;
  if (name == "distill") return TrainStage::Distill;
  if (name == "supervised") return TrainStage::Supervised;
  return std::nullopt;
}

namespace {

struct GraphBuilder {
  const Network& net;
  Graph& g;
  bool training;
  std::vector<std::pair<NodeId, std::string>>* norm_nodes;

  NodeId param(const std::string& name) {
    auto it = net.params.find(name);
    if (it == net.params.end()) throw ValidationError("network: missing parameter " + name);
    return g.input(name, it->second.shape, /*trainable=*/true);
  }

  NodeId state_input(const std::string& name) {
    auto it = net.state.find(name);
    if (it == net.state.end()) throw ValidationError("network: missing state " + name);
    return g.input(name, it->second.shape, /*trainable=*/false);
  }

  NodeId conv(const std::string& prefix, NodeId in, int stride) {
    return g.conv2d(in, param(prefix + ".w"), param(prefix + ".b"), stride);
  }

  NodeId norm(const std::string& prefix, NodeId in) {
    NodeId out = g.channel_affine_norm(in, param(prefix + ".scale"), param(prefix + ".shift"),
                                       state_input(prefix + ".rmean"),
                                       state_input(prefix + ".rvar"), training);
    norm_nodes->emplace_back(out, prefix);
    return out;
  }

  NodeId linear(const std::string& prefix, NodeId in) {
    return g.add(g.matmul(in, param(prefix + ".w")), param(prefix + ".b"));
  }

  NodeId residual_block(const std::string& prefix, NodeId in, int in_ch, int out_ch, int stride) {
    NodeId main = conv(prefix + ".conv1", in, stride);
    main = g.relu(norm(prefix + ".norm1", main));
    main = conv(prefix + ".conv2", main, 1);
    main = norm(prefix + ".norm2", main);
    NodeId skip = (stride == 1 && in_ch == out_ch) ? in : conv(prefix + ".skip", in, stride);
    return g.relu(g.add(main, skip));
  }
};

}  // namespace

BuiltGraph Network::make_graph(std::int64_t batch, HeadMode mode, bool training) const {
  config.validate();
  if ((mode == HeadMode::Projection && !has_projection) ||
      ((mode == HeadMode::ClassifierLogits || mode == HeadMode::ClassifierProbs) &&
       !has_classifier)) {
    throw ValidationError("network: requested head is not attached");
  }

  BuiltGraph bg;
  GraphBuilder b{*this, bg.graph, training, &bg.norm_nodes};
  Graph& g = bg.graph;

  NodeId x = g.input("x", {batch, config.in_bands, config.in_height, config.in_width}, false);
  NodeId h = g.relu(b.norm("stem.norm", b.conv("stem.conv", x, 1)));

  int in_ch = config.stem_channels;
  for (std::size_t si = 0; si < config.stages.size(); ++si) {
    const auto& stage = config.stages[si];
    for (int bi = 0; bi < stage.blocks; ++bi) {
      const int stride = (stage.downsample && bi == 0) ? 2 : 1;
      char prefix[32];
      std::snprintf(prefix, sizeof(prefix), "s%zu.b%d", si, bi);
      h = b.residual_block(prefix, h, in_ch, stage.channels, stride);
      in_ch = stage.channels;
    }
  }

  NodeId embed = b.linear("embed", g.global_avg_pool(h));

  switch (mode) {
    case HeadMode::Embedding:
      bg.output = embed;
      break;
    case HeadMode::Projection: {
      NodeId p = g.relu(b.linear("proj.fc1", embed));
      bg.output = g.l2_normalize(b.linear("proj.fc2", p));
      break;
    }
    case HeadMode::ClassifierLogits:
      bg.output = b.linear("head", embed);
      break;
    case HeadMode::ClassifierProbs:
      bg.output = g.softmax(b.linear("head", embed));
      break;
  }
  g.mark_output("out", bg.output);
  return bg;
}

TensorMap<float> Network::bindings(TensorF batch_input) const {
  TensorMap<float> m;
  for (const auto& [name, t] : params) m.emplace(name, t);
  for (const auto& [name, t] : state) m.emplace(name, t);
  m.emplace("x", std::move(batch_input));
  return m;
}

TensorF Network::forward(const TensorF& batch, HeadMode mode) const {
  auto bg = make_graph(batch.shape[0], mode, /*training=*/false);
  auto result = evaluate<float>(bg.graph, bindings(batch));
  return fetch(bg.graph, result, "out");
}

void Network::update_running_stats(const BuiltGraph& bg, const EvalResult<float>& fwd,
                                   double momentum) {
  for (const auto& [node, prefix] : bg.norm_nodes) {
    auto it = fwd.batch_stats.find(node);
    if (it == fwd.batch_stats.end()) continue;
    auto& rmean = state.at(prefix + ".rmean");
    auto& rvar = state.at(prefix + ".rvar");
    const auto& [bmean, bvar] = it->second;
    for (std::size_t i = 0; i < rmean.v.size(); ++i) {
      rmean.v[i] = static_cast<float>(momentum * rmean.v[i] + (1.0 - momentum) * bmean[i]);
      rvar.v[i] = static_cast<float>(momentum * rvar.v[i] + (1.0 - momentum) * bvar[i]);
    }
  }
}

namespace {

TensorF he_uniform(Shape shape, std::int64_t fan_in, rng::Stream& stream) {
  const double bound = std::sqrt(6.0 / double(fan_in));
  auto t = TensorF::zeros(std::move(shape));
  for (auto& v : t.v) v = static_cast<float>(stream.uniform(-bound, bound));
  return t;
}

void init_conv(Network& net, const std::string& prefix, int out_ch, int in_ch, int k,
               std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, "init", prefix));
  net.params[prefix + ".w"] =
      he_uniform({out_ch, in_ch, k, k}, std::int64_t(in_ch) * k * k, stream);
  net.params[prefix + ".b"] = TensorF::zeros({out_ch});
}

void init_norm(Network& net, const std::string& prefix, int channels) {
  net.params[prefix + ".scale"] = TensorF::full({channels}, 1.0f);
  net.params[prefix + ".shift"] = TensorF::zeros({channels});
  net.state[prefix + ".rmean"] = TensorF::zeros({channels});
  net.state[prefix + ".rvar"] = TensorF::full({channels}, 1.0f);
}

void init_linear(Network& net, const std::string& prefix, int in_dim, int out_dim,
                 std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, "init", prefix));
  net.params[prefix + ".w"] = he_uniform({in_dim, out_dim}, in_dim, stream);
  net.params[prefix + ".b"] = TensorF::zeros({out_dim});
}

}  // namespace

Network build_network(const EncoderConfig& config, int proj_dim, std::uint64_t seed) {
  config.validate();
  if (proj_dim <= 0) throw InvalidConfig("build_network: proj_dim must be positive");

  Network net;
  net.config = config;
  net.proj_dim = proj_dim;
  net.has_projection = true;

  init_conv(net, "stem.conv", config.stem_channels, config.in_bands, 3, seed);
  init_norm(net, "stem.norm", config.stem_channels);

  int in_ch = config.stem_channels;
  for (std::size_t si = 0; si < config.stages.size(); ++si) {
    const auto& stage = config.stages[si];
    for (int bi = 0; bi < stage.blocks; ++bi) {
      const int stride = (stage.downsample && bi == 0) ? 2 : 1;
      char prefix[32];
      std::snprintf(prefix, sizeof(prefix), "s%zu.b%d", si, bi);
      const std::string p(prefix);
      init_conv(net, p + ".conv1", stage.channels, in_ch, 3, seed);
      init_norm(net, p + ".norm1", stage.channels);
      init_conv(net, p + ".conv2", stage.channels, stage.channels, 3, seed);
      init_norm(net, p + ".norm2", stage.channels);
      if (stride != 1 || in_ch != stage.channels) {
        init_conv(net, p + ".skip", stage.channels, in_ch, 1, seed);
      }
      in_ch = stage.channels;
    }
  }

  init_linear(net, "embed", in_ch, config.embedding_dim, seed);
  init_linear(net, "proj.fc1", config.embedding_dim, config.embedding_dim, seed);
  init_linear(net, "proj.fc2", config.embedding_dim, proj_dim, seed);
  return net;
}

void Network::to_classifier(std::uint64_t seed) {
  for (auto it = params.begin(); it != params.end();) {
    if (it->first.rfind("proj.", 0) == 0) {
      it = params.erase(it);
    } else {
      ++it;
    }
  }
  has_projection = false;
  init_linear(*this, "head", config.embedding_dim, 2, seed);
  has_classifier = true;
}

std::vector<std::string> Network::encoder_param_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : params) {
    if (name.rfind("proj.", 0) != 0 && name.rfind("head.", 0) != 0) out.push_back(name);
  }
  return out;
}

std::vector<std::string> Network::head_param_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : params) {
    if (name.rfind("head.", 0) == 0) out.push_back(name);
  }
  return out;
}

ParameterCount count_parameters(const Network& net) {
  ParameterCount pc;
  for (const auto& [name, t] : net.params) {
    pc.per_tensor[name] = t.size();
    pc.total += t.size();
  }
  return pc;
}

void validate_stage_transition(std::optional<TrainStage> source, TrainStage next) {
  switch (next) {
    case TrainStage::Pretrain:
      if (source) throw StageViolation("pretrain checkpoints cannot have a source stage");
      return;
    case TrainStage::Finetune:
      if (!source || *source != TrainStage::Pretrain) {
        throw StageViolation("finetune requires a pretrain-stage source checkpoint");
      }
      return;
    case TrainStage::Distill:
      if (!source || *source != TrainStage::Finetune) {
        throw StageViolation("distill requires a finetune-stage teacher checkpoint");
      }
      return;
    case TrainStage::Supervised:
      if (source && *source != TrainStage::Pretrain && *source != TrainStage::Supervised) {
        throw StageViolation("supervised training can only warm-start from pretrain or supervised");
      }
      return;
  }
}

namespace {

constexpr char kCkptMagic[4] = {'I', 'C', 'K', 'P'};
constexpr std::uint8_t kCkptVersion = 1;

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_str8(std::vector<std::uint8_t>& out, const std::string& s) {
  if (s.size() > 0xff) throw ValidationError("checkpoint: string too long");
  out.push_back(static_cast<std::uint8_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

void put_str16(std::vector<std::uint8_t>& out, const std::string& s) {
  if (s.size() > 0xffff) throw ValidationError("checkpoint: string too long");
  out.push_back(static_cast<std::uint8_t>(s.size() & 0xff));
  out.push_back(static_cast<std::uint8_t>(s.size() >> 8));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw ValidationError("checkpoint: truncated");
  }
  std::uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str8() {
    std::size_t n = u8();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data()) + pos, n);
    pos += n;
    return s;
  }
  std::string str16() {
    need(2);
    std::size_t n = bytes[pos] | (std::size_t(bytes[pos + 1]) << 8);
    pos += 2;
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data()) + pos, n);
    pos += n;
    return s;
  }
};

void put_tensor_table(std::vector<std::uint8_t>& out,
                      const std::map<std::string, TensorF>& tensors, std::uint8_t flag) {
  for (const auto& [name, t] : tensors) {
    put_str16(out, name);
    out.push_back(flag);
    out.push_back(static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) put_u32le(out, static_cast<std::uint32_t>(d));
    for (float v : t.v) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      put_u32le(out, bits);
    }
  }
}

}  // namespace

Checkpoint make_checkpoint(const Network& net, Provenance provenance) {
  validate_stage_transition(provenance.source_stage, provenance.stage);
  Checkpoint ckpt;
  ckpt.config = net.config;
  ckpt.proj_dim = net.proj_dim;
  ckpt.provenance = std::move(provenance);
  ckpt.params = net.params;
  ckpt.state = net.state;
  auto bytes = serialize_checkpoint(ckpt);
  // digest covers the body, i.e. everything but the trailing hash
  ckpt.digest = sha256_hex(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 32));
  return ckpt;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kCkptMagic, kCkptMagic + 4);
  out.push_back(kCkptVersion);
  put_str8(out, "sha256");

  const std::string cfg = ckpt.config.canonical_text();
  put_u32le(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  put_u32le(out, static_cast<std::uint32_t>(ckpt.proj_dim));

  put_str8(out, stage_name(ckpt.provenance.stage));
  put_u64le(out, ckpt.provenance.seed);
  put_u64le(out, static_cast<std::uint64_t>(ckpt.provenance.epoch));
  put_str8(out, ckpt.provenance.source_stage ? stage_name(*ckpt.provenance.source_stage) : "-");
  put_str8(out, ckpt.provenance.source_digest);

  put_u32le(out, static_cast<std::uint32_t>(ckpt.params.size() + ckpt.state.size()));
  put_tensor_table(out, ckpt.params, 1);
  put_tensor_table(out, ckpt.state, 0);

  const auto digest = sha256_hex(std::span<const std::uint8_t>(out.data(), out.size()));
  for (std::size_t i = 0; i < 64; i += 2) {
    auto nib = [&](char c) -> std::uint8_t {
      return c <= '9' ? std::uint8_t(c - '0') : std::uint8_t(c - 'a' + 10);
    };
    out.push_back(static_cast<std::uint8_t>((nib(digest[i]) << 4) | nib(digest[i + 1])));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 1 + 32 || std::memcmp(bytes.data(), kCkptMagic, 4) != 0) {
    throw ValidationError("checkpoint: bad magic");
  }
  const std::size_t body_size = bytes.size() - 32;
  const auto expect = sha256_hex(std::span<const std::uint8_t>(bytes.data(), body_size));
  std::string stored;
  static const char* hex = "0123456789abcdef";
  for (std::size_t i = body_size; i < bytes.size(); ++i) {
    stored += hex[bytes[i] >> 4];
    stored += hex[bytes[i] & 0xf];
  }
  if (stored != expect) {
    throw DigestMismatch("checkpoint: content digest mismatch (corrupt file)");
  }

  Reader r{bytes.subspan(0, body_size), 4};
  if (r.u8() != kCkptVersion) throw ValidationError("checkpoint: unsupported version");
  if (r.str8() != "sha256") throw ValidationError("checkpoint: unknown digest algorithm");

  Checkpoint ckpt;
  const std::uint32_t cfg_len = r.u32();
  r.need(cfg_len);
  std::string cfg_text(reinterpret_cast<const char*>(r.bytes.data()) + r.pos, cfg_len);
  r.pos += cfg_len;
  ckpt.config = EncoderConfig::from_text(cfg_text);
  ckpt.proj_dim = static_cast<int>(r.u32());

  auto stage = stage_from_name(r.str8());
  if (!stage) throw ValidationError("checkpoint: bad stage name");
  ckpt.provenance.stage = *stage;
  ckpt.provenance.seed = r.u64();
  ckpt.provenance.epoch = static_cast<std::int64_t>(r.u64());
  const std::string src_stage = r.str8();
  if (src_stage != "-") {
    auto s = stage_from_name(src_stage);
    if (!s) throw ValidationError("checkpoint: bad source stage name");
    ckpt.provenance.source_stage = s;
  }
  ckpt.provenance.source_digest = r.str8();
  validate_stage_transition(ckpt.provenance.source_stage, ckpt.provenance.stage);

  const std::uint32_t tensor_count = r.u32();
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = r.str16();
    const std::uint8_t flag = r.u8();
    const std::uint8_t ndim = r.u8();
    Shape shape;
    for (int d = 0; d < ndim; ++d) shape.push_back(static_cast<std::int64_t>(r.u32()));
    const std::int64_t n = numel(shape);
    std::vector<float> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = std::bit_cast<float>(r.u32());
    TensorF t(std::move(shape), std::move(values));
    if (flag == 1) {
      ckpt.params.emplace(std::move(name), std::move(t));
    } else {
      ckpt.state.emplace(std::move(name), std::move(t));
    }
  }
  if (r.pos != body_size) throw ValidationError("checkpoint: trailing bytes");
  ckpt.digest = expect;
  return ckpt;
}

std::string save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto bytes = serialize_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  return sha256_hex(std::span<const std::uint8_t>(bytes.data(), bytes.size() - 32));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Network network_from_checkpoint(const Checkpoint& ckpt) {
  Network net;
  net.config = ckpt.config;
  net.proj_dim = ckpt.proj_dim;
  net.params = ckpt.params;
  net.state = ckpt.state;
  net.has_projection = ckpt.params.count("proj.fc1.w") > 0;
  net.has_classifier = ckpt.params.count("head.w") > 0;
  return net;
}

}  // namespace irrclr
