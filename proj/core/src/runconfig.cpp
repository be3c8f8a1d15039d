#include "irrclr/runconfig.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace irrclr {

namespace {

// every key a stage may read; anything else is a config error
constexpr std::array kKnownKeys = {
    "run.seed",
    "run.out",
    "dataset.manifest",
    "dataset.stats",
    "dataset.chip_size",
    "encoder.preset",
    "encoder.proj_dim",
    "synth.unlabeled",
    "synth.labeled",
    "synth.class_signal",
    "split.fraction",
    "split.holdout_fraction",
    "contrastive.temperature",
    "contrastive.batch_size",
    "contrastive.epochs",
    "contrastive.optimizer",
    "contrastive.lr",
    "finetune.freeze_encoder",
    "finetune.epochs",
    "finetune.lr",
    "finetune.batch_size",
    "distill.temperature",
    "distill.student",
    "distill.epochs",
    "distill.lr",
    "distill.batch_size",
    "supervised.epochs",
    "supervised.lr",
    "supervised.batch_size",
    "study.k",
    "study.min_confidence",
};

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::check_known(const std::string& section, const std::string& key) {
  const std::string full = section + "." + key;
  if (std::find(kKnownKeys.begin(), kKnownKeys.end(), full) == kKnownKeys.end()) {
    throw ConfigValidation("config: unknown key '" + full + "'");
  }
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigValidation("config line " + std::to_string(lineno) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigValidation("config line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigValidation("config line " + std::to_string(lineno) + ": expected key=value");
    }
    if (section.empty()) {
      throw ConfigValidation("config line " + std::to_string(lineno) + ": key outside a section");
    }
    cfg.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigValidation("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::set(const std::string& section, const std::string& key, std::string value) {
  check_known(section, key);
  values_[section + "." + key] = std::move(value);
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  return values_.count(section + "." + key) > 0;
}

std::string RunConfig::get_str(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  auto it = values_.find(section + "." + key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t RunConfig::get_int(const std::string& section, const std::string& key,
                                std::int64_t fallback) const {
  auto it = values_.find(section + "." + key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const std::int64_t v = std::strtoll(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigValidation("config: '" + it->first + "' is not an integer");
  }
  return v;
}

double RunConfig::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  auto it = values_.find(section + "." + key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0') {
    throw ConfigValidation("config: '" + it->first + "' is not a number");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  auto it = values_.find(section + "." + key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigValidation("config: '" + it->first + "' is not a boolean");
}

}  // namespace irrclr
