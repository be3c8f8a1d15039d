#include "irrclr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace irrclr {

MetricsReport confusion_metrics(const std::vector<Prediction>& predictions,
                                const std::vector<bool>& labels) {
  if (predictions.size() != labels.size()) {
    throw LengthMismatch("confusion_metrics: " + std::to_string(predictions.size()) +
                         " predictions vs " + std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) throw EmptyInput("confusion_metrics: empty input");

  MetricsReport r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i].predicted_irrigated();
    const bool truth = labels[i];
    if (pred && truth) ++r.tp;
    else if (pred && !truth) ++r.fp;
    else if (!pred && truth) ++r.fn;
    else ++r.tn;
  }

  if (r.tp + r.fp > 0) {
    r.precision = double(r.tp) / double(r.tp + r.fp);
  } else {
    r.no_positive_predictions = true;
    r.precision = (r.tp + r.fn == 0) ? 1.0 : 0.0;
  }
  r.recall = (r.tp + r.fn > 0) ? double(r.tp) / double(r.tp + r.fn) : 1.0;
  r.f1 = (r.precision + r.recall > 0.0)
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

TopKResult top_k_confident(const std::vector<Prediction>& predictions, std::int64_t k,
                           double min_confidence) {
  if (k < 1) throw ValidationError("top_k_confident: k must be >= 1");

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].predicted_irrigated()) candidates.push_back(i);
  }
  if (static_cast<std::int64_t>(candidates.size()) < k) {
    throw FewerThanK("top_k_confident: only " + std::to_string(candidates.size()) +
                     " positive predictions for k=" + std::to_string(k));
  }
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    if (predictions[a].p != predictions[b].p) return predictions[a].p > predictions[b].p;
    return predictions[a].id < predictions[b].id;
  });

  TopKResult out;
  for (std::int64_t i = 0; i < k; ++i) {
    out.indices.push_back(candidates[static_cast<std::size_t>(i)]);
    out.ids.push_back(predictions[candidates[static_cast<std::size_t>(i)]].id);
  }
  out.effective_threshold = predictions[out.indices.back()].p;
  out.below_requested = out.effective_threshold < min_confidence;
  return out;
}

std::vector<RegionRecall> recall_by_region(const std::vector<Prediction>& predictions) {
  if (predictions.empty()) throw EmptyInput("recall_by_region: empty input");
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> counts;  // region -> (hit, n)
  for (const auto& p : predictions) {
    if (!p.region) throw MissingRegion("recall_by_region: prediction " + p.id + " has no region");
    auto& [hit, n] = counts[*p.region];
    ++n;
    if (p.predicted_irrigated()) ++hit;
  }
  std::vector<RegionRecall> rows;
  std::int64_t total = 0, total_hit = 0;
  for (const auto& [region, hn] : counts) {
    rows.push_back({region, hn.second, double(hn.first) / double(hn.second)});
    total += hn.second;
    total_hit += hn.first;
  }
  rows.push_back({"overall", total, double(total_hit) / double(total)});
  return rows;
}

namespace {

// half-up to 2 decimals for table display
std::string fmt2(double v) {
  const double rounded = std::floor(v * 100.0 + 0.5) / 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", rounded);
  return buf;
}

}  // namespace

std::string emit_report(const StudyReport& report, ReportFormat format) {
  if (report.precision_rows.empty() && report.recall_rows.empty() && report.metrics.empty()) {
    throw EmptyInput("emit_report: nothing to report");
  }
  std::string out;
  bool first_section = true;
  auto section_break = [&] {
    if (!first_section) out += "\n";
    first_section = false;
  };

  if (format == ReportFormat::Csv) {
    if (!report.precision_rows.empty()) {
      section_break();
      out += "training_size,precision_simclr_s2,precision_supervised\n";
      for (const auto& r : report.precision_rows) {
        out += std::to_string(r.training_size) + "," + fmt2(r.simclr_s2) + "," +
               fmt2(r.supervised) + "\n";
      }
    }
    if (!report.recall_rows.empty()) {
      section_break();
      out += "country,training_size,recall_simclr_s2,recall_supervised\n";
      for (const auto& r : report.recall_rows) {
        out += r.country + "," + std::to_string(r.training_size) + "," + fmt2(r.simclr_s2) + "," +
               fmt2(r.supervised) + "\n";
      }
    }
    if (!report.metrics.empty()) {
      section_break();
      out += "model,split_size,precision,recall,f1,tp,fp,tn,fn\n";
      for (const auto& m : report.metrics) {
        out += m.model_id + "," + std::to_string(m.split_size) + "," + fmt2(m.precision) + "," +
               fmt2(m.recall) + "," + fmt2(m.f1) + "," + std::to_string(m.tp) + "," +
               std::to_string(m.fp) + "," + std::to_string(m.tn) + "," + std::to_string(m.fn) +
               "\n";
      }
    }
  } else {
    if (!report.precision_rows.empty()) {
      section_break();
      out += "| Training data size (num records) | Precision (SimCLR-S2) | Precision (supervised) |\n";
      out += "|---|---|---|\n";
      for (const auto& r : report.precision_rows) {
        out += "| " + std::to_string(r.training_size) + " | " + fmt2(r.simclr_s2) + " | " +
               fmt2(r.supervised) + " |\n";
      }
    }
    if (!report.recall_rows.empty()) {
      section_break();
      out += "| Country | Training data (num records) | Recall (SimCLR-S2) | Recall (supervised) |\n";
      out += "|---|---|---|---|\n";
      for (const auto& r : report.recall_rows) {
        out += "| " + r.country + " | " + std::to_string(r.training_size) + " | " +
               fmt2(r.simclr_s2) + " | " + fmt2(r.supervised) + " |\n";
      }
    }
    if (!report.metrics.empty()) {
      section_break();
      out += "| Model | Split size | Precision | Recall | F1 |\n";
      out += "|---|---|---|---|---|\n";
      for (const auto& m : report.metrics) {
        out += "| " + m.model_id + " | " + std::to_string(m.split_size) + " | " +
               fmt2(m.precision) + " | " + fmt2(m.recall) + " | " + fmt2(m.f1) + " |\n";
      }
    }
  }
  if (!report.aggregation_note.empty()) {
    out += "\n";
    out += (format == ReportFormat::Markdown ? "_" + report.aggregation_note + "_\n"
                                             : "# " + report.aggregation_note + "\n");
  }
  return out;
}

std::string predictions_to_csv(const std::vector<Prediction>& predictions,
                               const std::vector<std::optional<bool>>& labels) {
  if (!labels.empty() && labels.size() != predictions.size()) {
    throw LengthMismatch("predictions_to_csv: label count mismatch");
  }
  std::string out = "id,p,label,region\n";
  char buf[64];
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    std::snprintf(buf, sizeof(buf), "%.9g", p.p);
    out += p.id + "," + buf + ",";
    if (!labels.empty() && labels[i]) {
      out += *labels[i] ? "1" : "0";
    } else {
      out += "-";
    }
    out += "," + (p.region ? *p.region : std::string("-")) + "\n";
  }
  return out;
}

void parse_predictions_csv(const std::string& text, std::vector<Prediction>& predictions,
                           std::vector<std::optional<bool>>& labels) {
  predictions.clear();
  labels.clear();
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      if (line != "id,p,label,region") {
        throw ValidationError("predictions csv: bad header '" + line + "'");
      }
      header = false;
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        fields.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 4) throw ValidationError("predictions csv: bad line '" + line + "'");
    Prediction p;
    p.id = fields[0];
    p.p = std::strtod(fields[1].c_str(), nullptr);
    if (!(p.p >= 0.0 && p.p <= 1.0)) {
      throw ValidationError("predictions csv: probability out of range in '" + line + "'");
    }
    if (fields[3] != "-") p.region = fields[3];
    predictions.push_back(std::move(p));
    if (fields[2] == "1") labels.emplace_back(true);
    else if (fields[2] == "0") labels.emplace_back(false);
    else labels.emplace_back(std::nullopt);
  }
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["model_id"] = r.model_id;
  j["split_size"] = r.split_size;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["tp"] = r.tp;
  j["fp"] = r.fp;
  j["tn"] = r.tn;
  j["fn"] = r.fn;
  j["no_positive_predictions"] = r.no_positive_predictions;
  j["effective_threshold"] = r.effective_threshold;
  j["aggregation_note"] = r.aggregation_note;
  auto rows = nlohmann::json::array();
  for (const auto& row : r.region_rows) {
    rows.push_back({{"region", row.region}, {"n", row.n}, {"recall", row.recall}});
  }
  j["region_rows"] = rows;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport r;
  nlohmann::json j = nlohmann::json::parse(text);
  r.model_id = j.at("model_id").get<std::string>();
  r.split_size = j.at("split_size").get<std::int64_t>();
  r.precision = j.at("precision").get<double>();
  r.recall = j.at("recall").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.tp = j.at("tp").get<std::int64_t>();
  r.fp = j.at("fp").get<std::int64_t>();
  r.tn = j.at("tn").get<std::int64_t>();
  r.fn = j.at("fn").get<std::int64_t>();
  r.no_positive_predictions = j.at("no_positive_predictions").get<bool>();
  r.effective_threshold = j.at("effective_threshold").get<double>();
  r.aggregation_note = j.value("aggregation_note", "");
  for (const auto& row : j.at("region_rows")) {
    r.region_rows.push_back({row.at("region").get<std::string>(), row.at("n").get<std::int64_t>(),
                             row.at("recall").get<double>()});
  }
  return r;
}

}  // namespace irrclr
