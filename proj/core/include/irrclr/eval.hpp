#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "irrclr/errors.hpp"

namespace irrclr {

struct LengthMismatch : ValidationError { using ValidationError::ValidationError; };
struct EmptyInput : ValidationError { using ValidationError::ValidationError; };
struct FewerThanK : ValidationError { using ValidationError::ValidationError; };
struct MissingRegion : ValidationError { using ValidationError::ValidationError; };

struct Prediction {
  std::string id;
  double p = 0.0;  // probability of "irrigated"
  std::optional<std::string> region;

  bool predicted_irrigated() const { return p >= 0.5; }
};

struct RegionRecall {
  std::string region;
  std::int64_t n = 0;
  double recall = 0.0;
};

struct MetricsReport {
  std::string model_id;  // e.g. "simclr-s2", "supervised"
  std::int64_t split_size = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  // set when precision fell back to the no-positive-predictions convention
  bool no_positive_predictions = false;
  double effective_threshold = 0.5;
  std::vector<RegionRecall> region_rows;
  std::string aggregation_note;
};

// Positive class is "irrigated". Precision falls back to 0 (flagged) when
// nothing is predicted positive, or 1 when nothing is positive at all.
MetricsReport confusion_metrics(const std::vector<Prediction>& predictions,
                                const std::vector<bool>& labels);

struct TopKResult {
  std::vector<std::string> ids;        // k ids, p descending, ties by id
  std::vector<std::size_t> indices;    // positions in the input vector
  double effective_threshold = 0.0;    // p of the k-th selected item
  bool below_requested = false;        // effective_threshold < min_confidence
};

// The k most confident positive predictions with at least min_confidence
// requested; below_requested records that the pool forced the threshold
// down, as happens to low-confidence models.
TopKResult top_k_confident(const std::vector<Prediction>& predictions, std::int64_t k,
                           double min_confidence);

// Positives-only generalization study: every record carries a region tag
// and is truly irrigated; recall per region plus an "overall" row.
std::vector<RegionRecall> recall_by_region(const std::vector<Prediction>& predictions);

enum class ReportFormat { Csv, Markdown };

struct PrecisionStudyRow {
  std::int64_t training_size = 0;
  double simclr_s2 = 0.0;
  double supervised = 0.0;
};

struct RecallStudyRow {
  std::string country;
  std::int64_t training_size = 0;
  double simclr_s2 = 0.0;
  double supervised = 0.0;
};

struct StudyReport {
  std::vector<PrecisionStudyRow> precision_rows;
  std::vector<RecallStudyRow> recall_rows;
  std::vector<MetricsReport> metrics;
  std::string aggregation_note;
};

// Deterministic, byte-stable rendering. Metric values display with 2
// decimals (half-up); computation stays at full precision upstream.
std::string emit_report(const StudyReport& report, ReportFormat format);

// Prediction CSV: id,p,label,region with "-" for missing fields.
std::string predictions_to_csv(const std::vector<Prediction>& predictions,
                               const std::vector<std::optional<bool>>& labels);
void parse_predictions_csv(const std::string& text, std::vector<Prediction>& predictions,
                           std::vector<std::optional<bool>>& labels);

// MetricsReport artifact (JSON) for passing studies between subcommands.
std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

}  // namespace irrclr
