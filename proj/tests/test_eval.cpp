#include <doctest.h>

#include <fstream>
#include <sstream>

#include "irrclr/eval.hpp"
#include "irrclr/rng.hpp"
#include "oracles.hpp"

using namespace irrclr;

namespace {

std::vector<Prediction> preds_of(const std::vector<double>& ps) {
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    out.push_back({"chip-" + std::to_string(i), ps[i], std::nullopt});
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// the paper's comparison tables, used as report fixtures
StudyReport paper_precision_fixture() {
  StudyReport r;
  r.precision_rows = {{190, 0.99, 0.11},  {570, 1.00, 0.2},   {1902, 0.99, 0.36},
                      {4756, 0.98, 0.95}, {9515, 1.00, 0.78}, {19024, 1.00, 0.47}};
  return r;
}

StudyReport paper_recall_fixture() {
  StudyReport r;
  r.recall_rows = {{"Brazil", 190, 0.75, 0.5},
                   {"India", 190, 0.9, 0.67},
                   {"Indonesia", 570, 0.76, 0.07},
                   {"Tunisia", 570, 0.78, 0.91},
                   {"Vietnam+Myanmar", 190, 0.9, 0.00}};
  return r;
}

}  // namespace

TEST_CASE("confusion metrics closed forms") {
  auto all_good = confusion_metrics(preds_of({0.9, 0.1, 0.8}), {true, false, true});
  CHECK(all_good.precision == 1.0);
  CHECK(all_good.recall == 1.0);
  CHECK(all_good.f1 == 1.0);

  // P = 0.5, R = 1.0 -> F1 = 2/3
  auto half = confusion_metrics(preds_of({0.9, 0.8}), {true, false});
  CHECK(half.precision == doctest::Approx(0.5));
  CHECK(half.recall == doctest::Approx(1.0));
  CHECK(half.f1 == doctest::Approx(2.0 / 3.0));

  // 100 predicted positive, 99 truly positive
  std::vector<double> ps(100, 0.99);
  std::vector<bool> labels(100, true);
  labels[7] = false;
  auto many = confusion_metrics(preds_of(ps), labels);
  CHECK(many.precision == doctest::Approx(0.99));
}

TEST_CASE("precision conventions when nothing is predicted positive") {
  auto miss = confusion_metrics(preds_of({0.1, 0.2}), {true, false});
  CHECK(miss.precision == 0.0);
  CHECK(miss.no_positive_predictions);
  CHECK(miss.recall == 0.0);

  auto vacuous = confusion_metrics(preds_of({0.1, 0.2}), {false, false});
  CHECK(vacuous.precision == 1.0);
  CHECK(vacuous.no_positive_predictions);
  CHECK(vacuous.recall == 1.0);
  CHECK(vacuous.f1 == 1.0);

  CHECK_THROWS_AS(confusion_metrics(preds_of({0.5}), {true, false}), LengthMismatch);
  CHECK_THROWS_AS(confusion_metrics({}, {}), EmptyInput);
}

TEST_CASE("confusion metrics agree exactly with the brute-force oracle") {
  rng::Stream s(rng::derive(55, "confusion"));
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + s.below(1000);
    std::vector<double> ps(n);
    std::vector<bool> truth(n);
    std::vector<bool> predicted(n);
    for (std::size_t i = 0; i < n; ++i) {
      ps[i] = s.uniform();
      truth[i] = s.uniform() < 0.5;
      predicted[i] = ps[i] >= 0.5;
    }
    auto got = confusion_metrics(preds_of(ps), truth);
    auto want = oracle::confusion(predicted, truth);
    CHECK(got.tp == want.tp);
    CHECK(got.fp == want.fp);
    CHECK(got.tn == want.tn);
    CHECK(got.fn == want.fn);
    const double p = want.tp + want.fp > 0 ? double(want.tp) / (want.tp + want.fp)
                                           : (want.tp + want.fn == 0 ? 1.0 : 0.0);
    const double r = want.tp + want.fn > 0 ? double(want.tp) / (want.tp + want.fn) : 1.0;
    CHECK(got.precision == doctest::Approx(p));
    CHECK(got.recall == doctest::Approx(r));
    const double f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    CHECK(got.f1 == doctest::Approx(f1));
  }
}

TEST_CASE("top_k_confident selection, threshold degradation, bounds") {
  auto preds = preds_of({0.999, 0.995, 0.991, 0.80, 0.50});

  auto three = top_k_confident(preds, 3, 0.99);
  CHECK(three.ids == std::vector<std::string>{"chip-0", "chip-1", "chip-2"});
  CHECK(three.effective_threshold == doctest::Approx(0.991));
  CHECK_FALSE(three.below_requested);

  auto four = top_k_confident(preds, 4, 0.99);
  CHECK(four.ids.size() == 4);
  CHECK(four.effective_threshold == doctest::Approx(0.80));
  CHECK(four.below_requested);

  CHECK_THROWS_AS(top_k_confident(preds, 6, 0.99), FewerThanK);
  CHECK_THROWS_AS(top_k_confident(preds, 0, 0.99), ValidationError);

  // ties broken by ascending id; output sorted by p descending
  std::vector<Prediction> tied = {{"b", 0.9, {}}, {"a", 0.9, {}}, {"c", 0.95, {}}};
  auto sel = top_k_confident(tied, 3, 0.5);
  CHECK(sel.ids == std::vector<std::string>{"c", "a", "b"});

  // selection matches a full-sort oracle on random data
  rng::Stream s(rng::derive(66, "topk"));
  std::vector<Prediction> big;
  for (int i = 0; i < 500; ++i) {
    big.push_back({"p" + std::to_string(1000 + i), s.uniform(), std::nullopt});
  }
  auto got = top_k_confident(big, 50, 0.99);
  auto sorted = big;
  std::sort(sorted.begin(), sorted.end(), [](const Prediction& a, const Prediction& b) {
    if (a.p != b.p) return a.p > b.p;
    return a.id < b.id;
  });
  for (int i = 0; i < 50; ++i) CHECK(got.ids[i] == sorted[i].id);
  for (int i = 1; i < 50; ++i) {
    CHECK(big[std::distance(big.begin(),
                            std::find_if(big.begin(), big.end(),
                                         [&](const Prediction& p) { return p.id == got.ids[i]; }))]
              .p <= big[std::distance(big.begin(), std::find_if(big.begin(), big.end(),
                                                                [&](const Prediction& p) {
                                                                  return p.id == got.ids[i - 1];
                                                                }))]
                        .p);
  }
}

TEST_CASE("recall by region aggregates and appends an overall row") {
  std::vector<Prediction> preds = {
      {"a", 0.9, "brazil"}, {"b", 0.8, "brazil"}, {"c", 0.7, "brazil"}, {"d", 0.2, "brazil"},
  };
  auto rows = recall_by_region(preds);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].region == "brazil");
  CHECK(rows[0].n == 4);
  CHECK(rows[0].recall == doctest::Approx(0.75));
  CHECK(rows[1].region == "overall");

  std::vector<Prediction> two = {
      {"a", 0.9, "x"}, {"b", 0.8, "x"}, {"c", 0.1, "y"}, {"d", 0.2, "y"}, {"e", 0.3, "y"},
  };
  auto r2 = recall_by_region(two);
  REQUIRE(r2.size() == 3);
  CHECK(r2[0].recall == doctest::Approx(1.0));
  CHECK(r2[1].recall == doctest::Approx(0.0));
  CHECK(r2[2].region == "overall");
  CHECK(r2[2].n == 5);
  CHECK(r2[2].recall == doctest::Approx(0.4));

  std::vector<Prediction> untagged = {{"a", 0.9, std::nullopt}};
  CHECK_THROWS_AS(recall_by_region(untagged), MissingRegion);
}

TEST_CASE("emit_report reproduces the golden tables byte for byte") {
  const std::string dir = TEST_GOLDEN_DIR;
  CHECK(emit_report(paper_precision_fixture(), ReportFormat::Csv) ==
        read_file(dir + "/precision_table.csv"));
  CHECK(emit_report(paper_precision_fixture(), ReportFormat::Markdown) ==
        read_file(dir + "/precision_table.md"));
  CHECK(emit_report(paper_recall_fixture(), ReportFormat::Csv) ==
        read_file(dir + "/recall_table.csv"));
  CHECK(emit_report(paper_recall_fixture(), ReportFormat::Markdown) ==
        read_file(dir + "/recall_table.md"));

  // byte-stable across calls, distinct for distinct reports
  CHECK(emit_report(paper_recall_fixture(), ReportFormat::Csv) ==
        emit_report(paper_recall_fixture(), ReportFormat::Csv));
  auto tweaked = paper_recall_fixture();
  tweaked.recall_rows[0].simclr_s2 = 0.74;
  CHECK(emit_report(tweaked, ReportFormat::Csv) !=
        emit_report(paper_recall_fixture(), ReportFormat::Csv));

  CHECK_THROWS_AS(emit_report(StudyReport{}, ReportFormat::Csv), EmptyInput);
}

TEST_CASE("single metrics row renders as header plus one line") {
  StudyReport r;
  MetricsReport m;
  m.model_id = "simclr-s2";
  m.split_size = 4;
  m.precision = 1.0;
  m.recall = 0.5;
  m.f1 = 2.0 / 3.0;
  m.tp = 1;
  m.fn = 1;
  m.tn = 2;
  r.metrics.push_back(m);
  CHECK(emit_report(r, ReportFormat::Csv) ==
        "model,split_size,precision,recall,f1,tp,fp,tn,fn\n"
        "simclr-s2,4,1.00,0.50,0.67,1,0,2,1\n");
}

TEST_CASE("prediction csv and metrics json round-trip") {
  std::vector<Prediction> preds = {{"a.msc1", 0.75, "region-a"}, {"b.msc1", 0.25, std::nullopt}};
  std::vector<std::optional<bool>> labels = {true, std::nullopt};
  auto csv = predictions_to_csv(preds, labels);

  std::vector<Prediction> back;
  std::vector<std::optional<bool>> back_labels;
  parse_predictions_csv(csv, back, back_labels);
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a.msc1");
  CHECK(back[0].p == doctest::Approx(0.75));
  CHECK(back[0].region == "region-a");
  CHECK(back_labels[0] == true);
  CHECK_FALSE(back[1].region.has_value());
  CHECK_FALSE(back_labels[1].has_value());

  MetricsReport m;
  m.model_id = "supervised";
  m.split_size = 190;
  m.precision = 0.11;
  m.recall = 0.9;
  m.f1 = 0.196;
  m.tp = 9;
  m.fp = 73;
  m.tn = 0;
  m.fn = 1;
  m.region_rows = {{"brazil", 4, 0.75}};
  m.aggregation_note = "median over 3 seeds";
  auto j = metrics_to_json(m);
  auto mb = metrics_from_json(j);
  CHECK(mb.model_id == m.model_id);
  CHECK(mb.split_size == m.split_size);
  CHECK(mb.precision == doctest::Approx(m.precision));
  CHECK(mb.f1 == doctest::Approx(m.f1));
  CHECK(mb.region_rows.size() == 1);
  CHECK(mb.region_rows[0].region == "brazil");
  CHECK(mb.aggregation_note == m.aggregation_note);
}
