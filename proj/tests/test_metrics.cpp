#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "driftbench/metrics.hpp"
#include "driftbench/synth.hpp"
#include "test_helpers.hpp"

using namespace driftbench;

namespace {

MonthMetrics metrics_of(const std::vector<int>& preds, const std::vector<int>& labels) {
  std::vector<double> probs;
  std::vector<std::uint8_t> y;
  for (int p : preds) probs.push_back(p ? 0.9 : 0.1);
  for (int l : labels) y.push_back(static_cast<std::uint8_t>(l));
  return month_metrics(probs, y, "2019-01");
}

}  // namespace

TEST_CASE("month metrics basics") {
  SECTION("perfect classifier") {
    auto m = metrics_of({1, 0, 1, 0}, {1, 0, 1, 0});
    REQUIRE(m.f1 == 1.0);
    REQUIRE(m.fpr == 0.0);
    REQUIRE(m.fnr == 0.0);
    REQUIRE_FALSE(m.degenerate());
  }
  SECTION("length mismatch") {
    std::vector<double> probs{0.5};
    std::vector<std::uint8_t> labels{1, 0};
    REQUIRE_THROWS_AS(month_metrics(probs, labels, "m"), SpecError);
  }
  SECTION("threshold sits at one half") {
    std::vector<double> probs{0.5, 0.4999};
    std::vector<std::uint8_t> labels{1, 0};
    auto m = month_metrics(probs, labels, "m");
    REQUIRE(m.tp == 1);
    REQUIRE(m.tn == 1);
  }
}

TEST_CASE("duplicated-vector month drives the fnr") {
  // 385 malware: 348 copies of one vector (missed), 37 distinct (caught)
  std::vector<int> labels, preds;
  for (int i = 0; i < 348; ++i) {
    labels.push_back(1);
    preds.push_back(0);
  }
  for (int i = 0; i < 37; ++i) {
    labels.push_back(1);
    preds.push_back(1);
  }
  for (int i = 0; i < 100; ++i) {
    labels.push_back(0);
    preds.push_back(0);
  }
  auto missed = metrics_of(preds, labels);
  REQUIRE(missed.fnr == Catch::Approx(348.0 / 385.0).epsilon(1e-12));
  REQUIRE(missed.fnr == Catch::Approx(0.904).margin(0.0005));

  // the complementary classifier catches only the duplicated vector
  std::vector<int> flipped;
  for (std::size_t i = 0; i < labels.size(); ++i)
    flipped.push_back(labels[i] == 1 ? 1 - preds[i] : 0);
  auto caught = metrics_of(flipped, labels);
  REQUIRE(caught.fnr == Catch::Approx(37.0 / 385.0).epsilon(1e-12));
  REQUIRE(caught.fnr == Catch::Approx(0.096).margin(0.0005));
}

TEST_CASE("degenerate months are flagged") {
  SECTION("no malware, no false positives") {
    auto m = metrics_of({0, 0}, {0, 0});
    REQUIRE(m.flag == "no_malware");
    REQUIRE(m.f1 == 1.0);
    REQUIRE(m.fnr == 0.0);
  }
  SECTION("no malware with false positives") {
    auto m = metrics_of({1, 0}, {0, 0});
    REQUIRE(m.flag == "no_malware");
    REQUIRE(m.f1 == 0.0);
    REQUIRE(m.fpr == 0.5);
  }
  SECTION("no benign") {
    auto m = metrics_of({1, 0}, {1, 1});
    REQUIRE(m.flag == "no_benign");
    REQUIRE(m.fpr == 0.0);
    REQUIRE(m.fnr == 0.5);
  }
  SECTION("empty month") {
    auto m = metrics_of({}, {});
    REQUIRE(m.flag == "empty");
  }
  SECTION("normal month is unflagged") {
    REQUIRE_FALSE(metrics_of({1, 0}, {1, 0}).degenerate());
  }
}

TEST_CASE("fpr of the complemented problem equals fnr of the original") {
  RngStream rng(1);
  for (int round = 0; round < 30; ++round) {
    std::vector<double> probs;
    std::vector<std::uint8_t> labels, flipped;
    std::vector<double> flipped_probs;
    const std::size_t n = 20 + rng.uniform_int(30);
    bool has[2] = {false, false};
    for (std::size_t i = 0; i < n; ++i) {
      const double p = rng.next_double();
      probs.push_back(p);
      flipped_probs.push_back(1.0 - p);
      const std::uint8_t y = rng.bernoulli(0.4) ? 1 : 0;
      labels.push_back(y);
      flipped.push_back(1 - y);
      has[y] = true;
    }
    if (!has[0] || !has[1]) continue;
    auto a = month_metrics(probs, labels, "m");
    auto b = month_metrics(flipped_probs, flipped, "m");
    // complement flips strictly-below-threshold to strictly-above, so skip
    // rounds with probabilities exactly at the threshold
    bool at_threshold = false;
    for (double p : probs)
      if (p == 0.5) at_threshold = true;
    if (at_threshold) continue;
    REQUIRE(a.fnr == Catch::Approx(b.fpr).margin(1e-12));
    REQUIRE(a.fpr == Catch::Approx(b.fnr).margin(1e-12));
  }
}

TEST_CASE("cross-month average differs from pooled confusion") {
  RunReport report;
  report.months.push_back(metrics_of({1, 0}, {1, 0}));              // f1 = 1
  report.months.push_back(metrics_of({0, 0, 0, 1}, {1, 1, 1, 1}));  // f1 = 2/5
  report.finalize();
  REQUIRE(report.avg_f1 == Catch::Approx((1.0 + 0.4) / 2.0).epsilon(1e-12));
  // pooled confusion would give 2*2/(2*2+0+3) = 4/7, not the unweighted mean
  const double pooled = 4.0 / 7.0;
  REQUIRE(report.avg_f1 != Catch::Approx(pooled).epsilon(1e-6));
}

TEST_CASE("f1 is invariant under sample reordering") {
  std::vector<double> probs{0.9, 0.2, 0.7, 0.3, 0.8};
  std::vector<std::uint8_t> labels{1, 0, 0, 1, 1};
  auto a = month_metrics(probs, labels, "m");
  std::vector<double> rp{0.3, 0.9, 0.8, 0.2, 0.7};
  std::vector<std::uint8_t> rl{1, 1, 1, 0, 0};
  auto b = month_metrics(rp, rl, "m");
  REQUIRE(a.f1 == b.f1);
  REQUIRE(a.fpr == b.fpr);
  REQUIRE(a.fnr == b.fnr);
}

TEST_CASE("seed aggregation") {
  auto report_with_f1 = [](double f1a, double f1b) {
    RunReport r;
    MonthMetrics m1;
    m1.month = "2019-01";
    m1.f1 = f1a;
    MonthMetrics m2;
    m2.month = "2019-02";
    m2.f1 = f1b;
    r.months = {m1, m2};
    r.finalize();
    return r;
  };

  SECTION("single report has zero deviation") {
    std::vector<RunReport> reports{report_with_f1(0.5, 0.7)};
    auto agg = aggregate_seeds(reports);
    REQUIRE(agg.f1.mean == Catch::Approx(0.6));
    REQUIRE(agg.f1.stddev == 0.0);
  }
  SECTION("two reports: mean 0.7, population std 0.1") {
    std::vector<RunReport> reports{report_with_f1(0.6, 0.6), report_with_f1(0.8, 0.8)};
    auto agg = aggregate_seeds(reports);
    REQUIRE(agg.f1.mean == Catch::Approx(0.7).epsilon(1e-12));
    REQUIRE(agg.f1.stddev == Catch::Approx(0.1).epsilon(1e-12));
    REQUIRE(agg.month_f1[0].mean == Catch::Approx(0.7).epsilon(1e-12));
    REQUIRE(agg.month_f1[0].stddev == Catch::Approx(0.1).epsilon(1e-12));
  }
  SECTION("five identical reports have zero deviation") {
    std::vector<RunReport> reports(5, report_with_f1(0.42, 0.42));
    auto agg = aggregate_seeds(reports);
    REQUIRE(agg.f1.stddev == 0.0);
  }
  SECTION("mismatched month axes rejected") {
    RunReport other = report_with_f1(0.5, 0.5);
    other.months[1].month = "2020-01";
    std::vector<RunReport> reports{report_with_f1(0.5, 0.5), other};
    REQUIRE_THROWS_AS(aggregate_seeds(reports), SpecError);
  }
}

TEST_CASE("offline runner") {
  SynthConfig cfg;
  cfg.months = 10;
  cfg.samples_per_month = 60;
  cfg.dimension = 400;
  cfg.seed = 3;
  Dataset d = generate_synth(cfg);

  SECTION("merged equals holdout when validation is empty") {
    SplitDataset sd = SplitDataset::make(d, {0, 6}, {6, 6}, {6, 10});
    auto merged = run_offline(sd, default_spec(ModelKind::GBT), OfflineSetting::Merged, 1);
    auto holdout = run_offline(sd, default_spec(ModelKind::GBT), OfflineSetting::Holdout, 1);
    REQUIRE(merged.months.size() == holdout.months.size());
    for (std::size_t i = 0; i < merged.months.size(); ++i) {
      REQUIRE(merged.months[i].f1 == holdout.months[i].f1);
      REQUIRE(merged.months[i].tp == holdout.months[i].tp);
    }
  }

  SECTION("deterministic kinds ignore the seed") {
    SplitDataset sd = SplitDataset::make(d, {0, 5}, {5, 7}, {7, 10});
    auto a = run_offline(sd, default_spec(ModelKind::SVM), OfflineSetting::Merged, 1);
    auto b = run_offline(sd, default_spec(ModelKind::SVM), OfflineSetting::Merged, 999);
    for (std::size_t i = 0; i < a.months.size(); ++i) {
      REQUIRE(a.months[i].tp == b.months[i].tp);
      REQUIRE(a.months[i].fp == b.months[i].fp);
    }
  }

  SECTION("merged training does not trail holdout on stationary data") {
    SplitDataset sd = SplitDataset::make(d, {0, 5}, {5, 7}, {7, 10});
    auto merged = run_offline(sd, default_spec(ModelKind::GBT), OfflineSetting::Merged, 1);
    auto holdout = run_offline(sd, default_spec(ModelKind::GBT), OfflineSetting::Holdout, 1);
    REQUIRE(merged.avg_f1 >= holdout.avg_f1 - 0.01);
  }
}

TEST_CASE("report csv output") {
  RunReport r;
  MonthMetrics m;
  m.month = "2020-07";
  m.tp = 3;
  m.fn = 1;
  m.f1 = 0.857142857142857;
  m.fnr = 0.25;
  r.months = {m};
  r.finalize();
  std::ostringstream pm;
  r.write_per_month_csv(pm);
  REQUIRE(pm.str().find("month,f1,fpr,fnr,tp,fp,tn,fn,flag\n") == 0);
  REQUIRE(pm.str().find("2020-07,") != std::string::npos);
  std::ostringstream sm;
  r.write_summary_csv(sm);
  REQUIRE(sm.str().find("metric,mean,std\n") == 0);
}
