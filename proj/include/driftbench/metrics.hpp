#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "driftbench/dataset.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/models.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

// Decision threshold on p(malware); malware is the positive class.
inline constexpr double kDecisionThreshold = 0.5;

struct MonthMetrics {
  std::string month;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double f1 = 0, fpr = 0, fnr = 0;
  std::string flag;  // "", "no_malware", "no_benign", "empty"

  bool degenerate() const { return !flag.empty(); }
};

// Degenerate months are flagged, never silently extrapolated: with no malware
// present fnr is reported as 0 and f1 as 1 when there are also no false
// positives; with no benign present fpr is reported as 0.
inline MonthMetrics month_metrics(std::span<const double> probs,
                                  std::span<const std::uint8_t> labels, std::string month) {
  if (probs.size() != labels.size()) throw SpecError("month_metrics: length mismatch");
  MonthMetrics m;
  m.month = std::move(month);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= kDecisionThreshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++m.tp;
    else if (predicted && !actual) ++m.fp;
    else if (!predicted && actual) ++m.fn;
    else ++m.tn;
  }
  const std::size_t malware = m.tp + m.fn;
  const std::size_t benign = m.fp + m.tn;
  if (probs.empty()) m.flag = "empty";
  else if (malware == 0) m.flag = "no_malware";
  else if (benign == 0) m.flag = "no_benign";

  if (malware == 0) {
    m.fnr = 0.0;
    m.f1 = m.fp == 0 ? 1.0 : 0.0;
  } else {
    m.fnr = static_cast<double>(m.fn) / static_cast<double>(malware);
    const std::size_t denom = 2 * m.tp + m.fp + m.fn;
    m.f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(m.tp) / static_cast<double>(denom);
  }
  m.fpr = benign == 0 ? 0.0 : static_cast<double>(m.fp) / static_cast<double>(benign);
  return m;
}

struct RunReport {
  std::vector<MonthMetrics> months;
  double avg_f1 = 0, avg_fpr = 0, avg_fnr = 0;
  std::string model;
  std::uint64_t seed = 0;
  std::string setting;

  void finalize() {
    avg_f1 = avg_fpr = avg_fnr = 0;
    if (months.empty()) return;
    for (const auto& m : months) {
      avg_f1 += m.f1;
      avg_fpr += m.fpr;
      avg_fnr += m.fnr;
    }
    const double n = static_cast<double>(months.size());
    avg_f1 /= n;
    avg_fpr /= n;
    avg_fnr /= n;
  }

  void write_per_month_csv(std::ostream& os) const {
    os << "month,f1,fpr,fnr,tp,fp,tn,fn,flag\n";
    for (const auto& m : months)
      os << m.month << ',' << fmt_double(m.f1) << ',' << fmt_double(m.fpr) << ','
         << fmt_double(m.fnr) << ',' << m.tp << ',' << m.fp << ',' << m.tn << ',' << m.fn << ','
         << m.flag << '\n';
  }

  void write_summary_csv(std::ostream& os) const {
    os << "metric,mean,std\n";
    os << "f1," << fmt_double(avg_f1) << ",0\n";
    os << "fpr," << fmt_double(avg_fpr) << ",0\n";
    os << "fnr," << fmt_double(avg_fnr) << ",0\n";
  }
};

enum class OfflineSetting { Merged, Holdout };
inline const char* setting_name(OfflineSetting s) {
  return s == OfflineSetting::Merged ? "merged" : "holdout";
}

// Evaluates one fitted model per test month.
inline RunReport evaluate_months(const Model& model, const SplitDataset& sd, MonthRange months) {
  RunReport report;
  report.model = kind_name(model.kind());
  for (std::uint16_t m = months.first; m < months.last; ++m) {
    auto samples = sd.dataset().month_samples(m);
    auto probs = model.predict_proba_batch(samples);
    std::vector<std::uint8_t> labels(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].label;
    report.months.push_back(month_metrics(probs, labels, sd.dataset().months()[m]));
  }
  report.finalize();
  return report;
}

// Single fit, no retraining. Merged fits on train + validation, holdout on
// train only; both evaluate on the test months.
inline RunReport run_offline(const SplitDataset& sd, const ModelSpec& spec,
                             OfflineSetting setting, std::uint64_t seed) {
  auto [train_begin, train_end] = sd.span_of(SplitId::Train);
  auto val_end = sd.span_of(SplitId::Validation).second;
  const std::size_t fit_end = setting == OfflineSetting::Merged ? val_end : train_end;
  std::span<const Sample> pool(sd.dataset().samples().data() + train_begin,
                               fit_end - train_begin);
  auto model = fit(spec, pool, seed);
  RunReport report = evaluate_months(*model, sd, sd.months_of(SplitId::Test));
  report.seed = seed;
  report.setting = setting_name(setting);
  return report;
}

struct SeedAggregate {
  struct Stat {
    double mean = 0;
    double stddev = 0;  // population
  };
  Stat f1, fpr, fnr;
  std::vector<std::string> month_axis;
  std::vector<Stat> month_f1, month_fpr, month_fnr;
  std::size_t runs = 0;

  void write_summary_csv(std::ostream& os) const {
    os << "metric,mean,std\n";
    os << "f1," << fmt_double(f1.mean) << ',' << fmt_double(f1.stddev) << '\n';
    os << "fpr," << fmt_double(fpr.mean) << ',' << fmt_double(fpr.stddev) << '\n';
    os << "fnr," << fmt_double(fnr.mean) << ',' << fmt_double(fnr.stddev) << '\n';
  }

  void write_per_month_csv(std::ostream& os) const {
    os << "month,f1_mean,f1_std,fpr_mean,fpr_std,fnr_mean,fnr_std\n";
    for (std::size_t i = 0; i < month_axis.size(); ++i)
      os << month_axis[i] << ',' << fmt_double(month_f1[i].mean) << ','
         << fmt_double(month_f1[i].stddev) << ',' << fmt_double(month_fpr[i].mean) << ','
         << fmt_double(month_fpr[i].stddev) << ',' << fmt_double(month_fnr[i].mean) << ','
         << fmt_double(month_fnr[i].stddev) << '\n';
  }
};

namespace detail {

inline SeedAggregate::Stat mean_std(std::span<const double> xs) {
  SeedAggregate::Stat s;
  if (xs.empty()) return s;
  bool all_equal = true;
  for (double x : xs)
    if (x != xs.front()) all_equal = false;
  if (all_equal) return {xs.front(), 0.0};  // deterministic runs report exactly zero
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(xs.size()));
  return s;
}

}  // namespace detail

// Elementwise mean and population standard deviation over seed runs.
inline SeedAggregate aggregate_seeds(std::span<const RunReport> reports) {
  if (reports.empty()) throw SpecError("aggregate_seeds: no reports");
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (r.months.size() != first.months.size())
      throw SpecError("aggregate_seeds: month axes differ");
    for (std::size_t i = 0; i < r.months.size(); ++i)
      if (r.months[i].month != first.months[i].month)
        throw SpecError("aggregate_seeds: month axes differ");
  }
  SeedAggregate agg;
  agg.runs = reports.size();
  auto collect = [&](auto&& get) {
    std::vector<double> xs;
    xs.reserve(reports.size());
    for (const auto& r : reports) xs.push_back(get(r));
    return detail::mean_std(xs);
  };
  agg.f1 = collect([](const RunReport& r) { return r.avg_f1; });
  agg.fpr = collect([](const RunReport& r) { return r.avg_fpr; });
  agg.fnr = collect([](const RunReport& r) { return r.avg_fnr; });
  for (std::size_t i = 0; i < first.months.size(); ++i) {
    agg.month_axis.push_back(first.months[i].month);
    agg.month_f1.push_back(collect([i](const RunReport& r) { return r.months[i].f1; }));
    agg.month_fpr.push_back(collect([i](const RunReport& r) { return r.months[i].fpr; }));
    agg.month_fnr.push_back(collect([i](const RunReport& r) { return r.months[i].fnr; }));
  }
  return agg;
}

}  // namespace driftbench
