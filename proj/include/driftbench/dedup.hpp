#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "driftbench/dataset.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

namespace detail {

// Exact-match index: hash bucket plus full index-sequence comparison on
// collision. Values are caller-chosen payloads (positions).
class VectorIndex {
 public:
  // Returns the payload of the first identical vector, or -1 and inserts.
  std::int64_t find_or_insert(const FeatureVector& fv, std::int64_t payload) {
    auto& bucket = map_[fv.hash()];
    for (const auto& [vec, pos] : bucket)
      if (*vec == fv) return pos;
    bucket.emplace_back(&fv, payload);
    return -1;
  }

  std::int64_t find(const FeatureVector& fv) const {
    auto it = map_.find(fv.hash());
    if (it == map_.end()) return -1;
    for (const auto& [vec, pos] : it->second)
      if (*vec == fv) return pos;
    return -1;
  }

 private:
  std::unordered_map<std::uint64_t, std::vector<std::pair<const FeatureVector*, std::int64_t>>>
      map_;
};

}  // namespace detail

// intra[i] = smallest j < i with identical features, else -1. Features only;
// labels and families are ignored.
inline DuplicateAnnotation find_duplicates(std::span<const Sample> samples) {
  DuplicateAnnotation ann;
  ann.intra.assign(samples.size(), -1);
  ann.cross.assign(samples.size(), CrossRef{});
  detail::VectorIndex index;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.dimension != samples.front().features.dimension)
      throw SpecError("find_duplicates: mixed dimensions");
    ann.intra[i] = index.find_or_insert(samples[i].features, static_cast<std::int64_t>(i));
  }
  return ann;
}

// Duplicate annotations for all three splits under the given mode.
//
// Offline: intra scope is the whole split; validation additionally references
// identical vectors in train, test references train then validation.
// Active: train as in offline; validation/test intra scope is the month only
// and no cross-split references are recorded.
inline std::array<DuplicateAnnotation, 3> annotate_duplicates(const SplitDataset& sd,
                                                              DedupMode mode) {
  std::array<DuplicateAnnotation, 3> out;
  std::array<detail::VectorIndex, 3> split_index;  // first occurrence per split

  for (SplitId split : kAllSplits) {
    const int si = static_cast<int>(split);
    auto samples = sd.samples_of(split);
    auto& ann = out[si];
    ann.intra.assign(samples.size(), -1);
    ann.cross.assign(samples.size(), CrossRef{});

    const bool per_month_scope = mode == DedupMode::Active && split != SplitId::Train;
    if (per_month_scope) {
      const MonthRange months = sd.months_of(split);
      std::size_t offset = 0;
      for (std::uint16_t m = months.first; m < months.last; ++m) {
        auto month_span = sd.dataset().month_samples(m);
        detail::VectorIndex month_index;
        for (std::size_t k = 0; k < month_span.size(); ++k)
          ann.intra[offset + k] = month_index.find_or_insert(
              month_span[k].features, static_cast<std::int64_t>(offset + k));
        offset += month_span.size();
      }
    } else {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        ann.intra[i] =
            split_index[si].find_or_insert(samples[i].features, static_cast<std::int64_t>(i));
        if (mode == DedupMode::Offline && split != SplitId::Train) {
          for (int earlier = 0; earlier < si; ++earlier) {
            const std::int64_t hit = split_index[earlier].find(samples[i].features);
            if (hit >= 0) {
              ann.cross[i] = CrossRef{static_cast<std::int8_t>(earlier), hit};
              break;
            }
          }
        }
      }
    }

  }
  return out;
}

struct DedupResult {
  SplitDataset dataset;
  // retained position (within split) -> original position (within split)
  std::array<std::vector<std::size_t>, 3> provenance;
  // duplicates whose label differed from their earliest occurrence
  std::size_t label_conflicts = 0;
};

namespace detail {

inline DedupResult dedup_with_mode(const SplitDataset& sd, DedupMode mode) {
  const auto annotations = annotate_duplicates(sd, mode);
  DedupResult result;
  std::vector<Sample> kept;
  for (SplitId split : kAllSplits) {
    const int si = static_cast<int>(split);
    auto samples = sd.samples_of(split);
    const auto& ann = annotations[si];
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample* earliest = nullptr;
      if (ann.intra[i] >= 0)
        earliest = &samples[static_cast<std::size_t>(ann.intra[i])];
      else if (!ann.cross[i].none())
        earliest = &sd.samples_of(static_cast<SplitId>(ann.cross[i].split))
                        [static_cast<std::size_t>(ann.cross[i].index)];
      if (earliest) {
        if (earliest->label != samples[i].label) ++result.label_conflicts;
        continue;
      }
      kept.push_back(samples[i]);
      result.provenance[si].push_back(i);
    }
  }
  Dataset deduped = Dataset::build(sd.dataset().dimension(),
                                   sd.dataset().months(), std::move(kept),
                                   sd.dataset().name());
  result.dataset =
      SplitDataset::make(std::move(deduped), sd.months_of(SplitId::Train),
                         sd.months_of(SplitId::Validation), sd.months_of(SplitId::Test));
  result.dataset.set_annotation_mode(mode);
  return result;
}

}  // namespace detail

// Keeps the earliest occurrence of each distinct vector across the whole
// split chain: train first, then validation (minus anything in train), then
// test (minus anything in train or validation).
inline DedupResult dedup_offline(const SplitDataset& sd) {
  return detail::dedup_with_mode(sd, DedupMode::Offline);
}

// Train deduplicated as offline; validation and test deduplicated within each
// month independently, so a vector may recur in several months.
inline DedupResult dedup_active(const SplitDataset& sd) {
  return detail::dedup_with_mode(sd, DedupMode::Active);
}

struct DedupReport {
  struct Row {
    SplitId split;
    std::uint16_t month;          // axis index
    std::string month_label;      // "ALL" for per-split totals
    int cls;                      // 0 benign, 1 malware, -1 both
    std::size_t total = 0;
    std::size_t retained = 0;
    double fraction_unique() const {
      return total == 0 ? 1.0 : static_cast<double>(retained) / static_cast<double>(total);
    }
  };
  struct RatioRow {
    SplitId split;
    std::string month_label;
    double before = 0;
    double after = 0;
  };

  DedupMode mode = DedupMode::Offline;
  std::vector<Row> rows;         // per (split, month, class), then ALL rows per split
  std::vector<RatioRow> ratios;  // per (split, month)
  std::size_t label_conflicts = 0;

  const Row* find(SplitId split, const std::string& month_label, int cls) const {
    for (const auto& r : rows)
      if (r.split == split && r.month_label == month_label && r.cls == cls) return &r;
    return nullptr;
  }

  void write_csv(std::ostream& os) const {
    os << "split,month,class,total,retained,fraction_unique\n";
    for (const auto& r : rows) {
      const char* cls = r.cls == 0 ? "benign" : (r.cls == 1 ? "malware" : "all");
      os << split_name(r.split) << ',' << r.month_label << ',' << cls << ',' << r.total << ','
         << r.retained << ',' << fmt_double(r.fraction_unique()) << '\n';
    }
  }

  void write_ratio_csv(std::ostream& os) const {
    os << "split,month,ratio_before,ratio_after\n";
    for (const auto& r : ratios)
      os << split_name(r.split) << ',' << r.month_label << ',' << fmt_double(r.before) << ','
         << fmt_double(r.after) << '\n';
  }
};

inline DedupReport dedup_stats(const SplitDataset& sd, DedupMode mode) {
  const auto annotations = annotate_duplicates(sd, mode);
  DedupReport report;
  report.mode = mode;

  for (SplitId split : kAllSplits) {
    const int si = static_cast<int>(split);
    const auto& ann = annotations[si];
    const MonthRange months = sd.months_of(split);
    if (months.empty()) continue;

    const auto split_begin = sd.span_of(split).first;
    std::size_t split_total[2] = {0, 0}, split_kept[2] = {0, 0};
    for (std::uint16_t m = months.first; m < months.last; ++m) {
      auto [mb, me] = sd.dataset().month_span(m);
      std::size_t total[2] = {0, 0}, kept[2] = {0, 0};
      for (std::size_t g = mb; g < me; ++g) {
        const std::size_t i = g - split_begin;  // within-split position
        const int cls = sd.dataset().samples()[g].label == 1 ? 1 : 0;
        ++total[cls];
        const bool retained = ann.intra[i] < 0 && ann.cross[i].none();
        if (retained) ++kept[cls];
      }
      const std::string& label = sd.dataset().months()[m];
      for (int cls : {0, 1})
        report.rows.push_back({split, m, label, cls, total[cls], kept[cls]});
      auto ratio = [](std::size_t benign, std::size_t malware) {
        return malware == 0 ? std::numeric_limits<double>::infinity()
                            : static_cast<double>(benign) / static_cast<double>(malware);
      };
      report.ratios.push_back({split, label, ratio(total[0], total[1]), ratio(kept[0], kept[1])});
      for (int cls : {0, 1}) {
        split_total[cls] += total[cls];
        split_kept[cls] += kept[cls];
      }
    }
    for (int cls : {0, 1})
      report.rows.push_back({split, 0, "ALL", cls, split_total[cls], split_kept[cls]});
    report.rows.push_back({split, 0, "ALL", -1, split_total[0] + split_total[1],
                           split_kept[0] + split_kept[1]});
  }

  // Count label conflicts the same way dedup would resolve them.
  for (SplitId split : kAllSplits) {
    const int si = static_cast<int>(split);
    auto samples = sd.samples_of(split);
    const auto& ann = annotations[si];
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample* earliest = nullptr;
      if (ann.intra[i] >= 0)
        earliest = &samples[static_cast<std::size_t>(ann.intra[i])];
      else if (!ann.cross[i].none())
        earliest = &sd.samples_of(static_cast<SplitId>(ann.cross[i].split))
                        [static_cast<std::size_t>(ann.cross[i].index)];
      if (earliest && earliest->label != samples[i].label) ++report.label_conflicts;
    }
  }
  return report;
}

}  // namespace driftbench
