#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftbench/errors.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

// Sparse binary feature vector: the indices of the active features, kept
// strictly increasing. Two vectors are duplicates iff their canonical forms
// (dimension + index sequence) are equal.
struct FeatureVector {
  std::uint32_t dimension = 0;
  std::vector<std::uint32_t> indices;

  // Canonicalizes arbitrary input: sorts, drops repeats, range-checks.
  static FeatureVector make(std::uint32_t dimension, std::vector<std::uint32_t> idx) {
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    if (!idx.empty() && idx.back() >= dimension)
      throw RangeError("feature index " + std::to_string(idx.back()) +
                       " out of range for dimension " + std::to_string(dimension));
    return FeatureVector{dimension, std::move(idx)};
  }

  bool operator==(const FeatureVector& o) const = default;

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull ^ dimension;
    for (std::uint32_t i : indices) {
      h ^= i;
      h *= 0x100000001b3ull;
    }
    return h;
  }
};

struct Sample {
  static constexpr std::int32_t kNoFamily = -1;

  FeatureVector features;
  std::uint8_t label = 0;              // 0 = benign, 1 = malware
  std::int32_t family = kNoFamily;     // malware family id, kNoFamily if absent
  std::uint16_t month = 0;             // index into the dataset's month axis
};

inline bool is_valid_month_label(const std::string& s) {
  if (s.size() != 7 || s[4] != '-') return false;
  for (int i : {0, 1, 2, 3, 5, 6})
    if (s[i] < '0' || s[i] > '9') return false;
  const int mm = (s[5] - '0') * 10 + (s[6] - '0');
  return mm >= 1 && mm <= 12;
}

// Immutable after construction. Samples are stored grouped by month in axis
// order; within a month the original input order is preserved.
class Dataset {
 public:
  Dataset() = default;

  static Dataset build(std::uint32_t dimension, std::vector<std::string> months,
                       std::vector<Sample> samples, std::string name) {
    for (std::size_t i = 0; i < months.size(); ++i) {
      if (!is_valid_month_label(months[i]))
        throw FormatError("bad month label '" + months[i] + "'");
      if (i > 0 && !(months[i - 1] < months[i]))
        throw SpecError("month axis not strictly increasing at '" + months[i] + "'");
    }
    if (months.size() > std::numeric_limits<std::uint16_t>::max())
      throw SpecError("month axis too long");
    for (const Sample& s : samples) {
      if (s.features.dimension != dimension)
        throw SpecError("sample dimension mismatch");
      if (s.month >= months.size())
        throw RangeError("sample month index out of range");
      if (s.family != Sample::kNoFamily && s.label != 1)
        throw SpecError("family id on a benign sample");
    }
    // Stable regroup by month, original order kept within each month.
    std::stable_sort(samples.begin(), samples.end(),
                     [](const Sample& a, const Sample& b) { return a.month < b.month; });
    Dataset d;
    d.dimension_ = dimension;
    d.months_ = std::move(months);
    d.samples_ = std::move(samples);
    d.name_ = std::move(name);
    d.offsets_.assign(d.months_.size() + 1, 0);
    for (const Sample& s : d.samples_) ++d.offsets_[s.month + 1];
    for (std::size_t m = 0; m < d.months_.size(); ++m) d.offsets_[m + 1] += d.offsets_[m];
    return d;
  }

  std::uint32_t dimension() const { return dimension_; }
  const std::vector<std::string>& months() const { return months_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const std::string& name() const { return name_; }
  std::size_t size() const { return samples_.size(); }
  std::uint16_t month_count() const { return static_cast<std::uint16_t>(months_.size()); }

  std::uint16_t month_index(const std::string& label) const {
    auto it = std::lower_bound(months_.begin(), months_.end(), label);
    if (it == months_.end() || *it != label)
      throw RangeError("unknown month '" + label + "'");
    return static_cast<std::uint16_t>(it - months_.begin());
  }

  // [begin, end) sample positions of one month.
  std::pair<std::size_t, std::size_t> month_span(std::uint16_t m) const {
    if (m >= months_.size()) throw RangeError("month index out of range");
    return {offsets_[m], offsets_[m + 1]};
  }

  std::span<const Sample> month_samples(std::uint16_t m) const {
    auto [b, e] = month_span(m);
    return {samples_.data() + b, e - b};
  }

 private:
  std::uint32_t dimension_ = 0;
  std::vector<std::string> months_;
  std::vector<Sample> samples_;
  std::vector<std::size_t> offsets_;
  std::string name_;
};

// Benign/malware count ratio for one month; +inf when the month has no malware.
inline double class_ratio(const Dataset& d, std::uint16_t month) {
  auto span = d.month_samples(month);
  std::size_t benign = 0, malware = 0;
  for (const Sample& s : span) (s.label == 1 ? malware : benign)++;
  if (malware == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(benign) / static_cast<double>(malware);
}

inline double class_ratio(const Dataset& d, const std::string& month_label) {
  return class_ratio(d, d.month_index(month_label));
}

enum class SplitId : int { Train = 0, Validation = 1, Test = 2 };
inline const char* split_name(SplitId s) {
  switch (s) {
    case SplitId::Train: return "train";
    case SplitId::Validation: return "validation";
    default: return "test";
  }
}
constexpr std::array<SplitId, 3> kAllSplits = {SplitId::Train, SplitId::Validation,
                                               SplitId::Test};

// Half-open month range [first, last) in axis indices. Empty when first == last.
struct MonthRange {
  std::uint16_t first = 0;
  std::uint16_t last = 0;
  std::uint16_t size() const { return static_cast<std::uint16_t>(last - first); }
  bool empty() const { return first == last; }
};

enum class DedupMode { Offline, Active };
inline const char* dedup_mode_name(DedupMode m) {
  return m == DedupMode::Offline ? "offline" : "active";
}

// Per-split duplicate markers. intra[i] is the within-split position of the
// earliest sample identical to sample i under the annotation scope, or -1 when
// i is the first occurrence. cross[i] points at an identical sample in an
// earlier split (split = -1 when none).
struct CrossRef {
  std::int8_t split = -1;
  std::int64_t index = -1;
  bool none() const { return split < 0; }
  bool operator==(const CrossRef&) const = default;
};

struct DuplicateAnnotation {
  std::vector<std::int64_t> intra;
  std::vector<CrossRef> cross;
  bool operator==(const DuplicateAnnotation&) const = default;
};

// Train/validation/test sections of one dataset, defined by month ranges that
// chain without gaps from the start of the month axis.
class SplitDataset {
 public:
  SplitDataset() = default;

  static SplitDataset make(Dataset data, MonthRange train, MonthRange validation,
                           MonthRange test) {
    if (train.first != 0)
      throw SpecError("train range must start at the first month");
    if (train.last < train.first || validation.last < validation.first ||
        test.last < test.first)
      throw SpecError("month range reversed");
    if (validation.first != train.last || test.first != validation.last)
      throw SpecError("split ranges must be contiguous and ordered train < validation < test");
    if (test.last > data.month_count())
      throw SpecError("split ranges exceed month axis");
    SplitDataset sd;
    sd.data_ = std::move(data);
    sd.ranges_ = {train, validation, test};
    return sd;
  }

  const Dataset& dataset() const { return data_; }
  MonthRange months_of(SplitId s) const { return ranges_[static_cast<int>(s)]; }

  // Contiguous [begin, end) sample positions of one split.
  std::pair<std::size_t, std::size_t> span_of(SplitId s) const {
    const MonthRange r = ranges_[static_cast<int>(s)];
    if (r.empty()) {
      const std::size_t at =
          r.first >= data_.month_count() ? data_.size() : data_.month_span(r.first).first;
      return {at, at};
    }
    return {data_.month_span(r.first).first,
            data_.month_span(static_cast<std::uint16_t>(r.last - 1)).second};
  }

  std::span<const Sample> samples_of(SplitId s) const {
    auto [b, e] = span_of(s);
    return {data_.samples().data() + b, e - b};
  }

  const std::optional<DuplicateAnnotation>& annotation(SplitId s) const {
    return annotations_[static_cast<int>(s)];
  }
  void set_annotation(SplitId s, DuplicateAnnotation a) {
    annotations_[static_cast<int>(s)] = std::move(a);
  }
  std::optional<DedupMode> annotation_mode() const { return annotation_mode_; }
  void set_annotation_mode(DedupMode m) { annotation_mode_ = m; }

 private:
  Dataset data_;
  std::array<MonthRange, 3> ranges_{};
  std::array<std::optional<DuplicateAnnotation>, 3> annotations_{};
  std::optional<DedupMode> annotation_mode_;
};

inline SplitDataset temporal_split(Dataset data, MonthRange train, MonthRange validation,
                                   MonthRange test) {
  return SplitDataset::make(std::move(data), train, validation, test);
}

inline SplitDataset temporal_split(const Dataset& data, const std::string& train_first,
                                   const std::string& train_last,
                                   const std::string& val_first, const std::string& val_last,
                                   const std::string& test_first,
                                   const std::string& test_last) {
  auto range = [&](const std::string& a, const std::string& b) {
    return MonthRange{data.month_index(a), static_cast<std::uint16_t>(data.month_index(b) + 1)};
  };
  return SplitDataset::make(data, range(train_first, train_last), range(val_first, val_last),
                            range(test_first, test_last));
}

}  // namespace driftbench
