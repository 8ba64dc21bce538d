#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftbench/blob.hpp"
#include "driftbench/dataset.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

enum class TextFormat { Csv, JsonLines };

namespace detail {

struct RawRecord {
  std::string month;
  int label = 0;
  std::string family;  // empty = none
  std::vector<std::uint32_t> indices;
};

inline RawRecord parse_csv_record(const std::string& line, std::size_t line_no) {
  auto fields = csv_split(line);
  if (fields.size() != 4)
    throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                     std::to_string(fields.size()));
  RawRecord r;
  r.month = trim(fields[0]);
  const std::string label = trim(fields[1]);
  if (label != "0" && label != "1")
    throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
  r.label = label[0] - '0';
  r.family = trim(fields[2]);
  std::istringstream feats(fields[3]);
  std::string tok;
  while (feats >> tok) {
    std::size_t pos = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(tok, &pos);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) + ": bad feature index '" + tok + "'");
    }
    if (pos != tok.size())
      throw ParseError("line " + std::to_string(line_no) + ": bad feature index '" + tok + "'");
    r.indices.push_back(static_cast<std::uint32_t>(v));
  }
  return r;
}

inline RawRecord parse_jsonl_record(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("month") || !j.contains("label") || !j.contains("features"))
    throw ParseError("line " + std::to_string(line_no) +
                     ": record needs month, label and features");
  RawRecord r;
  if (!j["month"].is_string())
    throw ParseError("line " + std::to_string(line_no) + ": month must be a string");
  r.month = j["month"].get<std::string>();
  if (!j["label"].is_number_integer() ||
      (j["label"].get<int>() != 0 && j["label"].get<int>() != 1))
    throw ParseError("line " + std::to_string(line_no) + ": label must be 0 or 1");
  r.label = j["label"].get<int>();
  if (j.contains("family") && !j["family"].is_null()) {
    if (!j["family"].is_string())
      throw ParseError("line " + std::to_string(line_no) + ": family must be a string or null");
    r.family = j["family"].get<std::string>();
  }
  if (!j["features"].is_array())
    throw ParseError("line " + std::to_string(line_no) + ": features must be an array");
  for (const auto& f : j["features"]) {
    if (!f.is_number_integer() || f.get<std::int64_t>() < 0)
      throw ParseError("line " + std::to_string(line_no) + ": features must be non-negative ints");
    r.indices.push_back(static_cast<std::uint32_t>(f.get<std::int64_t>()));
  }
  return r;
}

}  // namespace detail

// Line-oriented import. Family strings are mapped to integer ids in first-seen
// order; months are collected and sorted into calendar order.
inline Dataset import_text(std::istream& in, TextFormat format, std::uint32_t dimension,
                           std::string name) {
  std::vector<detail::RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    if (format == TextFormat::Csv && !header_checked) {
      header_checked = true;
      if (stripped == "month,label,family,features") continue;
      throw ParseError("line 1: expected header 'month,label,family,features'");
    }
    records.push_back(format == TextFormat::Csv ? detail::parse_csv_record(line, line_no)
                                                : detail::parse_jsonl_record(line, line_no));
  }

  std::vector<std::string> months;
  for (const auto& r : records) {
    if (!is_valid_month_label(r.month))
      throw FormatError("unknown month format '" + r.month + "'");
    months.push_back(r.month);
  }
  std::sort(months.begin(), months.end());
  months.erase(std::unique(months.begin(), months.end()), months.end());

  std::map<std::string, std::int32_t> family_ids;
  std::vector<Sample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) {
    Sample s;
    s.features = FeatureVector::make(dimension, r.indices);
    s.label = static_cast<std::uint8_t>(r.label);
    if (!r.family.empty()) {
      if (r.label != 1) throw SpecError("family id on a benign sample");
      auto [it, inserted] =
          family_ids.emplace(r.family, static_cast<std::int32_t>(family_ids.size()));
      s.family = it->second;
    }
    auto pos = std::lower_bound(months.begin(), months.end(), r.month);
    s.month = static_cast<std::uint16_t>(pos - months.begin());
    samples.push_back(std::move(s));
  }
  return Dataset::build(dimension, std::move(months), std::move(samples), std::move(name));
}

inline Dataset import_text(const std::string& path, TextFormat format, std::uint32_t dimension,
                           std::string name = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  if (name.empty()) name = path;
  return import_text(in, format, dimension, std::move(name));
}

// Container annotations flattened over the dataset's sample order (splits are
// contiguous, so this is the per-split arrays concatenated train, validation,
// test). Indices stay within-split, exactly as in DuplicateAnnotation.
struct FlatAnnotations {
  std::vector<std::int64_t> intra;
  std::vector<CrossRef> cross;
  bool operator==(const FlatAnnotations&) const = default;
};

inline FlatAnnotations flatten_annotations(const SplitDataset& sd) {
  FlatAnnotations flat;
  for (SplitId s : kAllSplits) {
    const auto& ann = sd.annotation(s);
    if (!ann) throw SpecError("missing annotation for split");
    flat.intra.insert(flat.intra.end(), ann->intra.begin(), ann->intra.end());
    flat.cross.insert(flat.cross.end(), ann->cross.begin(), ann->cross.end());
  }
  return flat;
}

inline void unflatten_annotations(const FlatAnnotations& flat, SplitDataset& sd) {
  std::size_t at = 0;
  for (SplitId s : kAllSplits) {
    auto [b, e] = sd.span_of(s);
    const std::size_t n = e - b;
    DuplicateAnnotation ann;
    ann.intra.assign(flat.intra.begin() + at, flat.intra.begin() + at + n);
    ann.cross.assign(flat.cross.begin() + at, flat.cross.begin() + at + n);
    sd.set_annotation(s, std::move(ann));
    at += n;
  }
}

inline constexpr char kContainerMagic[4] = {'S', 'M', 'D', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

// Layout, all little-endian: magic "SMD1"; u32 version; u32 dimension;
// u32 month-count; u64 sample-count; per month u32 length + UTF-8 label;
// u64 row pointers (sample-count+1); u32 feature indices; u8 labels;
// i32 families (-1 = none); u16 month indices; u8 annotation flag, then
// i64 intra and (i8 split, i64 index) cross arrays when the flag is 1;
// u32 length + UTF-8 dataset name. No timestamps: identical input gives
// byte-identical files.
inline std::string serialize_container(const Dataset& d,
                                       const FlatAnnotations* annotations = nullptr) {
  if (annotations && annotations->intra.size() != d.size())
    throw SpecError("annotation length mismatch");
  std::string out;
  blob::put_bytes(out, kContainerMagic, 4);
  blob::put_le<std::uint32_t>(out, kContainerVersion);
  blob::put_le<std::uint32_t>(out, d.dimension());
  blob::put_le<std::uint32_t>(out, d.month_count());
  blob::put_le<std::uint64_t>(out, d.size());
  for (const auto& m : d.months()) {
    blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.size()));
    blob::put_bytes(out, m.data(), m.size());
  }
  std::uint64_t row = 0;
  blob::put_le<std::uint64_t>(out, row);
  for (const Sample& s : d.samples()) {
    row += s.features.indices.size();
    blob::put_le<std::uint64_t>(out, row);
  }
  for (const Sample& s : d.samples())
    for (std::uint32_t i : s.features.indices) blob::put_le<std::uint32_t>(out, i);
  for (const Sample& s : d.samples()) blob::put_le<std::uint8_t>(out, s.label);
  for (const Sample& s : d.samples()) blob::put_le<std::int32_t>(out, s.family);
  for (const Sample& s : d.samples()) blob::put_le<std::uint16_t>(out, s.month);
  blob::put_le<std::uint8_t>(out, annotations ? 1 : 0);
  if (annotations) {
    for (std::int64_t v : annotations->intra) blob::put_le<std::int64_t>(out, v);
    for (const CrossRef& c : annotations->cross) {
      blob::put_le<std::int8_t>(out, c.split);
      blob::put_le<std::int64_t>(out, c.index);
    }
  }
  blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.name().size()));
  blob::put_bytes(out, d.name().data(), d.name().size());
  return out;
}

struct LoadedContainer {
  Dataset dataset;
  std::optional<FlatAnnotations> annotations;
};

inline LoadedContainer parse_container(const std::string& bytes, const std::string& what) {
  blob::Reader r(bytes, what);
  const std::string magic = r.get_bytes(4);
  if (std::memcmp(magic.data(), kContainerMagic, 4) != 0)
    throw FormatError(what + ": not a dataset container (bad magic)");
  const auto version = r.get_le<std::uint32_t>();
  if (version != kContainerVersion)
    throw FormatError(what + ": unsupported container version " + std::to_string(version));
  const auto dimension = r.get_le<std::uint32_t>();
  const auto month_count = r.get_le<std::uint32_t>();
  const auto sample_count = r.get_le<std::uint64_t>();
  std::vector<std::string> months(month_count);
  for (auto& m : months) m = r.get_bytes(r.get_le<std::uint32_t>());
  std::vector<std::uint64_t> rows(sample_count + 1);
  for (auto& v : rows) v = r.get_le<std::uint64_t>();
  std::vector<Sample> samples(sample_count);
  for (std::uint64_t i = 0; i < sample_count; ++i) {
    if (rows[i + 1] < rows[i]) throw CorruptError(what + ": row pointers not monotone");
    const std::uint64_t n = rows[i + 1] - rows[i];
    std::vector<std::uint32_t> idx(n);
    for (auto& v : idx) v = r.get_le<std::uint32_t>();
    samples[i].features = FeatureVector::make(dimension, std::move(idx));
  }
  for (auto& s : samples) s.label = r.get_le<std::uint8_t>();
  for (auto& s : samples) s.family = r.get_le<std::int32_t>();
  for (auto& s : samples) s.month = r.get_le<std::uint16_t>();
  const auto flag = r.get_le<std::uint8_t>();
  std::optional<FlatAnnotations> annotations;
  if (flag == 1) {
    FlatAnnotations a;
    a.intra.resize(sample_count);
    for (auto& v : a.intra) v = r.get_le<std::int64_t>();
    a.cross.resize(sample_count);
    for (auto& c : a.cross) {
      c.split = r.get_le<std::int8_t>();
      c.index = r.get_le<std::int64_t>();
    }
    annotations = std::move(a);
  } else if (flag != 0) {
    throw CorruptError(what + ": bad annotation flag");
  }
  const std::string name = r.get_bytes(r.get_le<std::uint32_t>());
  if (!r.at_end()) throw CorruptError(what + ": trailing bytes");
  return {Dataset::build(dimension, std::move(months), std::move(samples), name), annotations};
}

inline void save_container(const Dataset& d, const std::string& path,
                           const FlatAnnotations* annotations = nullptr) {
  blob::write_file(path, serialize_container(d, annotations));
}

inline LoadedContainer load_container(const std::string& path) {
  return parse_container(blob::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Best-effort converter for packed-array releases: a directory of 1-D .npy
// files (indptr, indices, labels, month_index, optionally families) plus
// months.txt with one YYYY-MM label per line in axis order.

namespace detail {

struct NpyArray {
  std::vector<std::int64_t> values;
};

inline NpyArray read_npy_int(const std::string& path) {
  const std::string buf = blob::read_file(path);
  if (buf.size() < 10 || std::memcmp(buf.data(), "\x93NUMPY", 6) != 0)
    throw FormatError(path + ": not an npy file");
  const unsigned major = static_cast<unsigned char>(buf[6]);
  std::size_t header_len, header_at;
  if (major == 1) {
    header_len = static_cast<unsigned char>(buf[8]) |
                 (static_cast<unsigned char>(buf[9]) << 8);
    header_at = 10;
  } else if (major == 2 || major == 3) {
    if (buf.size() < 12) throw CorruptError(path + ": truncated npy header");
    header_len = 0;
    for (int i = 0; i < 4; ++i)
      header_len |= static_cast<std::size_t>(static_cast<unsigned char>(buf[8 + i])) << (8 * i);
    header_at = 12;
  } else {
    throw FormatError(path + ": unsupported npy version");
  }
  if (header_at + header_len > buf.size()) throw CorruptError(path + ": truncated npy header");
  const std::string header = buf.substr(header_at, header_len);
  auto find_value = [&](const std::string& key) -> std::string {
    const auto at = header.find("'" + key + "'");
    if (at == std::string::npos) throw FormatError(path + ": npy header missing " + key);
    auto colon = header.find(':', at);
    auto rest = header.substr(colon + 1);
    return rest;
  };
  const std::string descr_rest = find_value("descr");
  const auto q1 = descr_rest.find('\'');
  const auto q2 = descr_rest.find('\'', q1 + 1);
  const std::string descr = descr_rest.substr(q1 + 1, q2 - q1 - 1);
  if (find_value("fortran_order").find("False") == std::string::npos)
    throw FormatError(path + ": fortran-order npy not supported");
  const std::string shape_rest = find_value("shape");
  const auto p1 = shape_rest.find('(');
  const auto p2 = shape_rest.find(')');
  std::string shape_str = shape_rest.substr(p1 + 1, p2 - p1 - 1);
  std::replace(shape_str.begin(), shape_str.end(), ',', ' ');
  std::istringstream ss(shape_str);
  std::vector<std::size_t> dims;
  std::size_t v;
  while (ss >> v) dims.push_back(v);
  if (dims.size() != 1) throw FormatError(path + ": expected a 1-D array");

  int width = 0;
  bool is_signed = false;
  if (descr == "<i8") (width = 8, is_signed = true);
  else if (descr == "<i4") (width = 4, is_signed = true);
  else if (descr == "<i2") (width = 2, is_signed = true);
  else if (descr == "<u8") width = 8;
  else if (descr == "<u4") width = 4;
  else if (descr == "<u2") width = 2;
  else if (descr == "|u1" || descr == "<u1") width = 1;
  else if (descr == "|i1" || descr == "<i1") (width = 1, is_signed = true);
  else throw FormatError(path + ": unsupported dtype " + descr);

  const std::size_t data_at = header_at + header_len;
  if (data_at + dims[0] * width > buf.size()) throw CorruptError(path + ": truncated npy data");
  NpyArray out;
  out.values.resize(dims[0]);
  for (std::size_t i = 0; i < dims[0]; ++i) {
    std::uint64_t raw = 0;
    for (int b = 0; b < width; ++b)
      raw |= static_cast<std::uint64_t>(
                 static_cast<unsigned char>(buf[data_at + i * width + b]))
             << (8 * b);
    if (is_signed && width < 8) {
      const std::uint64_t sign_bit = 1ull << (8 * width - 1);
      if (raw & sign_bit) raw |= ~((sign_bit << 1) - 1);
    }
    out.values[i] = static_cast<std::int64_t>(raw);
  }
  return out;
}

}  // namespace detail

inline Dataset import_packed_arrays(const std::string& dir, std::uint32_t dimension,
                                    std::string name) {
  auto indptr = detail::read_npy_int(dir + "/indptr.npy").values;
  auto indices = detail::read_npy_int(dir + "/indices.npy").values;
  auto labels = detail::read_npy_int(dir + "/labels.npy").values;
  auto month_idx = detail::read_npy_int(dir + "/month_index.npy").values;
  std::vector<std::int64_t> families;
  {
    std::ifstream probe(dir + "/families.npy", std::ios::binary);
    if (probe) families = detail::read_npy_int(dir + "/families.npy").values;
  }
  std::vector<std::string> months;
  {
    std::ifstream in(dir + "/months.txt");
    if (!in) throw Error("cannot open '" + dir + "/months.txt'");
    std::string line;
    while (std::getline(in, line)) {
      const std::string label = trim(line);
      if (!label.empty()) months.push_back(label);
    }
  }
  if (indptr.empty()) throw FormatError(dir + ": empty indptr");
  const std::size_t n = indptr.size() - 1;
  if (labels.size() != n || month_idx.size() != n || (!families.empty() && families.size() != n))
    throw FormatError(dir + ": packed arrays disagree on sample count");
  std::vector<Sample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (indptr[i] < 0 || indptr[i + 1] < indptr[i] ||
        static_cast<std::size_t>(indptr[i + 1]) > indices.size())
      throw CorruptError(dir + ": bad indptr");
    std::vector<std::uint32_t> idx;
    idx.reserve(static_cast<std::size_t>(indptr[i + 1] - indptr[i]));
    for (std::int64_t k = indptr[i]; k < indptr[i + 1]; ++k) {
      if (indices[static_cast<std::size_t>(k)] < 0)
        throw CorruptError(dir + ": negative feature index");
      idx.push_back(static_cast<std::uint32_t>(indices[static_cast<std::size_t>(k)]));
    }
    samples[i].features = FeatureVector::make(dimension, std::move(idx));
    if (labels[i] != 0 && labels[i] != 1) throw FormatError(dir + ": labels must be 0/1");
    samples[i].label = static_cast<std::uint8_t>(labels[i]);
    if (!families.empty() && labels[i] == 1 && families[i] >= 0)
      samples[i].family = static_cast<std::int32_t>(families[i]);
    if (month_idx[i] < 0 || static_cast<std::size_t>(month_idx[i]) >= months.size())
      throw RangeError(dir + ": month index out of range");
    samples[i].month = static_cast<std::uint16_t>(month_idx[i]);
  }
  return Dataset::build(dimension, std::move(months), std::move(samples), std::move(name));
}

}  // namespace driftbench
