#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftbench/dataset.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"

namespace driftbench {

// Drifting labeled stream for desk-scale experiments. Each malware family
// carries a signature block of indices activated with high probability;
// benign traffic is background noise plus a configurable bleed into the
// signature blocks, so detection has to rely on the signatures. Drift moves
// signature indices into a reserved pool, either gradually (drift_rate per
// feature per month) or in one step at abrupt_month. Duplicates are injected
// by copying an earlier sample, usually from the same month.
struct SynthConfig {
  std::uint32_t dimension = 500;
  std::uint16_t months = 24;
  std::size_t samples_per_month = 150;
  double malware_prior = 0.1;
  std::size_t families = 5;
  std::size_t signature_size = 12;
  double signature_strength = 0.85;  // activation probability of an own-signature index
  double background_rate = 0.05;     // activation probability over the background block
  double cross_rate = 0.01;          // benign bleed into signature indices (class overlap)
  double dupe_rate = 0.0;
  double same_month_dupe_fraction = 0.8;  // rest copies from earlier months
  double drift_rate = 0.0;                // per signature feature per month
  int abrupt_month = -1;                  // -1 = never
  double abrupt_fraction = 1.0;           // of signature features
  std::uint64_t seed = 0;
  std::string name = "synth";
  std::string first_month = "2019-01";
};

namespace detail {

inline std::string next_month_label(const std::string& label) {
  int year = std::stoi(label.substr(0, 4));
  int month = std::stoi(label.substr(5, 2));
  if (++month > 12) {
    month = 1;
    ++year;
  }
  std::string out = "0000-00";
  for (int i = 3; i >= 0; --i, year /= 10) out[i] = static_cast<char>('0' + year % 10);
  out[5] = static_cast<char>('0' + month / 10);
  out[6] = static_cast<char>('0' + month % 10);
  return out;
}

}  // namespace detail

inline Dataset generate_synth(const SynthConfig& cfg) {
  if (cfg.months == 0 || cfg.samples_per_month == 0)
    throw SpecError("synth: months and samples_per_month must be positive");
  if (cfg.malware_prior <= 0 || cfg.malware_prior >= 1)
    throw SpecError("synth: malware prior must be in (0, 1)");
  if (cfg.families == 0) throw SpecError("synth: need at least one family");
  if (!is_valid_month_label(cfg.first_month))
    throw FormatError("synth: bad first month '" + cfg.first_month + "'");

  // index blocks: [family signatures][drift pool][background]
  const std::size_t sig = cfg.signature_size;
  const std::size_t reserved = sig * cfg.families;
  const std::size_t drift_pool_size = reserved * 4;
  if (reserved + drift_pool_size >= cfg.dimension)
    throw SpecError("synth: dimension too small for the signature blocks");

  RngStream rng(cfg.seed);
  RngStream structure = rng.split(0);
  RngStream sampling = rng.split(1);

  std::vector<std::vector<std::uint32_t>> family_sig(cfg.families);
  for (std::size_t f = 0; f < cfg.families; ++f) {
    family_sig[f].resize(sig);
    for (std::size_t i = 0; i < sig; ++i)
      family_sig[f][i] = static_cast<std::uint32_t>(sig * f + i);
  }
  std::uint32_t next_free = static_cast<std::uint32_t>(reserved);
  const std::uint32_t drift_pool_end = static_cast<std::uint32_t>(reserved + drift_pool_size);
  auto fresh_index = [&]() {
    if (next_free >= drift_pool_end) next_free = static_cast<std::uint32_t>(reserved);
    return next_free++;
  };

  std::vector<std::string> months(cfg.months);
  months[0] = cfg.first_month;
  for (std::uint16_t m = 1; m < cfg.months; ++m)
    months[m] = detail::next_month_label(months[m - 1]);

  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(cfg.months) * cfg.samples_per_month);
  std::vector<std::size_t> month_begin(cfg.months, 0);

  for (std::uint16_t m = 0; m < cfg.months; ++m) {
    month_begin[m] = samples.size();
    if (m > 0) {
      const bool abrupt = cfg.abrupt_month >= 0 && static_cast<int>(m) == cfg.abrupt_month;
      for (auto& fs : family_sig) {
        if (abrupt)
          for (auto& idx : fs)
            if (structure.bernoulli(cfg.abrupt_fraction)) idx = fresh_index();
        if (cfg.drift_rate > 0)
          for (auto& idx : fs)
            if (structure.bernoulli(cfg.drift_rate)) idx = fresh_index();
      }
    }

    for (std::size_t k = 0; k < cfg.samples_per_month; ++k) {
      if (cfg.dupe_rate > 0 && sampling.bernoulli(cfg.dupe_rate)) {
        const bool same_month = sampling.bernoulli(cfg.same_month_dupe_fraction) || m == 0;
        std::size_t lo = same_month ? month_begin[m] : 0;
        std::size_t hi = samples.size();
        if (hi > lo) {
          Sample copy = samples[lo + sampling.uniform_int(hi - lo)];
          copy.month = m;
          samples.push_back(std::move(copy));
          continue;
        }
      }
      Sample s;
      s.month = m;
      s.label = sampling.bernoulli(cfg.malware_prior) ? 1 : 0;
      std::vector<std::uint32_t> idx;
      if (s.label == 1) {
        const std::size_t fam = sampling.uniform_int(cfg.families);
        s.family = static_cast<std::int32_t>(fam);
        for (std::uint32_t f : family_sig[fam])
          if (sampling.bernoulli(cfg.signature_strength)) idx.push_back(f);
      } else if (cfg.cross_rate > 0) {
        for (const auto& fs : family_sig)
          for (std::uint32_t f : fs)
            if (sampling.bernoulli(cfg.cross_rate)) idx.push_back(f);
      }
      // sparse background noise over the tail block
      const std::uint32_t bg_begin = drift_pool_end;
      const std::size_t bg_count = cfg.dimension - bg_begin;
      const double expected = cfg.background_rate * static_cast<double>(bg_count);
      const std::size_t whole = static_cast<std::size_t>(expected);
      const std::size_t draws =
          whole + (sampling.bernoulli(expected - static_cast<double>(whole)) ? 1 : 0);
      for (std::size_t d = 0; d < draws; ++d)
        idx.push_back(bg_begin + static_cast<std::uint32_t>(sampling.uniform_int(bg_count)));
      s.features = FeatureVector::make(cfg.dimension, std::move(idx));
      samples.push_back(std::move(s));
    }
  }

  return Dataset::build(cfg.dimension, std::move(months), std::move(samples), cfg.name);
}

}  // namespace driftbench
