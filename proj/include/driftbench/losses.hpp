#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"
#include "driftbench/tensor.hpp"

namespace driftbench {

inline constexpr double kProbClamp = 1e-12;

struct BceResult {
  double loss = 0;
  std::vector<double> dlogits;  // d loss / d pre-sigmoid logits
};

// Mean binary cross-entropy. Probabilities are clamped to
// [1e-12, 1 - 1e-12]; the gradient is taken with respect to the logits,
// (p - y) / N, which stays stable where the clamped log would not.
inline BceResult bce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  if (probs.size() != labels.size()) throw SpecError("bce_loss: length mismatch");
  BceResult r;
  r.dlogits.assign(probs.size(), 0.0);
  if (probs.empty()) return r;
  const double n = static_cast<double>(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::min(1.0 - kProbClamp, std::max(kProbClamp, probs[i]));
    const double y = labels[i] ? 1.0 : 0.0;
    r.loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.dlogits[i] = (p - y) / n;
  }
  r.loss /= n;
  return r;
}

struct TripletBatch {
  std::vector<std::uint32_t> anchor;
  std::vector<std::uint32_t> positive;
  std::vector<std::uint32_t> negative;

  std::size_t size() const { return anchor.size(); }
};

// For each batch element with at least one same-label and one opposite-label
// partner: one uniformly drawn positive and negative.
inline TripletBatch mine_triplets(std::span<const std::uint8_t> labels, RngStream& rng) {
  std::vector<std::uint32_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i] ? 1 : 0].push_back(static_cast<std::uint32_t>(i));
  TripletBatch t;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int cls = labels[i] ? 1 : 0;
    const auto& same = by_class[cls];
    const auto& other = by_class[1 - cls];
    if (same.size() < 2 || other.empty()) continue;
    std::uint32_t pos;
    do {
      pos = same[rng.uniform_int(same.size())];
    } while (pos == i);
    const std::uint32_t neg = other[rng.uniform_int(other.size())];
    t.anchor.push_back(static_cast<std::uint32_t>(i));
    t.positive.push_back(pos);
    t.negative.push_back(neg);
  }
  return t;
}

struct ContrastiveResult {
  double loss = 0;
  Tensor2 dembed;  // d loss / d embeddings, same shape as the embedding batch
};

// mean over triplets of max(0, |e_a - e_p|^2 - |e_a - e_n|^2 + margin),
// squared Euclidean distances.
inline ContrastiveResult triplet_loss(const Tensor2& embed, const TripletBatch& t,
                                      double margin) {
  if (margin <= 0) throw SpecError("triplet_loss: margin must be positive");
  ContrastiveResult r;
  r.dembed = Tensor2(embed.rows, embed.cols);
  if (t.size() == 0) return r;
  const double inv_n = 1.0 / static_cast<double>(t.size());
  const std::size_t d = embed.cols;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double* ea = embed.row(t.anchor[k]);
    const double* ep = embed.row(t.positive[k]);
    const double* en = embed.row(t.negative[k]);
    double dp = 0, dn = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double vp = ea[j] - ep[j];
      const double vn = ea[j] - en[j];
      dp += vp * vp;
      dn += vn * vn;
    }
    const double hinge = dp - dn + margin;
    if (hinge <= 0) continue;
    r.loss += hinge * inv_n;
    double* ga = r.dembed.row(t.anchor[k]);
    double* gp = r.dembed.row(t.positive[k]);
    double* gn = r.dembed.row(t.negative[k]);
    for (std::size_t j = 0; j < d; ++j) {
      const double vp = ea[j] - ep[j];
      const double vn = ea[j] - en[j];
      ga[j] += 2.0 * (vp - vn) * inv_n;
      gp[j] -= 2.0 * vp * inv_n;
      gn[j] += 2.0 * vn * inv_n;
    }
  }
  return r;
}

// Per-anchor partner sets. same_label excludes same-family malware pairs
// (those live in same_family); a missing family id acts as a singleton family.
struct PairSets {
  std::vector<std::vector<std::uint32_t>> same_label;   // P
  std::vector<std::vector<std::uint32_t>> same_family;  // Pz
  std::vector<std::vector<std::uint32_t>> opposite;     // N

  std::size_t size() const { return same_label.size(); }
  bool anchor_active(std::size_t i) const {
    return !same_label[i].empty() || !same_family[i].empty() || !opposite[i].empty();
  }
};

inline PairSets build_pair_sets(std::span<const std::uint8_t> labels,
                                std::span<const std::int32_t> families) {
  if (labels.size() != families.size()) throw SpecError("build_pair_sets: length mismatch");
  const std::size_t n = labels.size();
  PairSets ps;
  ps.same_label.assign(n, {});
  ps.same_family.assign(n, {});
  ps.opposite.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (labels[i] != labels[j]) {
        ps.opposite[i].push_back(static_cast<std::uint32_t>(j));
      } else if (labels[i] == 1 && families[i] >= 0 && families[i] == families[j]) {
        ps.same_family[i].push_back(static_cast<std::uint32_t>(j));
      } else {
        ps.same_label[i].push_back(static_cast<std::uint32_t>(j));
      }
    }
  }
  return ps;
}

// Per anchor: mean over P of max(0, d - m) + mean over Pz of d
// + mean over N of max(0, 2m - d), with unsquared Euclidean d. Terms with
// empty sets contribute nothing; anchors with all sets empty are excluded
// from the batch mean. The gradient of |.| at coincident points is 0.
inline ContrastiveResult hcc_loss(const Tensor2& embed, const PairSets& ps, double margin) {
  if (margin <= 0) throw SpecError("hcc_loss: margin must be positive");
  if (ps.size() != embed.rows) throw SpecError("hcc_loss: pair sets do not match batch");
  ContrastiveResult r;
  r.dembed = Tensor2(embed.rows, embed.cols);
  std::size_t active = 0;
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps.anchor_active(i)) ++active;
  if (active == 0) return r;
  const double inv_anchors = 1.0 / static_cast<double>(active);
  const std::size_t dim = embed.cols;

  auto accumulate = [&](std::size_t i, std::uint32_t j, double coeff) {
    // coeff * d(d_ij)/d e, added to both endpoints with opposite signs
    const double* ei = embed.row(i);
    const double* ej = embed.row(j);
    double dist = 0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = ei[k] - ej[k];
      dist += v * v;
    }
    dist = std::sqrt(dist);
    if (dist == 0.0) return;
    double* gi = r.dembed.row(i);
    double* gj = r.dembed.row(j);
    const double scale = coeff / dist;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = ei[k] - ej[k];
      gi[k] += scale * v;
      gj[k] -= scale * v;
    }
  };
  auto distance = [&](std::size_t i, std::uint32_t j) {
    const double* ei = embed.row(i);
    const double* ej = embed.row(j);
    double dist = 0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = ei[k] - ej[k];
      dist += v * v;
    }
    return std::sqrt(dist);
  };

  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps.anchor_active(i)) continue;
    if (!ps.same_label[i].empty()) {
      const double inv = inv_anchors / static_cast<double>(ps.same_label[i].size());
      for (std::uint32_t j : ps.same_label[i]) {
        const double d = distance(i, j);
        if (d > margin) {
          r.loss += (d - margin) * inv;
          accumulate(i, j, inv);
        }
      }
    }
    if (!ps.same_family[i].empty()) {
      const double inv = inv_anchors / static_cast<double>(ps.same_family[i].size());
      for (std::uint32_t j : ps.same_family[i]) {
        r.loss += distance(i, j) * inv;
        accumulate(i, j, inv);
      }
    }
    if (!ps.opposite[i].empty()) {
      const double inv = inv_anchors / static_cast<double>(ps.opposite[i].size());
      for (std::uint32_t j : ps.opposite[i]) {
        const double d = distance(i, j);
        if (d < 2.0 * margin) {
          r.loss += (2.0 * margin - d) * inv;
          accumulate(i, j, -inv);
        }
      }
    }
  }
  return r;
}

// lambda * bce + contrastive
inline double combined_loss(double bce, double contrastive, double lambda) {
  if (lambda < 0) throw SpecError("combined_loss: lambda must be non-negative");
  return lambda * bce + contrastive;
}

}  // namespace driftbench
