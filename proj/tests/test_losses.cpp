#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "driftbench/gradcheck.hpp"
#include "driftbench/losses.hpp"
#include "driftbench/nn.hpp"
#include "test_helpers.hpp"

using namespace driftbench;

namespace {

Tensor2 embed_from(const std::vector<std::vector<double>>& rows) {
  Tensor2 t(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) t.at(i, j) = rows[i][j];
  return t;
}

std::vector<double> flat(const Tensor2& t) { return t.v; }

Tensor2 from_flat(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  Tensor2 t(rows, cols);
  t.v = v;
  return t;
}

}  // namespace

TEST_CASE("bce loss values") {
  SECTION("confident correct prediction is near zero") {
    const double probs[] = {1.0};
    const std::uint8_t labels[] = {1};
    REQUIRE(bce_loss(probs, labels).loss == Catch::Approx(0.0).margin(1e-10));
  }
  SECTION("maximal uncertainty gives ln 2") {
    const double probs[] = {0.5};
    const std::uint8_t labels[] = {1};
    REQUIRE(bce_loss(probs, labels).loss == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(bce_loss(probs, labels).loss == Catch::Approx(0.693147).margin(1e-6));
  }
  SECTION("length mismatch") {
    const double probs[] = {0.5, 0.5};
    const std::uint8_t labels[] = {1};
    REQUIRE_THROWS_AS(bce_loss(probs, std::span<const std::uint8_t>(labels, 1)), SpecError);
  }
  SECTION("gradient wrt logits vs finite differences") {
    RngStream rng(1);
    for (int round = 0; round < 20; ++round) {
      const std::size_t n = 1 + rng.uniform_int(8);
      std::vector<double> logits(n);
      std::vector<std::uint8_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) {
        logits[i] = rng.uniform_real(-3, 3);
        labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      }
      auto loss_at = [&](const std::vector<double>& z) {
        std::vector<double> probs(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) probs[i] = sigmoid(z[i]);
        return bce_loss(probs, labels).loss;
      };
      std::vector<double> probs(n);
      for (std::size_t i = 0; i < n; ++i) probs[i] = sigmoid(logits[i]);
      auto analytic = bce_loss(probs, labels).dlogits;
      REQUIRE(max_grad_rel_error(loss_at, logits, analytic, 1e-5) < 1e-6);
    }
  }
}

TEST_CASE("triplet loss values") {
  SECTION("worked one-dimensional example gives 7") {
    Tensor2 e = embed_from({{0.0}, {1.0}, {2.0}});
    TripletBatch t;
    t.anchor = {0};
    t.positive = {1};
    t.negative = {2};
    auto r = triplet_loss(e, t, 10.0);
    REQUIRE(r.loss == 7.0);
  }
  SECTION("satisfied margin gives zero") {
    Tensor2 e = embed_from({{0.0}, {0.0}, {4.0}});
    TripletBatch t;
    t.anchor = {0};
    t.positive = {1};
    t.negative = {2};
    auto r = triplet_loss(e, t, 10.0);  // 0 - 16 + 10 < 0
    REQUIRE(r.loss == 0.0);
    for (double v : r.dembed.v) REQUIRE(v == 0.0);
  }
  SECTION("empty triplet list is zero") {
    Tensor2 e = embed_from({{1.0, 2.0}});
    REQUIRE(triplet_loss(e, TripletBatch{}, 10.0).loss == 0.0);
  }
  SECTION("margin must be positive") {
    Tensor2 e = embed_from({{0.0}});
    REQUIRE_THROWS_AS(triplet_loss(e, TripletBatch{}, 0.0), SpecError);
  }
  SECTION("gradient vs finite differences off the hinge") {
    RngStream rng(2);
    for (int round = 0; round < 20; ++round) {
      const std::size_t n = 6, dim = 3;
      Tensor2 e(n, dim);
      for (auto& v : e.v) v = rng.uniform_real(-2, 2);
      std::vector<std::uint8_t> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = i % 2;
      TripletBatch t = mine_triplets(labels, rng);
      // skip configurations sitting on a hinge
      bool near_kink = false;
      for (std::size_t k = 0; k < t.size(); ++k) {
        double dp = 0, dn = 0;
        for (std::size_t j = 0; j < dim; ++j) {
          dp += (e.at(t.anchor[k], j) - e.at(t.positive[k], j)) *
                (e.at(t.anchor[k], j) - e.at(t.positive[k], j));
          dn += (e.at(t.anchor[k], j) - e.at(t.negative[k], j)) *
                (e.at(t.anchor[k], j) - e.at(t.negative[k], j));
        }
        if (std::abs(dp - dn + 1.5) < 1e-3) near_kink = true;
      }
      if (near_kink) continue;
      auto loss_at = [&](const std::vector<double>& v) {
        return triplet_loss(from_flat(v, n, dim), t, 1.5).loss;
      };
      auto analytic = flat(triplet_loss(e, t, 1.5).dembed);
      REQUIRE(max_grad_rel_error(loss_at, flat(e), analytic, 1e-5) < 1e-6);
    }
  }
}

TEST_CASE("hierarchical contrastive loss values") {
  SECTION("worked example: 2 + 3 + 5 = 10") {
    // anchor 0 with P partner at distance 12, Pz at 3, N at 15; margin 10
    Tensor2 e = embed_from({{0.0}, {12.0}, {3.0}, {-15.0}});
    PairSets ps;
    ps.same_label = {{1}, {}, {}, {}};
    ps.same_family = {{2}, {}, {}, {}};
    ps.opposite = {{3}, {}, {}, {}};
    auto r = hcc_loss(e, ps, 10.0);
    REQUIRE(r.loss == 10.0);
  }
  SECTION("satisfied constraints give zero") {
    // P within margin, Pz at distance 0, N beyond 2m
    Tensor2 e = embed_from({{0.0}, {5.0}, {0.0}, {25.0}});
    PairSets ps;
    ps.same_label = {{1}, {}, {}, {}};
    ps.same_family = {{2}, {}, {}, {}};
    ps.opposite = {{3}, {}, {}, {}};
    auto r = hcc_loss(e, ps, 10.0);
    REQUIRE(r.loss == 0.0);
  }
  SECTION("empty sets contribute nothing and empty anchors are excluded") {
    Tensor2 e = embed_from({{0.0}, {12.0}});
    PairSets ps;
    ps.same_label = {{1}, {}};
    ps.same_family = {{}, {}};
    ps.opposite = {{}, {}};
    auto r = hcc_loss(e, ps, 10.0);
    REQUIRE(r.loss == 2.0);  // one active anchor, not averaged over two
  }
  SECTION("gradient vs finite differences off kinks and off coincident points") {
    RngStream rng(3);
    for (int round = 0; round < 20; ++round) {
      const std::size_t n = 6, dim = 3;
      Tensor2 e(n, dim);
      for (auto& v : e.v) v = rng.uniform_real(-4, 4);
      std::vector<std::uint8_t> labels(n);
      std::vector<std::int32_t> families(n, Sample::kNoFamily);
      for (std::size_t i = 0; i < n; ++i) {
        labels[i] = rng.bernoulli(0.5) ? 1 : 0;
        if (labels[i]) families[i] = static_cast<std::int32_t>(rng.uniform_int(2));
      }
      PairSets ps = build_pair_sets(labels, families);
      // avoid hinge neighborhoods at d = m and d = 2m
      bool near_kink = false;
      for (std::size_t i = 0; i < n && !near_kink; ++i)
        for (std::size_t j = 0; j < n && !near_kink; ++j) {
          if (i == j) continue;
          double d2 = 0;
          for (std::size_t t = 0; t < dim; ++t)
            d2 += (e.at(i, t) - e.at(j, t)) * (e.at(i, t) - e.at(j, t));
          const double d = std::sqrt(d2);
          if (std::abs(d - 2.0) < 1e-3 || std::abs(d - 4.0) < 1e-3 || d < 1e-3)
            near_kink = true;
        }
      if (near_kink) continue;
      auto loss_at = [&](const std::vector<double>& v) {
        return hcc_loss(from_flat(v, n, dim), ps, 2.0).loss;
      };
      auto analytic = flat(hcc_loss(e, ps, 2.0).dembed);
      REQUIRE(max_grad_rel_error(loss_at, flat(e), analytic, 1e-5) < 1e-6);
    }
  }
}

TEST_CASE("combined loss") {
  REQUIRE(combined_loss(0.25, 3.0, 0.0) == 3.0);
  REQUIRE(combined_loss(0.5, 7.0, 100.0) == 57.0);
  REQUIRE(combined_loss(0.0, 0.0, 100.0) == 0.0);
  REQUIRE_THROWS_AS(combined_loss(1.0, 1.0, -1.0), SpecError);
}

TEST_CASE("pair set construction") {
  SECTION("two benign and two same-family malware") {
    std::vector<std::uint8_t> labels{0, 0, 1, 1};
    std::vector<std::int32_t> families{-1, -1, 4, 4};
    PairSets ps = build_pair_sets(labels, families);
    REQUIRE(ps.same_label[0] == std::vector<std::uint32_t>{1});
    REQUIRE(ps.same_label[1] == std::vector<std::uint32_t>{0});
    REQUIRE(ps.same_family[2] == std::vector<std::uint32_t>{3});
    REQUIRE(ps.same_family[3] == std::vector<std::uint32_t>{2});
    REQUIRE(ps.same_label[2].empty());
    REQUIRE(ps.opposite[0] == std::vector<std::uint32_t>{2, 3});
    REQUIRE(ps.opposite[2] == std::vector<std::uint32_t>{0, 1});
  }
  SECTION("all benign leaves N and Pz empty") {
    std::vector<std::uint8_t> labels{0, 0, 0};
    std::vector<std::int32_t> families{-1, -1, -1};
    PairSets ps = build_pair_sets(labels, families);
    for (std::size_t i = 0; i < 3; ++i) {
      REQUIRE(ps.opposite[i].empty());
      REQUIRE(ps.same_family[i].empty());
      REQUIRE(ps.same_label[i].size() == 2);
    }
  }
  SECTION("different families land in P, not Pz") {
    std::vector<std::uint8_t> labels{1, 1};
    std::vector<std::int32_t> families{1, 2};
    PairSets ps = build_pair_sets(labels, families);
    REQUIRE(ps.same_label[0] == std::vector<std::uint32_t>{1});
    REQUIRE(ps.same_family[0].empty());
  }
  SECTION("missing family acts as a singleton") {
    std::vector<std::uint8_t> labels{1, 1};
    std::vector<std::int32_t> families{-1, -1};
    PairSets ps = build_pair_sets(labels, families);
    REQUIRE(ps.same_label[0] == std::vector<std::uint32_t>{1});
    REQUIRE(ps.same_family[0].empty());
  }
  SECTION("P, Pz, N are pairwise disjoint per anchor") {
    RngStream rng(4);
    std::vector<std::uint8_t> labels(20);
    std::vector<std::int32_t> families(20, Sample::kNoFamily);
    for (std::size_t i = 0; i < 20; ++i) {
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
      if (labels[i]) families[i] = static_cast<std::int32_t>(rng.uniform_int(3));
    }
    PairSets ps = build_pair_sets(labels, families);
    for (std::size_t i = 0; i < 20; ++i) {
      std::vector<std::uint32_t> joined;
      joined.insert(joined.end(), ps.same_label[i].begin(), ps.same_label[i].end());
      joined.insert(joined.end(), ps.same_family[i].begin(), ps.same_family[i].end());
      joined.insert(joined.end(), ps.opposite[i].begin(), ps.opposite[i].end());
      std::sort(joined.begin(), joined.end());
      REQUIRE(std::adjacent_find(joined.begin(), joined.end()) == joined.end());
      REQUIRE(joined.size() == 19);  // everyone except the anchor
    }
  }
}

TEST_CASE("loss invariance properties") {
  RngStream rng(5);
  const std::size_t n = 8, dim = 4;
  Tensor2 e(n, dim);
  for (auto& v : e.v) v = rng.uniform_real(-3, 3);
  std::vector<std::uint8_t> labels(n);
  std::vector<std::int32_t> families(n, Sample::kNoFamily);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 2;
    if (labels[i]) families[i] = static_cast<std::int32_t>(i % 3);
  }
  TripletBatch t = mine_triplets(labels, rng);
  PairSets ps = build_pair_sets(labels, families);

  SECTION("translation invariance") {
    Tensor2 shifted = e;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < dim; ++j) shifted.at(i, j) += 11.5;
    REQUIRE(triplet_loss(e, t, 2.0).loss ==
            Catch::Approx(triplet_loss(shifted, t, 2.0).loss).epsilon(1e-12));
    REQUIRE(hcc_loss(e, ps, 2.0).loss ==
            Catch::Approx(hcc_loss(shifted, ps, 2.0).loss).epsilon(1e-12));
  }

  SECTION("hcc family term scales linearly") {
    PairSets family_only;
    family_only.same_label.assign(n, {});
    family_only.opposite.assign(n, {});
    family_only.same_family = ps.same_family;
    Tensor2 scaled = e;
    for (auto& v : scaled.v) v *= 3.0;
    const double base = hcc_loss(e, family_only, 2.0).loss;
    if (base > 0)
      REQUIRE(hcc_loss(scaled, family_only, 2.0).loss ==
              Catch::Approx(3.0 * base).epsilon(1e-10));
  }

  SECTION("losses are non-negative and permutation invariant") {
    REQUIRE(triplet_loss(e, t, 2.0).loss >= 0.0);
    REQUIRE(hcc_loss(e, ps, 2.0).loss >= 0.0);

    // reverse the batch order and remap all indices
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = n - 1 - i;
    Tensor2 pe(n, dim);
    std::vector<std::uint8_t> plabels(n);
    std::vector<std::int32_t> pfamilies(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) pe.at(perm[i], j) = e.at(i, j);
      plabels[perm[i]] = labels[i];
      pfamilies[perm[i]] = families[i];
    }
    PairSets pps = build_pair_sets(plabels, pfamilies);
    REQUIRE(hcc_loss(pe, pps, 2.0).loss ==
            Catch::Approx(hcc_loss(e, ps, 2.0).loss).epsilon(1e-12));
    TripletBatch pt;
    for (std::size_t k = 0; k < t.size(); ++k) {
      pt.anchor.push_back(static_cast<std::uint32_t>(perm[t.anchor[k]]));
      pt.positive.push_back(static_cast<std::uint32_t>(perm[t.positive[k]]));
      pt.negative.push_back(static_cast<std::uint32_t>(perm[t.negative[k]]));
    }
    REQUIRE(triplet_loss(pe, pt, 2.0).loss ==
            Catch::Approx(triplet_loss(e, t, 2.0).loss).epsilon(1e-12));
  }
}

TEST_CASE("triplet mining respects labels") {
  RngStream rng(6);
  std::vector<std::uint8_t> labels{0, 1, 0, 1, 1, 0, 0, 1};
  for (int round = 0; round < 50; ++round) {
    TripletBatch t = mine_triplets(labels, rng);
    REQUIRE(t.size() == labels.size());  // every sample has a partner here
    for (std::size_t k = 0; k < t.size(); ++k) {
      REQUIRE(labels[t.anchor[k]] == labels[t.positive[k]]);
      REQUIRE(labels[t.anchor[k]] != labels[t.negative[k]]);
      REQUIRE(t.anchor[k] != t.positive[k]);
    }
  }
  SECTION("anchors without partners are skipped") {
    std::vector<std::uint8_t> lonely{0, 0, 0};
    REQUIRE(mine_triplets(lonely, rng).size() == 0);
    std::vector<std::uint8_t> one_neg{0, 0, 1};
    TripletBatch t = mine_triplets(one_neg, rng);
    REQUIRE(t.size() == 2);  // the single malware has no positive partner
  }
}
