#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdint>
#include <span>
#include <vector>

#include "driftbench/blob.hpp"
#include "driftbench/model.hpp"
#include "driftbench/nn.hpp"
#include "driftbench/rng.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

// Binary-feature decision tree node. feature < 0 marks a leaf; inactive
// feature goes left, active goes right.
struct TreeNode {
  std::int32_t feature = -1;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0;  // leaf payload: class-1 frequency (RF) or weight (GBT)
};

struct Tree {
  std::vector<TreeNode> nodes;  // preorder, root at 0

  double predict(const FeatureVector& x) const {
    std::uint32_t at = 0;
    for (;;) {
      const TreeNode& n = nodes[at];
      if (n.feature < 0) return n.value;
      const bool active = std::binary_search(x.indices.begin(), x.indices.end(),
                                             static_cast<std::uint32_t>(n.feature));
      at = active ? n.right : n.left;
    }
  }

  void serialize(std::string& out) const {
    blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(nodes.size()));
    for (const TreeNode& n : nodes) {
      blob::put_le<std::int32_t>(out, n.feature);
      blob::put_le<std::uint32_t>(out, n.left);
      blob::put_le<std::uint32_t>(out, n.right);
      blob::put_f64(out, n.value);
    }
  }

  static Tree deserialize(blob::Reader& r) {
    Tree t;
    const auto n = r.get_le<std::uint32_t>();
    t.nodes.resize(n);
    for (auto& node : t.nodes) {
      node.feature = r.get_le<std::int32_t>();
      node.left = r.get_le<std::uint32_t>();
      node.right = r.get_le<std::uint32_t>();
      node.value = r.get_f64();
    }
    return t;
  }
};

namespace detail {

// Scatter/gather accumulator over feature indices with O(touched) reset.
template <typename T>
class FeatureAccumulator {
 public:
  explicit FeatureAccumulator(std::size_t dim) : values_(dim, T{}) {}

  T& operator[](std::uint32_t f) {
    if (values_[f] == T{}) touched_.push_back(f);
    return values_[f];
  }
  const T& get(std::uint32_t f) const { return values_[f]; }

  void reset() {
    for (std::uint32_t f : touched_) values_[f] = T{};
    touched_.clear();
  }

 private:
  std::vector<T> values_;
  std::vector<std::uint32_t> touched_;
};

struct GradPair {
  double g = 0;
  double h = 0;
  double n = 0;
  bool operator==(const GradPair&) const = default;
};

struct WeightPair {
  double w0 = 0;
  double w1 = 0;
  bool operator==(const WeightPair&) const = default;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Random forest: bagged CART trees on binary features, per-node feature
// subsampling of floor(sqrt(dim)) candidates, per-tree seeds derived from the
// run seed. Splits are chosen by weighted impurity decrease; a node with
// mixed labels may split at zero improvement (ties and zero gains resolve to
// the lowest feature index), matching the usual CART behaviour on patterns
// like XOR.
class RfModel final : public Model {
 public:
  RfModel(ModelSpec spec, Meta meta, std::vector<Tree> trees, std::vector<double> importance)
      : Model(ModelKind::RF, std::move(spec), meta),
        trees_(std::move(trees)),
        importance_(std::move(importance)) {}

  static std::unique_ptr<RfModel> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                      std::uint64_t seed) {
    if (pool.empty()) throw TrainingError("rf: empty training pool");
    const std::size_t dim = pool.front().features.dimension;
    const auto n_trees = static_cast<std::size_t>(spec.integer("n_estimators"));
    const auto max_depth = static_cast<std::uint32_t>(spec.integer("max_depth"));
    const std::string criterion = spec.str("criterion");
    const bool entropy = criterion != "gini";  // entropy and log_loss coincide
    const bool balanced = !spec.at("class_weight").is_null();

    double class_weight[2] = {1.0, 1.0};
    if (balanced) {
      std::size_t counts[2] = {0, 0};
      for (const Sample& s : pool) ++counts[s.label ? 1 : 0];
      for (int k : {0, 1})
        if (counts[k] > 0)
          class_weight[k] =
              static_cast<double>(pool.size()) / (2.0 * static_cast<double>(counts[k]));
    }

    RngStream run_rng(seed);
    std::vector<Tree> trees(n_trees);
    std::vector<std::vector<double>> gains(n_trees);
    std::vector<RngStream> tree_rngs;
    tree_rngs.reserve(n_trees);
    for (std::size_t t = 0; t < n_trees; ++t) tree_rngs.push_back(run_rng.split(t));

    parallel_for(n_trees, [&](std::size_t t0, std::size_t t1) {
      for (std::size_t t = t0; t < t1; ++t) {
        gains[t].assign(dim, 0.0);
        trees[t] = build_tree(pool, dim, max_depth, entropy, class_weight, tree_rngs[t],
                              gains[t]);
      }
    });

    std::vector<double> importance(dim, 0.0);
    for (const auto& g : gains)
      for (std::size_t f = 0; f < dim; ++f) importance[f] += g[f];
    const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
    if (total > 0)
      for (double& x : importance) x /= total;

    Meta meta{seed, 0, balanced};
    return std::make_unique<RfModel>(spec, meta, std::move(trees), std::move(importance));
  }

  // Mean of per-tree class-1 leaf frequencies.
  double predict_proba(const FeatureVector& x) const override {
    double acc = 0;
    for (const Tree& t : trees_) acc += t.predict(x);
    return acc / static_cast<double>(trees_.size());
  }

  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& importance() const { return importance_; }

  std::unique_ptr<Model> clone() const override { return std::make_unique<RfModel>(*this); }

  void serialize(std::string& out) const override {
    blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(trees_.size()));
    for (const Tree& t : trees_) t.serialize(out);
    blob::put_f64_vec(out, importance_);
  }

  static std::unique_ptr<RfModel> deserialize(blob::Reader& r, ModelSpec spec, Meta meta) {
    const auto n = r.get_le<std::uint32_t>();
    std::vector<Tree> trees(n);
    for (auto& t : trees) t = Tree::deserialize(r);
    auto importance = r.get_f64_vec();
    return std::make_unique<RfModel>(std::move(spec), meta, std::move(trees),
                                     std::move(importance));
  }

 private:
  static double impurity(double w0, double w1, bool entropy) {
    const double total = w0 + w1;
    if (total <= 0) return 0;
    const double p0 = w0 / total, p1 = w1 / total;
    if (!entropy) return 1.0 - (p0 * p0 + p1 * p1);
    double h = 0;
    if (p0 > 0) h -= p0 * std::log(p0);
    if (p1 > 0) h -= p1 * std::log(p1);
    return h;
  }

  static Tree build_tree(std::span<const Sample> pool, std::size_t dim,
                         std::uint32_t max_depth, bool entropy, const double class_weight[2],
                         RngStream& rng, std::vector<double>& gain_out) {
    const std::size_t n = pool.size();
    std::vector<std::uint32_t> indices(n);
    for (std::size_t i = 0; i < n; ++i)
      indices[i] = static_cast<std::uint32_t>(rng.uniform_int(n));

    const std::size_t k_features =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(
                                     static_cast<double>(dim)))));
    std::vector<std::uint32_t> feature_pool(dim);
    for (std::size_t f = 0; f < dim; ++f) feature_pool[f] = static_cast<std::uint32_t>(f);

    detail::FeatureAccumulator<detail::WeightPair> acc(dim);
    Tree tree;
    build_node(tree, pool, indices, 0, max_depth, entropy, class_weight, k_features,
               feature_pool, acc, rng, gain_out);
    return tree;
  }

  static std::uint32_t build_node(Tree& tree, std::span<const Sample> pool,
                                  std::vector<std::uint32_t>& members, std::uint32_t depth,
                                  std::uint32_t max_depth, bool entropy,
                                  const double class_weight[2], std::size_t k_features,
                                  std::vector<std::uint32_t>& feature_pool,
                                  detail::FeatureAccumulator<detail::WeightPair>& acc,
                                  RngStream& rng, std::vector<double>& gain_out) {
    const std::uint32_t node_id = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();

    double w0 = 0, w1 = 0;
    for (std::uint32_t i : members) (pool[i].label ? w1 : w0) += class_weight[pool[i].label];
    const double parent_impurity = impurity(w0, w1, entropy);
    const bool pure = w0 == 0 || w1 == 0;

    if (pure || depth >= max_depth || members.size() < 2) {
      tree.nodes[node_id].value = (w0 + w1) > 0 ? w1 / (w0 + w1) : 0.5;
      return node_id;
    }

    // per-node candidate features, drawn without replacement
    std::vector<std::uint32_t> candidates(k_features);
    for (std::size_t j = 0; j < k_features; ++j) {
      const std::size_t pick = j + rng.uniform_int(feature_pool.size() - j);
      std::swap(feature_pool[j], feature_pool[pick]);
      candidates[j] = feature_pool[j];
    }
    std::sort(candidates.begin(), candidates.end());

    acc.reset();
    for (std::uint32_t i : members) {
      const double w = class_weight[pool[i].label];
      for (std::uint32_t f : pool[i].features.indices) {
        auto& cell = acc[f];
        (pool[i].label ? cell.w1 : cell.w0) += w;
      }
    }

    const double total = w0 + w1;
    double best_improvement = -1.0;
    std::int64_t best_feature = -1;
    for (std::uint32_t f : candidates) {
      const auto& on = acc.get(f);
      const double on_w = on.w0 + on.w1;
      if (on_w == 0.0 || on_w == total) continue;  // degenerate
      const double off0 = w0 - on.w0, off1 = w1 - on.w1;
      const double improvement = parent_impurity * total -
                                 impurity(off0, off1, entropy) * (off0 + off1) -
                                 impurity(on.w0, on.w1, entropy) * on_w;
      if (improvement > best_improvement) {
        best_improvement = improvement;
        best_feature = f;
      }
    }

    if (best_feature < 0) {
      tree.nodes[node_id].value = w1 / (w0 + w1);
      return node_id;
    }

    gain_out[static_cast<std::size_t>(best_feature)] += std::max(0.0, best_improvement);

    std::vector<std::uint32_t> left, right;
    for (std::uint32_t i : members) {
      const bool active =
          std::binary_search(pool[i].features.indices.begin(), pool[i].features.indices.end(),
                             static_cast<std::uint32_t>(best_feature));
      (active ? right : left).push_back(i);
    }
    members.clear();
    members.shrink_to_fit();

    tree.nodes[node_id].feature = static_cast<std::int32_t>(best_feature);
    const std::uint32_t left_id =
        build_node(tree, pool, left, depth + 1, max_depth, entropy, class_weight, k_features,
                   feature_pool, acc, rng, gain_out);
    const std::uint32_t right_id =
        build_node(tree, pool, right, depth + 1, max_depth, entropy, class_weight, k_features,
                   feature_pool, acc, rng, gain_out);
    tree.nodes[node_id].left = left_id;
    tree.nodes[node_id].right = right_id;
    return node_id;
  }

  std::vector<Tree> trees_;
  std::vector<double> importance_;
};

// ---------------------------------------------------------------------------
// Gradient-boosted trees on the logistic loss with second-order statistics.
// Leaf weight is -sign(G) * max(|G| - alpha, 0) / (H + lambda); split gain is
// the matching score difference, exact greedy over all binary features with
// ties broken by the lowest feature index. A node whose best gain is zero but
// whose labels are still mixed splits anyway, so symmetric patterns remain
// learnable. balance=true scales malware gradient/hessian by the
// benign-to-malware ratio. Fully deterministic: seeds do not enter anywhere.
class GbtModel final : public Model {
 public:
  GbtModel(ModelSpec spec, Meta meta, double base_score, std::vector<Tree> trees,
           std::vector<double> importance)
      : Model(ModelKind::GBT, std::move(spec), meta),
        base_score_(base_score),
        trees_(std::move(trees)),
        importance_(std::move(importance)) {}

  static std::unique_ptr<GbtModel> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                       std::uint64_t seed) {
    check_two_classes(pool, "gbt");
    const std::size_t dim = pool.front().features.dimension;
    const std::size_t n = pool.size();
    const auto max_depth = static_cast<std::uint32_t>(spec.integer("max_depth"));
    const double alpha = spec.num("alpha");
    const double lambda = spec.num("lambda");
    const double eta = spec.num("eta");
    const bool balance = spec.flag("balance");
    const auto rounds = static_cast<std::size_t>(spec.integer("num_boost_round"));

    std::size_t counts[2] = {0, 0};
    for (const Sample& s : pool) ++counts[s.label ? 1 : 0];
    const double prevalence = static_cast<double>(counts[1]) / static_cast<double>(n);
    const double base_score = std::log(prevalence / (1.0 - prevalence));
    const double pos_scale =
        balance ? static_cast<double>(counts[0]) / static_cast<double>(counts[1]) : 1.0;

    std::vector<double> margin(n, base_score);
    std::vector<double> grad(n), hess(n);
    std::vector<Tree> trees;
    trees.reserve(rounds);
    std::vector<double> importance(dim, 0.0);

    detail::FeatureAccumulator<detail::GradPair> acc(dim);
    for (std::size_t round = 0; round < rounds; ++round) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = sigmoid(margin[i]);
        const double y = pool[i].label ? 1.0 : 0.0;
        const double scale = pool[i].label ? pos_scale : 1.0;
        grad[i] = scale * (p - y);
        hess[i] = scale * p * (1.0 - p);
      }
      std::vector<std::uint32_t> members(n);
      for (std::size_t i = 0; i < n; ++i) members[i] = static_cast<std::uint32_t>(i);
      Tree tree;
      build_node(tree, pool, grad, hess, members, 0, max_depth, alpha, lambda, eta, acc,
                 importance);
      for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict(pool[i].features);
      trees.push_back(std::move(tree));
    }

    const double total = std::accumulate(importance.begin(), importance.end(), 0.0);
    if (total > 0)
      for (double& x : importance) x /= total;

    Meta meta{seed, 0, balance};
    return std::make_unique<GbtModel>(spec, meta, base_score, std::move(trees),
                                      std::move(importance));
  }

  double decision_value(const FeatureVector& x) const {
    double acc = base_score_;
    for (const Tree& t : trees_) acc += t.predict(x);
    return acc;
  }

  double predict_proba(const FeatureVector& x) const override {
    return sigmoid(decision_value(x));
  }

  double base_score() const { return base_score_; }
  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& importance() const { return importance_; }

  std::unique_ptr<Model> clone() const override { return std::make_unique<GbtModel>(*this); }

  void serialize(std::string& out) const override {
    blob::put_f64(out, base_score_);
    blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(trees_.size()));
    for (const Tree& t : trees_) t.serialize(out);
    blob::put_f64_vec(out, importance_);
  }

  static std::unique_ptr<GbtModel> deserialize(blob::Reader& r, ModelSpec spec, Meta meta) {
    const double base = r.get_f64();
    const auto n = r.get_le<std::uint32_t>();
    std::vector<Tree> trees(n);
    for (auto& t : trees) t = Tree::deserialize(r);
    auto importance = r.get_f64_vec();
    return std::make_unique<GbtModel>(std::move(spec), meta, base, std::move(trees),
                                      std::move(importance));
  }

 private:
  static double thresholded(double g, double alpha) {
    if (g > alpha) return g - alpha;
    if (g < -alpha) return g + alpha;
    return 0.0;
  }
  static double score(double g, double h, double alpha, double lambda) {
    const double t = thresholded(g, alpha);
    return t * t / (h + lambda);
  }
  static double leaf_weight(double g, double h, double alpha, double lambda) {
    return -thresholded(g, alpha) / (h + lambda);
  }

  static std::uint32_t build_node(Tree& tree, std::span<const Sample> pool,
                                  const std::vector<double>& grad,
                                  const std::vector<double>& hess,
                                  std::vector<std::uint32_t>& members, std::uint32_t depth,
                                  std::uint32_t max_depth, double alpha, double lambda,
                                  double eta, detail::FeatureAccumulator<detail::GradPair>& acc,
                                  std::vector<double>& importance) {
    const std::uint32_t node_id = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();

    double g_total = 0, h_total = 0;
    bool has[2] = {false, false};
    for (std::uint32_t i : members) {
      g_total += grad[i];
      h_total += hess[i];
      has[pool[i].label ? 1 : 0] = true;
    }

    auto make_leaf = [&] {
      tree.nodes[node_id].value = eta * leaf_weight(g_total, h_total, alpha, lambda);
      return node_id;
    };
    if (depth >= max_depth || members.size() < 2) return make_leaf();

    acc.reset();
    for (std::uint32_t i : members)
      for (std::uint32_t f : pool[i].features.indices) {
        auto& cell = acc[f];
        cell.g += grad[i];
        cell.h += hess[i];
        cell.n += 1.0;
      }

    const double parent_score = score(g_total, h_total, alpha, lambda);
    double best_gain = -1.0;
    std::int64_t best_feature = -1;
    const std::size_t dim = pool.front().features.dimension;
    for (std::uint32_t f = 0; f < dim; ++f) {
      const auto& on = acc.get(f);
      if (on.n == 0.0 || on.n == static_cast<double>(members.size())) continue;
      const double gain = score(on.g, on.h, alpha, lambda) +
                          score(g_total - on.g, h_total - on.h, alpha, lambda) - parent_score;
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
      }
    }

    const bool mixed_labels = has[0] && has[1];
    const bool worth_splitting =
        best_feature >= 0 && (best_gain > 1e-12 || (mixed_labels && best_gain >= 0.0));
    if (!worth_splitting) return make_leaf();

    importance[static_cast<std::size_t>(best_feature)] += std::max(0.0, best_gain);

    std::vector<std::uint32_t> left, right;
    for (std::uint32_t i : members) {
      const bool active =
          std::binary_search(pool[i].features.indices.begin(), pool[i].features.indices.end(),
                             static_cast<std::uint32_t>(best_feature));
      (active ? right : left).push_back(i);
    }
    members.clear();
    members.shrink_to_fit();

    tree.nodes[node_id].feature = static_cast<std::int32_t>(best_feature);
    const std::uint32_t left_id = build_node(tree, pool, grad, hess, left, depth + 1, max_depth,
                                             alpha, lambda, eta, acc, importance);
    const std::uint32_t right_id = build_node(tree, pool, grad, hess, right, depth + 1,
                                              max_depth, alpha, lambda, eta, acc, importance);
    tree.nodes[node_id].left = left_id;
    tree.nodes[node_id].right = right_id;
    return node_id;
  }

  double base_score_;
  std::vector<Tree> trees_;
  std::vector<double> importance_;
};

}  // namespace driftbench
