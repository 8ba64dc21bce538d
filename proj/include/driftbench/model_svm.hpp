#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "driftbench/blob.hpp"
#include "driftbench/model.hpp"
#include "driftbench/nn.hpp"

namespace driftbench {

// Linear SVM, L2-regularized hinge loss, trained by dual coordinate descent
// over the samples in a fixed order with tolerance 1e-4 and at most 1000
// epochs. No randomness anywhere: repeated fits are bit-identical. The bias
// is an appended constant-1 feature.
class SvmModel final : public Model {
 public:
  static constexpr double kTol = 1e-4;
  static constexpr int kMaxEpochs = 1000;

  SvmModel(ModelSpec spec, Meta meta, std::vector<double> w)
      : Model(ModelKind::SVM, std::move(spec), meta), w_(std::move(w)) {}

  static std::unique_ptr<SvmModel> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                       std::uint64_t seed) {
    check_two_classes(pool, "svm");
    const double c = spec.num("C");
    const bool balanced = !spec.at("class_weight").is_null();
    const std::size_t dim = pool.front().features.dimension;
    const std::size_t n = pool.size();

    double class_c[2] = {c, c};
    if (balanced) {
      std::size_t counts[2] = {0, 0};
      for (const Sample& s : pool) ++counts[s.label ? 1 : 0];
      for (int k : {0, 1})
        class_c[k] = c * static_cast<double>(n) / (2.0 * static_cast<double>(counts[k]));
    }

    std::vector<double> w(dim + 1, 0.0);
    std::vector<double> alpha(n, 0.0);
    std::vector<double> qii(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      qii[i] = static_cast<double>(pool[i].features.indices.size()) + 1.0;  // + bias feature
      y[i] = pool[i].label ? 1.0 : -1.0;
    }

    auto dot = [&](const Sample& s) {
      double acc = w[dim];
      for (std::uint32_t idx : s.features.indices) acc += w[idx];
      return acc;
    };

    for (int epoch = 0; epoch < kMaxEpochs; ++epoch) {
      double max_violation = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double upper = class_c[pool[i].label ? 1 : 0];
        const double grad = y[i] * dot(pool[i]) - 1.0;
        double pg = grad;
        if (alpha[i] <= 0.0)
          pg = std::min(grad, 0.0);
        else if (alpha[i] >= upper)
          pg = std::max(grad, 0.0);
        max_violation = std::max(max_violation, std::abs(pg));
        if (pg == 0.0) continue;
        const double old = alpha[i];
        alpha[i] = std::min(std::max(old - grad / qii[i], 0.0), upper);
        const double delta = (alpha[i] - old) * y[i];
        if (delta != 0.0) {
          for (std::uint32_t idx : pool[i].features.indices) w[idx] += delta;
          w[dim] += delta;
        }
      }
      if (max_violation < kTol) break;
    }

    Meta meta{seed, 0, balanced};
    return std::make_unique<SvmModel>(spec, meta, std::move(w));
  }

  double decision_value(const FeatureVector& x) const {
    if (x.dimension + 1 != w_.size()) throw SpecError("svm: input dimension mismatch");
    double acc = w_.back();
    for (std::uint32_t idx : x.indices) acc += w_[idx];
    return acc;
  }

  // Monotone surrogate probability; ranks uncertainty by |margin|.
  double predict_proba(const FeatureVector& x) const override {
    return sigmoid(decision_value(x));
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<SvmModel>(*this); }

  void serialize(std::string& out) const override { blob::put_f64_vec(out, w_); }

  static std::unique_ptr<SvmModel> deserialize(blob::Reader& r, ModelSpec spec, Meta meta) {
    return std::make_unique<SvmModel>(std::move(spec), meta, r.get_f64_vec());
  }

  const std::vector<double>& weights() const { return w_; }

 private:
  std::vector<double> w_;  // dim weights then bias
};

}  // namespace driftbench
