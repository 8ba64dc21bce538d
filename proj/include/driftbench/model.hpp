#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftbench/dataset.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/search_space.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

// Model kind plus a typed hyperparameter bag. Values must lie inside the
// kind's declared search domain; unknown keys are rejected.
struct ModelSpec {
  ModelKind kind = ModelKind::GBT;
  json params;

  json at(const std::string& key) const {
    if (!params.contains(key)) throw SpecError("spec missing hyperparameter '" + key + "'");
    return params.at(key);
  }
  double num(const std::string& key) const { return at(key).get<double>(); }
  std::int64_t integer(const std::string& key) const { return at(key).get<std::int64_t>(); }
  bool flag(const std::string& key) const { return at(key).get<bool>(); }
  std::string str(const std::string& key) const { return at(key).get<std::string>(); }
  std::vector<std::size_t> widths(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& v : at(key)) out.push_back(v.get<std::size_t>());
    return out;
  }
};

inline void validate_spec(const ModelSpec& spec) {
  const SearchSpace& space = search_space(spec.kind);
  if (!spec.params.is_object()) throw SpecError("hyperparameters must be a JSON object");
  for (const auto& [key, value] : spec.params.items()) {
    auto it = space.params.find(key);
    if (it == space.params.end())
      throw SpecError(std::string("unknown hyperparameter '") + key + "' for model " +
                      kind_name(spec.kind));
    if (!it->second.contains(value))
      throw SpecError(std::string("hyperparameter '") + key + "' = " + value.dump() +
                      " outside its domain for model " + kind_name(spec.kind));
  }
  for (const auto& [key, dist] : space.params)
    if (!spec.params.contains(key))
      throw SpecError(std::string("spec for ") + kind_name(spec.kind) +
                      " missing hyperparameter '" + key + "'");
}

inline ModelSpec default_spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  switch (kind) {
    case ModelKind::RF:
      s.params = {{"n_estimators", 64},
                  {"max_depth", 32},
                  {"criterion", "gini"},
                  {"class_weight", nullptr}};
      break;
    case ModelKind::SVM:
      s.params = {{"C", 1.0}, {"class_weight", nullptr}};
      break;
    case ModelKind::GBT:
      s.params = {{"max_depth", 8},     {"alpha", 1e-8},
                  {"lambda", 1.0},      {"eta", 0.3},
                  {"balance", false},   {"num_boost_round", 100}};
      break;
    case ModelKind::MLP:
      s.params = {{"mlp_layers", json::array({100, 100})},
                  {"learning_rate", 1e-3},
                  {"dropout", 0.0},
                  {"batch_size", 32},
                  {"epochs", 25},
                  {"optimizer", "adam"},
                  {"balance", true},
                  {"cont_learning_epochs", 0.3}};
      break;
    case ModelKind::SCC:
      s.params = {{"encoder_layers", json::array({512, 256, 128})},
                  {"mlp_layers", json::array({100})},
                  {"learning_rate", 1e-3},
                  {"dropout", 0.0},
                  {"batch_size", 512},
                  {"epochs", 25},
                  {"xent_lambda", 100},
                  {"margin", 10},
                  {"optimizer", "adam"},
                  {"balance", true},
                  {"cont_learning_epochs", 0.3}};
      break;
    case ModelKind::HCC:
      s.params = {{"encoder_layers", json::array({512, 256, 128})},
                  {"mlp_layers", json::array({100})},
                  {"learning_rate", 0.001},
                  {"dropout", 0.0},
                  {"batch_size", 1024},
                  {"epochs", 100},
                  {"xent_lambda", 100},
                  {"margin", 10},
                  {"optimizer", "adam"},
                  {"scheduler_step", 10},
                  {"scheduler_gamma", 0.5},
                  {"cont_learning_lr", 0.01},
                  {"cont_learning_epochs", 50}};
      break;
  }
  return s;
}

// Fitted classifier. predict_proba / uncertainty are read-only and safe to
// call concurrently; fine-tuning goes through clone() so the source model is
// never mutated.
class Model {
 public:
  struct Meta {
    std::uint64_t seed = 0;
    std::uint32_t epochs_run = 0;
    bool balanced = false;
  };

  virtual ~Model() = default;

  ModelKind kind() const { return kind_; }
  const Meta& meta() const { return meta_; }
  const ModelSpec& spec() const { return spec_; }

  virtual double predict_proba(const FeatureVector& x) const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;
  virtual void serialize(std::string& out) const = 0;

  virtual bool supports_fine_tune() const { return false; }
  virtual bool has_embedding() const { return false; }
  virtual std::vector<double> embed(const FeatureVector&) const {
    throw UsageError(std::string(kind_name(kind_)) + " has no embedding space");
  }
  // Continues optimization in place; only neural kinds override.
  virtual void fine_tune_inplace(std::span<const Sample>, const ModelSpec&, std::uint64_t) {
    throw UsageError(std::string(kind_name(kind_)) +
                     " does not support fine-tuning (train from scratch)");
  }

  double uncertainty(const FeatureVector& x) const {
    const double p = predict_proba(x);
    return 1.0 - std::max(p, 1.0 - p);
  }

  std::vector<double> predict_proba_batch(std::span<const Sample> samples) const {
    std::vector<double> out(samples.size());
    parallel_for(
        samples.size(),
        [&](std::size_t b, std::size_t e) {
          for (std::size_t i = b; i < e; ++i) out[i] = predict_proba(samples[i].features);
        },
        64);
    return out;
  }

 protected:
  Model(ModelKind kind, ModelSpec spec, Meta meta)
      : kind_(kind), spec_(std::move(spec)), meta_(meta) {}

  ModelKind kind_;
  ModelSpec spec_;
  Meta meta_;
};

inline void check_two_classes(std::span<const Sample> pool, const char* what) {
  bool has[2] = {false, false};
  for (const Sample& s : pool) has[s.label ? 1 : 0] = true;
  if (!has[0] || !has[1])
    throw TrainingError(std::string(what) + " requires at least one sample of each class");
}

}  // namespace driftbench
