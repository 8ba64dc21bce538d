#pragma once

#include <memory>
#include <span>
#include <string>

#include "driftbench/blob.hpp"
#include "driftbench/model.hpp"
#include "driftbench/model_neural.hpp"
#include "driftbench/model_svm.hpp"
#include "driftbench/model_trees.hpp"

namespace driftbench {

inline std::unique_ptr<Model> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                  std::uint64_t seed) {
  validate_spec(spec);
  if (pool.empty()) throw TrainingError("fit: empty training pool");
  switch (spec.kind) {
    case ModelKind::RF: return RfModel::fit(spec, pool, seed);
    case ModelKind::SVM: return SvmModel::fit(spec, pool, seed);
    case ModelKind::GBT: return GbtModel::fit(spec, pool, seed);
    case ModelKind::MLP: return MlpModel::fit(spec, pool, seed);
    case ModelKind::SCC: return SccModel::fit(spec, pool, seed);
    case ModelKind::HCC: return HccModel::fit(spec, pool, seed);
  }
  throw Error("unreachable");
}

// Continues optimization from the model's current weights on the given pool.
// Returns an updated copy; tree and linear kinds retrain from scratch instead
// and reject this call.
inline std::unique_ptr<Model> fine_tune(const Model& model, std::span<const Sample> pool,
                                        const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  if (!model.supports_fine_tune())
    throw UsageError(std::string(kind_name(model.kind())) +
                     " does not support fine-tuning (train from scratch)");
  auto tuned = model.clone();
  tuned->fine_tune_inplace(pool, spec, seed);
  return tuned;
}

// Total split gain per feature, normalized to sum 1. Tree models only.
inline std::vector<double> feature_importance(const Model& model) {
  if (const auto* rf = dynamic_cast<const RfModel*>(&model)) return rf->importance();
  if (const auto* gbt = dynamic_cast<const GbtModel*>(&model)) return gbt->importance();
  throw UsageError(std::string(kind_name(model.kind())) + " has no feature importance");
}

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'C', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::string serialize_model(const Model& model) {
  std::string out;
  blob::put_bytes(out, kCheckpointMagic, 4);
  blob::put_le<std::uint32_t>(out, kCheckpointVersion);
  blob::put_string(out, kind_name(model.kind()));
  blob::put_le<std::uint64_t>(out, model.meta().seed);
  blob::put_le<std::uint32_t>(out, model.meta().epochs_run);
  blob::put_le<std::uint8_t>(out, model.meta().balanced ? 1 : 0);
  blob::put_string(out, model.spec().params.dump());
  model.serialize(out);
  return out;
}

inline std::unique_ptr<Model> parse_model(const std::string& bytes, const std::string& what) {
  blob::Reader r(bytes, what);
  if (r.get_bytes(4) != std::string(kCheckpointMagic, 4))
    throw FormatError(what + ": not a model checkpoint (bad magic)");
  const auto version = r.get_le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(what + ": unsupported checkpoint version " + std::to_string(version));
  ModelSpec spec;
  spec.kind = kind_from_name(r.get_string());
  Model::Meta meta;
  meta.seed = r.get_le<std::uint64_t>();
  meta.epochs_run = r.get_le<std::uint32_t>();
  meta.balanced = r.get_le<std::uint8_t>() != 0;
  spec.params = json::parse(r.get_string());
  switch (spec.kind) {
    case ModelKind::RF: return RfModel::deserialize(r, std::move(spec), meta);
    case ModelKind::SVM: return SvmModel::deserialize(r, std::move(spec), meta);
    case ModelKind::GBT: return GbtModel::deserialize(r, std::move(spec), meta);
    case ModelKind::MLP: return MlpModel::deserialize(r, std::move(spec), meta);
    case ModelKind::SCC: return SccModel::deserialize(r, std::move(spec), meta);
    case ModelKind::HCC: return HccModel::deserialize(r, std::move(spec), meta);
  }
  throw Error("unreachable");
}

inline void save_model(const Model& model, const std::string& path) {
  blob::write_file(path, serialize_model(model));
}

inline std::unique_ptr<Model> load_model(const std::string& path) {
  return parse_model(blob::read_file(path), path);
}

}  // namespace driftbench
