#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "driftbench/blob.hpp"
#include "driftbench/losses.hpp"
#include "driftbench/model.hpp"
#include "driftbench/nn.hpp"
#include "driftbench/rng.hpp"

namespace driftbench {

namespace detail {

inline std::vector<std::vector<std::uint32_t>> shuffled_batches(std::size_t n,
                                                                std::size_t batch_size,
                                                                RngStream& rng) {
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  rng.shuffle(order);
  std::vector<std::vector<std::uint32_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    batches.emplace_back(order.begin() + at, order.begin() + end);
  }
  return batches;
}

// Equal class counts per batch: the larger class is walked once per epoch,
// the smaller one is drawn with replacement.
inline std::vector<std::vector<std::uint32_t>> balanced_batches(std::span<const Sample> pool,
                                                                std::size_t batch_size,
                                                                RngStream& rng) {
  std::vector<std::uint32_t> by_class[2];
  for (std::size_t i = 0; i < pool.size(); ++i)
    by_class[pool[i].label ? 1 : 0].push_back(static_cast<std::uint32_t>(i));
  if (by_class[0].empty() || by_class[1].empty())
    throw TrainingError("balanced batches need both classes");
  const int major = by_class[1].size() > by_class[0].size() ? 1 : 0;
  auto& major_list = by_class[major];
  auto& minor_list = by_class[1 - major];
  rng.shuffle(major_list);
  rng.shuffle(minor_list);
  const std::size_t half = std::max<std::size_t>(1, batch_size / 2);
  std::vector<std::vector<std::uint32_t>> batches;
  for (std::size_t at = 0; at < major_list.size(); at += half) {
    const std::size_t take = std::min(half, major_list.size() - at);
    std::vector<std::uint32_t> batch(major_list.begin() + at, major_list.begin() + at + take);
    for (std::size_t k = 0; k < take; ++k)
      batch.push_back(minor_list[rng.uniform_int(minor_list.size())]);
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace detail

// One epoch of batches, each half benign and half malware. Malware is drawn
// in same-family pairs whenever the family has two or more members, so the
// family-similarity term always has partners to work with. The walk over each
// class covers every sample at least once per epoch in expectation.
inline std::vector<std::vector<std::uint32_t>> half_sampler(std::span<const Sample> pool,
                                                            std::size_t batch_size,
                                                            RngStream& rng) {
  if (batch_size == 0 || batch_size % 2 != 0)
    throw SpecError("half_sampler: batch size must be even");
  std::vector<std::uint32_t> benign, malware;
  for (std::size_t i = 0; i < pool.size(); ++i)
    (pool[i].label ? malware : benign).push_back(static_cast<std::uint32_t>(i));
  if (malware.empty()) throw TrainingError("half_sampler: no malware samples");
  if (benign.empty()) throw TrainingError("half_sampler: no benign samples");

  // family groups; a missing family id forms a singleton group
  std::unordered_map<std::int64_t, std::vector<std::uint32_t>> groups;
  auto family_key = [&](std::uint32_t i) -> std::int64_t {
    return pool[i].family >= 0 ? pool[i].family : -static_cast<std::int64_t>(i) - 1;
  };
  for (std::uint32_t i : malware) groups[family_key(i)].push_back(i);

  rng.shuffle(benign);
  rng.shuffle(malware);
  const std::size_t half = batch_size / 2;
  const std::size_t largest = std::max(benign.size(), malware.size());
  const std::size_t n_batches = std::max<std::size_t>(1, (2 * largest + batch_size - 1) / batch_size);

  std::vector<std::vector<std::uint32_t>> batches;
  std::size_t bptr = 0, mptr = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<std::uint32_t> batch;
    batch.reserve(batch_size);
    for (std::size_t k = 0; k < half; ++k) batch.push_back(benign[bptr++ % benign.size()]);

    std::size_t slots = half;
    std::size_t first_malware_at = batch.size();
    while (slots >= 2) {
      const std::uint32_t i = malware[mptr++ % malware.size()];
      const auto& group = groups[family_key(i)];
      if (group.size() >= 2) {
        std::uint32_t partner = group[rng.uniform_int(group.size() - 1)];
        if (partner == i) partner = group.back();
        batch.push_back(i);
        batch.push_back(partner);
        slots -= 2;
      } else {
        batch.push_back(i);
        slots -= 1;
      }
    }
    if (slots == 1) {
      // prefer a singleton-family sample; otherwise repeat one from the batch
      bool filled = false;
      for (std::size_t t = 0; t < malware.size(); ++t) {
        const std::uint32_t i = malware[(mptr + t) % malware.size()];
        if (groups[family_key(i)].size() == 1) {
          batch.push_back(i);
          filled = true;
          break;
        }
      }
      if (!filled) {
        if (batch.size() > first_malware_at)
          batch.push_back(batch[first_malware_at]);
        else
          batch.push_back(malware[mptr++ % malware.size()]);
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

namespace detail {

struct NeuralStreams {
  RngStream batches;
  RngStream dropout;
  RngStream mining;
};

using ContrastiveTerm = std::function<ContrastiveResult(
    std::span<const Sample>, const std::vector<std::uint32_t>&, const Tensor2&,
    const std::vector<std::uint8_t>&, NeuralStreams&)>;

inline NeuralStreams derive_streams(RngStream& root) {
  return {root.split(1), root.split(2), root.split(3)};
}

inline std::vector<const FeatureVector*> gather_inputs(std::span<const Sample> pool,
                                                       const std::vector<std::uint32_t>& batch) {
  std::vector<const FeatureVector*> inputs(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) inputs[i] = &pool[batch[i]].features;
  return inputs;
}

inline std::vector<std::uint8_t> gather_labels(std::span<const Sample> pool,
                                               const std::vector<std::uint32_t>& batch) {
  std::vector<std::uint8_t> labels(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) labels[i] = pool[batch[i]].label;
  return labels;
}

inline std::vector<double> logits_column(const Tensor2& out) {
  std::vector<double> logits(out.rows);
  for (std::size_t i = 0; i < out.rows; ++i) logits[i] = out.at(i, 0);
  return logits;
}

inline std::vector<double> probs_from_logits(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

}  // namespace detail

// Plain feed-forward classifier on a sigmoid logit, Adam, mini-batches.
class MlpModel final : public Model {
 public:
  MlpModel(ModelSpec spec, Meta meta, FeedForwardNet net, Optimizer opt)
      : Model(ModelKind::MLP, std::move(spec), meta), net_(std::move(net)), opt_(std::move(opt)) {}

  static std::unique_ptr<MlpModel> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                       std::uint64_t seed) {
    check_two_classes(pool, "mlp");
    const std::size_t dim = pool.front().features.dimension;
    std::vector<std::size_t> widths{dim};
    for (std::size_t w : spec.widths("mlp_layers")) widths.push_back(w);
    widths.push_back(1);
    FeedForwardNet net(widths, spec.num("dropout"));
    RngStream root(seed);
    RngStream init = root.split(0);
    net.init(init);
    Optimizer opt(OptimizerKind::Adam, spec.num("learning_rate"));
    Meta meta{seed, 0, spec.flag("balance")};
    auto model = std::make_unique<MlpModel>(spec, meta, std::move(net), std::move(opt));
    auto streams = detail::derive_streams(root);
    model->train(pool, static_cast<std::uint32_t>(spec.integer("epochs")), streams);
    return model;
  }

  void fine_tune_inplace(std::span<const Sample> pool, const ModelSpec& spec,
                         std::uint64_t seed) override {
    const auto epochs = static_cast<std::uint32_t>(
        std::llround(spec.num("cont_learning_epochs") * spec.num("epochs")));
    meta_.epochs_run = epochs;
    meta_.seed = seed;
    if (epochs == 0) return;
    RngStream root(seed);
    auto streams = detail::derive_streams(root);
    train(pool, epochs, streams);
  }

  bool supports_fine_tune() const override { return true; }

  double predict_proba(const FeatureVector& x) const override {
    const FeatureVector* one[1] = {&x};
    auto fwd = net_.forward(std::span<const FeatureVector* const>(one, 1), RunMode::Eval);
    return sigmoid(fwd.output().at(0, 0));
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<MlpModel>(*this); }

  void serialize(std::string& out) const override {
    net_.save(out);
    opt_.save(out);
  }

  static std::unique_ptr<MlpModel> deserialize(blob::Reader& r, ModelSpec spec, Meta meta) {
    FeedForwardNet net = FeedForwardNet::load(r);
    Optimizer opt = Optimizer::load(r);
    return std::make_unique<MlpModel>(std::move(spec), meta, std::move(net), std::move(opt));
  }

  const FeedForwardNet& net() const { return net_; }
  const Optimizer& optimizer() const { return opt_; }

 private:
  void train(std::span<const Sample> pool, std::uint32_t epochs, detail::NeuralStreams& streams) {
    const auto batch_size = static_cast<std::size_t>(spec_.integer("batch_size"));
    const bool balance = spec_.flag("balance");
    for (std::uint32_t epoch = 0; epoch < epochs; ++epoch) {
      auto batches = balance ? detail::balanced_batches(pool, batch_size, streams.batches)
                             : detail::shuffled_batches(pool.size(), batch_size, streams.batches);
      for (const auto& batch : batches) {
        auto inputs = detail::gather_inputs(pool, batch);
        auto labels = detail::gather_labels(pool, batch);
        auto fwd = net_.forward(inputs, RunMode::Train, &streams.dropout);
        auto logits = detail::logits_column(fwd.output());
        auto probs = detail::probs_from_logits(logits);
        BceResult bce = bce_loss(probs, labels);
        if (!std::isfinite(bce.loss)) throw NumericError("mlp: non-finite loss");
        Tensor2 dlogits(batch.size(), 1);
        for (std::size_t i = 0; i < batch.size(); ++i) dlogits.at(i, 0) = bce.dlogits[i];
        auto grads = net_.backward(fwd, dlogits);
        optimizer_step(opt_, {&net_}, {&grads});
      }
    }
    meta_.epochs_run = epochs;
  }

  FeedForwardNet net_;
  Optimizer opt_;
};

// Encoder + classification head trained with weighted binary cross-entropy
// plus a contrastive term on the encoder output. The contrastive term is the
// only difference between the two variants: in-batch triplets for SCC,
// family-aware pair sets for HCC.
class ContrastiveModel : public Model {
 public:
  ContrastiveModel(ModelKind kind, ModelSpec spec, Meta meta, FeedForwardNet encoder,
                   FeedForwardNet head, Optimizer opt)
      : Model(kind, std::move(spec), meta),
        encoder_(std::move(encoder)),
        head_(std::move(head)),
        opt_(std::move(opt)) {}

  double predict_proba(const FeatureVector& x) const override {
    const FeatureVector* one[1] = {&x};
    auto enc = encoder_.forward(std::span<const FeatureVector* const>(one, 1), RunMode::Eval);
    auto out = head_.forward(enc.output(), RunMode::Eval);
    return sigmoid(out.output().at(0, 0));
  }

  bool has_embedding() const override { return true; }

  std::vector<double> embed(const FeatureVector& x) const override {
    const FeatureVector* one[1] = {&x};
    auto enc = encoder_.forward(std::span<const FeatureVector* const>(one, 1), RunMode::Eval);
    const Tensor2& e = enc.output();
    return {e.row(0), e.row(0) + e.cols};
  }

  Tensor2 embed_batch(std::span<const Sample> samples) const {
    std::vector<const FeatureVector*> inputs(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) inputs[i] = &samples[i].features;
    auto enc = encoder_.forward(inputs, RunMode::Eval);
    return enc.output();
  }

  bool supports_fine_tune() const override { return true; }

  void serialize(std::string& out) const override {
    encoder_.save(out);
    head_.save(out);
    opt_.save(out);
  }

  const FeedForwardNet& encoder() const { return encoder_; }
  const Optimizer& optimizer() const { return opt_; }

 protected:
  // One optimization step per batch; the contrastive gradient is supplied by
  // the concrete variant.
  void train_epochs(std::span<const Sample> pool, std::uint32_t epochs,
                    detail::NeuralStreams& streams, const StepSchedule* schedule,
                    double base_lr, const detail::ContrastiveTerm& contrastive) {
    const auto batch_size = static_cast<std::size_t>(spec_.integer("batch_size"));
    const double lambda = spec_.num("xent_lambda");
    for (std::uint32_t epoch = 0; epoch < epochs; ++epoch) {
      if (schedule) opt_.set_lr(schedule->lr_at(static_cast<int>(epoch), base_lr));
      auto batches = make_batches(pool, batch_size, streams);
      for (const auto& batch : batches) {
        auto inputs = detail::gather_inputs(pool, batch);
        auto labels = detail::gather_labels(pool, batch);
        auto enc_fwd = encoder_.forward(inputs, RunMode::Train, &streams.dropout);
        const Tensor2& embedding = enc_fwd.output();
        auto head_fwd = head_.forward(embedding, RunMode::Train, &streams.dropout);
        auto logits = detail::logits_column(head_fwd.output());
        auto probs = detail::probs_from_logits(logits);
        BceResult bce = bce_loss(probs, labels);

        ContrastiveResult con = contrastive(pool, batch, embedding, labels, streams);
        const double total = combined_loss(bce.loss, con.loss, lambda);
        if (!std::isfinite(total)) throw NumericError("contrastive model: non-finite loss");

        Tensor2 dlogits(batch.size(), 1);
        for (std::size_t i = 0; i < batch.size(); ++i)
          dlogits.at(i, 0) = lambda * bce.dlogits[i];
        auto head_grads = head_.backward(head_fwd, dlogits);
        Tensor2 dembed = head_grads.input;
        for (std::size_t i = 0; i < dembed.v.size(); ++i) dembed.v[i] += con.dembed.v[i];
        auto enc_grads = encoder_.backward(enc_fwd, dembed);
        optimizer_step(opt_, {&encoder_, &head_}, {&enc_grads, &head_grads});
      }
    }
    meta_.epochs_run = epochs;
  }

  virtual std::vector<std::vector<std::uint32_t>> make_batches(std::span<const Sample> pool,
                                                               std::size_t batch_size,
                                                               detail::NeuralStreams& streams) = 0;

  static std::pair<FeedForwardNet, FeedForwardNet> build_nets(const ModelSpec& spec,
                                                              std::size_t dim) {
    std::vector<std::size_t> enc_widths{dim};
    for (std::size_t w : spec.widths("encoder_layers")) enc_widths.push_back(w);
    std::vector<std::size_t> head_widths{enc_widths.back()};
    for (std::size_t w : spec.widths("mlp_layers")) head_widths.push_back(w);
    head_widths.push_back(1);
    const double dropout = spec.num("dropout");
    return {FeedForwardNet(enc_widths, dropout), FeedForwardNet(head_widths, dropout)};
  }

  FeedForwardNet encoder_;
  FeedForwardNet head_;
  Optimizer opt_;
};

// Binary-label contrastive classifier: combined loss lambda*bce + triplet
// margin loss with in-batch uniform positive/negative mining.
class SccModel final : public ContrastiveModel {
 public:
  using ContrastiveModel::ContrastiveModel;

  static std::unique_ptr<SccModel> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                       std::uint64_t seed) {
    check_two_classes(pool, "scc");
    const std::size_t dim = pool.front().features.dimension;
    auto [encoder, head] = build_nets(spec, dim);
    RngStream root(seed);
    RngStream init = root.split(0);
    encoder.init(init);
    head.init(init);
    Optimizer opt(OptimizerKind::Adam, spec.num("learning_rate"));
    Meta meta{seed, 0, spec.flag("balance")};
    auto model = std::make_unique<SccModel>(ModelKind::SCC, spec, meta, std::move(encoder),
                                            std::move(head), std::move(opt));
    auto streams = detail::derive_streams(root);
    model->train_epochs(pool, static_cast<std::uint32_t>(spec.integer("epochs")), streams,
                        nullptr, 0.0, model->triplet_term());
    return model;
  }

  void fine_tune_inplace(std::span<const Sample> pool, const ModelSpec& spec,
                         std::uint64_t seed) override {
    const auto epochs = static_cast<std::uint32_t>(
        std::llround(spec.num("cont_learning_epochs") * spec.num("epochs")));
    meta_.epochs_run = epochs;
    meta_.seed = seed;
    if (epochs == 0) return;
    RngStream root(seed);
    auto streams = detail::derive_streams(root);
    train_epochs(pool, epochs, streams, nullptr, 0.0, triplet_term());
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<SccModel>(*this); }

  static std::unique_ptr<SccModel> deserialize(blob::Reader& r, ModelSpec spec, Meta meta) {
    FeedForwardNet encoder = FeedForwardNet::load(r);
    FeedForwardNet head = FeedForwardNet::load(r);
    Optimizer opt = Optimizer::load(r);
    return std::make_unique<SccModel>(ModelKind::SCC, std::move(spec), meta, std::move(encoder),
                                      std::move(head), std::move(opt));
  }

 private:
  detail::ContrastiveTerm triplet_term() {
    const double margin = spec_.num("margin");
    return [margin](std::span<const Sample>, const std::vector<std::uint32_t>&,
                    const Tensor2& embedding, const std::vector<std::uint8_t>& labels,
                    detail::NeuralStreams& streams) {
      TripletBatch triplets = mine_triplets(labels, streams.mining);
      return triplet_loss(embedding, triplets, margin);
    };
  }

  std::vector<std::vector<std::uint32_t>> make_batches(std::span<const Sample> pool,
                                                       std::size_t batch_size,
                                                       detail::NeuralStreams& streams) override {
    return spec_.flag("balance")
               ? detail::balanced_batches(pool, batch_size, streams.batches)
               : detail::shuffled_batches(pool.size(), batch_size, streams.batches);
  }
};

// Family-aware contrastive classifier: combined loss lambda*bce +
// hierarchical contrastive loss over half-sampler batches. The only kind that
// consumes malware family labels. SGD fits follow the step schedule; monthly
// retraining always uses a fresh Adam at cont_learning_lr.
class HccModel final : public ContrastiveModel {
 public:
  using ContrastiveModel::ContrastiveModel;

  static std::unique_ptr<HccModel> fit(const ModelSpec& spec, std::span<const Sample> pool,
                                       std::uint64_t seed) {
    check_two_classes(pool, "hcc");
    bool any_family = false;
    for (const Sample& s : pool)
      if (s.label == 1 && s.family >= 0) any_family = true;
    if (!any_family) throw TrainingError("hcc requires malware family labels");

    const std::size_t dim = pool.front().features.dimension;
    auto [encoder, head] = build_nets(spec, dim);
    RngStream root(seed);
    RngStream init = root.split(0);
    encoder.init(init);
    head.init(init);
    const bool sgd = spec.str("optimizer") == "sgd";
    const double base_lr = spec.num("learning_rate");
    Optimizer opt(sgd ? OptimizerKind::Sgd : OptimizerKind::Adam, base_lr);
    Meta meta{seed, 0, true};
    auto model = std::make_unique<HccModel>(ModelKind::HCC, spec, meta, std::move(encoder),
                                            std::move(head), std::move(opt));
    auto streams = detail::derive_streams(root);
    StepSchedule schedule{static_cast<int>(spec.integer("scheduler_step")),
                          spec.num("scheduler_gamma")};
    model->train_epochs(pool, static_cast<std::uint32_t>(spec.integer("epochs")), streams,
                        sgd ? &schedule : nullptr, base_lr, model->hcc_term());
    return model;
  }

  void fine_tune_inplace(std::span<const Sample> pool, const ModelSpec& spec,
                         std::uint64_t seed) override {
    const auto epochs = static_cast<std::uint32_t>(spec.integer("cont_learning_epochs"));
    meta_.epochs_run = epochs;
    meta_.seed = seed;
    if (epochs == 0) return;
    // learning rate resets every retraining; optimizer switches to Adam
    opt_ = Optimizer(OptimizerKind::Adam, spec.num("cont_learning_lr"));
    RngStream root(seed);
    auto streams = detail::derive_streams(root);
    train_epochs(pool, epochs, streams, nullptr, 0.0, hcc_term());
  }

  std::unique_ptr<Model> clone() const override { return std::make_unique<HccModel>(*this); }

  static std::unique_ptr<HccModel> deserialize(blob::Reader& r, ModelSpec spec, Meta meta) {
    FeedForwardNet encoder = FeedForwardNet::load(r);
    FeedForwardNet head = FeedForwardNet::load(r);
    Optimizer opt = Optimizer::load(r);
    return std::make_unique<HccModel>(ModelKind::HCC, std::move(spec), meta, std::move(encoder),
                                      std::move(head), std::move(opt));
  }

 private:
  detail::ContrastiveTerm hcc_term() {
    const double margin = spec_.num("margin");
    return [margin](std::span<const Sample> pool, const std::vector<std::uint32_t>& batch,
                    const Tensor2& embedding, const std::vector<std::uint8_t>& labels,
                    detail::NeuralStreams&) {
      std::vector<std::int32_t> families(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) families[i] = pool[batch[i]].family;
      PairSets ps = build_pair_sets(labels, families);
      return hcc_loss(embedding, ps, margin);
    };
  }

  std::vector<std::vector<std::uint32_t>> make_batches(std::span<const Sample> pool,
                                                       std::size_t batch_size,
                                                       detail::NeuralStreams& streams) override {
    return half_sampler(pool, batch_size, streams.batches);
  }
};

}  // namespace driftbench
