#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "driftbench/blob.hpp"
#include "driftbench/dataset.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"
#include "driftbench/tensor.hpp"

namespace driftbench {

enum class RunMode { Train, Eval };

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// lr = base * gamma^floor(epoch / step)
struct StepSchedule {
  int step = 10;
  double gamma = 1.0;

  double lr_at(int epoch, double base_lr) const {
    if (step <= 0) throw SpecError("StepSchedule: step must be positive");
    if (gamma <= 0 || gamma > 1) throw SpecError("StepSchedule: gamma must be in (0, 1]");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
  }
};

struct DenseLayer {
  Tensor2 w;               // in x out
  std::vector<double> b;   // out

  bool operator==(const DenseLayer&) const = default;
};

// Fully connected net: rectifier and inverted dropout on every layer except
// the last, which stays linear (logit or embedding output). The first layer
// has a sparse fast path summing weight rows at the active feature indices.
class FeedForwardNet {
 public:
  FeedForwardNet() = default;

  FeedForwardNet(std::vector<std::size_t> widths, double dropout)
      : widths_(std::move(widths)), dropout_(dropout) {
    if (widths_.size() < 2) throw SpecError("FeedForwardNet: need at least input and output");
    if (dropout_ < 0 || dropout_ >= 1) throw SpecError("FeedForwardNet: dropout out of range");
    layers_.resize(widths_.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].w = Tensor2(widths_[l], widths_[l + 1]);
      layers_[l].b.assign(widths_[l + 1], 0.0);
    }
  }

  // uniform(-sqrt(1/fan_in), +sqrt(1/fan_in))
  void init(RngStream& rng) {
    for (auto& layer : layers_) {
      const double bound = std::sqrt(1.0 / static_cast<double>(layer.w.rows));
      for (double& x : layer.w.v) x = rng.uniform_real(-bound, bound);
      for (double& x : layer.b) x = rng.uniform_real(-bound, bound);
    }
  }

  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }
  double dropout() const { return dropout_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  bool operator==(const FeedForwardNet&) const = default;

  // Activation cache carried from forward to backward.
  struct Forward {
    bool valid = false;
    RunMode mode = RunMode::Eval;
    bool sparse_input = false;
    std::vector<const FeatureVector*> sparse_rows;
    Tensor2 dense_input;
    std::vector<Tensor2> acts;    // post-activation output of each layer
    std::vector<Tensor2> masks;   // dropout scale masks for hidden layers

    const Tensor2& output() const { return acts.back(); }
  };

  Forward forward(std::span<const FeatureVector* const> inputs, RunMode mode,
                  RngStream* rng = nullptr) const {
    Forward f;
    f.sparse_input = true;
    f.sparse_rows.assign(inputs.begin(), inputs.end());
    for (const FeatureVector* fv : f.sparse_rows)
      if (fv->dimension != widths_.front())
        throw SpecError("forward: input dimension mismatch");
    Tensor2 first(f.sparse_rows.size(), widths_[1]);
    const DenseLayer& l0 = layers_[0];
    parallel_for(
        f.sparse_rows.size(),
        [&](std::size_t i0, std::size_t i1) {
          for (std::size_t i = i0; i < i1; ++i) {
            double* out = first.row(i);
            for (std::size_t j = 0; j < l0.b.size(); ++j) out[j] = l0.b[j];
            for (std::uint32_t idx : f.sparse_rows[i]->indices) {
              const double* w_row = l0.w.row(idx);
              for (std::size_t j = 0; j < l0.w.cols; ++j) out[j] += w_row[j];
            }
          }
        },
        16);
    run_tail(f, std::move(first), mode, rng);
    return f;
  }

  Forward forward(const Tensor2& input, RunMode mode, RngStream* rng = nullptr) const {
    if (input.cols != widths_.front()) throw SpecError("forward: input dimension mismatch");
    Forward f;
    f.sparse_input = false;
    f.dense_input = input;
    Tensor2 first;
    matmul(input, layers_[0].w, first);
    add_bias(first, layers_[0].b);
    run_tail(f, std::move(first), mode, rng);
    return f;
  }

  struct Gradients {
    std::vector<DenseLayer> layers;
    Tensor2 input;  // d loss / d dense input; empty for sparse input
  };

  // dlogits: batch x output_width. Requires the cache of a matching forward.
  Gradients backward(const Forward& f, const Tensor2& dlogits) const {
    if (!f.valid) throw UsageError("backward called without a recorded forward pass");
    const std::size_t batch = f.acts.back().rows;
    if (dlogits.rows != batch || dlogits.cols != widths_.back())
      throw SpecError("backward: gradient shape mismatch");

    Gradients g;
    g.layers.resize(layers_.size());
    Tensor2 delta = dlogits;
    for (std::size_t l = layers_.size(); l-- > 0;) {
      // grad wrt this layer's pre-activation is `delta` already
      // (activation/dropout corrections are applied when crossing a layer).
      if (l > 0) {
        matmul_tn(f.acts[l - 1], delta, g.layers[l].w);
      } else if (f.sparse_input) {
        g.layers[0].w = Tensor2(widths_[0], widths_[1]);
        for (std::size_t i = 0; i < f.sparse_rows.size(); ++i) {
          const double* d_row = delta.row(i);
          for (std::uint32_t idx : f.sparse_rows[i]->indices) {
            double* w_row = g.layers[0].w.row(idx);
            for (std::size_t j = 0; j < delta.cols; ++j) w_row[j] += d_row[j];
          }
        }
      } else {
        matmul_tn(f.dense_input, delta, g.layers[0].w);
      }
      g.layers[l].b.assign(widths_[l + 1], 0.0);
      for (std::size_t i = 0; i < batch; ++i) {
        const double* d_row = delta.row(i);
        for (std::size_t j = 0; j < delta.cols; ++j) g.layers[l].b[j] += d_row[j];
      }

      if (l == 0) {
        if (!f.sparse_input) {
          matmul_nt(delta, layers_[0].w, g.input);
        }
        break;
      }
      Tensor2 prev_delta;
      matmul_nt(delta, layers_[l].w, prev_delta);
      // cross the rectifier+dropout of layer l-1
      const Tensor2& act = f.acts[l - 1];
      const Tensor2* mask = f.masks[l - 1].v.empty() ? nullptr : &f.masks[l - 1];
      for (std::size_t i = 0; i < prev_delta.v.size(); ++i) {
        if (act.v[i] == 0.0)
          prev_delta.v[i] = 0.0;
        else if (mask)
          prev_delta.v[i] *= mask->v[i];
      }
      delta = std::move(prev_delta);
    }
    return g;
  }

  void save(std::string& out) const {
    blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(widths_.size()));
    for (std::size_t w : widths_) blob::put_le<std::uint64_t>(out, w);
    blob::put_f64(out, dropout_);
    for (const auto& layer : layers_) {
      blob::put_f64_vec(out, layer.w.v);
      blob::put_f64_vec(out, layer.b);
    }
  }

  static FeedForwardNet load(blob::Reader& r) {
    const auto n = r.get_le<std::uint32_t>();
    std::vector<std::size_t> widths(n);
    for (auto& w : widths) w = static_cast<std::size_t>(r.get_le<std::uint64_t>());
    const double dropout = r.get_f64();
    FeedForwardNet net(widths, dropout);
    for (auto& layer : net.layers_) {
      auto w = r.get_f64_vec();
      if (w.size() != layer.w.v.size()) throw CorruptError(r.what() + ": weight shape mismatch");
      layer.w.v = std::move(w);
      auto b = r.get_f64_vec();
      if (b.size() != layer.b.size()) throw CorruptError(r.what() + ": bias shape mismatch");
      layer.b = std::move(b);
    }
    return net;
  }

 private:
  static void add_bias(Tensor2& t, const std::vector<double>& b) {
    for (std::size_t i = 0; i < t.rows; ++i) {
      double* row = t.row(i);
      for (std::size_t j = 0; j < t.cols; ++j) row[j] += b[j];
    }
  }

  void run_tail(Forward& f, Tensor2 first, RunMode mode, RngStream* rng) const {
    f.mode = mode;
    f.acts.reserve(layers_.size());
    f.masks.assign(layers_.size() > 0 ? layers_.size() - 1 : 0, Tensor2{});
    const bool need_dropout = mode == RunMode::Train && dropout_ > 0.0;
    if (need_dropout && rng == nullptr)
      throw SpecError("forward: train mode with dropout requires an rng stream");

    Tensor2 cur = std::move(first);
    for (std::size_t l = 0;; ++l) {
      const bool is_output = l + 1 == layers_.size();
      if (!is_output) {
        for (double& x : cur.v) x = x > 0.0 ? x : 0.0;
        if (need_dropout) {
          Tensor2 mask(cur.rows, cur.cols);
          const double keep = 1.0 - dropout_;
          for (std::size_t i = 0; i < mask.v.size(); ++i)
            mask.v[i] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
          for (std::size_t i = 0; i < cur.v.size(); ++i) cur.v[i] *= mask.v[i];
          f.masks[l] = std::move(mask);
        }
      }
      f.acts.push_back(cur);
      if (is_output) break;
      Tensor2 next;
      matmul(cur, layers_[l + 1].w, next);
      add_bias(next, layers_[l + 1].b);
      cur = std::move(next);
    }
    if (!all_finite(f.acts.back())) throw NumericError("forward produced non-finite output");
    f.valid = true;
  }

  std::vector<std::size_t> widths_;
  std::vector<DenseLayer> layers_;
  double dropout_ = 0.0;
};

enum class OptimizerKind { Adam, Sgd };

// Owns per-parameter moment buffers; parameters are registered by the nets in
// a fixed order, so updates are reproducible.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  OptimizerKind kind() const { return kind_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return step_; }

  struct View {
    double* p;
    const double* g;
    std::size_t n;
  };

  void step(const std::vector<View>& params) {
    ++step_;
    if (kind_ == OptimizerKind::Sgd) {
      for (const View& v : params)
        for (std::size_t i = 0; i < v.n; ++i) v.p[i] -= lr_ * v.g[i];
      return;
    }
    if (m_.size() < params.size()) {
      m_.resize(params.size());
      v_.resize(params.size());
    }
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      const View& view = params[k];
      if (m_[k].size() != view.n) {
        m_[k].assign(view.n, 0.0);
        v_[k].assign(view.n, 0.0);
      }
      for (std::size_t i = 0; i < view.n; ++i) {
        const double g = view.g[i];
        m_[k][i] = kBeta1 * m_[k][i] + (1.0 - kBeta1) * g;
        v_[k][i] = kBeta2 * v_[k][i] + (1.0 - kBeta2) * g * g;
        const double mhat = m_[k][i] / bc1;
        const double vhat = v_[k][i] / bc2;
        view.p[i] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

  void save(std::string& out) const {
    blob::put_le<std::uint8_t>(out, kind_ == OptimizerKind::Adam ? 0 : 1);
    blob::put_f64(out, lr_);
    blob::put_le<std::int64_t>(out, step_);
    blob::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m_.size()));
    for (std::size_t k = 0; k < m_.size(); ++k) {
      blob::put_f64_vec(out, m_[k]);
      blob::put_f64_vec(out, v_[k]);
    }
  }

  static Optimizer load(blob::Reader& r) {
    Optimizer opt;
    opt.kind_ = r.get_le<std::uint8_t>() == 0 ? OptimizerKind::Adam : OptimizerKind::Sgd;
    opt.lr_ = r.get_f64();
    opt.step_ = r.get_le<std::int64_t>();
    const auto n = r.get_le<std::uint32_t>();
    opt.m_.resize(n);
    opt.v_.resize(n);
    for (std::uint32_t k = 0; k < n; ++k) {
      opt.m_[k] = r.get_f64_vec();
      opt.v_[k] = r.get_f64_vec();
    }
    return opt;
  }

  bool operator==(const Optimizer&) const = default;

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  OptimizerKind kind_ = OptimizerKind::Adam;
  double lr_ = 1e-3;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Convenience: one optimizer step over whole nets.
inline void optimizer_step(Optimizer& opt, std::vector<FeedForwardNet*> nets,
                           const std::vector<const FeedForwardNet::Gradients*>& grads) {
  std::vector<Optimizer::View> views;
  for (std::size_t n = 0; n < nets.size(); ++n) {
    auto& layers = nets[n]->layers();
    const auto& g = grads[n]->layers;
    if (g.size() != layers.size()) throw SpecError("optimizer_step: gradient count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (g[l].w.v.size() != layers[l].w.v.size() || g[l].b.size() != layers[l].b.size())
        throw SpecError("optimizer_step: gradient shape mismatch");
      views.push_back({layers[l].w.v.data(), g[l].w.v.data(), layers[l].w.v.size()});
      views.push_back({layers[l].b.data(), g[l].b.data(), layers[l].b.size()});
    }
  }
  opt.step(views);
}

}  // namespace driftbench
