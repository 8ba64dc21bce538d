#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "driftbench/dataset.hpp"
#include "driftbench/dedup.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/losses.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/models.hpp"

namespace driftbench {

enum class Selector { Uncertainty, PseudoLoss };
inline const char* selector_name(Selector s) {
  return s == Selector::Uncertainty ? "uncertainty" : "pseudo_loss";
}

struct ALConfig {
  std::size_t budget = 50;
  Selector selector = Selector::Uncertainty;
  bool merged_start = false;   // initial fit on train + fully labeled validation
  std::size_t pseudo_k = 10;   // neighbors for the pseudo-loss selector
  // replication aid: identical vectors already labeled earlier are annotated
  // by lookup without spending budget
  bool reuse_duplicate_labels = false;
};

// The budget samples with the largest uncertainty score, ties broken by the
// lower sample index.
inline std::vector<std::uint32_t> select_uncertain(const Model& model,
                                                   std::span<const Sample> month_samples,
                                                   std::size_t budget) {
  std::vector<double> score(month_samples.size());
  parallel_for(
      month_samples.size(),
      [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) score[i] = model.uncertainty(month_samples[i].features);
      },
      64);
  std::vector<std::uint32_t> order(month_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  order.resize(std::min(budget, order.size()));
  return order;
}

// Pseudo-loss ranking for the family-aware contrastive model: the predicted
// label stands in as ground truth; each candidate is scored by its
// hierarchical-contrastive anchor loss against its k nearest labeled-pool
// embeddings plus the lambda-weighted cross-entropy under the pseudo label.
inline std::vector<std::uint32_t> select_pseudo_loss(const Model& model,
                                                     std::span<const Sample> month_samples,
                                                     std::span<const Sample> pool,
                                                     std::size_t budget, std::size_t k,
                                                     double lambda, double margin) {
  if (!model.has_embedding())
    throw UsageError("pseudo-loss selection needs an embedding model");
  if (pool.empty()) throw TrainingError("pseudo-loss selection: empty labeled pool");
  if (k == 0) throw SpecError("pseudo-loss selection: k must be positive");
  const auto* contrastive = dynamic_cast<const ContrastiveModel*>(&model);
  if (contrastive == nullptr)
    throw UsageError("pseudo-loss selection needs an embedding model");

  const Tensor2 pool_embed = contrastive->embed_batch(pool);
  const std::size_t dim = pool_embed.cols;
  std::vector<double> total_loss(month_samples.size());

  parallel_for(
      month_samples.size(),
      [&](std::size_t b, std::size_t e) {
        std::vector<std::pair<double, std::uint32_t>> nearest;
        for (std::size_t c = b; c < e; ++c) {
          const double p = model.predict_proba(month_samples[c].features);
          const int pseudo = p >= kDecisionThreshold ? 1 : 0;
          const std::vector<double> anchor = model.embed(month_samples[c].features);

          nearest.clear();
          for (std::size_t j = 0; j < pool.size(); ++j) {
            double d2 = 0;
            const double* row = pool_embed.row(j);
            for (std::size_t t = 0; t < dim; ++t) {
              const double v = anchor[t] - row[t];
              d2 += v * v;
            }
            nearest.emplace_back(d2, static_cast<std::uint32_t>(j));
          }
          const std::size_t take = std::min(k, nearest.size());
          std::partial_sort(nearest.begin(), nearest.begin() + take, nearest.end());

          // anchor terms of the hierarchical loss; the anchor carries no
          // family id, so same-family partners cannot arise
          double same_sum = 0, opp_sum = 0;
          std::size_t same_n = 0, opp_n = 0;
          for (std::size_t t = 0; t < take; ++t) {
            const double d = std::sqrt(nearest[t].first);
            const Sample& neighbor = pool[nearest[t].second];
            if ((neighbor.label != 0 ? 1 : 0) == pseudo) {
              same_sum += std::max(0.0, d - margin);
              ++same_n;
            } else {
              opp_sum += std::max(0.0, 2.0 * margin - d);
              ++opp_n;
            }
          }
          double loss = 0;
          if (same_n > 0) loss += same_sum / static_cast<double>(same_n);
          if (opp_n > 0) loss += opp_sum / static_cast<double>(opp_n);

          const double clamped = std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
          const double bce =
              pseudo == 1 ? -std::log(clamped) : -std::log(1.0 - clamped);
          total_loss[c] = loss + lambda * bce;
        }
      },
      16);

  std::vector<std::uint32_t> order(month_samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (total_loss[a] != total_loss[b]) return total_loss[a] > total_loss[b];
    return a < b;
  });
  order.resize(std::min(budget, order.size()));
  return order;
}

struct ALEvent {
  std::string month;
  std::string phase;  // evaluated | selected | retrained | warning
  std::string detail;
};

struct ALState {
  std::unique_ptr<Model> model;
  std::vector<Sample> pool;              // train set plus revealed samples
  std::vector<std::int32_t> reveal_month;  // axis index; -1 for the initial pool
  std::vector<ALEvent> log;

  void write_log_csv(std::ostream& os) const {
    os << "month,phase,detail\n";
    for (const auto& e : log)
      os << csv_escape(e.month) << ',' << e.phase << ',' << csv_escape(e.detail) << '\n';
  }
};

struct ActiveRunResult {
  ALState state;
  RunReport report;
};

// Monthly evaluate -> select -> reveal -> retrain loop. Evaluation of month m
// always happens before any label of month m enters the pool; the pool only
// ever grows. Tree and linear kinds refit from scratch on the grown pool,
// neural kinds fine-tune the previous weights. Skipping the retrain when no
// new label arrived keeps budget-0 runs byte-equal to a single offline fit.
inline ActiveRunResult run_active_learning(const SplitDataset& sd, const ModelSpec& spec,
                                           const ALConfig& config, std::uint64_t seed,
                                           bool retrain_after_last = true,
                                           MonthRange eval_override = MonthRange{0, 0}) {
  if (config.selector == Selector::PseudoLoss && spec.kind != ModelKind::HCC)
    throw SpecError("pseudo-loss selection is defined for the hcc model only");

  ActiveRunResult result;
  ALState& state = result.state;

  // initial labeled pool
  auto [train_begin, train_end] = sd.span_of(SplitId::Train);
  const std::size_t init_end =
      config.merged_start ? sd.span_of(SplitId::Validation).second : train_end;
  state.pool.assign(sd.dataset().samples().begin() + train_begin,
                    sd.dataset().samples().begin() + init_end);
  state.reveal_month.assign(state.pool.size(), -1);

  MonthRange eval_months;
  if (eval_override.first != eval_override.last) {
    eval_months = eval_override;
  } else if (config.merged_start) {
    eval_months = sd.months_of(SplitId::Test);
  } else {
    eval_months = MonthRange{sd.months_of(SplitId::Validation).first,
                             sd.months_of(SplitId::Test).last};
  }

  // upper bound on pool growth; keeps sample storage stable for the
  // duplicate-lookup index
  std::size_t capacity = state.pool.size();
  for (std::uint16_t m = eval_months.first; m < eval_months.last; ++m)
    capacity += sd.dataset().month_samples(m).size();
  state.pool.reserve(capacity);

  if (!sd.annotation_mode() || *sd.annotation_mode() != DedupMode::Active) {
    bool dupes = false;
    for (std::uint16_t m = eval_months.first; m < eval_months.last && !dupes; ++m) {
      const auto ann = find_duplicates(sd.dataset().month_samples(m));
      for (std::int64_t v : ann.intra)
        if (v >= 0) {
          dupes = true;
          break;
        }
    }
    if (dupes)
      state.log.push_back({"", "warning",
                           "input not deduplicated in active mode; duplicate vectors present"});
  }

  RngStream run_rng(seed);
  state.model = fit(spec, state.pool, seed);
  state.log.push_back({"", "retrained",
                       std::string("initial fit on ") + std::to_string(state.pool.size()) +
                           " samples" + (config.merged_start ? " (merged start)" : "")});

  detail::VectorIndex labeled_vectors;
  if (config.reuse_duplicate_labels)
    for (std::size_t i = 0; i < state.pool.size(); ++i)
      labeled_vectors.find_or_insert(state.pool[i].features, static_cast<std::int64_t>(i));

  result.report.model = kind_name(spec.kind);
  result.report.seed = seed;
  result.report.setting = config.merged_start ? "active-merged" : "active-holdout";

  for (std::uint16_t m = eval_months.first; m < eval_months.last; ++m) {
    const std::string& month_label = sd.dataset().months()[m];
    auto month_samples = sd.dataset().month_samples(m);
    try {
      // (1) evaluate the current model on this month
      auto probs = state.model->predict_proba_batch(month_samples);
      std::vector<std::uint8_t> labels(month_samples.size());
      for (std::size_t i = 0; i < month_samples.size(); ++i) labels[i] = month_samples[i].label;
      result.report.months.push_back(month_metrics(probs, labels, month_label));
      state.log.push_back(
          {month_label, "evaluated",
           "f1=" + fmt_double(result.report.months.back().f1) + " on " +
               std::to_string(month_samples.size()) + " samples"});

      // (2) select within budget and reveal labels
      std::size_t free_reveals = 0;
      std::vector<bool> known(month_samples.size(), false);
      if (config.reuse_duplicate_labels) {
        for (std::size_t i = 0; i < month_samples.size(); ++i)
          if (labeled_vectors.find(month_samples[i].features) >= 0) {
            known[i] = true;
            state.pool.push_back(month_samples[i]);
            state.reveal_month.push_back(m);
            ++free_reveals;
          }
      }
      // budget goes to vectors not already labeled; free reveals above cover
      // the known duplicates
      const std::size_t rank_depth =
          config.reuse_duplicate_labels ? month_samples.size() : config.budget;
      std::vector<std::uint32_t> ranked;
      if (config.selector == Selector::Uncertainty)
        ranked = select_uncertain(*state.model, month_samples, rank_depth);
      else
        ranked = select_pseudo_loss(*state.model, month_samples, state.pool, rank_depth,
                                    config.pseudo_k, spec.num("xent_lambda"),
                                    spec.num("margin"));
      std::vector<std::uint32_t> selected;
      for (std::uint32_t idx : ranked) {
        if (selected.size() >= config.budget) break;
        if (known[idx]) continue;
        selected.push_back(idx);
      }
      for (std::uint32_t idx : selected) {
        state.pool.push_back(month_samples[idx]);
        state.reveal_month.push_back(m);
        if (config.reuse_duplicate_labels)
          labeled_vectors.find_or_insert(state.pool.back().features,
                                         static_cast<std::int64_t>(state.pool.size() - 1));
      }
      state.log.push_back({month_label, "selected",
                           std::to_string(selected.size()) + " annotated (budget " +
                               std::to_string(config.budget) + ")" +
                               (free_reveals > 0 ? ", " + std::to_string(free_reveals) +
                                                       " duplicate reveals free"
                                                 : "")});

      // (3) retrain on the grown pool
      const bool last_month = m + 1 == eval_months.last;
      if (last_month && !retrain_after_last) {
        state.log.push_back({month_label, "retrained", "skipped (last month)"});
      } else if (selected.empty() && free_reveals == 0) {
        state.log.push_back({month_label, "retrained", "skipped (no new labels)"});
      } else {
        const std::uint64_t month_seed = run_rng.split(m).next_u64();
        if (state.model->supports_fine_tune())
          state.model = fine_tune(*state.model, state.pool, spec, month_seed);
        else
          state.model = fit(spec, state.pool, month_seed);
        state.log.push_back({month_label, "retrained",
                             "pool " + std::to_string(state.pool.size()) + " samples"});
      }
    } catch (const Error& e) {
      throw Error("active learning failed at month " + month_label + ": " + e.what());
    }
  }

  result.report.finalize();
  return result;
}

}  // namespace driftbench
