#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "driftbench/active.hpp"
#include "driftbench/errors.hpp"
#include "driftbench/metrics.hpp"
#include "driftbench/model.hpp"
#include "driftbench/search_space.hpp"
#include "driftbench/util.hpp"

namespace driftbench {

// Independent draw per parameter from its distribution.
inline ModelSpec sample_params(const SearchSpace& space, RngStream& rng) {
  ModelSpec spec;
  spec.kind = space.kind;
  spec.params = json::object();
  for (const auto& [name, dist] : space.params) spec.params[name] = dist.sample(rng);
  return spec;
}

struct Trial {
  std::size_t index = 0;
  ModelSpec spec;
  double objective = -std::numeric_limits<double>::infinity();
  double best_so_far = -std::numeric_limits<double>::infinity();
  std::string status = "ok";  // ok | failed
  std::string error;
};

struct SearchResult {
  ModelSpec best;
  std::size_t best_index = 0;
  double best_objective = -std::numeric_limits<double>::infinity();
  std::vector<Trial> trials;

  void write_csv(std::ostream& os) const {
    os << "trial,objective,best_so_far,params_json\n";
    for (const auto& t : trials)
      os << t.index << ',' << fmt_double(t.objective) << ',' << fmt_double(t.best_so_far) << ','
         << csv_escape(t.spec.params.dump()) << '\n';
  }
};

// Random search core: i.i.d. trials from per-trial derived streams, argmax
// objective with ties resolved to the lowest trial index. A failed trial is
// logged and skipped; all trials failing is an error.
inline SearchResult random_search(const SearchSpace& space, std::size_t budget,
                                  std::uint64_t seed,
                                  const std::function<double(const ModelSpec&)>& objective) {
  if (budget < 1) throw SpecError("random search: budget must be at least 1");
  RngStream root(seed);
  SearchResult result;
  result.trials.resize(budget);

  parallel_for(budget, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      Trial& t = result.trials[i];
      t.index = i;
      RngStream trial_rng = root.split(i);
      t.spec = sample_params(space, trial_rng);
      try {
        t.objective = objective(t.spec);
      } catch (const std::exception& err) {
        t.status = "failed";
        t.error = err.what();
        t.objective = -std::numeric_limits<double>::infinity();
      }
    }
  });

  bool any_ok = false;
  double best = -std::numeric_limits<double>::infinity();
  for (auto& t : result.trials) {
    if (t.status == "ok") {
      any_ok = true;
      if (t.objective > best) {
        best = t.objective;
        result.best = t.spec;
        result.best_index = t.index;
        result.best_objective = t.objective;
      }
    }
    t.best_so_far = best;
  }
  if (!any_ok) throw SearchError("random search: all trials failed");
  return result;
}

// Offline tuning: fit on train, objective = mean F1 over the validation
// months. Neural trials share one fixed fit seed; seed variance is handled
// later at test time.
inline SearchResult run_search_offline(const SplitDataset& sd, ModelKind kind,
                                       std::size_t budget, std::uint64_t seed) {
  const MonthRange val = sd.months_of(SplitId::Validation);
  if (val.empty()) throw SpecError("offline search needs validation months");
  auto train = sd.samples_of(SplitId::Train);
  const std::uint64_t fit_seed = seed;
  auto objective = [&](const ModelSpec& spec) {
    auto model = fit(spec, train, fit_seed);
    RunReport report = evaluate_months(*model, sd, val);
    return report.avg_f1;
  };
  return random_search(search_space(kind), budget, seed, objective);
}

// Active tuning: the validation months run through the monthly loop (evaluate
// the month, annotate within budget, retrain; no retraining after the last
// month). Objective = mean F1 over the validation months.
inline SearchResult run_search_active(const SplitDataset& sd, ModelKind kind,
                                      std::size_t budget, std::size_t al_budget,
                                      std::uint64_t seed,
                                      const ALConfig* config_template = nullptr) {
  const MonthRange val = sd.months_of(SplitId::Validation);
  if (val.empty()) throw SpecError("active search needs validation months");
  const std::uint64_t fit_seed = seed;
  auto objective = [&, al_budget](const ModelSpec& spec) {
    ALConfig config;
    if (config_template) config = *config_template;
    config.budget = al_budget;
    config.merged_start = false;
    if (!config_template)
      config.selector =
          kind == ModelKind::HCC ? Selector::PseudoLoss : Selector::Uncertainty;
    auto run = run_active_learning(sd, spec, config, fit_seed,
                                   /*retrain_after_last=*/false, /*eval_override=*/val);
    return run.report.avg_f1;
  };
  return random_search(search_space(kind), budget, seed, objective);
}

}  // namespace driftbench
