#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "driftbench/errors.hpp"
#include "driftbench/rng.hpp"

namespace driftbench {

using json = nlohmann::json;

// One hyperparameter's sampling domain.
struct ParamDistribution {
  enum class Kind {
    Categorical,       // uniform over listed values
    Pow2Int,           // round(2^x), x ~ U[lo, hi] continuous
    LogUniform,        // 10^x, x ~ U[lo, hi]
    ScaledLogUniform,  // coeff * 10^x, x ~ U[lo, hi]
    UniformReal,       // U[lo, hi]
    Constant,
  };

  Kind kind = Kind::Constant;
  std::vector<json> values;  // Categorical
  double lo = 0, hi = 0;     // exponent or value bounds
  double coeff = 1.0;        // ScaledLogUniform
  json constant;
  bool active_only = false;  // consumed only by active-learning retraining

  static ParamDistribution categorical(std::vector<json> vals, bool active = false) {
    if (vals.empty()) throw SpecError("categorical distribution needs values");
    ParamDistribution d;
    d.kind = Kind::Categorical;
    d.values = std::move(vals);
    d.active_only = active;
    return d;
  }
  static ParamDistribution pow2_int(double lo, double hi) {
    ParamDistribution d;
    d.kind = Kind::Pow2Int;
    d.lo = lo;
    d.hi = hi;
    return d;
  }
  static ParamDistribution log_uniform(double lo, double hi) {
    ParamDistribution d;
    d.kind = Kind::LogUniform;
    d.lo = lo;
    d.hi = hi;
    return d;
  }
  static ParamDistribution scaled_log_uniform(double coeff, double lo, double hi) {
    ParamDistribution d;
    d.kind = Kind::ScaledLogUniform;
    d.coeff = coeff;
    d.lo = lo;
    d.hi = hi;
    return d;
  }
  static ParamDistribution uniform_real(double lo, double hi) {
    ParamDistribution d;
    d.kind = Kind::UniformReal;
    d.lo = lo;
    d.hi = hi;
    return d;
  }
  static ParamDistribution constant_value(json v, bool active = false) {
    ParamDistribution d;
    d.kind = Kind::Constant;
    d.constant = std::move(v);
    d.active_only = active;
    return d;
  }

  json sample(RngStream& rng) const {
    switch (kind) {
      case Kind::Categorical:
        return values[rng.uniform_int(values.size())];
      case Kind::Pow2Int: {
        const double x = rng.uniform_real(lo, hi);
        return static_cast<std::int64_t>(std::llround(std::pow(2.0, x)));
      }
      case Kind::LogUniform:
        return std::pow(10.0, rng.uniform_real(lo, hi));
      case Kind::ScaledLogUniform:
        return coeff * std::pow(10.0, rng.uniform_real(lo, hi));
      case Kind::UniformReal:
        return rng.uniform_real(lo, hi);
      case Kind::Constant:
        return constant;
    }
    throw Error("unreachable");
  }

  bool contains(const json& v) const {
    switch (kind) {
      case Kind::Categorical:
        for (const auto& c : values)
          if (c == v) return true;
        return false;
      case Kind::Pow2Int: {
        if (!v.is_number_integer()) return false;
        const double x = static_cast<double>(v.get<std::int64_t>());
        return x >= std::llround(std::pow(2.0, lo)) && x <= std::llround(std::pow(2.0, hi));
      }
      case Kind::LogUniform: {
        if (!v.is_number()) return false;
        const double x = v.get<double>();
        return x >= std::pow(10.0, lo) && x <= std::pow(10.0, hi);
      }
      case Kind::ScaledLogUniform: {
        if (!v.is_number()) return false;
        const double x = v.get<double>();
        return x >= coeff * std::pow(10.0, lo) && x <= coeff * std::pow(10.0, hi);
      }
      case Kind::UniformReal: {
        if (!v.is_number()) return false;
        const double x = v.get<double>();
        return x >= lo && x <= hi;
      }
      case Kind::Constant:
        return v == constant;
    }
    return false;
  }
};

enum class ModelKind { RF, SVM, GBT, MLP, SCC, HCC };

inline const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::RF: return "rf";
    case ModelKind::SVM: return "svm";
    case ModelKind::GBT: return "gbt";
    case ModelKind::MLP: return "mlp";
    case ModelKind::SCC: return "scc";
    default: return "hcc";
  }
}

inline ModelKind kind_from_name(const std::string& name) {
  if (name == "rf") return ModelKind::RF;
  if (name == "svm") return ModelKind::SVM;
  if (name == "gbt" || name == "xgboost") return ModelKind::GBT;
  if (name == "mlp") return ModelKind::MLP;
  if (name == "scc") return ModelKind::SCC;
  if (name == "hcc") return ModelKind::HCC;
  throw SpecError("unknown model kind '" + name + "'");
}

constexpr ModelKind kAllKinds[] = {ModelKind::RF,  ModelKind::SVM, ModelKind::GBT,
                                   ModelKind::MLP, ModelKind::SCC, ModelKind::HCC};

struct SearchSpace {
  ModelKind kind;
  std::map<std::string, ParamDistribution> params;
};

inline const SearchSpace& search_space(ModelKind kind) {
  using PD = ParamDistribution;
  static const std::map<ModelKind, SearchSpace> spaces = [] {
    std::map<ModelKind, SearchSpace> m;
    {
      SearchSpace s{ModelKind::RF, {}};
      s.params["n_estimators"] = PD::pow2_int(5, 10);
      s.params["max_depth"] = PD::pow2_int(5, 10);
      s.params["criterion"] = PD::categorical({"gini", "entropy", "log_loss"});
      s.params["class_weight"] = PD::categorical({nullptr, "balanced"});
      m.emplace(ModelKind::RF, std::move(s));
    }
    {
      SearchSpace s{ModelKind::SVM, {}};
      s.params["C"] = PD::log_uniform(-4, 3);
      s.params["class_weight"] = PD::categorical({nullptr, "balanced"});
      m.emplace(ModelKind::SVM, std::move(s));
    }
    {
      SearchSpace s{ModelKind::GBT, {}};
      s.params["max_depth"] = PD::pow2_int(3, 7);
      s.params["alpha"] = PD::log_uniform(-8, 0);
      s.params["lambda"] = PD::log_uniform(-8, 0);
      s.params["eta"] = PD::scaled_log_uniform(3.0, -2, -1);
      s.params["balance"] = PD::categorical({true, false});
      s.params["num_boost_round"] = PD::categorical({100, 150, 200, 300, 400});
      m.emplace(ModelKind::GBT, std::move(s));
    }
    {
      SearchSpace s{ModelKind::MLP, {}};
      s.params["mlp_layers"] = PD::categorical({json::array({100, 100}),
                                                json::array({512, 256, 128}),
                                                json::array({512, 384, 256, 128}),
                                                json::array({512, 384, 256, 128, 64})});
      s.params["learning_rate"] = PD::log_uniform(-5, -3);
      s.params["dropout"] = PD::uniform_real(0.0, 0.5);
      s.params["batch_size"] = PD::categorical({32, 64, 128, 256, 512, 1024});
      s.params["epochs"] = PD::categorical({25, 30, 35, 40, 50, 60, 80, 100, 150});
      s.params["optimizer"] = PD::categorical({"adam"});
      s.params["balance"] = PD::categorical({true, false});
      s.params["cont_learning_epochs"] =
          PD::categorical({0.1, 0.2, 0.3, 0.4, 0.5}, /*active=*/true);
      m.emplace(ModelKind::MLP, std::move(s));
    }
    {
      SearchSpace s{ModelKind::SCC, {}};
      s.params["encoder_layers"] = PD::categorical(
          {json::array({512, 256, 128}), json::array({512, 384, 256, 128})});
      s.params["mlp_layers"] =
          PD::categorical({json::array({100}), json::array({100, 100})});
      s.params["learning_rate"] = PD::log_uniform(-5, -3);
      s.params["dropout"] = PD::uniform_real(0.0, 0.25);
      s.params["batch_size"] = PD::categorical({512, 1024, 2048});
      s.params["epochs"] = PD::categorical({25, 30, 35, 40, 50, 60, 80, 100});
      s.params["xent_lambda"] = PD::constant_value(100);
      s.params["margin"] = PD::constant_value(10);
      s.params["optimizer"] = PD::categorical({"adam"});
      s.params["balance"] = PD::categorical({true, false});
      s.params["cont_learning_epochs"] =
          PD::categorical({0.1, 0.2, 0.3, 0.4, 0.5}, /*active=*/true);
      m.emplace(ModelKind::SCC, std::move(s));
    }
    {
      SearchSpace s{ModelKind::HCC, {}};
      s.params["encoder_layers"] = PD::categorical(
          {json::array({512, 256, 128}), json::array({512, 384, 256, 128})});
      s.params["mlp_layers"] =
          PD::categorical({json::array({100}), json::array({100, 100})});
      s.params["learning_rate"] = PD::categorical({0.001, 0.003, 0.005, 0.007});
      s.params["dropout"] = PD::uniform_real(0.0, 0.25);
      s.params["batch_size"] = PD::constant_value(1024);
      s.params["epochs"] = PD::categorical({100, 150, 200, 250});
      s.params["xent_lambda"] = PD::constant_value(100);
      s.params["margin"] = PD::constant_value(10);
      s.params["optimizer"] = PD::categorical({"adam", "sgd"});
      s.params["scheduler_step"] = PD::constant_value(10);
      s.params["scheduler_gamma"] = PD::categorical({0.5, 0.95});
      s.params["cont_learning_lr"] = PD::categorical({0.01, 0.05}, /*active=*/true);
      s.params["cont_learning_epochs"] = PD::categorical({50, 100}, /*active=*/true);
      m.emplace(ModelKind::HCC, std::move(s));
    }
    return m;
  }();
  return spaces.at(kind);
}

}  // namespace driftbench
