// driftbench command-line front end: import, synth, dedup, stats, offline,
// active, hpo, report. Every run is fully determined by (config, dataset,
// seeds); outputs land in the configured directory together with a manifest
// carrying the tool version and a hash of the effective config.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "driftbench/driftbench.hpp"

namespace fs = std::filesystem;
using namespace driftbench;

namespace {

// A setup problem (bad flags, bad config, missing dataset) exits 1; a failure
// inside a run exits 2.
struct CliUsageError : Error {
  using Error::Error;
};

struct CliConfig {
  std::string dataset;
  bool has_split = false;
  std::pair<std::string, std::string> train_range, val_range, test_range;
  bool has_val = false, has_test = false;
  std::string dedup = "none";
  ModelSpec model = default_spec(ModelKind::GBT);
  std::string setting = "holdout";
  std::vector<std::uint64_t> seeds{0};
  std::size_t budget = 50;
  std::string selector;
  std::size_t pseudo_k = 10;
  bool reuse_annotations = false;
  std::size_t hpo_budget = 100;
  std::string hpo_objective = "offline";
  std::size_t al_budget = 50;
  std::string output;
  json raw = json::object();
};

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& a : allowed)
      if (key == a) ok = true;
    if (!ok) throw CliUsageError("unknown config key '" + where + key + "'");
  }
}

std::pair<std::string, std::string> parse_range(const json& v, const std::string& what) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_string() || !v[1].is_string())
    throw CliUsageError("config: " + what + " must be [\"YYYY-MM\", \"YYYY-MM\"]");
  return {v[0].get<std::string>(), v[1].get<std::string>()};
}

CliConfig parse_config(const json& j) {
  if (!j.is_object()) throw CliUsageError("config must be a JSON object");
  reject_unknown_keys(j, {"dataset", "split", "dedup", "model", "setting", "seeds", "active",
                          "hpo", "output"},
                      "");
  CliConfig c;
  c.raw = j;
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("split")) {
    const json& s = j.at("split");
    reject_unknown_keys(s, {"train", "validation", "test"}, "split.");
    if (!s.contains("train")) throw CliUsageError("config: split.train is required");
    c.has_split = true;
    c.train_range = parse_range(s.at("train"), "split.train");
    if (s.contains("validation")) {
      c.val_range = parse_range(s.at("validation"), "split.validation");
      c.has_val = true;
    }
    if (s.contains("test")) {
      c.test_range = parse_range(s.at("test"), "split.test");
      c.has_test = true;
    }
  }
  if (j.contains("dedup")) {
    c.dedup = j.at("dedup").get<std::string>();
    if (c.dedup != "none" && c.dedup != "offline" && c.dedup != "active")
      throw CliUsageError("config: dedup must be none|offline|active");
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m, {"kind", "hyperparameters"}, "model.");
    if (!m.contains("kind")) throw CliUsageError("config: model.kind is required");
    const ModelKind kind = kind_from_name(m.at("kind").get<std::string>());
    c.model = default_spec(kind);
    if (m.contains("hyperparameters")) {
      if (!m.at("hyperparameters").is_object())
        throw CliUsageError("config: model.hyperparameters must be an object");
      for (const auto& [key, value] : m.at("hyperparameters").items())
        c.model.params[key] = value;
    }
    validate_spec(c.model);
  }
  if (j.contains("setting")) {
    c.setting = j.at("setting").get<std::string>();
    if (c.setting != "merged" && c.setting != "holdout")
      throw CliUsageError("config: setting must be merged|holdout");
  }
  if (j.contains("seeds")) {
    c.seeds.clear();
    for (const auto& s : j.at("seeds")) c.seeds.push_back(s.get<std::uint64_t>());
    if (c.seeds.empty()) throw CliUsageError("config: seeds must be non-empty");
  }
  if (j.contains("active")) {
    const json& a = j.at("active");
    reject_unknown_keys(a, {"budget", "selector", "k", "reuse_annotations"}, "active.");
    if (a.contains("budget")) c.budget = a.at("budget").get<std::size_t>();
    if (a.contains("selector")) c.selector = a.at("selector").get<std::string>();
    if (a.contains("k")) c.pseudo_k = a.at("k").get<std::size_t>();
    if (a.contains("reuse_annotations"))
      c.reuse_annotations = a.at("reuse_annotations").get<bool>();
  }
  if (j.contains("hpo")) {
    const json& h = j.at("hpo");
    reject_unknown_keys(h, {"budget", "objective", "al_budget"}, "hpo.");
    if (h.contains("budget")) c.hpo_budget = h.at("budget").get<std::size_t>();
    if (h.contains("objective")) c.hpo_objective = h.at("objective").get<std::string>();
    if (h.contains("al_budget")) c.al_budget = h.at("al_budget").get<std::size_t>();
    if (c.hpo_objective != "offline" && c.hpo_objective != "active")
      throw CliUsageError("config: hpo.objective must be offline|active");
  }
  if (j.contains("output")) c.output = j.at("output").get<std::string>();
  return c;
}

json load_config_json(const std::string& path, const std::vector<std::string>& overrides,
                      const std::string& seed_list) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw CliUsageError("cannot open config '" + path + "'");
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw CliUsageError("config parse error in '" + path + "': " + e.what());
    }
  }
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw CliUsageError("--set expects key=value, got '" + kv + "'");
    const std::string path_part = kv.substr(0, eq);
    const std::string value_part = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(value_part);
    } catch (const json::exception&) {
      value = value_part;  // plain string
    }
    json* at = &j;
    std::istringstream keys(path_part);
    std::string key, next;
    std::getline(keys, key, '.');
    while (std::getline(keys, next, '.')) {
      at = &(*at)[key];
      key = next;
    }
    (*at)[key] = value;
  }
  if (!seed_list.empty()) {
    json seeds = json::array();
    std::istringstream ss(seed_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (trim(tok).empty()) continue;
      seeds.push_back(std::stoull(trim(tok)));
    }
    j["seeds"] = seeds;
  }
  return j;
}

std::string default_output_root() {
  const char* env = std::getenv("DRIFTBENCH_OUT");
  return env != nullptr && *env != '\0' ? env : "out";
}

fs::path resolve_output(const CliConfig& c, const std::string& command) {
  fs::path out = c.output.empty() ? fs::path(default_output_root()) / command
                                  : fs::path(c.output);
  fs::create_directories(out);
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config) {
  json manifest;
  manifest["tool"] = "driftbench";
  manifest["version"] = kToolVersion;
  manifest["command"] = command;
  manifest["config"] = config;
  char stamp[32] = "";
  const std::time_t now = std::time(nullptr);
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  manifest["config_hash"] = fnv1a64(config.dump());
  manifest["created"] = stamp;  // excluded from determinism comparisons
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << content;
}

Dataset load_dataset_or_usage(const std::string& path) {
  if (path.empty()) throw CliUsageError("config: dataset path is required");
  if (!fs::exists(path)) throw CliUsageError("dataset not found: '" + path + "'");
  return load_container(path).dataset;
}

SplitDataset build_split(Dataset d, const CliConfig& c) {
  if (!c.has_split) {
    const std::uint16_t all = d.month_count();
    return SplitDataset::make(std::move(d), {0, all}, {all, all}, {all, all});
  }
  auto to_range = [&](const std::pair<std::string, std::string>& r) {
    return MonthRange{d.month_index(r.first),
                      static_cast<std::uint16_t>(d.month_index(r.second) + 1)};
  };
  const MonthRange train = to_range(c.train_range);
  MonthRange val{train.last, train.last};
  if (c.has_val) val = to_range(c.val_range);
  MonthRange test{val.last, val.last};
  if (c.has_test) test = to_range(c.test_range);
  return SplitDataset::make(std::move(d), train, val, test);
}

SplitDataset apply_dedup(SplitDataset sd, const std::string& mode) {
  if (mode == "offline") return dedup_offline(sd).dataset;
  if (mode == "active") return dedup_active(sd).dataset;
  return sd;
}

ALConfig make_al_config(const CliConfig& c) {
  ALConfig al;
  al.budget = c.budget;
  al.merged_start = c.setting == "merged";
  al.pseudo_k = c.pseudo_k;
  al.reuse_duplicate_labels = c.reuse_annotations;
  if (c.selector.empty())
    al.selector =
        c.model.kind == ModelKind::HCC ? Selector::PseudoLoss : Selector::Uncertainty;
  else if (c.selector == "uncertainty")
    al.selector = Selector::Uncertainty;
  else if (c.selector == "pseudo_loss")
    al.selector = Selector::PseudoLoss;
  else
    throw CliUsageError("config: active.selector must be uncertainty|pseudo_loss");
  return al;
}

// ---------------------------------------------------------------------------

int cmd_import(const std::string& input, const std::string& format, std::uint32_t dimension,
               const std::string& name, const std::string& output) {
  if (input.empty() || output.empty())
    throw CliUsageError("import needs --input and --output");
  if (!fs::exists(input)) throw CliUsageError("input not found: '" + input + "'");
  if (dimension == 0) throw CliUsageError("import needs --dimension > 0");
  Dataset d;
  const std::string dataset_name = name.empty() ? fs::path(input).stem().string() : name;
  if (format == "csv")
    d = import_text(input, TextFormat::Csv, dimension, dataset_name);
  else if (format == "jsonl")
    d = import_text(input, TextFormat::JsonLines, dimension, dataset_name);
  else if (format == "packed-arrays")
    d = import_packed_arrays(input, dimension, dataset_name);
  else
    throw CliUsageError("import --format must be csv|jsonl|packed-arrays");
  save_container(d, output);
  std::cout << "imported " << d.size() << " samples over " << d.months().size()
            << " months -> " << output << "\n";
  json cfg{{"input", input}, {"format", format}, {"dimension", dimension}, {"name", dataset_name}};
  write_manifest(fs::path(output).parent_path().empty() ? "." : fs::path(output).parent_path(),
                 "import", cfg);
  return 0;
}

int cmd_synth(const SynthConfig& cfg, const std::string& output) {
  if (output.empty()) throw CliUsageError("synth needs --output");
  Dataset d = generate_synth(cfg);
  save_container(d, output);
  std::cout << "generated " << d.size() << " samples over " << d.months().size()
            << " months -> " << output << "\n";
  json manifest_cfg{{"months", cfg.months},
                    {"samples_per_month", cfg.samples_per_month},
                    {"dimension", cfg.dimension},
                    {"class_prior", cfg.malware_prior},
                    {"families", cfg.families},
                    {"dupe_rate", cfg.dupe_rate},
                    {"drift_rate", cfg.drift_rate},
                    {"abrupt_month", cfg.abrupt_month},
                    {"abrupt_frac", cfg.abrupt_fraction},
                    {"seed", cfg.seed},
                    {"name", cfg.name}};
  write_manifest(fs::path(output).parent_path().empty() ? "." : fs::path(output).parent_path(),
                 "synth", manifest_cfg);
  return 0;
}

int cmd_stats(const CliConfig& c, bool write_datasets) {
  if (c.dedup == "none") throw CliUsageError("stats/dedup need dedup = offline|active");
  Dataset d = load_dataset_or_usage(c.dataset);
  SplitDataset sd = build_split(std::move(d), c);
  const DedupMode mode = c.dedup == "offline" ? DedupMode::Offline : DedupMode::Active;
  const fs::path out = resolve_output(c, write_datasets ? "dedup" : "stats");

  DedupReport report = dedup_stats(sd, mode);
  {
    std::ostringstream csv;
    report.write_csv(csv);
    write_text(out / "dedup_report.csv", csv.str());
  }
  {
    std::ostringstream csv;
    report.write_ratio_csv(csv);
    write_text(out / "ratio_table.csv", csv.str());
  }
  if (report.label_conflicts > 0)
    std::cout << "warning: " << report.label_conflicts
              << " duplicate pairs with conflicting labels (earliest label kept)\n";

  if (write_datasets) {
    DedupResult result = mode == DedupMode::Offline ? dedup_offline(sd) : dedup_active(sd);
    save_container(result.dataset.dataset(), (out / "deduped.smd").string());
    auto annotations = annotate_duplicates(sd, mode);
    for (SplitId s : kAllSplits) sd.set_annotation(s, annotations[static_cast<int>(s)]);
    FlatAnnotations flat = flatten_annotations(sd);
    save_container(sd.dataset(), (out / "annotated.smd").string(), &flat);
    std::ostringstream prov;
    prov << "split,retained_index,original_index\n";
    for (SplitId s : kAllSplits)
      for (std::size_t i = 0; i < result.provenance[static_cast<int>(s)].size(); ++i)
        prov << split_name(s) << ',' << i << ',' << result.provenance[static_cast<int>(s)][i]
             << '\n';
    write_text(out / "provenance.csv", prov.str());
    std::cout << "deduplicated " << sd.dataset().size() << " -> "
              << result.dataset.dataset().size() << " samples\n";
  }

  for (const auto& row : report.rows)
    if (row.month_label == "ALL" && row.cls == -1)
      std::cout << split_name(row.split) << ": " << row.retained << "/" << row.total
                << " unique (" << fmt_double(row.fraction_unique()) << ")\n";
  write_manifest(out, write_datasets ? "dedup" : "stats", c.raw);
  return 0;
}

int cmd_offline(const CliConfig& c, bool save_models) {
  Dataset d = load_dataset_or_usage(c.dataset);
  SplitDataset sd = build_split(std::move(d), c);
  if (sd.months_of(SplitId::Test).empty())
    throw CliUsageError("offline run needs a non-empty test range");
  sd = apply_dedup(std::move(sd), c.dedup);
  const OfflineSetting setting =
      c.setting == "merged" ? OfflineSetting::Merged : OfflineSetting::Holdout;
  const fs::path out = resolve_output(c, "offline");

  std::vector<RunReport> reports;
  for (std::uint64_t seed : c.seeds) {
    auto [train_begin, train_end] = sd.span_of(SplitId::Train);
    const std::size_t fit_end = setting == OfflineSetting::Merged
                                    ? sd.span_of(SplitId::Validation).second
                                    : train_end;
    std::span<const Sample> pool(sd.dataset().samples().data() + train_begin,
                                 fit_end - train_begin);
    auto model = fit(c.model, pool, seed);
    RunReport report = evaluate_months(*model, sd, sd.months_of(SplitId::Test));
    report.seed = seed;
    report.setting = setting_name(setting);

    const fs::path seed_dir = out / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    std::ostringstream pm, sm;
    report.write_per_month_csv(pm);
    report.write_summary_csv(sm);
    write_text(seed_dir / "per_month.csv", pm.str());
    write_text(seed_dir / "summary.csv", sm.str());
    if (save_models) save_model(*model, (seed_dir / "model.ckpt").string());
    std::cout << "seed " << seed << ": avg f1 " << fmt_double(report.avg_f1) << "\n";
    reports.push_back(std::move(report));
  }

  SeedAggregate agg = aggregate_seeds(reports);
  std::ostringstream asum, amon;
  agg.write_summary_csv(asum);
  agg.write_per_month_csv(amon);
  write_text(out / "aggregate_summary.csv", asum.str());
  write_text(out / "aggregate_per_month.csv", amon.str());
  write_manifest(out, "offline", c.raw);
  std::cout << "f1 " << fmt_double(agg.f1.mean) << " +- " << fmt_double(agg.f1.stddev) << "\n";
  return 0;
}

int cmd_active(const CliConfig& c, bool save_models) {
  Dataset d = load_dataset_or_usage(c.dataset);
  SplitDataset sd = build_split(std::move(d), c);
  if (sd.months_of(SplitId::Test).empty())
    throw CliUsageError("active run needs a non-empty test range");
  sd = apply_dedup(std::move(sd), c.dedup);
  const ALConfig al = make_al_config(c);
  const fs::path out = resolve_output(c, "active");

  std::vector<RunReport> reports;
  for (std::uint64_t seed : c.seeds) {
    ActiveRunResult run = run_active_learning(sd, c.model, al, seed);
    const fs::path seed_dir = out / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    std::ostringstream pm, sm, ev;
    run.report.write_per_month_csv(pm);
    run.report.write_summary_csv(sm);
    run.state.write_log_csv(ev);
    write_text(seed_dir / "per_month.csv", pm.str());
    write_text(seed_dir / "summary.csv", sm.str());
    write_text(seed_dir / "event_log.csv", ev.str());
    if (save_models) save_model(*run.state.model, (seed_dir / "model.ckpt").string());
    std::cout << "seed " << seed << ": avg f1 " << fmt_double(run.report.avg_f1) << "\n";
    reports.push_back(std::move(run.report));
  }

  SeedAggregate agg = aggregate_seeds(reports);
  std::ostringstream asum, amon;
  agg.write_summary_csv(asum);
  agg.write_per_month_csv(amon);
  write_text(out / "aggregate_summary.csv", asum.str());
  write_text(out / "aggregate_per_month.csv", amon.str());
  write_manifest(out, "active", c.raw);
  std::cout << "f1 " << fmt_double(agg.f1.mean) << " +- " << fmt_double(agg.f1.stddev) << "\n";
  return 0;
}

int cmd_hpo(const CliConfig& c) {
  Dataset d = load_dataset_or_usage(c.dataset);
  SplitDataset sd = build_split(std::move(d), c);
  if (sd.months_of(SplitId::Validation).empty())
    throw CliUsageError("hpo needs a non-empty validation range");
  sd = apply_dedup(std::move(sd), c.dedup);
  const fs::path out = resolve_output(c, "hpo");
  const std::uint64_t seed = c.seeds.front();

  SearchResult result;
  if (c.hpo_objective == "offline") {
    result = run_search_offline(sd, c.model.kind, c.hpo_budget, seed);
  } else {
    ALConfig al = make_al_config(c);
    result = run_search_active(sd, c.model.kind, c.hpo_budget, c.al_budget, seed, &al);
  }

  std::ostringstream csv;
  result.write_csv(csv);
  write_text(out / "trials.csv", csv.str());
  json best{{"model",
             {{"kind", kind_name(result.best.kind)}, {"hyperparameters", result.best.params}}}};
  write_text(out / "best_spec.json", best.dump(2) + "\n");
  write_manifest(out, "hpo", c.raw);
  std::cout << "best trial " << result.best_index << " objective "
            << fmt_double(result.best_objective) << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& run_dirs, const std::string& output) {
  if (run_dirs.empty()) throw CliUsageError("report needs at least one run directory");
  std::vector<RunReport> reports;
  for (const std::string& dir : run_dirs) {
    const fs::path pm = fs::path(dir) / "per_month.csv";
    if (!fs::exists(pm)) throw CliUsageError("no per_month.csv under '" + dir + "'");
    std::ifstream in(pm);
    std::string line;
    std::getline(in, line);
    if (trim(line) != "month,f1,fpr,fnr,tp,fp,tn,fn,flag")
      throw CliUsageError("unexpected per_month.csv header in '" + dir + "'");
    RunReport r;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      auto fields = csv_split(line);
      if (fields.size() != 9) throw CliUsageError("bad per_month.csv row in '" + dir + "'");
      MonthMetrics m;
      m.month = fields[0];
      m.f1 = std::stod(fields[1]);
      m.fpr = std::stod(fields[2]);
      m.fnr = std::stod(fields[3]);
      m.tp = std::stoull(fields[4]);
      m.fp = std::stoull(fields[5]);
      m.tn = std::stoull(fields[6]);
      m.fn = std::stoull(fields[7]);
      m.flag = fields[8];
      r.months.push_back(std::move(m));
    }
    r.finalize();
    reports.push_back(std::move(r));
  }
  SeedAggregate agg = aggregate_seeds(reports);
  const fs::path out = output.empty() ? fs::path(default_output_root()) / "report"
                                      : fs::path(output);
  fs::create_directories(out);
  std::ostringstream asum, amon;
  agg.write_summary_csv(asum);
  agg.write_per_month_csv(amon);
  write_text(out / "aggregate_summary.csv", asum.str());
  write_text(out / "aggregate_per_month.csv", amon.str());
  json cfg{{"runs", run_dirs}};
  write_manifest(out, "report", cfg);
  std::cout << "aggregated " << reports.size() << " runs: f1 " << fmt_double(agg.f1.mean)
            << " +- " << fmt_double(agg.f1.stddev) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-aware malware-classification benchmark framework"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned jobs = 1;
  app.add_option("--jobs", jobs, "worker threads for deterministic parallel sections");

  // import
  auto* import_cmd = app.add_subcommand("import", "convert text records into a container");
  std::string in_path, in_format = "csv", in_name, out_path;
  std::uint32_t dimension = 0;
  import_cmd->add_option("--input", in_path, "CSV/JSONL file or packed-array directory");
  import_cmd->add_option("--format", in_format, "csv|jsonl|packed-arrays");
  import_cmd->add_option("--dimension", dimension, "feature dimension");
  import_cmd->add_option("--name", in_name, "dataset name");
  import_cmd->add_option("--output", out_path, "container path");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a drifting labeled dataset");
  SynthConfig synth_cfg;
  std::string synth_out;
  int synth_months = 24;
  synth_cmd->add_option("--months", synth_months);
  synth_cmd->add_option("--samples-per-month", synth_cfg.samples_per_month);
  synth_cmd->add_option("--dimension", synth_cfg.dimension);
  synth_cmd->add_option("--class-prior", synth_cfg.malware_prior, "malware fraction");
  synth_cmd->add_option("--families", synth_cfg.families);
  synth_cmd->add_option("--dupe-rate", synth_cfg.dupe_rate);
  synth_cmd->add_option("--drift-rate", synth_cfg.drift_rate);
  synth_cmd->add_option("--abrupt-month", synth_cfg.abrupt_month);
  synth_cmd->add_option("--abrupt-frac", synth_cfg.abrupt_fraction);
  synth_cmd->add_option("--signature-strength", synth_cfg.signature_strength);
  synth_cmd->add_option("--cross-rate", synth_cfg.cross_rate);
  synth_cmd->add_option("--background-rate", synth_cfg.background_rate);
  synth_cmd->add_option("--seed", synth_cfg.seed);
  synth_cmd->add_option("--name", synth_cfg.name);
  synth_cmd->add_option("--first-month", synth_cfg.first_month);
  synth_cmd->add_option("--output", synth_out);

  // config-driven commands
  std::string config_path, seed_list;
  std::vector<std::string> overrides;
  bool save_models = false;
  for (auto* cmd : {app.add_subcommand("dedup", "write deduplicated/annotated containers"),
                    app.add_subcommand("stats", "duplicate statistics CSVs"),
                    app.add_subcommand("offline", "single-fit offline evaluation"),
                    app.add_subcommand("active", "monthly active-learning run"),
                    app.add_subcommand("hpo", "random hyperparameter search")}) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--set", overrides, "override config values (key=value)");
    cmd->add_option("--seed", seed_list, "comma-separated seed list");
    if (cmd->get_name() == "offline" || cmd->get_name() == "active")
      cmd->add_flag("--save-model", save_models, "write model checkpoints");
  }

  // report
  auto* report_cmd = app.add_subcommand("report", "aggregate per-seed run directories");
  std::vector<std::string> run_dirs;
  std::string report_out;
  report_cmd->add_option("--runs", run_dirs, "run directories with per_month.csv")
      ->delimiter(',');
  report_cmd->add_option("--output", report_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  set_jobs(jobs);
  const std::string command = app.get_subcommands().front()->get_name();

  // setup phase: bad input is a usage error (exit 1)
  CliConfig config;
  try {
    if (command == "dedup" || command == "stats" || command == "offline" ||
        command == "active" || command == "hpo") {
      config = parse_config(load_config_json(config_path, overrides, seed_list));
    }
    if (command == "synth") {
      if (synth_months <= 0 || synth_months > 0xffff)
        throw CliUsageError("synth: --months out of range");
      synth_cfg.months = static_cast<std::uint16_t>(synth_months);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (command == "import") return cmd_import(in_path, in_format, dimension, in_name, out_path);
    if (command == "synth") return cmd_synth(synth_cfg, synth_out);
    if (command == "stats") return cmd_stats(config, /*write_datasets=*/false);
    if (command == "dedup") return cmd_stats(config, /*write_datasets=*/true);
    if (command == "offline") return cmd_offline(config, save_models);
    if (command == "active") return cmd_active(config, save_models);
    if (command == "hpo") return cmd_hpo(config);
    if (command == "report") return cmd_report(run_dirs, report_out);
    std::cerr << "error: unknown command\n";
    return 1;
  } catch (const CliUsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 2;
  }
}
