#pragma once

// Pipeline commands behind the CLI: fetch, train-source, adapt, evaluate,
// report and the fully offline synth-demo. Every command is re-runnable;
// outputs are pure functions of (config, caches, seeds).

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "rainadapt/checkpoint.hpp"
#include "rainadapt/config.hpp"
#include "rainadapt/dataset.hpp"
#include "rainadapt/ensemble.hpp"
#include "rainadapt/ingest.hpp"
#include "rainadapt/metrics.hpp"
#include "rainadapt/mlp.hpp"
#include "rainadapt/synthetic.hpp"

namespace rainadapt {

namespace detail {

inline std::string slug(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '-')
      out += '-';
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "site" : out;
}

}  // namespace detail

inline std::filesystem::path cache_path(const ExperimentConfig& cfg,
                                        const Site& site) {
  return cfg.cache_dir / (detail::slug(site.name) + "_" +
                          to_compact(cfg.range.start) + "_" +
                          to_compact(cfg.range.end) + ".csv");
}

inline std::filesystem::path checkpoint_dir(const ExperimentConfig& cfg) {
  return cfg.output_dir / "checkpoints";
}

inline std::filesystem::path eval_dir(const ExperimentConfig& cfg) {
  return cfg.output_dir / "eval";
}

inline std::filesystem::path eval_path(const ExperimentConfig& cfg,
                                       const std::string& city,
                                       const std::string& method) {
  return eval_dir(cfg) / (detail::slug(city) + "_" + method + ".json");
}

namespace detail {

inline void write_report_file(const std::filesystem::path& path,
                              const std::string& hash,
                              const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# config_hash=" << hash << '\n' << body;
  if (!out) throw IoError("write failed for " + path.string());
}

inline nlohmann::json eval_report_to_json(const EvalReport& r) {
  return nlohmann::json{{"method", r.method},
                        {"city", r.city},
                        {"mse", r.mse},
                        {"mae", r.mae},
                        {"mape", r.mape},
                        {"n_eval", r.n_eval},
                        {"n_excluded_zero", r.n_excluded_zero}};
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.city = j.at("city").get<std::string>();
  r.mse = j.at("mse").get<double>();
  r.mae = j.at("mae").get<double>();
  r.mape = j.at("mape").get<double>();
  r.n_eval = j.at("n_eval").get<std::size_t>();
  r.n_excluded_zero = j.at("n_excluded_zero").get<std::size_t>();
  return r;
}

}  // namespace detail

// Refuses to score a model on any row it has already seen.
inline void ensure_no_overlap(const std::vector<Provenance>& train_provenance,
                              const Dataset& eval_ds,
                              const std::string& context) {
  std::unordered_set<std::string> seen;
  seen.reserve(train_provenance.size());
  for (const auto& p : train_provenance) seen.insert(p.key());
  for (const auto& p : eval_ds.provenance())
    if (seen.count(p.key()))
      throw DataError("evaluation row " + p.key() +
                      " appeared in the training data (" + context + ")");
}

inline EvalReport evaluate_predictions(const std::string& method,
                                       const std::string& city,
                                       std::span<const double> pred,
                                       const Dataset& test, double eps) {
  EvalReport r;
  r.method = method;
  r.city = city;
  r.mse = mse(pred, test.targets());
  r.mae = mae(pred, test.targets());
  const auto mp = mape(pred, test.targets(), eps);
  r.mape = mp.percent;
  r.n_eval = test.n() - mp.excluded;
  r.n_excluded_zero = mp.excluded;
  return r;
}

// ---------------------------------------------------------------------------
// fetch
// ---------------------------------------------------------------------------

inline void cmd_fetch(const ExperimentConfig& cfg, bool force,
                      std::ostream& log, const FetchOptions& fetch = {}) {
  std::filesystem::create_directories(cfg.cache_dir);
  std::vector<Site> sites{cfg.source_site};
  sites.insert(sites.end(), cfg.target_sites.begin(), cfg.target_sites.end());
  for (const auto& site : sites) {
    const auto path = cache_path(cfg, site);
    if (!force && std::filesystem::exists(path)) {
      log << "cached   " << site.name << " -> " << path.string() << '\n';
      continue;
    }
    log << "fetching " << site.name << "...\n";
    const auto records = fetch_daily(site, cfg.range, fetch);
    cache_store(path, records);
    log << "stored   " << site.name << ": " << records.size()
        << " records -> " << path.string() << '\n';
  }
}

// ---------------------------------------------------------------------------
// source training
// ---------------------------------------------------------------------------

struct SourceSplits {
  Dataset fit;        // network training rows
  Dataset val;        // early-stopping rows
  Dataset train_all;  // fit + val, in chronological order (baseline training)
  Dataset test;
};

inline SourceSplits split_source(const ExperimentConfig& cfg,
                                 const Dataset& ds) {
  auto [train_all, test] = split_dataset(
      ds, {cfg.source_split_ratio, mix_seed(cfg.seed, 105), cfg.split_mode});
  auto [fit, val] = split_dataset(
      train_all,
      {cfg.validation_ratio, mix_seed(cfg.seed, 106), cfg.split_mode});
  return {std::move(fit), std::move(val), std::move(train_all),
          std::move(test)};
}

inline std::vector<StackingMember> default_stacking_members(
    const BaselineConfig& b) {
  // quarter-budget members; the OLS meta-learner blends them
  const std::size_t trees = std::max<std::size_t>(1, b.n_trees / 4);
  const std::size_t rounds = std::max<std::size_t>(1, b.boost_rounds / 4);
  TreeParams forest_params{b.max_depth, b.min_samples_leaf, b.seed + 11};
  TreeParams boost_params{b.max_depth, b.min_samples_leaf, b.seed + 12};
  TreeParams ada_params{b.max_depth, b.min_samples_leaf, b.seed + 13};
  const double shrinkage = b.shrinkage;
  return {
      {"forest",
       [=](const Dataset& d) { return fit_forest(d, trees, forest_params); }},
      {"gboost",
       [=](const Dataset& d) {
         return fit_gradient_boost(d, rounds, shrinkage, boost_params);
       }},
      {"adaboost",
       [=](const Dataset& d) { return fit_adaboost_r2(d, rounds, ada_params); }},
  };
}

struct SourceModels {
  Mlp mlp;
  TrainReport mlp_report;
  EnsembleModel adb, grb, rfr, sr;
  Scaler scaler;
  Dataset train_scaled;  // scaled train_all; adaptation draws source batches here
  Dataset test_scaled;
  std::vector<EvalReport> source_comparison;  // source-test MSE per method
};

inline SourceModels train_source_suite(const ExperimentConfig& cfg,
                                       const Dataset& source_ds,
                                       std::ostream& log) {
  const auto splits = split_source(cfg, source_ds);
  SourceModels out;
  out.scaler = fit_scaler(splits.train_all);

  const Dataset fit_scaled = apply_scaler(out.scaler, splits.fit);
  const Dataset val_scaled = apply_scaler(out.scaler, splits.val);
  out.train_scaled = apply_scaler(out.scaler, splits.train_all);
  out.test_scaled = apply_scaler(out.scaler, splits.test);

  log << "training network on " << fit_scaled.n() << " rows (val "
      << val_scaled.n() << ", test " << out.test_scaled.n() << ")\n";
  MlpSpec spec = cfg.mlp;
  spec.input_dim = source_ds.feature_dim();
  auto [mlp, report] =
      train_source(init_mlp(spec), fit_scaled, val_scaled, cfg.train);
  out.mlp = std::move(mlp);
  out.mlp_report = std::move(report);
  log << "network best epoch " << out.mlp_report.best_epoch
      << ", validation mse " << out.mlp_report.final_validation << '\n';

  const auto& b = cfg.baselines;
  log << "fitting baselines on " << out.train_scaled.n() << " rows\n";
  out.adb = fit_adaboost_r2(out.train_scaled, b.boost_rounds, b.tree_params());
  out.grb = fit_gradient_boost(out.train_scaled, b.boost_rounds, b.shrinkage,
                               b.tree_params());
  out.rfr = fit_forest(out.train_scaled, b.n_trees, b.tree_params());
  out.sr = fit_stacking(out.train_scaled, default_stacking_members(b),
                        b.stacking_folds);

  const std::string city = cfg.source_site.name;
  auto eval = [&](const std::string& method, std::span<const double> pred) {
    return evaluate_predictions(method, city, pred, out.test_scaled,
                                cfg.mape_eps);
  };
  out.source_comparison = {
      eval("ADB", predict(out.adb, out.test_scaled.features())),
      eval("GRB", predict(out.grb, out.test_scaled.features())),
      eval("RFR", predict(out.rfr, out.test_scaled.features())),
      eval("SR", predict(out.sr, out.test_scaled.features())),
      eval("DNN", forward_batch(out.mlp, out.test_scaled.features())),
  };
  return out;
}

namespace detail {

inline std::string render_source_comparison_csv(
    const std::vector<EvalReport>& rows) {
  std::ostringstream csv;
  csv << "method,mse\n";
  for (const auto& r : rows)
    csv << r.method << ',' << format_fixed4(r.mse) << '\n';
  return csv.str();
}

inline std::string render_source_comparison_table(
    const std::vector<EvalReport>& rows) {
  std::ostringstream table;
  table << "Source-domain test MSE by method\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-6s %12.4f\n", r.method.c_str(), r.mse);
    table << buf;
  }
  return table.str();
}

}  // namespace detail

inline Dataset load_validated_dataset(const ExperimentConfig& cfg,
                                      const Site& site, std::ostream& log) {
  const auto path = cache_path(cfg, site);
  if (!std::filesystem::exists(path))
    throw DataError("no cache for " + site.name + " at " + path.string() +
                    "; run fetch first");
  const auto records = cache_load(path);
  auto result = validate_records(records);
  log << site.name << ": " << result.dataset.n() << " valid rows, "
      << result.rejected.size() << " rejected\n";
  return std::move(result.dataset);
}

inline void cmd_train_source(const ExperimentConfig& cfg, std::ostream& log) {
  const Dataset source = load_validated_dataset(cfg, cfg.source_site, log);
  const auto models = train_source_suite(cfg, source, log);

  std::filesystem::create_directories(checkpoint_dir(cfg));
  const auto& prov = models.train_scaled.provenance();
  save_checkpoint(checkpoint_dir(cfg) / "mlp_source.json", models.mlp,
                  models.scaler, cfg.train, prov);
  save_checkpoint(checkpoint_dir(cfg) / "adb.json", models.adb, models.scaler,
                  prov);
  save_checkpoint(checkpoint_dir(cfg) / "grb.json", models.grb, models.scaler,
                  prov);
  save_checkpoint(checkpoint_dir(cfg) / "rfr.json", models.rfr, models.scaler,
                  prov);
  save_checkpoint(checkpoint_dir(cfg) / "sr.json", models.sr, models.scaler,
                  prov);

  std::filesystem::create_directories(cfg.output_dir);
  detail::write_report_file(
      cfg.output_dir / "source_comparison.csv", config_hash(cfg),
      detail::render_source_comparison_csv(models.source_comparison));
  log << detail::render_source_comparison_table(models.source_comparison);
}

// ---------------------------------------------------------------------------
// adaptation
// ---------------------------------------------------------------------------

inline const Site& find_target_site(const ExperimentConfig& cfg,
                                    const std::string& city) {
  for (const auto& s : cfg.target_sites)
    if (s.name == city || detail::slug(s.name) == detail::slug(city)) return s;
  throw ConfigError("city " + city + " is not a configured target site");
}

struct AdaptOutcome {
  Mlp adapted;
  TrainReport report;
  EvalReport before;  // DWOA on the target test split
  EvalReport after;   // DWA on the target test split
  ImprovementRow row;
  std::vector<Provenance> adapted_provenance;
};

// Shared by the real-data command and synth-demo: adapt the source model to
// one target dataset and score before/after on the held-out test split.
inline AdaptOutcome adapt_and_evaluate(const ExperimentConfig& cfg,
                                       const Mlp& source_model,
                                       const Scaler& scaler,
                                       const Dataset& src_train_scaled,
                                       const Dataset& target_ds,
                                       const std::string& city,
                                       std::ostream& log) {
  auto [tgt_adapt, tgt_test] = split_dataset(
      target_ds,
      {cfg.target_split_ratio, mix_seed(cfg.seed, 107), cfg.split_mode});
  const Dataset adapt_scaled = apply_scaler(scaler, tgt_adapt);
  const Dataset test_scaled = apply_scaler(scaler, tgt_test);

  log << "adapting to " << city << ": " << adapt_scaled.n()
      << " adaptation rows, " << test_scaled.n() << " test rows\n";

  AdaptOutcome out;
  const auto before_pred = forward_batch(source_model, test_scaled.features());
  out.before = evaluate_predictions("DWOA", city, before_pred, test_scaled,
                                    cfg.mape_eps);

  auto [adapted, report] =
      adapt(source_model, src_train_scaled, adapt_scaled, cfg.adaptation);
  out.adapted = std::move(adapted);
  out.report = std::move(report);

  const auto after_pred = forward_batch(out.adapted, test_scaled.features());
  out.after = evaluate_predictions("DWA", city, after_pred, test_scaled,
                                   cfg.mape_eps);
  out.row = improvement(city, out.before.mape, out.after.mape);

  out.adapted_provenance = src_train_scaled.provenance();
  out.adapted_provenance.insert(out.adapted_provenance.end(),
                                adapt_scaled.provenance().begin(),
                                adapt_scaled.provenance().end());
  log << "  DWOA mape " << out.before.mape << "%  ->  DWA mape "
      << out.after.mape << "%\n";
  return out;
}

inline void write_eval_report(const ExperimentConfig& cfg,
                              const EvalReport& r) {
  std::filesystem::create_directories(eval_dir(cfg));
  const auto path = eval_path(cfg, r.city, r.method);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << detail::eval_report_to_json(r).dump(1, '\t') << '\n';
}

inline void cmd_adapt(const ExperimentConfig& cfg, const std::string& city,
                      std::ostream& log) {
  const Site& site = find_target_site(cfg, city);
  const auto ckpt_path = checkpoint_dir(cfg) / "mlp_source.json";
  if (!std::filesystem::exists(ckpt_path))
    throw DataError("no source checkpoint at " + ckpt_path.string() +
                    "; run train-source first");
  const auto ckpt = load_mlp_checkpoint(ckpt_path);

  const Dataset source = load_validated_dataset(cfg, cfg.source_site, log);
  const auto splits = split_source(cfg, source);
  const Dataset src_train_scaled = apply_scaler(ckpt.scaler, splits.train_all);

  const Dataset target = load_validated_dataset(cfg, site, log);
  const auto outcome = adapt_and_evaluate(cfg, ckpt.model, ckpt.scaler,
                                          src_train_scaled, target, site.name,
                                          log);

  save_checkpoint(checkpoint_dir(cfg) /
                      ("mlp_adapted_" + detail::slug(site.name) + ".json"),
                  outcome.adapted, ckpt.scaler, cfg.adaptation.train,
                  outcome.adapted_provenance);
  write_eval_report(cfg, outcome.before);
  write_eval_report(cfg, outcome.after);
  log << render_improvement_table({outcome.row});
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

inline void cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  struct Baseline {
    const char* method;
    const char* file;
  };
  const Baseline baselines[] = {{"ADB", "adb.json"},
                                {"GRB", "grb.json"},
                                {"RFR", "rfr.json"},
                                {"SR", "sr.json"}};

  const auto mlp_path = checkpoint_dir(cfg) / "mlp_source.json";
  if (!std::filesystem::exists(mlp_path))
    throw DataError("no source checkpoint; run train-source first");
  const auto source_ckpt = load_mlp_checkpoint(mlp_path);

  for (const auto& site : cfg.target_sites) {
    const Dataset target = load_validated_dataset(cfg, site, log);
    auto [tgt_adapt, tgt_test] = split_dataset(
        target,
        {cfg.target_split_ratio, mix_seed(cfg.seed, 107), cfg.split_mode});
    const Dataset test_scaled = apply_scaler(source_ckpt.scaler, tgt_test);

    for (const auto& b : baselines) {
      const auto path = checkpoint_dir(cfg) / b.file;
      if (!std::filesystem::exists(path))
        throw MissingResults(std::string("missing checkpoint for ") +
                             b.method + " (" + path.string() + ")");
      const auto ckpt = load_ensemble_checkpoint(path);
      ensure_no_overlap(ckpt.train_provenance, test_scaled,
                        std::string(b.method) + " on " + site.name);
      const auto pred = predict(ckpt.model, test_scaled.features());
      write_eval_report(cfg, evaluate_predictions(b.method, site.name, pred,
                                                  test_scaled, cfg.mape_eps));
    }

    ensure_no_overlap(source_ckpt.train_provenance, test_scaled,
                      "DWOA on " + site.name);
    write_eval_report(
        cfg, evaluate_predictions(
                 "DWOA", site.name,
                 forward_batch(source_ckpt.model, test_scaled.features()),
                 test_scaled, cfg.mape_eps));

    const auto adapted_path =
        checkpoint_dir(cfg) /
        ("mlp_adapted_" + detail::slug(site.name) + ".json");
    if (!std::filesystem::exists(adapted_path))
      throw MissingResults("missing adapted checkpoint for " + site.name +
                           "; run adapt --city \"" + site.name + "\" first");
    const auto adapted = load_mlp_checkpoint(adapted_path);
    ensure_no_overlap(adapted.train_provenance, test_scaled,
                      "DWA on " + site.name);
    write_eval_report(
        cfg, evaluate_predictions(
                 "DWA", site.name,
                 forward_batch(adapted.model, test_scaled.features()),
                 test_scaled, cfg.mape_eps));
    log << "evaluated " << site.name << '\n';
  }
}

// ---------------------------------------------------------------------------
// reporting
// ---------------------------------------------------------------------------

inline void cmd_report(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<EvalReport> reports;
  std::vector<ImprovementRow> rows;
  for (const auto& site : cfg.target_sites) {
    std::optional<EvalReport> before, after;
    for (const auto& method : method_order()) {
      const auto path = eval_path(cfg, site.name, method);
      if (!std::filesystem::exists(path))
        throw MissingResults("no evaluation for (" + site.name + ", " +
                             method + "); expected " + path.string());
      std::ifstream in(path);
      nlohmann::json j;
      in >> j;
      auto report = detail::eval_report_from_json(j);
      if (method == "DWOA") before = report;
      if (method == "DWA") after = report;
      reports.push_back(std::move(report));
    }
    rows.push_back(improvement(site.name, before->mape, after->mape));
  }

  const auto comparison = render_comparison(reports);
  const auto hash = config_hash(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  detail::write_report_file(cfg.output_dir / "comparison.csv", hash,
                            comparison.csv);
  detail::write_report_file(cfg.output_dir / "improvement.csv", hash,
                            render_improvement_csv(rows));
  log << comparison.text_table << '\n'
      << render_improvement_table(rows) << "config " << hash << '\n';
}

// ---------------------------------------------------------------------------
// synth-demo: the whole workflow, offline
// ---------------------------------------------------------------------------

inline void cmd_synth_demo(const ExperimentConfig& cfg, std::ostream& log) {
  log << "generating synthetic source/target pair (seed " << cfg.synthetic.seed
      << ")\n";
  auto [source, target] = gen_synthetic_pair(cfg.synthetic);

  const auto models = train_source_suite(cfg, source, log);
  const std::string city = "synthetic-target";
  const auto outcome =
      adapt_and_evaluate(cfg, models.mlp, models.scaler, models.train_scaled,
                         target, city, log);

  // baselines transfer zero-shot to the target test split
  auto [tgt_adapt, tgt_test] = split_dataset(
      target,
      {cfg.target_split_ratio, mix_seed(cfg.seed, 107), cfg.split_mode});
  const Dataset test_scaled = apply_scaler(models.scaler, tgt_test);

  std::vector<EvalReport> reports = {
      evaluate_predictions("ADB", city,
                           predict(models.adb, test_scaled.features()),
                           test_scaled, cfg.mape_eps),
      evaluate_predictions("GRB", city,
                           predict(models.grb, test_scaled.features()),
                           test_scaled, cfg.mape_eps),
      evaluate_predictions("RFR", city,
                           predict(models.rfr, test_scaled.features()),
                           test_scaled, cfg.mape_eps),
      evaluate_predictions("SR", city,
                           predict(models.sr, test_scaled.features()),
                           test_scaled, cfg.mape_eps),
      outcome.before,
      outcome.after,
  };

  const auto hash = config_hash(cfg);
  std::filesystem::create_directories(checkpoint_dir(cfg));
  const auto& prov = models.train_scaled.provenance();
  save_checkpoint(checkpoint_dir(cfg) / "mlp_source.json", models.mlp,
                  models.scaler, cfg.train, prov);
  save_checkpoint(checkpoint_dir(cfg) /
                      ("mlp_adapted_" + detail::slug(city) + ".json"),
                  outcome.adapted, models.scaler, cfg.adaptation.train,
                  outcome.adapted_provenance);

  detail::write_report_file(
      cfg.output_dir / "source_comparison.csv", hash,
      detail::render_source_comparison_csv(models.source_comparison));
  const auto comparison = render_comparison(reports);
  detail::write_report_file(cfg.output_dir / "comparison.csv", hash,
                            comparison.csv);
  detail::write_report_file(cfg.output_dir / "improvement.csv", hash,
                            render_improvement_csv({outcome.row}));

  log << detail::render_source_comparison_table(models.source_comparison)
      << '\n'
      << comparison.text_table << '\n'
      << render_improvement_table({outcome.row}) << "config " << hash << '\n';
}

}  // namespace rainadapt
