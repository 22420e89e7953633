#pragma once

// Experiment configuration: one JSON file drives the whole pipeline. A
// single master seed derives every component seed, so a (config, seed)
// pair pins every random choice in the run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainadapt/common.hpp"
#include "rainadapt/dataset.hpp"
#include "rainadapt/ingest.hpp"
#include "rainadapt/mlp.hpp"
#include "rainadapt/synthetic.hpp"
#include "rainadapt/tree.hpp"

namespace rainadapt {

struct BaselineConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 5;
  std::size_t boost_rounds = 100;
  double shrinkage = 0.1;
  std::size_t stacking_folds = 5;
  std::uint64_t seed = 0;

  TreeParams tree_params() const {
    return {max_depth, min_samples_leaf, seed};
  }
};

struct ExperimentConfig {
  Site source_site{"Dhaka", 23.8103, 90.4125};
  std::vector<Site> target_sites{{"Paris", 48.8566, 2.3522},
                                 {"Los Angeles", 34.0522, -118.2437},
                                 {"Tokyo", 35.6762, 139.6503}};
  DateRange range{{2003, 1, 1}, {2023, 1, 1}};

  double source_split_ratio = 0.8;  // source train / test
  double validation_ratio = 0.9;    // early-stopping split inside the train part
  double target_split_ratio = 0.5;  // target adaptation / test
  SplitMode split_mode = SplitMode::chronological;

  MlpSpec mlp;
  TrainConfig train;
  AdaptationConfig adaptation;
  BaselineConfig baselines;
  ShiftSpec synthetic;

  double mape_eps = 0.1;  // mm/day; dry-day exclusion threshold
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
};

// Component seeds are always derived from the master seed; fixed stream ids
// keep them independent.
inline void derive_component_seeds(ExperimentConfig& cfg) {
  cfg.mlp.seed = mix_seed(cfg.seed, 100);
  cfg.train.seed = mix_seed(cfg.seed, 101);
  cfg.adaptation.train.seed = mix_seed(cfg.seed, 102);
  cfg.baselines.seed = mix_seed(cfg.seed, 103);
  cfg.synthetic.seed = mix_seed(cfg.seed, 104);
}

inline void validate_config(const ExperimentConfig& cfg) {
  validate_site(cfg.source_site);
  if (cfg.target_sites.empty())
    throw ConfigError("at least one target site is required");
  for (const auto& s : cfg.target_sites) validate_site(s);
  validate_range(cfg.range);
  for (double ratio : {cfg.source_split_ratio, cfg.validation_ratio,
                       cfg.target_split_ratio})
    if (!(ratio > 0.0 && ratio < 1.0))
      throw ConfigError("split ratios must lie strictly between 0 and 1");
  validate_mlp_spec(cfg.mlp);
  validate_train_config(cfg.train);
  validate_adaptation_config(cfg.adaptation);
  validate_tree_params(cfg.baselines.tree_params());
  if (!(cfg.baselines.shrinkage > 0.0 && cfg.baselines.shrinkage <= 1.0))
    throw ConfigError("shrinkage must be in (0, 1]");
  if (cfg.baselines.stacking_folds < 2)
    throw ConfigError("stacking_folds must be >= 2");
  if (cfg.mape_eps < 0.0) throw ConfigError("mape_eps must be >= 0");
  validate_shift_spec(cfg.synthetic);
}

namespace detail {

using nlohmann::json;

inline Site site_from_json(const json& j) {
  return {j.at("name").get<std::string>(), j.at("latitude").get<double>(),
          j.at("longitude").get<double>()};
}

inline json site_to_json(const Site& s) {
  return json{{"name", s.name},
              {"latitude", s.latitude},
              {"longitude", s.longitude}};
}

inline Date date_from_json(const json& j) {
  auto d = parse_iso_date(j.get<std::string>());
  if (!d) throw ConfigError("bad date in config: " + j.get<std::string>());
  return *d;
}

}  // namespace detail

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["source_site"] = detail::site_to_json(cfg.source_site);
  j["target_sites"] = nlohmann::json::array();
  for (const auto& s : cfg.target_sites)
    j["target_sites"].push_back(detail::site_to_json(s));
  j["date_range"] = {{"start", to_iso(cfg.range.start)},
                     {"end", to_iso(cfg.range.end)}};
  j["source_split_ratio"] = cfg.source_split_ratio;
  j["validation_ratio"] = cfg.validation_ratio;
  j["target_split_ratio"] = cfg.target_split_ratio;
  j["split_mode"] =
      cfg.split_mode == SplitMode::chronological ? "chronological" : "shuffled";
  j["mlp"] = {{"hidden_dims", cfg.mlp.hidden_dims}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience}};
  j["adaptation"] = {
      {"lambda1", cfg.adaptation.lambda1},
      {"lambda2", cfg.adaptation.lambda2},
      {"warm_start", cfg.adaptation.warm_start},
      {"train",
       {{"learning_rate", cfg.adaptation.train.learning_rate},
        {"batch_size", cfg.adaptation.train.batch_size},
        {"max_epochs", cfg.adaptation.train.max_epochs},
        {"patience", cfg.adaptation.train.patience}}}};
  j["baselines"] = {{"n_trees", cfg.baselines.n_trees},
                    {"max_depth", cfg.baselines.max_depth},
                    {"min_samples_leaf", cfg.baselines.min_samples_leaf},
                    {"boost_rounds", cfg.baselines.boost_rounds},
                    {"shrinkage", cfg.baselines.shrinkage},
                    {"stacking_folds", cfg.baselines.stacking_folds}};
  j["synthetic"] = {{"n_source", cfg.synthetic.n_source},
                    {"n_target", cfg.synthetic.n_target},
                    {"feature_shift", cfg.synthetic.feature_shift},
                    {"response_scale", cfg.synthetic.response_scale},
                    {"noise_std", cfg.synthetic.noise_std}};
  j["mape_eps"] = cfg.mape_eps;
  j["cache_dir"] = cfg.cache_dir.string();
  j["output_dir"] = cfg.output_dir.string();
  j["seed"] = cfg.seed;
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("source_site"))
    cfg.source_site = detail::site_from_json(j.at("source_site"));
  if (j.contains("target_sites")) {
    cfg.target_sites.clear();
    for (const auto& s : j.at("target_sites"))
      cfg.target_sites.push_back(detail::site_from_json(s));
  }
  if (j.contains("date_range")) {
    cfg.range.start = detail::date_from_json(j.at("date_range").at("start"));
    cfg.range.end = detail::date_from_json(j.at("date_range").at("end"));
  }
  cfg.source_split_ratio = j.value("source_split_ratio", cfg.source_split_ratio);
  cfg.validation_ratio = j.value("validation_ratio", cfg.validation_ratio);
  cfg.target_split_ratio = j.value("target_split_ratio", cfg.target_split_ratio);
  if (j.contains("split_mode")) {
    const auto mode = j.at("split_mode").get<std::string>();
    if (mode == "chronological")
      cfg.split_mode = SplitMode::chronological;
    else if (mode == "shuffled")
      cfg.split_mode = SplitMode::shuffled;
    else
      throw ConfigError("unknown split_mode: " + mode);
  }
  if (j.contains("mlp"))
    cfg.mlp.hidden_dims = j.at("mlp").value("hidden_dims", cfg.mlp.hidden_dims);
  if (j.contains("train")) {
    const auto& t = j.at("train");
    cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
    cfg.train.patience = t.value("patience", cfg.train.patience);
  }
  cfg.adaptation.train = cfg.train;
  if (j.contains("adaptation")) {
    const auto& a = j.at("adaptation");
    cfg.adaptation.lambda1 = a.value("lambda1", cfg.adaptation.lambda1);
    cfg.adaptation.lambda2 = a.value("lambda2", cfg.adaptation.lambda2);
    cfg.adaptation.warm_start = a.value("warm_start", cfg.adaptation.warm_start);
    if (a.contains("train")) {
      const auto& t = a.at("train");
      cfg.adaptation.train.learning_rate =
          t.value("learning_rate", cfg.adaptation.train.learning_rate);
      cfg.adaptation.train.batch_size =
          t.value("batch_size", cfg.adaptation.train.batch_size);
      cfg.adaptation.train.max_epochs =
          t.value("max_epochs", cfg.adaptation.train.max_epochs);
      cfg.adaptation.train.patience =
          t.value("patience", cfg.adaptation.train.patience);
    }
  }
  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    cfg.baselines.n_trees = b.value("n_trees", cfg.baselines.n_trees);
    cfg.baselines.max_depth = b.value("max_depth", cfg.baselines.max_depth);
    cfg.baselines.min_samples_leaf =
        b.value("min_samples_leaf", cfg.baselines.min_samples_leaf);
    cfg.baselines.boost_rounds =
        b.value("boost_rounds", cfg.baselines.boost_rounds);
    cfg.baselines.shrinkage = b.value("shrinkage", cfg.baselines.shrinkage);
    cfg.baselines.stacking_folds =
        b.value("stacking_folds", cfg.baselines.stacking_folds);
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    cfg.synthetic.n_source = s.value("n_source", cfg.synthetic.n_source);
    cfg.synthetic.n_target = s.value("n_target", cfg.synthetic.n_target);
    cfg.synthetic.feature_shift =
        s.value("feature_shift", cfg.synthetic.feature_shift);
    cfg.synthetic.response_scale =
        s.value("response_scale", cfg.synthetic.response_scale);
    cfg.synthetic.noise_std = s.value("noise_std", cfg.synthetic.noise_std);
  }
  cfg.mape_eps = j.value("mape_eps", cfg.mape_eps);
  cfg.cache_dir = j.value("cache_dir", cfg.cache_dir.string());
  cfg.output_dir = j.value("output_dir", cfg.output_dir.string());
  cfg.seed = j.value("seed", cfg.seed);

  derive_component_seeds(cfg);
  validate_config(cfg);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " +
                      e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig default_config() {
  ExperimentConfig cfg;
  derive_component_seeds(cfg);
  return cfg;
}

// FNV-1a over the canonical serialization; embedded in every report so
// outputs trace back to the exact configuration.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rainadapt
