#pragma once

// Versioned model checkpoints. One JSON container for every model variant;
// doubles round-trip bit-exactly (shortest-representation serialization),
// so a reloaded model predicts identically.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rainadapt/common.hpp"
#include "rainadapt/dataset.hpp"
#include "rainadapt/ensemble.hpp"
#include "rainadapt/mlp.hpp"

namespace rainadapt {

inline constexpr const char* kCheckpointFormat = "rainadapt-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

using nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.rows() * m.cols())
    throw DataError("checkpoint: matrix payload size mismatch");
  m.data() = data;
  return m;
}

inline json scaler_to_json(const Scaler& s) {
  return json{{"mean", s.mean}, {"stddev", s.stddev}};
}

inline Scaler scaler_from_json(const json& j) {
  Scaler s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  if (s.mean.size() != s.stddev.size())
    throw DataError("checkpoint: scaler payload size mismatch");
  return s;
}

inline json provenance_to_json(const std::vector<Provenance>& prov) {
  json out = json::array();
  for (const auto& p : prov)
    out.push_back(json{{"site", p.site_id}, {"date", to_iso(p.date)}});
  return out;
}

inline std::vector<Provenance> provenance_from_json(const json& j) {
  std::vector<Provenance> out;
  for (const auto& e : j) {
    auto date = parse_iso_date(e.at("date").get<std::string>());
    if (!date) throw DataError("checkpoint: bad provenance date");
    out.push_back({e.at("site").get<std::string>(), *date});
  }
  return out;
}

inline json tree_to_json(const RegressionTree& t) {
  json nodes = json::array();
  for (const auto& nd : t.nodes())
    nodes.push_back(json{{"feature", nd.feature},
                         {"threshold", nd.threshold},
                         {"left", nd.left},
                         {"right", nd.right},
                         {"value", nd.value}});
  return json{{"feature_dim", t.feature_dim()}, {"nodes", nodes}};
}

inline RegressionTree tree_from_json(const json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& e : j.at("nodes")) {
    TreeNode nd;
    nd.feature = e.at("feature").get<int>();
    nd.threshold = e.at("threshold").get<double>();
    nd.left = e.at("left").get<int>();
    nd.right = e.at("right").get<int>();
    nd.value = e.at("value").get<double>();
    nodes.push_back(nd);
  }
  return RegressionTree(std::move(nodes),
                        j.at("feature_dim").get<std::size_t>());
}

inline json ensemble_to_json(const EnsembleModel& m) {
  json j;
  j["variant"] = to_string(m.variant);
  j["feature_dim"] = m.feature_dim;
  j["trees"] = json::array();
  for (const auto& t : m.trees) j["trees"].push_back(tree_to_json(t));
  j["member_weights"] = m.member_weights;
  j["shrinkage"] = m.shrinkage;
  j["base_prediction"] = m.base_prediction;
  j["members"] = json::array();
  for (const auto& member : m.members)
    j["members"].push_back(ensemble_to_json(member));
  j["member_names"] = m.member_names;
  j["meta_coefficients"] = m.meta_coefficients;
  return j;
}

inline EnsembleVariant variant_from_string(const std::string& s) {
  if (s == "forest") return EnsembleVariant::forest;
  if (s == "adaboost_r2") return EnsembleVariant::adaboost_r2;
  if (s == "gradient_boost") return EnsembleVariant::gradient_boost;
  if (s == "stacking") return EnsembleVariant::stacking;
  throw DataError("checkpoint: unknown ensemble variant " + s);
}

inline EnsembleModel ensemble_from_json(const json& j) {
  EnsembleModel m;
  m.variant = variant_from_string(j.at("variant").get<std::string>());
  m.feature_dim = j.at("feature_dim").get<std::size_t>();
  for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
  m.member_weights = j.at("member_weights").get<std::vector<double>>();
  m.shrinkage = j.at("shrinkage").get<double>();
  m.base_prediction = j.at("base_prediction").get<double>();
  for (const auto& e : j.at("members"))
    m.members.push_back(ensemble_from_json(e));
  m.member_names = j.at("member_names").get<std::vector<std::string>>();
  m.meta_coefficients = j.at("meta_coefficients").get<std::vector<double>>();
  return m;
}

inline json train_config_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.max_epochs = j.at("max_epochs").get<std::size_t>();
  c.patience = j.at("patience").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline json envelope(const std::string& variant) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["variant"] = variant;
  return j;
}

inline json read_envelope(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + " is not valid JSON: " +
                    e.what());
  }
  if (!j.contains("format") || j["format"] != kCheckpointFormat)
    throw DataError("not a rainadapt checkpoint: " + path.string());
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in " + path.string());
  return j;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out << j.dump(1, '\t') << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace detail

struct MlpCheckpoint {
  Mlp model;
  Scaler scaler;
  TrainConfig train;
  std::vector<Provenance> train_provenance;
};

struct EnsembleCheckpoint {
  EnsembleModel model;
  Scaler scaler;
  std::vector<Provenance> train_provenance;
};

inline void save_checkpoint(const std::filesystem::path& path, const Mlp& m,
                            const Scaler& scaler, const TrainConfig& train,
                            const std::vector<Provenance>& provenance) {
  auto j = detail::envelope("mlp");
  j["spec"] = {{"input_dim", m.spec.input_dim},
               {"hidden_dims", m.spec.hidden_dims},
               {"seed", m.spec.seed}};
  j["weights"] = nlohmann::json::array();
  for (const auto& w : m.weights) j["weights"].push_back(detail::matrix_to_json(w));
  j["biases"] = m.biases;
  j["scaler"] = detail::scaler_to_json(scaler);
  j["train_config"] = detail::train_config_to_json(train);
  j["train_provenance"] = detail::provenance_to_json(provenance);
  detail::write_json(path, j);
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const EnsembleModel& m, const Scaler& scaler,
                            const std::vector<Provenance>& provenance) {
  auto j = detail::envelope(to_string(m.variant));
  j["model"] = detail::ensemble_to_json(m);
  j["scaler"] = detail::scaler_to_json(scaler);
  j["train_provenance"] = detail::provenance_to_json(provenance);
  detail::write_json(path, j);
}

inline std::string checkpoint_variant(const std::filesystem::path& path) {
  return detail::read_envelope(path).at("variant").get<std::string>();
}

inline MlpCheckpoint load_mlp_checkpoint(const std::filesystem::path& path) {
  const auto j = detail::read_envelope(path);
  if (j.at("variant") != "mlp")
    throw DataError("checkpoint " + path.string() + " is not an mlp");
  MlpCheckpoint out;
  out.model.spec.input_dim = j.at("spec").at("input_dim").get<std::size_t>();
  out.model.spec.hidden_dims =
      j.at("spec").at("hidden_dims").get<std::array<std::size_t, 2>>();
  out.model.spec.seed = j.at("spec").at("seed").get<std::uint64_t>();
  for (const auto& w : j.at("weights"))
    out.model.weights.push_back(detail::matrix_from_json(w));
  out.model.biases =
      j.at("biases").get<std::vector<std::vector<double>>>();
  if (out.model.weights.size() != 3 || out.model.biases.size() != 3)
    throw DataError("checkpoint: mlp must have exactly 3 layers");
  out.model.reset_optimizer();
  out.scaler = detail::scaler_from_json(j.at("scaler"));
  out.train = detail::train_config_from_json(j.at("train_config"));
  out.train_provenance = detail::provenance_from_json(j.at("train_provenance"));
  return out;
}

inline EnsembleCheckpoint load_ensemble_checkpoint(
    const std::filesystem::path& path) {
  const auto j = detail::read_envelope(path);
  if (j.at("variant") == "mlp")
    throw DataError("checkpoint " + path.string() + " is an mlp, not a baseline");
  EnsembleCheckpoint out;
  out.model = detail::ensemble_from_json(j.at("model"));
  out.scaler = detail::scaler_from_json(j.at("scaler"));
  out.train_provenance = detail::provenance_from_json(j.at("train_provenance"));
  return out;
}

}  // namespace rainadapt
