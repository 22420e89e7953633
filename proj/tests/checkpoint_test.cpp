#include "rainadapt/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace rainadapt;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "rainadapt_ckpt";
  std::filesystem::create_directories(dir);
  return dir / name;
}

Dataset random_dataset(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix f(n, dim);
  std::vector<double> y(n);
  std::vector<Provenance> prov(n);
  Date d{2009, 4, 1};
  for (auto& v : f.data()) v = normal(rng);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = f(i, 0) - 0.5 * f(i, 1 % dim) + 0.2 * normal(rng);
    prov[i] = {"ckpt", d};
    d = add_days(d, 1);
  }
  return Dataset(std::move(f), std::move(y), std::move(prov));
}

TEST(Checkpoint, MlpRoundTripPredictsBitExactly) {
  auto ds = random_dataset(150, 6, 1);
  TrainConfig cfg;
  cfg.max_epochs = 10;
  cfg.patience = 10;
  cfg.seed = 4;
  auto [m, report] = train_source(init_mlp({6, {12, 6}, 9}), ds, ds, cfg);

  Scaler scaler{std::vector<double>(6, 0.25), std::vector<double>(6, 1.75)};
  auto path = temp_file("mlp.json");
  save_checkpoint(path, m, scaler, cfg, ds.provenance());

  auto loaded = load_mlp_checkpoint(path);
  EXPECT_EQ(loaded.model.spec.input_dim, 6u);
  EXPECT_EQ(loaded.model.weights, m.weights);
  EXPECT_EQ(loaded.model.biases, m.biases);
  EXPECT_EQ(loaded.scaler.mean, scaler.mean);
  EXPECT_EQ(loaded.scaler.stddev, scaler.stddev);
  EXPECT_EQ(loaded.train.seed, cfg.seed);
  EXPECT_EQ(loaded.train_provenance, ds.provenance());

  auto before = forward_batch(m, ds.features());
  auto after = forward_batch(loaded.model, ds.features());
  for (std::size_t i = 0; i < before.size(); ++i)
    EXPECT_EQ(before[i], after[i]);  // bit-exact

  EXPECT_EQ(checkpoint_variant(path), "mlp");
}

TEST(Checkpoint, EnsembleVariantsRoundTrip) {
  auto ds = random_dataset(120, 4, 2);
  Scaler scaler{std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)};
  TreeParams p{4, 2, 3};

  std::vector<EnsembleModel> models;
  models.push_back(fit_forest(ds, 5, p));
  models.push_back(fit_adaboost_r2(ds, 5, p));
  models.push_back(fit_gradient_boost(ds, 5, 0.3, p));
  models.push_back(fit_stacking(
      ds,
      {{"stump", [&](const Dataset& d) { return fit_forest(d, 1, {1, 2, 0}, {false, false}); }},
       {"boost", [&](const Dataset& d) { return fit_gradient_boost(d, 3, 0.5, {3, 2, 0}); }}},
      4));

  for (const auto& model : models) {
    auto path = temp_file(std::string("ens_") + to_string(model.variant) + ".json");
    save_checkpoint(path, model, scaler, ds.provenance());
    EXPECT_EQ(checkpoint_variant(path), to_string(model.variant));

    auto loaded = load_ensemble_checkpoint(path);
    EXPECT_EQ(loaded.model.variant, model.variant);
    auto before = predict(model, ds.features());
    auto after = predict(loaded.model, ds.features());
    for (std::size_t i = 0; i < before.size(); ++i)
      EXPECT_EQ(before[i], after[i]);  // bit-exact
  }
}

TEST(Checkpoint, RejectsGarbageAndWrongVariant) {
  auto garbage = temp_file("garbage.json");
  {
    std::ofstream out(garbage);
    out << "not json at all {";
  }
  EXPECT_THROW(load_mlp_checkpoint(garbage), DataError);

  auto wrong_format = temp_file("wrong_format.json");
  {
    std::ofstream out(wrong_format);
    out << R"({"format": "something-else", "version": 1})";
  }
  EXPECT_THROW(load_mlp_checkpoint(wrong_format), DataError);

  auto ds = random_dataset(40, 3, 5);
  auto forest_path = temp_file("forest_for_mlp.json");
  save_checkpoint(forest_path, fit_forest(ds, 2, {2, 2, 0}),
                  Scaler{{0, 0, 0}, {1, 1, 1}}, ds.provenance());
  EXPECT_THROW(load_mlp_checkpoint(forest_path), DataError);

  EXPECT_THROW(load_mlp_checkpoint(temp_file("missing.json")), IoError);
}

TEST(Checkpoint, UnsupportedVersionRejected) {
  auto path = temp_file("future_version.json");
  {
    std::ofstream out(path);
    out << R"({"format": "rainadapt-checkpoint", "version": 99, "variant": "mlp"})";
  }
  EXPECT_THROW(load_mlp_checkpoint(path), DataError);
}

}  // namespace
