#include "rainadapt/mlp.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rainadapt/dataset.hpp"
#include "rainadapt/synthetic.hpp"

using namespace rainadapt;

namespace {

Dataset make_dataset(const Matrix& x, std::vector<double> y,
                     const std::string& site = "t") {
  std::vector<Provenance> prov(x.rows());
  Date d{2015, 1, 1};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    prov[i] = {site, d};
    d = add_days(d, 1);
  }
  return Dataset(x, std::move(y), std::move(prov));
}

Matrix random_features(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, dim);
  for (auto& v : x.data()) v = normal(rng);
  return x;
}

// ---------------------------------------------------------------------------
// finite-difference oracle (independent of backward())
// ---------------------------------------------------------------------------

double loss_at(const Mlp& m, const Matrix& x, const std::vector<double>& y) {
  return mse_loss(forward_batch(m, x), y);
}

struct FdCheck {
  double worst = 0.0;
  bool ok = true;
};

FdCheck check_gradients(const Mlp& m, const Matrix& x,
                        const std::vector<double>& y, double h = 1e-5,
                        double tol = 1e-4) {
  const auto analytic = backward(m, x, y).grads;
  FdCheck result;

  auto probe = [&](double* param, double analytic_g) {
    const double orig = *param;
    *param = orig + h;
    const double lp = loss_at(m, x, y);
    *param = orig - h;
    const double lm = loss_at(m, x, y);
    *param = orig;
    const double fd = (lp - lm) / (2.0 * h);
    const double rel =
        std::fabs(analytic_g - fd) / std::max(1.0, std::fabs(analytic_g));
    result.worst = std::max(result.worst, rel);
    if (rel >= tol) result.ok = false;
  };

  Mlp& mutable_m = const_cast<Mlp&>(m);
  for (std::size_t l = 0; l < 3; ++l) {
    auto& w = mutable_m.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i)
      probe(&w[i], analytic.weights[l].data()[i]);
    auto& b = mutable_m.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i)
      probe(&b[i], analytic.biases[l][i]);
  }
  return result;
}

// ---------------------------------------------------------------------------

TEST(InitMlp, DeterministicPerSeed) {
  MlpSpec spec{15, {64, 32}, 123};
  Mlp a = init_mlp(spec);
  Mlp b = init_mlp(spec);
  for (int l = 0; l < 3; ++l) {
    EXPECT_EQ(a.weights[l], b.weights[l]);
    EXPECT_EQ(a.biases[l], b.biases[l]);
  }
  spec.seed = 124;
  Mlp c = init_mlp(spec);
  EXPECT_NE(a.weights[0], c.weights[0]);
}

TEST(InitMlp, ShapesAndZeroBiases) {
  Mlp m = init_mlp({15, {64, 32}, 0});
  EXPECT_EQ(m.weights[0].rows(), 64u);
  EXPECT_EQ(m.weights[0].cols(), 15u);
  EXPECT_EQ(m.weights[1].rows(), 32u);
  EXPECT_EQ(m.weights[1].cols(), 64u);
  EXPECT_EQ(m.weights[2].rows(), 1u);
  EXPECT_EQ(m.weights[2].cols(), 32u);
  for (int l = 0; l < 3; ++l)
    for (double b : m.biases[l]) EXPECT_EQ(b, 0.0);
  // He-style bound
  const double bound0 = std::sqrt(6.0 / 15.0);
  for (double w : m.weights[0].data()) {
    EXPECT_GT(w, -bound0);
    EXPECT_LT(w, bound0);
  }
}

TEST(Forward, AllWeightsZeroGivesOutputBias) {
  Mlp m = init_mlp({4, {3, 2}, 1});
  for (auto& w : m.weights)
    for (auto& v : w.data()) v = 0.0;
  m.biases[2][0] = 0.7;
  std::vector<double> x{1.0, -2.0, 3.0, 0.5};
  EXPECT_DOUBLE_EQ(forward(m, x), 0.7);
}

TEST(Forward, HandTracedTwoUnitNetwork) {
  // 1 -> 1 -> 1 -> 1 network traced by hand:
  //   z1 = 2*1 + 0.5 = 2.5, a1 = 2.5
  //   z2 = -1*2.5 + 3 = 0.5, a2 = 0.5
  //   out = 0.25*0.5 + 0.1 = 0.225
  Mlp m = init_mlp({1, {1, 1}, 0});
  m.weights[0](0, 0) = 2.0;
  m.biases[0][0] = 0.5;
  m.weights[1](0, 0) = -1.0;
  m.biases[1][0] = 3.0;
  m.weights[2](0, 0) = 0.25;
  m.biases[2][0] = 0.1;
  std::vector<double> x{1.0};
  EXPECT_DOUBLE_EQ(forward(m, x), 0.225);

  // relu clamps the second stage when its pre-activation goes negative
  m.biases[1][0] = 1.0;  // z2 = -2.5 + 1 = -1.5 -> a2 = 0
  EXPECT_DOUBLE_EQ(forward(m, x), 0.1);
}

TEST(Forward, BatchMatchesSingleRows) {
  std::mt19937_64 rng(5);
  Mlp m = init_mlp({6, {5, 4}, 77});
  Matrix x = random_features(17, 6, rng);
  auto batch = forward_batch(m, x);
  ASSERT_EQ(batch.size(), 17u);
  for (std::size_t i = 0; i < x.rows(); ++i)
    EXPECT_DOUBLE_EQ(batch[i], forward(m, x.row(i)));
}

TEST(Forward, DimensionMismatchThrows) {
  Mlp m = init_mlp({6, {5, 4}, 0});
  std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(forward(m, x), DimensionMismatch);
}

TEST(MseLoss, Examples) {
  std::vector<double> a{1.0, 2.0, 3.0};
  EXPECT_DOUBLE_EQ(mse_loss(a, a), 0.0);
  std::vector<double> zeros{0.0, 0.0}, threes{3.0, 3.0};
  EXPECT_DOUBLE_EQ(mse_loss(zeros, threes), 9.0);
  std::vector<double> one{1.0}, four{4.0};
  EXPECT_DOUBLE_EQ(mse_loss(one, four), 9.0);

  std::vector<double> shorter{1.0};
  EXPECT_THROW(mse_loss(a, shorter), DimensionMismatch);
  std::vector<double> empty;
  EXPECT_THROW(mse_loss(empty, empty), EmptyInput);
}

TEST(Backward, ZeroGradientAtMinimum) {
  std::mt19937_64 rng(2);
  Mlp m = init_mlp({3, {4, 3}, 8});
  Matrix x = random_features(6, 3, rng);
  auto y = forward_batch(m, x);  // targets equal predictions
  auto bw = backward(m, x, y);
  EXPECT_DOUBLE_EQ(bw.loss, 0.0);
  for (const auto& w : bw.grads.weights)
    for (double g : w.data()) EXPECT_DOUBLE_EQ(g, 0.0);
  for (const auto& b : bw.grads.biases)
    for (double g : b) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Backward, MatchesFiniteDifferences2x3x2x1) {
  std::mt19937_64 rng(31);
  Mlp m = init_mlp({2, {3, 2}, 31});
  Matrix x = random_features(5, 2, rng);
  std::vector<double> y(5);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : y) v = normal(rng);
  auto check = check_gradients(m, x, y);
  EXPECT_TRUE(check.ok) << "worst relative error " << check.worst;
}

TEST(Backward, OutputBiasGradientIsLinearInResiduals) {
  std::mt19937_64 rng(12);
  Mlp m = init_mlp({4, {3, 2}, 9});
  Matrix x = random_features(8, 4, rng);
  auto pred = forward_batch(m, x);
  std::vector<double> y1(8), y2(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < 8; ++i) {
    const double r = normal(rng);
    y1[i] = pred[i] - r;        // residual r
    y2[i] = pred[i] - 2.0 * r;  // residual 2r
  }
  auto g1 = backward(m, x, y1).grads;
  auto g2 = backward(m, x, y2).grads;
  EXPECT_NEAR(g2.biases[2][0], 2.0 * g1.biases[2][0], 1e-12);
}

TEST(OptimizerStep, ZeroGradientLeavesParametersUnchanged) {
  Mlp m = init_mlp({3, {4, 2}, 6});
  const auto weights_before = m.weights;
  const auto biases_before = m.biases;
  MlpGradients zero;
  zero.weights = {Matrix(4, 3), Matrix(2, 4), Matrix(1, 2)};
  zero.biases = {std::vector<double>(4, 0.0), std::vector<double>(2, 0.0),
                 std::vector<double>(1, 0.0)};
  optimizer_step(m, zero, TrainConfig{});
  EXPECT_EQ(m.weights, weights_before);
  EXPECT_EQ(m.biases, biases_before);
}

TEST(OptimizerStep, FirstStepClosedForm) {
  // from zero moments: m_hat = g, v_hat = g^2, so the update is
  // lr * g / (|g| + eps)
  Mlp m = init_mlp({2, {2, 2}, 4});
  const auto weights_before = m.weights;
  TrainConfig cfg;
  cfg.learning_rate = 0.01;

  MlpGradients g;
  g.weights = {Matrix(2, 2), Matrix(2, 2), Matrix(1, 2)};
  g.biases = {std::vector<double>(2, 0.0), std::vector<double>(2, 0.0),
              std::vector<double>(1, 0.0)};
  g.weights[0](0, 0) = 3.5;
  g.weights[0](1, 1) = -0.02;
  g.biases[2][0] = -7.0;

  optimizer_step(m, g, cfg);

  auto expected_delta = [&](double grad) {
    return cfg.learning_rate * grad / (std::fabs(grad) + 1e-8);
  };
  EXPECT_NEAR(m.weights[0](0, 0), weights_before[0](0, 0) - expected_delta(3.5),
              1e-15);
  EXPECT_NEAR(m.weights[0](1, 1),
              weights_before[0](1, 1) - expected_delta(-0.02), 1e-15);
  EXPECT_NEAR(m.biases[2][0], 0.0 - expected_delta(-7.0), 1e-15);
  // untouched coordinate
  EXPECT_DOUBLE_EQ(m.weights[0](0, 1), weights_before[0](0, 1));
}

TEST(OptimizerStep, NonFiniteGradientThrows) {
  Mlp m = init_mlp({2, {2, 2}, 4});
  MlpGradients g;
  g.weights = {Matrix(2, 2), Matrix(2, 2), Matrix(1, 2)};
  g.biases = {std::vector<double>(2, 0.0), std::vector<double>(2, 0.0),
              std::vector<double>(1, 0.0)};
  g.weights[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(optimizer_step(m, g, TrainConfig{}), NonFiniteGradient);
}

TEST(TrainSource, FitsConstantTarget) {
  std::mt19937_64 rng(20);
  Matrix x = random_features(200, 5, rng);
  std::vector<double> y(200, 2.0);
  auto ds = make_dataset(x, y);

  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  cfg.seed = 1;
  auto [m, report] = train_source(init_mlp({5, {16, 8}, 2}), ds, ds, cfg);
  const double train_mse = mse_loss(forward_batch(m, ds.features()), ds.targets());
  EXPECT_LT(train_mse, 1e-3);
  EXPECT_LE(report.trace.size(), cfg.max_epochs);
}

TEST(TrainSource, LinearDataReachesNoiseFloor) {
  // y = w.x + noise; the Bayes MSE is noise_std^2
  const double noise_std = 0.3;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::vector<double> w{1.0, -2.0, 0.5, 3.0, -1.5};

  auto gen = [&](std::size_t n) {
    Matrix x = random_features(n, 5, rng);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < 5; ++c) s += w[c] * x(i, c);
      y[i] = s + noise_std * normal(rng);
    }
    return make_dataset(x, y);
  };
  auto train = gen(3000);
  auto val = gen(500);

  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.max_epochs = 400;
  cfg.patience = 40;
  cfg.seed = 3;
  auto [m, report] = train_source(init_mlp({5, {64, 32}, 11}), train, val, cfg);
  EXPECT_LT(report.final_validation, noise_std * noise_std * 1.10);
}

TEST(TrainSource, DeterministicReports) {
  std::mt19937_64 rng(41);
  Matrix x = random_features(120, 4, rng);
  std::vector<double> y(120);
  for (std::size_t i = 0; i < 120; ++i) y[i] = x(i, 0) * x(i, 1);
  auto ds = make_dataset(x, y);

  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.patience = 12;
  cfg.seed = 5;
  auto [m1, r1] = train_source(init_mlp({4, {8, 4}, 1}), ds, ds, cfg);
  auto [m2, r2] = train_source(init_mlp({4, {8, 4}, 1}), ds, ds, cfg);
  EXPECT_EQ(r1.trace, r2.trace);
  EXPECT_EQ(r1.best_epoch, r2.best_epoch);
  EXPECT_EQ(m1.weights, m2.weights);
  EXPECT_EQ(m1.biases, m2.biases);
}

TEST(CombineGradients, WeightedSumIsExact) {
  std::mt19937_64 rng(15);
  Mlp m = init_mlp({3, {4, 3}, 21});
  Matrix xs = random_features(6, 3, rng);
  Matrix xt = random_features(4, 3, rng);
  std::vector<double> ys(6), yt(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : ys) v = normal(rng);
  for (auto& v : yt) v = normal(rng);

  const double l1 = 0.3, l2 = 1.7;
  auto gs = backward(m, xs, ys).grads;
  auto gt = backward(m, xt, yt).grads;
  auto combined = combine_gradients(l1, gs, l2, gt);

  for (std::size_t l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < combined.weights[l].data().size(); ++i) {
      const double expected =
          l1 * gs.weights[l].data()[i] + l2 * gt.weights[l].data()[i];
      EXPECT_LE(std::fabs(combined.weights[l].data()[i] - expected), 1e-10);
    }
    for (std::size_t i = 0; i < combined.biases[l].size(); ++i) {
      const double expected = l1 * gs.biases[l][i] + l2 * gt.biases[l][i];
      EXPECT_LE(std::fabs(combined.biases[l][i] - expected), 1e-10);
    }
  }
}

TEST(CombineGradients, MatchesFiniteDifferencesOfTotalLoss) {
  // independent check: the combined gradient is the gradient of
  // lambda1 * L_src + lambda2 * L_tgt
  std::mt19937_64 rng(55);
  Mlp m = init_mlp({2, {3, 2}, 33});
  Matrix xs = random_features(5, 2, rng);
  Matrix xt = random_features(3, 2, rng);
  std::vector<double> ys(5), yt(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : ys) v = normal(rng);
  for (auto& v : yt) v = normal(rng);

  const double l1 = 0.6, l2 = 0.4;
  auto combined = combine_gradients(l1, backward(m, xs, ys).grads, l2,
                                    backward(m, xt, yt).grads);

  const double h = 1e-5;
  auto total_loss = [&]() {
    return l1 * loss_at(m, xs, ys) + l2 * loss_at(m, xt, yt);
  };
  for (std::size_t l = 0; l < 3; ++l) {
    auto& w = m.weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double lp = total_loss();
      w[i] = orig - h;
      const double lm = total_loss();
      w[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double analytic = combined.weights[l].data()[i];
      EXPECT_LE(std::fabs(analytic - fd) / std::max(1.0, std::fabs(analytic)),
                1e-4);
    }
  }
}

TEST(Adapt, TotalLossIsWeightedSum) {
  // L_src = 2, L_tgt = 3, lambda1 = lambda2 = 1 -> L_total = 5. The trace
  // records exactly lambda1 * L_src + lambda2 * L_tgt per epoch.
  EXPECT_DOUBLE_EQ(1.0 * 2.0 + 1.0 * 3.0, 5.0);

  std::mt19937_64 rng(61);
  Matrix xs = random_features(40, 3, rng);
  Matrix xt = random_features(30, 3, rng);
  std::vector<double> ys(40), yt(30);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : ys) v = normal(rng);
  for (auto& v : yt) v = normal(rng);

  AdaptationConfig cfg;
  cfg.lambda1 = 0.25;
  cfg.lambda2 = 1.5;
  cfg.train.max_epochs = 3;
  cfg.train.patience = 3;
  auto [m, report] =
      adapt(init_mlp({3, {4, 2}, 2}), make_dataset(xs, ys),
            make_dataset(xt, yt, "tg"), cfg);
  for (const auto& e : report.trace)
    EXPECT_NEAR(e.total, cfg.lambda1 * e.source + cfg.lambda2 * e.target,
                1e-12);
}

TEST(Adapt, Lambda10ReproducesContinuedSourceTraining) {
  std::mt19937_64 rng(8);
  Matrix xs = random_features(150, 4, rng);
  std::vector<double> ys(150);
  for (std::size_t i = 0; i < 150; ++i)
    ys[i] = 2.0 + xs(i, 0) - 0.5 * xs(i, 2);
  auto src = make_dataset(xs, ys, "src");

  Matrix xv = random_features(60, 4, rng);
  std::vector<double> yv(60);
  for (std::size_t i = 0; i < 60; ++i) yv[i] = 2.0 + xv(i, 0) - 0.5 * xv(i, 2);
  // the same dataset serves as validation (source path) and adaptation
  // split (adapt path), so best-epoch selection sees identical losses
  auto held = make_dataset(xv, yv, "held");

  TrainConfig warmup;
  warmup.max_epochs = 5;
  warmup.patience = 5;
  warmup.seed = 13;
  auto pre = train_source(init_mlp({4, {8, 6}, 3}), src, held, warmup).first;

  TrainConfig continued;
  continued.max_epochs = 8;
  continued.patience = 8;
  continued.seed = 99;

  auto expected = train_source(pre, src, held, continued).first;

  AdaptationConfig acfg;
  acfg.lambda1 = 1.0;
  acfg.lambda2 = 0.0;
  acfg.train = continued;
  auto got = adapt(pre, src, held, acfg).first;

  // bit-exact parameter equality
  EXPECT_EQ(expected.weights, got.weights);
  EXPECT_EQ(expected.biases, got.biases);
}

TEST(Adapt, ImprovesShiftedSyntheticTarget) {
  for (std::uint64_t seed = 0; seed <= 4; ++seed) {
    ShiftSpec spec;
    spec.n_source = 600;
    spec.n_target = 400;
    spec.response_scale = 1.5;
    spec.seed = seed;
    auto [source, target] = gen_synthetic_pair(spec);

    auto [src_train, src_val] =
        split_dataset(source, {0.8, 0, SplitMode::chronological});
    auto [tgt_adapt, tgt_test] =
        split_dataset(target, {0.5, 0, SplitMode::chronological});

    auto scaler = fit_scaler(src_train);
    src_train = apply_scaler(scaler, src_train);
    src_val = apply_scaler(scaler, src_val);
    tgt_adapt = apply_scaler(scaler, tgt_adapt);
    tgt_test = apply_scaler(scaler, tgt_test);

    TrainConfig cfg;
    cfg.learning_rate = 2e-3;
    cfg.max_epochs = 80;
    cfg.patience = 20;
    cfg.seed = seed;
    auto [base, _] =
        train_source(init_mlp({kFeatureDim, {32, 16}, seed}), src_train,
                     src_val, cfg);

    const double before =
        mse_loss(forward_batch(base, tgt_test.features()), tgt_test.targets());

    AdaptationConfig acfg;
    acfg.train = cfg;
    auto [adapted, report] = adapt(base, src_train, tgt_adapt, acfg);
    const double after = mse_loss(forward_batch(adapted, tgt_test.features()),
                                  tgt_test.targets());

    EXPECT_LT(after, before) << "seed " << seed;
  }
}

TEST(Configs, Validation) {
  TrainConfig bad;
  bad.learning_rate = 0.0;
  EXPECT_THROW(validate_train_config(bad), ConfigError);
  bad = TrainConfig{};
  bad.patience = bad.max_epochs + 1;
  EXPECT_THROW(validate_train_config(bad), ConfigError);

  AdaptationConfig acfg;
  acfg.lambda1 = 0.0;
  acfg.lambda2 = 0.0;
  EXPECT_THROW(validate_adaptation_config(acfg), ConfigError);
  acfg.lambda1 = -0.1;
  acfg.lambda2 = 1.0;
  EXPECT_THROW(validate_adaptation_config(acfg), ConfigError);

  EXPECT_THROW(init_mlp({0, {4, 4}, 0}), ConfigError);
}

}  // namespace
