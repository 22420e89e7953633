#pragma once

// From-scratch ensemble regressors over the CART base learner: random
// forest, AdaBoost.R2 (linear loss, weighted-median aggregation), gradient
// boosting on residuals, and stacking with an OLS meta-learner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rainadapt/common.hpp"
#include "rainadapt/dataset.hpp"
#include "rainadapt/tree.hpp"

namespace rainadapt {

enum class EnsembleVariant { forest, adaboost_r2, gradient_boost, stacking };

inline const char* to_string(EnsembleVariant v) {
  switch (v) {
    case EnsembleVariant::forest: return "forest";
    case EnsembleVariant::adaboost_r2: return "adaboost_r2";
    case EnsembleVariant::gradient_boost: return "gradient_boost";
    case EnsembleVariant::stacking: return "stacking";
  }
  return "unknown";
}

struct EnsembleModel {
  EnsembleVariant variant = EnsembleVariant::forest;
  std::size_t feature_dim = 0;

  std::vector<RegressionTree> trees;   // forest / adaboost / boosting members
  std::vector<double> member_weights;  // adaboost: ln(1/beta) per member

  double shrinkage = 0.0;        // gradient boosting
  double base_prediction = 0.0;  // gradient boosting: initial mean

  std::vector<EnsembleModel> members;      // stacking
  std::vector<std::string> member_names;   // stacking
  std::vector<double> meta_coefficients;   // stacking: intercept, then one
                                           // coefficient per member
};

double predict_row(const EnsembleModel& model, std::span<const double> x);

inline std::vector<double> predict(const EnsembleModel& model,
                                   const Matrix& features) {
  if (features.cols() != model.feature_dim)
    throw DimensionMismatch("ensemble predict: feature dim mismatch");
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i)
    out[i] = predict_row(model, features.row(i));
  return out;
}

namespace detail {

// weighted median: smallest prediction whose cumulative weight reaches half
// of the total
inline double weighted_median(std::vector<std::pair<double, double>> pw) {
  std::sort(pw.begin(), pw.end());
  double total = 0.0;
  for (const auto& [p, w] : pw) total += w;
  double cum = 0.0;
  for (const auto& [p, w] : pw) {
    cum += w;
    if (cum >= 0.5 * total) return p;
  }
  return pw.back().first;
}

}  // namespace detail

inline double predict_row(const EnsembleModel& model,
                          std::span<const double> x) {
  if (x.size() != model.feature_dim)
    throw DimensionMismatch("ensemble predict: feature dim mismatch");
  switch (model.variant) {
    case EnsembleVariant::forest: {
      double s = 0.0;
      for (const auto& t : model.trees) s += t.predict_row(x);
      return s / static_cast<double>(model.trees.size());
    }
    case EnsembleVariant::adaboost_r2: {
      std::vector<std::pair<double, double>> pw;
      pw.reserve(model.trees.size());
      for (std::size_t t = 0; t < model.trees.size(); ++t)
        pw.emplace_back(model.trees[t].predict_row(x),
                        model.member_weights[t]);
      return detail::weighted_median(std::move(pw));
    }
    case EnsembleVariant::gradient_boost: {
      double s = model.base_prediction;
      for (const auto& t : model.trees) s += model.shrinkage * t.predict_row(x);
      return s;
    }
    case EnsembleVariant::stacking: {
      double s = model.meta_coefficients[0];
      for (std::size_t m = 0; m < model.members.size(); ++m)
        s += model.meta_coefficients[m + 1] * predict_row(model.members[m], x);
      return s;
    }
  }
  throw NumericError("unknown ensemble variant");
}

// ---------------------------------------------------------------------------
// random forest
// ---------------------------------------------------------------------------

struct ForestOptions {
  bool bootstrap = true;
  bool feature_subsample = true;  // ceil(sqrt(d)) features per split
};

// Per-member seeds are seed + member_index, so concurrent fits would stay
// reproducible.
inline EnsembleModel fit_forest(const Dataset& ds, std::size_t n_trees,
                                const TreeParams& params,
                                const ForestOptions& options = {}) {
  if (n_trees < 1) throw ConfigError("fit_forest: n_trees must be >= 1");
  if (ds.n() < 2 * params.min_samples_leaf)
    throw InsufficientData("fit_forest: too few rows");

  EnsembleModel model;
  model.variant = EnsembleVariant::forest;
  model.feature_dim = ds.feature_dim();

  const std::size_t max_features =
      options.feature_subsample
          ? static_cast<std::size_t>(std::ceil(
                std::sqrt(static_cast<double>(ds.feature_dim()))))
          : 0;

  for (std::size_t t = 0; t < n_trees; ++t) {
    std::mt19937_64 rng(params.seed + t);
    std::vector<std::size_t> rows(ds.n());
    if (options.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, ds.n() - 1);
      for (auto& r : rows) r = pick(rng);
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    TreeFitOptions opts;
    opts.max_features = max_features;
    opts.rng = &rng;
    model.trees.push_back(fit_tree_on(ds, std::move(rows), params, opts));
  }
  return model;
}

// ---------------------------------------------------------------------------
// AdaBoost.R2
// ---------------------------------------------------------------------------

struct AdaboostRound {
  double avg_loss = 0.0;  // weighted mean of max-normalized losses
  double beta = 0.0;
  std::vector<double> sample_weights;  // after update + renormalization
};

namespace detail {

// Systematic resampling: positions (k + 1/2)/N walked through the weight
// CDF. Deterministic, so boosting rounds are reproducible and traceable.
inline std::vector<std::size_t> systematic_resample(
    std::span<const double> weights) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> out(n);
  double cum = weights[0];
  std::size_t idx = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    while (u >= cum && idx + 1 < n) cum += weights[++idx];
    out[k] = idx;
  }
  return out;
}

}  // namespace detail

inline constexpr double kAdaboostBetaFloor = 1e-10;

inline EnsembleModel fit_adaboost_r2(const Dataset& ds, std::size_t n_rounds,
                                     const TreeParams& params,
                                     std::vector<AdaboostRound>* trace =
                                         nullptr) {
  if (n_rounds < 1) throw ConfigError("fit_adaboost_r2: n_rounds must be >= 1");
  const std::size_t n = ds.n();
  if (n < 2 * params.min_samples_leaf)
    throw InsufficientData("fit_adaboost_r2: too few rows");

  EnsembleModel model;
  model.variant = EnsembleVariant::adaboost_r2;
  model.feature_dim = ds.feature_dim();

  std::vector<double> weights(n, 1.0 / static_cast<double>(n));
  for (std::size_t round = 0; round < n_rounds; ++round) {
    const auto rows = detail::systematic_resample(weights);
    RegressionTree tree =
        fit_tree_on(ds, {rows.begin(), rows.end()}, params);

    // losses over the original samples, normalized by the largest residual
    const auto pred = tree.predict(ds.features());
    double max_err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      max_err = std::max(max_err, std::fabs(pred[i] - ds.targets()[i]));

    if (max_err <= 0.0) {
      // perfect member: capped beta gives it a dominant (finite) vote
      model.trees.push_back(std::move(tree));
      model.member_weights.push_back(std::log(1.0 / kAdaboostBetaFloor));
      if (trace) trace->push_back({0.0, kAdaboostBetaFloor, weights});
      break;
    }

    double avg_loss = 0.0;
    std::vector<double> losses(n);
    for (std::size_t i = 0; i < n; ++i) {
      losses[i] = std::fabs(pred[i] - ds.targets()[i]) / max_err;
      avg_loss += weights[i] * losses[i];
    }

    if (avg_loss >= 0.5) {
      // no better than random on the weighted sample: stop; keep the round
      // only when the ensemble would otherwise be empty
      if (model.trees.empty()) {
        model.trees.push_back(std::move(tree));
        model.member_weights.push_back(1.0);
        if (trace) trace->push_back({avg_loss, 1.0, weights});
      }
      break;
    }

    const double beta = std::max(avg_loss / (1.0 - avg_loss),
                                 kAdaboostBetaFloor);
    model.trees.push_back(std::move(tree));
    model.member_weights.push_back(std::log(1.0 / beta));

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] *= std::pow(beta, 1.0 - losses[i]);
      total += weights[i];
    }
    for (auto& w : weights) w /= total;
    if (trace) trace->push_back({avg_loss, beta, weights});
  }
  return model;
}

// ---------------------------------------------------------------------------
// gradient boosting
// ---------------------------------------------------------------------------

// n_rounds = 0 is allowed and predicts the target mean everywhere.
inline EnsembleModel fit_gradient_boost(const Dataset& ds,
                                        std::size_t n_rounds, double shrinkage,
                                        const TreeParams& params) {
  if (!(shrinkage > 0.0 && shrinkage <= 1.0))
    throw ConfigError("fit_gradient_boost: shrinkage must be in (0, 1]");
  const std::size_t n = ds.n();
  if (n < 2 * params.min_samples_leaf)
    throw InsufficientData("fit_gradient_boost: too few rows");

  EnsembleModel model;
  model.variant = EnsembleVariant::gradient_boost;
  model.feature_dim = ds.feature_dim();
  model.shrinkage = shrinkage;
  model.base_prediction =
      std::accumulate(ds.targets().begin(), ds.targets().end(), 0.0) /
      static_cast<double>(n);

  std::vector<double> current(n, model.base_prediction);
  std::vector<std::size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), 0);

  for (std::size_t round = 0; round < n_rounds; ++round) {
    std::vector<double> residuals(n);
    for (std::size_t i = 0; i < n; ++i)
      residuals[i] = ds.targets()[i] - current[i];
    Dataset residual_ds(ds.features(), residuals, ds.provenance());
    RegressionTree tree = fit_tree_on(residual_ds, all_rows, params);
    const auto step = tree.predict(ds.features());
    for (std::size_t i = 0; i < n; ++i) current[i] += shrinkage * step[i];
    model.trees.push_back(std::move(tree));
  }
  return model;
}

// ---------------------------------------------------------------------------
// stacking
// ---------------------------------------------------------------------------

struct StackingMember {
  std::string name;
  std::function<EnsembleModel(const Dataset&)> fit;
};

namespace detail {

// OLS with intercept via normal equations; on singularity retries once with
// ridge 1e-8 on the diagonal.
inline std::vector<double> ols_with_intercept(const Matrix& z,
                                              std::span<const double> y) {
  const std::size_t n = z.rows();
  const std::size_t m = z.cols() + 1;
  Matrix design(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (std::size_t c = 0; c < z.cols(); ++c) design(i, c + 1) = z(i, c);
  }
  Matrix gram(m, m);
  std::vector<double> rhs(m, 0.0);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += design(i, a) * design(i, b);
      gram(a, b) = s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += design(i, a) * y[i];
    rhs[a] = s;
  }

  if (auto sol = solve_linear(gram, rhs)) return *sol;
  for (std::size_t a = 0; a < m; ++a) gram(a, a) += 1e-8;
  if (auto sol = solve_linear(gram, rhs)) return *sol;
  throw SingularMetaProblem("stacking meta problem singular even with ridge");
}

}  // namespace detail

// Out-of-fold member predictions feed the OLS meta-learner; members are
// refit on the full data for inference. Folds are contiguous blocks.
inline EnsembleModel fit_stacking(const Dataset& ds,
                                  const std::vector<StackingMember>& members,
                                  std::size_t folds,
                                  Matrix* oof_out = nullptr) {
  if (folds < 2) throw ConfigError("fit_stacking: folds must be >= 2");
  if (members.empty()) throw ConfigError("fit_stacking: no members");
  const std::size_t n = ds.n();
  if (n < folds) throw InsufficientData("fit_stacking: fewer rows than folds");

  Matrix oof(n, members.size());
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t begin = f * n / folds;
    const std::size_t end = (f + 1) * n / folds;
    std::vector<std::size_t> train_rows, hold_rows;
    for (std::size_t i = 0; i < n; ++i)
      (i >= begin && i < end ? hold_rows : train_rows).push_back(i);
    const Dataset train = ds.select(train_rows);
    const Dataset hold = ds.select(hold_rows);
    for (std::size_t m = 0; m < members.size(); ++m) {
      const EnsembleModel fitted = members[m].fit(train);
      const auto pred = predict(fitted, hold.features());
      for (std::size_t i = 0; i < hold_rows.size(); ++i)
        oof(hold_rows[i], m) = pred[i];
    }
  }

  EnsembleModel model;
  model.variant = EnsembleVariant::stacking;
  model.feature_dim = ds.feature_dim();
  model.meta_coefficients = detail::ols_with_intercept(oof, ds.targets());
  if (oof_out) *oof_out = oof;
  for (const auto& member : members) {
    model.members.push_back(member.fit(ds));
    model.member_names.push_back(member.name);
  }
  return model;
}

}  // namespace rainadapt
