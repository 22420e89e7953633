#pragma once

// CART regression tree: greedy best-split search minimizing the sum of
// child squared errors, midpoint thresholds, deterministic tie-breaking
// (lowest feature index, then lowest threshold).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "rainadapt/common.hpp"
#include "rainadapt/dataset.hpp"

namespace rainadapt {

struct TreeParams {
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 5;
  std::uint64_t seed = 0;
};

inline void validate_tree_params(const TreeParams& p) {
  if (p.max_depth < 1) throw ConfigError("max_depth must be >= 1");
  if (p.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
}

// relative slack for treating two candidate splits as tied
inline constexpr double kSplitTieTolerance = 1e-10;

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf prediction: mean of leaf targets

  bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  RegressionTree(std::vector<TreeNode> nodes, std::size_t feature_dim)
      : nodes_(std::move(nodes)), feature_dim_(feature_dim) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t feature_dim() const { return feature_dim_; }

  double predict_row(std::span<const double> x) const {
    if (x.size() != feature_dim_)
      throw DimensionMismatch("tree predict: feature dim mismatch");
    int idx = 0;
    while (!nodes_[static_cast<std::size_t>(idx)].is_leaf()) {
      const TreeNode& nd = nodes_[static_cast<std::size_t>(idx)];
      idx = x[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left
                                                                   : nd.right;
    }
    return nodes_[static_cast<std::size_t>(idx)].value;
  }

  std::vector<double> predict(const Matrix& features) const {
    std::vector<double> out(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i)
      out[i] = predict_row(features.row(i));
    return out;
  }

 private:
  std::vector<TreeNode> nodes_;
  std::size_t feature_dim_ = 0;
};

// Internal knobs the ensembles need: per-split feature subsampling driven
// by an external generator.
struct TreeFitOptions {
  std::size_t max_features = 0;  // 0 means all features
  std::mt19937_64* rng = nullptr;
};

namespace detail {

struct SplitCandidate {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& ds, const TreeParams& params,
              const TreeFitOptions& opts)
      : ds_(ds), params_(params), opts_(opts) {}

  RegressionTree build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(std::move(rows), 0);
    return RegressionTree(std::move(nodes_), ds_.feature_dim());
  }

 private:
  static double subset_sse(const Dataset& ds,
                           std::span<const std::size_t> rows) {
    double sum = 0.0;
    for (std::size_t r : rows) sum += ds.targets()[r];
    const double mean = sum / static_cast<double>(rows.size());
    double sse = 0.0;
    for (std::size_t r : rows) {
      const double d = ds.targets()[r] - mean;
      sse += d * d;
    }
    return sse;
  }

  std::vector<std::size_t> candidate_features() const {
    std::vector<std::size_t> all(ds_.feature_dim());
    std::iota(all.begin(), all.end(), 0);
    if (opts_.max_features == 0 || opts_.max_features >= all.size() ||
        opts_.rng == nullptr)
      return all;
    // sample without replacement, then restore index order so the
    // tie-break stays "lowest feature first"
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < opts_.max_features; ++i) {
      std::uniform_int_distribution<std::size_t> pick(0, all.size() - 1);
      const std::size_t j = pick(*opts_.rng);
      chosen.push_back(all[j]);
      all.erase(all.begin() + static_cast<std::ptrdiff_t>(j));
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
  }

  SplitCandidate best_split(std::span<const std::size_t> rows,
                            double node_sse) const {
    const std::size_t n = rows.size();
    const std::size_t min_leaf = params_.min_samples_leaf;
    SplitCandidate best;
    if (n < 2 * min_leaf) return best;

    // Candidates whose SSE agree within this slack count as tied; ties keep
    // the first candidate in (feature asc, threshold asc) order. Without the
    // slack, summation-order noise could override the documented tie-break.
    const double tie_tol = kSplitTieTolerance * std::max(1.0, node_sse);

    std::vector<std::pair<double, std::size_t>> order(n);
    std::vector<double> prefix_sum(n + 1, 0.0), prefix_sq(n + 1, 0.0);

    for (std::size_t f : candidate_features()) {
      for (std::size_t i = 0; i < n; ++i)
        order[i] = {ds_.features()(rows[i], f), rows[i]};
      std::sort(order.begin(), order.end());
      for (std::size_t i = 0; i < n; ++i) {
        const double y = ds_.targets()[order[i].second];
        prefix_sum[i + 1] = prefix_sum[i] + y;
        prefix_sq[i + 1] = prefix_sq[i] + y * y;
      }
      const double total_sum = prefix_sum[n];
      const double total_sq = prefix_sq[n];

      for (std::size_t k = min_leaf; k + min_leaf <= n; ++k) {
        if (order[k - 1].first == order[k].first) continue;
        const double left_n = static_cast<double>(k);
        const double right_n = static_cast<double>(n - k);
        const double sse_left =
            prefix_sq[k] - prefix_sum[k] * prefix_sum[k] / left_n;
        const double right_sum = total_sum - prefix_sum[k];
        const double sse_right =
            (total_sq - prefix_sq[k]) - right_sum * right_sum / right_n;
        const double sse = sse_left + sse_right;
        if (sse < best.sse - tie_tol) {
          best.found = true;
          best.feature = f;
          best.threshold = (order[k - 1].first + order[k].first) / 2.0;
          best.sse = sse;
        }
      }
    }
    return best;
  }

  // returns index of the created node
  int grow(std::vector<std::size_t> rows, std::size_t depth) {
    double sum = 0.0;
    for (std::size_t r : rows) sum += ds_.targets()[r];
    const double mean = sum / static_cast<double>(rows.size());

    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{});
    nodes_[static_cast<std::size_t>(index)].value = mean;

    if (depth >= params_.max_depth) return index;
    const double node_sse = subset_sse(ds_, rows);
    const SplitCandidate split = best_split(rows, node_sse);
    // split only when it strictly reduces the node's squared error
    if (!split.found || !(split.sse < node_sse)) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      if (ds_.features()(r, split.feature) < split.threshold)
        left.push_back(r);
      else
        right.push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int left_idx = grow(std::move(left), depth + 1);
    const int right_idx = grow(std::move(right), depth + 1);
    TreeNode& nd = nodes_[static_cast<std::size_t>(index)];
    nd.feature = static_cast<int>(split.feature);
    nd.threshold = split.threshold;
    nd.left = left_idx;
    nd.right = right_idx;
    return index;
  }

  const Dataset& ds_;
  const TreeParams& params_;
  const TreeFitOptions& opts_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

inline RegressionTree fit_tree_on(const Dataset& ds,
                                  std::vector<std::size_t> rows,
                                  const TreeParams& params,
                                  const TreeFitOptions& opts = {}) {
  validate_tree_params(params);
  if (rows.size() < 2 * params.min_samples_leaf)
    throw InsufficientData("fit_tree: need at least " +
                           std::to_string(2 * params.min_samples_leaf) +
                           " rows, got " + std::to_string(rows.size()));
  return detail::TreeBuilder(ds, params, opts).build(std::move(rows));
}

inline RegressionTree fit_tree(const Dataset& ds, const TreeParams& params) {
  std::vector<std::size_t> rows(ds.n());
  std::iota(rows.begin(), rows.end(), 0);
  return fit_tree_on(ds, std::move(rows), params);
}

}  // namespace rainadapt
