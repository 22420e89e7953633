#include "rainadapt/tree.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace rainadapt;

namespace {

Dataset make_dataset(const Matrix& x, std::vector<double> y) {
  std::vector<Provenance> prov(x.rows());
  Date d{2012, 1, 1};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    prov[i] = {"t", d};
    d = add_days(d, 1);
  }
  return Dataset(x, std::move(y), std::move(prov));
}

Dataset single_feature(std::vector<double> x, std::vector<double> y) {
  Matrix f(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) f(i, 0) = x[i];
  return make_dataset(f, std::move(y));
}

// ---------------------------------------------------------------------------
// exhaustive split oracle, independent of the implementation
// ---------------------------------------------------------------------------

struct OracleSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

double partition_sse(const Dataset& ds, std::size_t feature, double threshold) {
  double suml = 0.0, sumr = 0.0;
  std::size_t nl = 0, nr = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (ds.features()(i, feature) < threshold) {
      suml += ds.targets()[i];
      ++nl;
    } else {
      sumr += ds.targets()[i];
      ++nr;
    }
  }
  const double meanl = nl ? suml / static_cast<double>(nl) : 0.0;
  const double meanr = nr ? sumr / static_cast<double>(nr) : 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const double mean =
        ds.features()(i, feature) < threshold ? meanl : meanr;
    const double d = ds.targets()[i] - mean;
    sse += d * d;
  }
  return sse;
}

// Every (feature, midpoint) candidate, honoring min_samples_leaf and the
// documented tie rule: candidates within the tie tolerance keep the first
// in (lowest feature index, then lowest threshold) order.
OracleSplit brute_force_stump(const Dataset& ds, std::size_t min_leaf) {
  double sum = 0.0;
  for (double y : ds.targets()) sum += y;
  const double mean = sum / static_cast<double>(ds.n());
  double node_sse = 0.0;
  for (double y : ds.targets()) node_sse += (y - mean) * (y - mean);
  const double tie_tol = kSplitTieTolerance * std::max(1.0, node_sse);

  OracleSplit best;
  for (std::size_t f = 0; f < ds.feature_dim(); ++f) {
    std::vector<double> values;
    for (std::size_t i = 0; i < ds.n(); ++i)
      values.push_back(ds.features()(i, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t k = 1; k < values.size(); ++k) {
      const double threshold = (values[k - 1] + values[k]) / 2.0;
      std::size_t nl = 0;
      for (std::size_t i = 0; i < ds.n(); ++i)
        if (ds.features()(i, f) < threshold) ++nl;
      if (nl < min_leaf || ds.n() - nl < min_leaf) continue;
      const double sse = partition_sse(ds, f, threshold);
      if (sse < best.sse - tie_tol) {
        best.found = true;
        best.feature = f;
        best.threshold = threshold;
        best.sse = sse;
      }
    }
  }
  // a stump must strictly improve on the single-leaf fit
  if (best.found && !(best.sse < node_sse)) best.found = false;
  return best;
}

// ---------------------------------------------------------------------------

TEST(FitTree, FourPointStump) {
  // {(0,0),(1,0),(2,10),(3,10)}: brute force over the 3 candidate splits
  // picks x < 1.5 with leaf means 0 and 10 and total SSE 0
  auto ds = single_feature({0, 1, 2, 3}, {0, 0, 10, 10});
  ASSERT_DOUBLE_EQ(partition_sse(ds, 0, 0.5), 200.0 / 3.0);
  ASSERT_DOUBLE_EQ(partition_sse(ds, 0, 1.5), 0.0);
  ASSERT_DOUBLE_EQ(partition_sse(ds, 0, 2.5), 200.0 / 3.0);

  auto tree = fit_tree(ds, {1, 1, 0});
  const auto& root = tree.nodes()[0];
  ASSERT_FALSE(root.is_leaf());
  EXPECT_EQ(root.feature, 0);
  EXPECT_DOUBLE_EQ(root.threshold, 1.5);
  std::vector<double> x0{0.7}, x1{2.2};
  EXPECT_DOUBLE_EQ(tree.predict_row(x0), 0.0);
  EXPECT_DOUBLE_EQ(tree.predict_row(x1), 10.0);
}

TEST(FitTree, ConstantTargetsGiveSingleLeaf) {
  auto ds = single_feature({0, 1, 2, 3, 4}, {7, 7, 7, 7, 7});
  auto tree = fit_tree(ds, {4, 1, 0});
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_TRUE(tree.nodes()[0].is_leaf());
  std::vector<double> x{2.5};
  EXPECT_DOUBLE_EQ(tree.predict_row(x), 7.0);
}

TEST(FitTree, DepthOneMatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t min_leaf = 1 + rng() % 3;
    const std::size_t n = 2 * min_leaf + rng() % (50 - 2 * min_leaf + 1);
    const std::size_t dim = 1 + rng() % 5;
    Matrix f(n, dim);
    std::vector<double> y(n);
    for (auto& v : f.data()) v = normal(rng);
    for (auto& v : y) v = normal(rng);
    auto ds = make_dataset(f, y);

    auto oracle = brute_force_stump(ds, min_leaf);
    auto tree = fit_tree(ds, {1, min_leaf, 0});
    const auto& root = tree.nodes()[0];

    if (!oracle.found) {
      EXPECT_TRUE(root.is_leaf()) << "trial " << trial;
      continue;
    }
    ASSERT_FALSE(root.is_leaf()) << "trial " << trial;
    EXPECT_EQ(static_cast<std::size_t>(root.feature), oracle.feature)
        << "trial " << trial;
    EXPECT_DOUBLE_EQ(root.threshold, oracle.threshold) << "trial " << trial;
    const double sse = partition_sse(
        ds, static_cast<std::size_t>(root.feature), root.threshold);
    EXPECT_LE(std::fabs(sse - oracle.sse), 1e-9 * std::max(1.0, oracle.sse));
  }
}

TEST(FitTree, MinSamplesLeafHonored) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix f(40, 3);
  std::vector<double> y(40);
  for (auto& v : f.data()) v = normal(rng);
  for (auto& v : y) v = normal(rng);
  auto ds = make_dataset(f, y);

  const std::size_t min_leaf = 4;
  auto tree = fit_tree(ds, {10, min_leaf, 0});

  // count rows reaching each leaf
  std::vector<std::size_t> counts(tree.nodes().size(), 0);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    int idx = 0;
    while (!tree.nodes()[static_cast<std::size_t>(idx)].is_leaf()) {
      const auto& nd = tree.nodes()[static_cast<std::size_t>(idx)];
      idx = ds.features()(i, static_cast<std::size_t>(nd.feature)) <
                    nd.threshold
                ? nd.left
                : nd.right;
    }
    counts[static_cast<std::size_t>(idx)] += 1;
  }
  for (std::size_t i = 0; i < tree.nodes().size(); ++i)
    if (tree.nodes()[i].is_leaf()) EXPECT_GE(counts[i], min_leaf);
}

TEST(FitTree, EveryInternalNodeReducesSse) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix f(60, 2);
  std::vector<double> y(60);
  for (auto& v : f.data()) v = normal(rng);
  for (std::size_t i = 0; i < 60; ++i) y[i] = f(i, 0) * f(i, 1) + 0.1 * normal(rng);
  auto ds = make_dataset(f, y);
  auto tree = fit_tree(ds, {6, 2, 0});

  // walk the tree with row sets, checking children SSE < node SSE
  struct Item {
    int node;
    std::vector<std::size_t> rows;
  };
  std::vector<std::size_t> all(ds.n());
  std::iota(all.begin(), all.end(), 0);
  std::vector<Item> stack{{0, all}};
  auto sse_of = [&](const std::vector<std::size_t>& rows) {
    double sum = 0.0;
    for (auto r : rows) sum += ds.targets()[r];
    const double mean = sum / static_cast<double>(rows.size());
    double s = 0.0;
    for (auto r : rows) s += (ds.targets()[r] - mean) * (ds.targets()[r] - mean);
    return s;
  };
  while (!stack.empty()) {
    auto [node, rows] = std::move(stack.back());
    stack.pop_back();
    const auto& nd = tree.nodes()[static_cast<std::size_t>(node)];
    if (nd.is_leaf()) continue;
    std::vector<std::size_t> left, right;
    for (auto r : rows)
      (ds.features()(r, static_cast<std::size_t>(nd.feature)) < nd.threshold
           ? left
           : right)
          .push_back(r);
    EXPECT_LT(sse_of(left) + sse_of(right), sse_of(rows));
    stack.push_back({nd.left, std::move(left)});
    stack.push_back({nd.right, std::move(right)});
  }
}

TEST(FitTree, InsufficientDataThrows) {
  auto ds = single_feature({0, 1, 2}, {1, 2, 3});
  EXPECT_THROW(fit_tree(ds, {3, 2, 0}), InsufficientData);
}

TEST(FitTree, DeterministicFit) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix f(50, 4);
  std::vector<double> y(50);
  for (auto& v : f.data()) v = normal(rng);
  for (auto& v : y) v = normal(rng);
  auto ds = make_dataset(f, y);

  auto t1 = fit_tree(ds, {5, 2, 0});
  auto t2 = fit_tree(ds, {5, 2, 0});
  ASSERT_EQ(t1.nodes().size(), t2.nodes().size());
  for (std::size_t i = 0; i < t1.nodes().size(); ++i) {
    EXPECT_EQ(t1.nodes()[i].feature, t2.nodes()[i].feature);
    EXPECT_DOUBLE_EQ(t1.nodes()[i].threshold, t2.nodes()[i].threshold);
    EXPECT_DOUBLE_EQ(t1.nodes()[i].value, t2.nodes()[i].value);
  }
}

}  // namespace
