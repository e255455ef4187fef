#include "growth.hpp"
#include "limesup/error.hpp"
#include "limesup/suptree.hpp"
#include "split_oracle.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <set>

namespace limesup {
namespace {

using testing::normal_matrix;
using testing::normal_vector;

// Piecewise-linear response with a kink in the first column.
Dataset kinked(Rng& rng, Index n, Index p, double noise) {
  Eigen::MatrixXd X = normal_matrix(rng, n, p);
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    y[i] = X(i, 0) + 3.0 * std::max(X(i, p - 1) - 0.3, 0.0) + noise * rng.normal();
  }
  return testing::make_dataset(std::move(X), std::move(y));
}

TEST(QuantileCandidates, TypeOnePositionsAndMidpoints) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const auto c = detail::quantile_candidates(v, 4);
  // q/5 of 10 rows: positions 1, 3, 5, 7 -> values 2, 4, 6, 8.
  ASSERT_EQ(c.size(), 4u);
  EXPECT_DOUBLE_EQ(c[0].first, 2.5);
  EXPECT_EQ(c[0].second, 2);
  EXPECT_DOUBLE_EQ(c[3].first, 8.5);
  EXPECT_EQ(c[3].second, 8);
}

TEST(QuantileCandidates, TiesAndDuplicatesCollapse) {
  const std::vector<double> v{1, 1, 1, 1, 2, 2, 2, 2};
  const auto c = detail::quantile_candidates(v, 9);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_DOUBLE_EQ(c[0].first, 1.5);
  EXPECT_EQ(c[0].second, 4);
  EXPECT_TRUE(detail::quantile_candidates(std::vector<double>{3, 3, 3}, 9).empty());
}

TEST(QuantileCandidates, MatchesOracleCounts) {
  Rng rng(50);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 2 + static_cast<std::size_t>(rng.below(60));
    std::vector<double> v(n);
    for (auto& x : v) x = static_cast<double>(rng.below(15));
    std::sort(v.begin(), v.end());
    const int nq = 1 + static_cast<int>(rng.below(20));
    std::vector<Index> counts;
    for (const auto& [t, left] : detail::quantile_candidates(v, nq)) {
      counts.push_back(left);
      EXPECT_EQ(static_cast<Index>(std::count_if(v.begin(), v.end(), [&](double x) { return x <= t; })), left);
    }
    EXPECT_EQ(counts, oracle::candidate_left_counts(v, nq));
  }
}

// Direct J^{-1} quadratic form over every break point in the trimmed range.
double suplm_oracle(const Dataset& ds, const RowSet& rows, const LinearModel& m, int variable) {
  const auto n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(ds.model_vars.size()) + 1;
  Eigen::MatrixXd psi(n, d);
  std::vector<std::pair<double, Index>> order;
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    double fitted = m.intercept;
    for (std::size_t j = 0; j < ds.model_vars.size(); ++j) fitted += m.coefficients[static_cast<Index>(j)] * ds.features(r, ds.model_vars[j]);
    const double res = ds.response[r] - fitted;
    psi(i, 0) = res;
    for (std::size_t j = 0; j < ds.model_vars.size(); ++j) psi(i, static_cast<Index>(j) + 1) = res * ds.features(r, ds.model_vars[j]);
    order.emplace_back(ds.features(r, variable), r);
  }
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::sort(idx.begin(), idx.end(), [&](Index a, Index b) { return order[static_cast<std::size_t>(a)] < order[static_cast<std::size_t>(b)]; });
  Eigen::MatrixXd J = psi.transpose() * psi / static_cast<double>(n);
  J.diagonal().array() += 1e-10;
  const Eigen::MatrixXd Jinv = J.inverse();
  double best = 0.0;
  const auto lo = static_cast<Index>(std::ceil(0.1 * static_cast<double>(n)));
  const auto hi = static_cast<Index>(std::floor(0.9 * static_cast<double>(n)));
  for (Index t = std::max<Index>(lo, 1); t <= std::min(hi, n - 1); ++t) {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
    for (Index k = 0; k < t; ++k) s += psi.row(idx[static_cast<std::size_t>(k)]).transpose();
    const double f = static_cast<double>(t) / static_cast<double>(n);
    best = std::max(best, s.dot(Jinv * s) / static_cast<double>(n) / (f * (1.0 - f)));
  }
  return best;
}

TEST(FluctuationFilter, StatisticMatchesDirectFormula) {
  Rng rng(60);
  for (int trial = 0; trial < 20; ++trial) {
    const Dataset ds = kinked(rng, 40 + static_cast<Index>(rng.below(60)), 2 + static_cast<Index>(rng.below(2)), 0.5);
    const RowSet rows = testing::all_rows(ds.rows());
    const LinearModel m = fit_ols(ds.model_matrix(), ds.response);
    for (int v = 0; v < ds.cols(); ++v) {
      const double expected = suplm_oracle(ds, rows, m, v);
      EXPECT_NEAR(suplm_statistic(rows, ds, m, v), expected, 1e-8 * (1.0 + expected));
    }
  }
}

TEST(FluctuationFilter, RanksUnstableVariableFirst) {
  Rng rng(61);
  Eigen::MatrixXd X = normal_matrix(rng, 500, 3);
  Eigen::VectorXd y(500);
  for (Index i = 0; i < 500; ++i) y[i] = X(i, 0) + (X(i, 2) > 0.3 ? 2.0 : 0.0) + 0.1 * rng.normal();
  const Dataset ds = testing::make_dataset(X, y);
  const auto ranked = fluctuation_filter(testing::all_rows(500), ds, fit_ols(ds.model_matrix(), y), 2);
  ASSERT_EQ(ranked.size(), 2u);
  EXPECT_EQ(ranked[0].variable, 2);
  EXPECT_GE(ranked[0].statistic, ranked[1].statistic);
}

TEST(FluctuationFilter, SkipsSingleValuedVariables) {
  Rng rng(62);
  Eigen::MatrixXd X = normal_matrix(rng, 50, 2);
  const Dataset ds = testing::make_dataset(X, normal_vector(rng, 50));
  RowSet rows = testing::all_rows(50);
  Dataset constant_col = ds;
  constant_col.features.col(1).setConstant(2.0);
  const auto ranked = fluctuation_filter(rows, constant_col, fit_ols(constant_col.model_matrix(), ds.response), 5);
  ASSERT_EQ(ranked.size(), 1u);
  EXPECT_EQ(ranked[0].variable, 0);
}

TEST(ExhaustiveSearch, MatchesBruteForceAtRoot) {
  Rng rng(70);
  for (int trial = 0; trial < 30; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(3));
    const Dataset ds = kinked(rng, 80 + static_cast<Index>(rng.below(120)), p, 0.3);
    GrowthConfig config;
    config.n_quantiles = 10;
    config.min_relative_improvement = 0.0;
    const RowSet rows = testing::all_rows(ds.rows());
    const Index min_child = config.resolved_min_node_size(p);
    const auto got = exhaustive_split_search(rows, ds, ds.partition_vars, config);
    const auto want = oracle::brute_force_split(ds, rows, ds.partition_vars, config.n_quantiles, min_child,
                                                [&](const RowSet& r) { return oracle::response_cost(ds, r); });
    ASSERT_EQ(got.has_value(), want.has_value());
    if (!got) continue;
    EXPECT_EQ(got->split.variable, want->variable);
    Node node;
    node.rows = rows;
    node.split = got->split;
    EXPECT_EQ(oracle::tree_left_count(ds, node), want->left_count);
    EXPECT_NEAR(got->sse_improvement, oracle::response_cost(ds, rows) - want->child_sse, 1e-8);
  }
}

TEST(ExhaustiveSearch, ImprovementThresholdRejects) {
  Rng rng(71);
  const Dataset ds = testing::make_dataset(normal_matrix(rng, 200, 2), normal_vector(rng, 200));
  GrowthConfig config;
  config.min_relative_improvement = 0.5;
  EXPECT_FALSE(exhaustive_split_search(testing::all_rows(200), ds, ds.partition_vars, config).has_value());
}

TEST(ExhaustiveSearch, ExactLinearNodeDoesNotSplit) {
  Rng rng(72);
  Eigen::MatrixXd X = normal_matrix(rng, 200, 2);
  const Eigen::VectorXd y = (X.col(0) * 2.0 - X.col(1)).array() + 1.0;
  const Dataset ds = testing::make_dataset(X, y);
  GrowthConfig config;
  config.min_relative_improvement = 0.0;
  EXPECT_FALSE(exhaustive_split_search(testing::all_rows(200), ds, ds.partition_vars, config).has_value());
  EXPECT_EQ(grow_tree(ds, config).nodes.size(), 1u);
}

void check_structure(const Tree& tree, const Dataset& train) {
  const auto& cfg = tree.config;
  const Index min_node = cfg.resolved_min_node_size(static_cast<Index>(train.model_vars.size()));
  std::multiset<Index> covered;
  const auto assigned = assign_partition(tree, train.features);
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const Node& node = tree.nodes[i];
    EXPECT_EQ(node.id, static_cast<int>(i));
    EXPECT_LE(node.depth, cfg.max_depth);
    EXPECT_EQ(node.n, static_cast<Index>(node.rows.size()));
    if (node.is_leaf()) {
      covered.insert(node.rows.begin(), node.rows.end());
      for (Index r : node.rows) EXPECT_EQ(assigned[static_cast<std::size_t>(r)], node.id);
      continue;
    }
    const Node& left = tree.nodes[static_cast<std::size_t>(node.children->first)];
    const Node& right = tree.nodes[static_cast<std::size_t>(node.children->second)];
    EXPECT_GT(left.id, node.id);
    EXPECT_EQ(right.id, left.id + 1);
    EXPECT_EQ(left.parent, node.id);
    EXPECT_EQ(left.n + right.n, node.n);
    EXPECT_GE(left.n, min_node);
    EXPECT_GE(right.n, min_node);
    EXPECT_NE(std::find(train.partition_vars.begin(), train.partition_vars.end(), node.split->variable),
              train.partition_vars.end());
    for (Index r : left.rows) EXPECT_LE(train.features(r, node.split->variable), node.split->threshold);
    for (Index r : right.rows) EXPECT_GT(train.features(r, node.split->variable), node.split->threshold);
  }
  EXPECT_EQ(covered.size(), static_cast<std::size_t>(train.rows()));
  EXPECT_EQ(std::set<Index>(covered.begin(), covered.end()).size(), covered.size());
}

TEST(GrowTree, StructuralInvariants) {
  Rng rng(80);
  for (int trial = 0; trial < 10; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(4));
    const Dataset ds = kinked(rng, 300 + static_cast<Index>(rng.below(700)), p, 0.2);
    GrowthConfig config;
    config.max_depth = 1 + static_cast<int>(rng.below(4));
    const Tree tree = grow_tree(ds, config);
    check_structure(tree, ds);
    EXPECT_LE(tree.leaf_count(), 1 << config.max_depth);
    for (const Node& node : tree.nodes) {
      if (node.is_leaf()) continue;
      const Node& l = tree.nodes[static_cast<std::size_t>(node.children->first)];
      const Node& r = tree.nodes[static_cast<std::size_t>(node.children->second)];
      EXPECT_NEAR(node.sse_improvement, node.sse - l.sse - r.sse, 1e-8 * (1.0 + node.sse));
      EXPECT_GE(node.sse_improvement, config.min_relative_improvement * node.sse);
    }
  }
}

// Every node of grown trees matches the brute-force scan, including the
// nodes it declined to split.
TEST(GrowTree, EveryNodeMatchesBruteForce) {
  Rng rng(81);
  int mismatches = 0;
  for (int trial = 0; trial < 25; ++trial) {
    const Index p = 1 + static_cast<Index>(rng.below(3));
    const Dataset ds = kinked(rng, 100 + static_cast<Index>(rng.below(101)), p, 0.4);
    GrowthConfig config;
    config.n_quantiles = 10;
    config.m_filter = static_cast<int>(p);
    config.min_node_size = 15;
    const Tree tree = grow_tree(ds, config);
    for (const Node& node : tree.nodes) {
      if (node.depth >= config.max_depth || node.n < 2 * config.min_node_size) {
        EXPECT_TRUE(node.is_leaf());
        continue;
      }
      const auto want = oracle::brute_force_split(ds, node.rows, ds.partition_vars, config.n_quantiles,
                                                  config.min_node_size,
                                                  [&](const RowSet& r) { return oracle::response_cost(ds, r); });
      const double parent = oracle::response_cost(ds, node.rows);
      const bool should_split = want && parent - want->child_sse >= config.min_relative_improvement * parent &&
                                parent - want->child_sse > 0.0;
      ASSERT_EQ(!node.is_leaf(), should_split) << "node " << node.id;
      if (!should_split) continue;
      if (node.split->variable != want->variable || oracle::tree_left_count(ds, node) != want->left_count) ++mismatches;
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(GrowTree, ThreadCountDoesNotChangeResult) {
  Rng rng(82);
  const Dataset ds = kinked(rng, 2000, 4, 0.2);
  GrowthConfig one;
  GrowthConfig many = one;
  many.threads = 8;
  const Tree a = grow_tree(ds, one);
  const Tree b = grow_tree(ds, many);
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    EXPECT_EQ(a.nodes[i].split.has_value(), b.nodes[i].split.has_value());
    if (a.nodes[i].split) {
      EXPECT_EQ(a.nodes[i].split->variable, b.nodes[i].split->variable);
      EXPECT_EQ(a.nodes[i].split->threshold, b.nodes[i].split->threshold);
    }
    EXPECT_EQ(a.nodes[i].sse, b.nodes[i].sse);
  }
}

TEST(GrowTree, RespectsPartitionVars) {
  Rng rng(83);
  Dataset ds = kinked(rng, 1000, 3, 0.1);
  ds.partition_vars = {1};
  const Tree tree = grow_tree(ds, {});
  for (const Node& node : tree.nodes) {
    if (node.split) EXPECT_EQ(node.split->variable, 1);
  }
}

TEST(GrowTree, TooSmallDatasetThrows) {
  Rng rng(84);
  const Dataset ds = kinked(rng, 40, 2, 0.1);
  EXPECT_THROW(grow_tree(ds, {}), DataError);
}

TEST(Prune, ThresholdZeroKeepsHelpfulSplitsAndLargeCollapses) {
  Rng rng(90);
  const Dataset train = kinked(rng, 2000, 2, 0.2);
  const Dataset valid = kinked(rng, 1000, 2, 0.2);
  const Tree grown = grow_tree(train, {});
  ASSERT_GT(grown.leaf_count(), 1);
  GrowthConfig everything;
  everything.prune_threshold = 2.0;
  const Tree root_only = prune_tree(grown, valid, everything);
  EXPECT_EQ(root_only.nodes.size(), 1u);
  EXPECT_TRUE(root_only.root().is_leaf());

  GrowthConfig none;
  none.prune_threshold = 0.0;
  const Tree kept = prune_tree(grown, valid, none);
  EXPECT_LE(kept.leaf_count(), grown.leaf_count());
  EXPECT_GE(kept.leaf_count(), 2);
  check_structure(kept, train);
}

TEST(Prune, CollapsesSplitsThatHurtValidation) {
  // Noise-only response: any split overfits the training sample.
  Rng rng(91);
  Dataset train = testing::make_dataset(normal_matrix(rng, 1000, 2), normal_vector(rng, 1000));
  Dataset valid = testing::make_dataset(normal_matrix(rng, 500, 2), normal_vector(rng, 500));
  GrowthConfig config;
  config.min_relative_improvement = 0.0;
  const Tree grown = grow_tree(train, config);
  const Tree pruned = prune_tree(grown, valid, config);
  const auto routed = route_rows(pruned, valid.features);
  const auto valid_sse = [&](const Node& node) {
    const auto& rows = routed[static_cast<std::size_t>(node.id)];
    double sse = 0.0;
    for (Index r : rows) {
      const double fitted = node.model->intercept + valid.features.row(r).dot(node.model->coefficients);
      sse += (valid.response[r] - fitted) * (valid.response[r] - fitted);
    }
    return sse;
  };
  const double limit = config.prune_threshold * valid_sse(pruned.root());
  for (const Node& node : pruned.nodes) {
    if (node.is_leaf()) continue;
    const Node& l = pruned.nodes[static_cast<std::size_t>(node.children->first)];
    const Node& r = pruned.nodes[static_cast<std::size_t>(node.children->second)];
    if (!l.is_leaf() || !r.is_leaf()) continue;
    EXPECT_GE(valid_sse(node) - valid_sse(l) - valid_sse(r), limit);
  }
  EXPECT_LT(pruned.leaf_count(), grown.leaf_count());
  EXPECT_EQ(routed.front().size(), 500u);
}

TEST(Refit, LeavesGetLassoModelsAndStructureIsKept) {
  Rng rng(92);
  const Dataset train = kinked(rng, 2000, 3, 0.2);
  const Dataset valid = kinked(rng, 800, 3, 0.2);
  const Tree tree = fit_response_tree(train, valid, {});
  for (const Node& node : tree.nodes) {
    ASSERT_TRUE(node.model.has_value());
    if (node.is_leaf()) EXPECT_GE(node.model->lambda, 0.0);
  }
  const Eigen::VectorXd pred = predict_tree(tree, valid.features);
  const double sse = (pred - valid.response).squaredNorm();
  const double sst = (valid.response.array() - valid.response.mean()).square().sum();
  EXPECT_GT(1.0 - sse / sst, 0.9);
}

TEST(CompactTree, RenumbersBreadthFirst) {
  Rng rng(93);
  const Dataset ds = kinked(rng, 3000, 2, 0.1);
  Tree tree = grow_tree(ds, {});
  ASSERT_GE(tree.nodes.size(), 3u);
  // Detach the left subtree of the root.
  const int left = tree.nodes[0].children->first;
  tree.nodes[static_cast<std::size_t>(left)].children.reset();
  tree.nodes[static_cast<std::size_t>(left)].split.reset();
  const Tree compact = compact_tree(tree);
  for (std::size_t i = 0; i < compact.nodes.size(); ++i) {
    EXPECT_EQ(compact.nodes[i].id, static_cast<int>(i));
    if (compact.nodes[i].children) EXPECT_GT(compact.nodes[i].children->first, static_cast<int>(i));
  }
  check_structure(compact, ds);
}

}  // namespace
}  // namespace limesup
