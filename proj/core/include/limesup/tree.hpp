#pragma once

#include "limesup/data.hpp"
#include "limesup/linmod.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace limesup {

/// Rows whose `variable` value is <= threshold go to the left child.
struct SplitSpec {
  int variable = -1;  ///< feature column index, always one of the partition vars
  double threshold = 0.0;

  bool goes_left(double value) const { return value <= threshold; }
};

/// Node-local derivative summary of a derivative-response tree. Raw means are
/// kept alongside the scaled ones so any node's scaling can be re-applied.
struct DerivativeSummary {
  Eigen::VectorXd sd;            ///< node-local feature sds used for scaling
  Eigen::VectorXd raw_means;     ///< column means of unscaled derivatives
  Eigen::VectorXd scaled_means;  ///< raw_means * sd
  Eigen::VectorXd scaled_sse;    ///< per-column SSE of the scaled derivatives
};

struct Node {
  int id = 0;
  int parent = -1;
  int depth = 0;
  Eigen::Index n = 0;
  /// Training row indices; empty for trees read back from JSON.
  RowSet rows;
  /// Linear model on the responses; leaves of derivative trees only get one
  /// after a response refit.
  std::optional<LinearModel> model;
  std::optional<DerivativeSummary> derivative;
  std::optional<SplitSpec> split;
  std::optional<std::pair<int, int>> children;
  /// Training SSE of the node model (summed over columns for derivative trees).
  double sse = 0.0;
  /// R^2 of the node fit before splitting; NaN for derivative trees.
  double fit_r2 = 0.0;
  /// Parent SSE minus the sum of child SSEs; 0 for leaves.
  double sse_improvement = 0.0;

  bool is_leaf() const { return !children.has_value(); }
};

enum class TreeKind { Response, Derivative };

struct GrowthConfig {
  int max_depth = 3;
  /// 0 selects max(30, 5 * (p + 1)), p = number of model vars.
  Eigen::Index min_node_size = 0;
  int n_quantiles = 99;
  int m_filter = 5;
  double min_relative_improvement = 1e-3;
  double prune_threshold = 1e-3;
  int lasso_grid_size = 50;
  /// Worker cap for candidate scoring; results do not depend on it.
  int threads = 1;

  Eigen::Index resolved_min_node_size(Eigen::Index p) const;
  void validate() const;
};

struct Tree {
  TreeKind kind = TreeKind::Response;
  std::vector<Node> nodes;  ///< nodes[i].id == i, root at 0, breadth-first order
  GrowthConfig config;
  std::vector<std::string> feature_names;
  std::vector<int> model_vars;
  std::vector<int> partition_vars;
  std::uint64_t dataset_hash = 0;
  std::uint64_t seed = 0;

  const Node& root() const { return nodes.front(); }
  std::vector<int> leaf_ids() const;
  int leaf_count() const;
  int depth() const;
};

/// Leaf id reached by each row of X (all feature columns).
std::vector<int> assign_partition(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Per-row prediction from the reached leaf's linear model.
Eigen::VectorXd predict_tree(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// For every node, the rows of X routed through it.
std::vector<RowSet> route_rows(const Tree& tree, const Eigen::Ref<const Eigen::MatrixXd>& X);

/// Renumbers the reachable nodes breadth-first; drops detached ones.
Tree compact_tree(const Tree& tree);

}  // namespace limesup
