#pragma once

// Shared machinery for response trees and derivative trees: recursive
// growth, validation pruning and leaf refits. Each tree kind supplies a
// GrowthCriterion.

#include "limesup/data.hpp"
#include "limesup/tree.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace limesup::detail {

struct ScoredSplit {
  SplitSpec split;
  /// Sum of child SSEs.
  double child_sse = 0.0;
};

class GrowthCriterion {
 public:
  virtual ~GrowthCriterion() = default;

  /// Fits the node model on node.rows and sets node.sse / node.fit_r2.
  virtual void fit_node(Node& node) const = 0;

  /// Partition variables in the order the exhaustive search should consider.
  virtual std::vector<int> rank_variables(const Node& node, int m) const = 0;

  /// Best split over `variables` with exact child SSEs, or nothing.
  virtual std::optional<ScoredSplit> best_split(const Node& node, std::span<const int> variables) const = 0;

  /// True when the node fit is already exact (no split can help).
  virtual bool is_exact(const Node& node) const = 0;
};

Tree grow_with(const Dataset& train, const GrowthConfig& config, const GrowthCriterion& criterion, TreeKind kind,
               Eigen::Index min_node_size);

/// SSE of `evaluated`'s model on `rows` of the validation set, measured in
/// `reference`'s scale.
using ValidationSse =
    std::function<double(const Node& evaluated, const Node& reference, const Dataset& valid, const RowSet& rows)>;

Tree prune_with(const Tree& tree, const Dataset& valid, double prune_threshold, const ValidationSse& sse);

/// LASSO refit of every leaf on the responses; structure untouched.
Tree refit_leaves(const Tree& tree, const Dataset& train, const Dataset& valid, int grid_size);

/// Node-local type-1 quantile candidate thresholds over `sorted` values:
/// midpoints between the value at each quantile and the next distinct value.
/// Returns (threshold, left count) pairs in increasing order.
std::vector<std::pair<double, Eigen::Index>> quantile_candidates(std::span<const double> sorted, int n_quantiles);

/// Row order of `rows` by (feature value, row index).
RowSet sorted_by(const Eigen::MatrixXd& features, int variable, const RowSet& rows);

/// Runs fn(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

/// Selects the lowest (score, variable, threshold) candidate.
std::optional<ScoredSplit> reduce_candidates(const std::vector<std::optional<ScoredSplit>>& per_variable);

}  // namespace limesup::detail
