#pragma once

#include "limesup/data.hpp"
#include "limesup/linmod.hpp"
#include "limesup/tree.hpp"

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace limesup {

struct VariableScore {
  int variable = -1;
  double statistic = 0.0;
};

/// supLM parameter-instability statistic of a fitted linear node model along
/// each candidate variable, trimmed to break fractions in [0.1, 0.9].
///
/// Scores are residual times design row (intercept included); J is their
/// mean outer product plus 1e-10 * I. Returns the top `m` variables by
/// statistic (descending, lower index first on ties). Variables with fewer
/// than two distinct values at the node are skipped, so an empty result
/// means the node cannot be split.
std::vector<VariableScore> fluctuation_filter(const RowSet& node_rows, const Dataset& ds, const LinearModel& model,
                                              int m, std::span<const int> candidates = {}, int threads = 1);

/// supLM statistic for one ordering variable; exposed for tests.
double suplm_statistic(const RowSet& node_rows, const Dataset& ds, const LinearModel& model, int variable);

struct SplitResult {
  SplitSpec split;
  double sse_improvement = 0.0;
};

/// Exhaustive search over node-local quantile midpoints of `variables`,
/// scoring OLS fits in both children. Returns nothing when no legal split
/// exists or the best one improves the node SSE by less than
/// config.min_relative_improvement.
std::optional<SplitResult> exhaustive_split_search(const RowSet& node_rows, const Dataset& ds,
                                                   std::span<const int> variables, const GrowthConfig& config);

/// Grows a linear model-based tree on the fitted responses: fluctuation
/// filter to the top m_filter partition variables, then exhaustive search.
Tree grow_tree(const Dataset& train, const GrowthConfig& config);

/// Collapses splits whose validation SSE reduction is below
/// prune_threshold * root validation SSE, bottom-up, to a fixpoint. Works
/// for both response and derivative trees.
Tree prune_tree(const Tree& tree, const Dataset& valid, const GrowthConfig& config);

/// Replaces every leaf model with a LASSO fit whose lambda is selected on
/// the leaf's validation rows (BIC on training rows when it has none).
Tree refit_terminals_lasso(const Tree& tree, const Dataset& train, const Dataset& valid, const GrowthConfig& config);

/// grow -> prune -> refit.
Tree fit_response_tree(const Dataset& train, const Dataset& valid, const GrowthConfig& config);

}  // namespace limesup
